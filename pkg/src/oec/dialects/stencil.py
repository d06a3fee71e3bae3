"""The stencil dialect: field/temp types, the six stencil operations and the
program-level verifier."""

from __future__ import annotations

from typing import List

from ..registry import WRITE, define
from ..types import DIM_NAMES, FieldType, Range, ScalarType, TempType

STENCIL_OPS = frozenset({
    "stencil.assert", "stencil.load", "stencil.apply",
    "stencil.access", "stencil.return", "stencil.store",
})

# operations admitted inside a stencil.apply body
APPLY_BODY_DIALECTS = ("arith.",)
APPLY_BODY_OPS = frozenset({"loop.if", "loop.yield", "stencil.access", "stencil.return"})


def unroll_of(op):
    """(factor, dim index) of an apply; factor 1 when not unrolled."""
    factor = op.attributes.get("unroll_factor", 1)
    dim = op.attributes.get("unroll_dim", "i")
    return factor, DIM_NAMES.index(dim) if dim in DIM_NAMES else 0


def enclosing_apply(op):
    node = op.parent_op
    while node is not None:
        if node.name == "stencil.apply":
            return node
        if node.name not in ("loop.if",):
            return None
        node = node.parent_op
    return None


def _is_vec3(v) -> bool:
    return isinstance(v, tuple) and len(v) == 3 and all(isinstance(x, int) for x in v)


def _check_range_attr(op, name, required) -> List[str]:
    r = op.attributes.get(name)
    if r is None:
        return [f"missing '{name}' range"] if required else []
    if not isinstance(r, Range) or len(r.lb) != 3:
        return [f"'{name}' must be a 3-dimensional range"]
    if not r.is_nonempty():
        return [f"'{name}' range {r} is empty"]
    return []


def verify_assert(op):
    errs = _check_range_attr(op, "range", True)
    if len(op.operands) != 1 or not isinstance(op.operands[0].type, FieldType) or op.results:
        errs.append("stencil.assert takes one field and has no results")
    return errs


def verify_load(op):
    errs = _check_range_attr(op, "range", False)
    if len(op.operands) != 1 or len(op.results) != 1:
        return errs + ["stencil.load takes one field and produces one temp"]
    f, t = op.operands[0].type, op.result.type
    if not isinstance(f, FieldType) or not isinstance(t, TempType):
        return errs + ["stencil.load maps a field to a temp"]
    if (f.dims, f.element) != (t.dims, t.element):
        errs.append(f"load result {t} does not match field {f}")
    if "shift" in op.attributes and not _is_vec3(op.attributes["shift"]):
        errs.append("'shift' must be a 3-vector")
    return errs


def verify_apply(op):
    errs = _check_range_attr(op, "range", False)
    if len(op.regions) != 1 or len(op.regions[0].blocks) != 1:
        return errs + ["stencil.apply needs a single-block region"]
    block = op.regions[0].blocks[0]
    if [a.type for a in block.args] != [v.type for v in op.operands]:
        errs.append("apply block arguments must match operand types")
    for v in op.operands:
        if not isinstance(v.type, (TempType, ScalarType)):
            errs.append(f"apply operand of type {v.type} is neither temp nor scalar")
    if not op.results:
        errs.append("stencil.apply must produce at least one temp")
    for r in op.results:
        if not isinstance(r.type, TempType):
            errs.append(f"apply result type {r.type} is not a temp")
    factor = op.attributes.get("unroll_factor", 1)
    dim = op.attributes.get("unroll_dim", "i")
    if not isinstance(factor, int) or factor < 1:
        errs.append("unroll factor must be a positive integer")
        factor = 1
    if dim not in DIM_NAMES:
        errs.append(f"unroll dimension {dim!r} is not one of i, j, k")
    term = block.terminator
    if term is None or term.name != "stencil.return":
        errs.append("stencil.apply region must end with stencil.return")
        return errs
    expected = len(op.results) * factor
    if len(term.operands) != expected:
        errs.append(
            f"stencil.return has {len(term.operands)} operands, expected "
            f"{len(op.results)} results x unroll factor {factor} = {expected}"
        )
        return errs
    for k, r in enumerate(op.results):
        for u in range(factor):
            t = term.operands[k * factor + u].type
            if isinstance(r.type, TempType) and t != r.type.element:
                errs.append(f"return operand {k * factor + u} has type {t}, expected {r.type.element}")
    return errs


def verify_access(op):
    apply = enclosing_apply(op)
    if apply is None:
        return ["access outside stencil.apply"]
    errs = []
    if len(op.operands) != 1 or len(op.results) != 1:
        return ["stencil.access takes one temp and has one result"]
    src = op.operands[0]
    if not isinstance(src.type, TempType):
        return ["stencil.access reads a temp"]
    if src.owner is not apply.regions[0].blocks[0]:
        errs.append("stencil.access must read an argument of the enclosing stencil.apply")
    off = op.attributes.get("offset")
    if not _is_vec3(off):
        errs.append("'offset' must be a constant 3-vector")
    else:
        for d, o in zip(DIM_NAMES, off):
            if o != 0 and d not in src.type.dims:
                errs.append(f"offset {list(off)} uses dimension {d} absent from {src.type}")
    if op.result.type != src.type.element:
        errs.append(f"access result {op.result.type} does not match element {src.type.element}")
    return errs


def verify_return(op):
    parent = op.parent_op
    if parent is None or parent.name != "stencil.apply" or op.parent.ops[-1] is not op:
        return ["stencil.return must terminate a stencil.apply region"]
    return []


def verify_store(op):
    errs = _check_range_attr(op, "range", True)
    if len(op.operands) != 2 or op.results:
        return errs + ["stencil.store takes a temp and a field"]
    t, f = op.operands[0].type, op.operands[1].type
    if not isinstance(t, TempType) or not isinstance(f, FieldType):
        return errs + ["stencil.store writes a temp into a field"]
    if (t.dims, t.element) != (f.dims, f.element):
        errs.append(f"stored {t} does not match field {f}")
    if "shift" in op.attributes and not _is_vec3(op.attributes["shift"]):
        errs.append("'shift' must be a 3-vector")
    return errs


define("stencil.assert", verify_assert, effect=WRITE)
define("stencil.load", verify_load)
define("stencil.apply", verify_apply, isolated=True, num_regions=1)
define("stencil.access", verify_access)
define("stencil.return", verify_return, terminator=True)
define("stencil.store", verify_store, effect=WRITE)


# -- program-level checks ----------------------------------------------------

def _unit_dims_ok(r: Range, dims: str) -> bool:
    return all(d in dims or (r.lb[a] == 0 and r.ub[a] == 1) for a, d in enumerate(DIM_NAMES))


def verify_stencil_function(func) -> List[tuple]:
    """Program-level invariants; returns (op or None, message) pairs."""
    out: List[tuple] = []
    ops = func.block.ops
    if not any(op.name.startswith("stencil.") for op in func.walk()):
        return out
    fields = [a for a in func.args if isinstance(a.type, FieldType)]
    dims = {a.type.dims for a in fields}
    for op in func.walk():
        for v in (*op.operands, *op.results):
            if isinstance(v.type, (FieldType, TempType)):
                dims.add(v.type.dims)
    if len(dims) > 1:
        out.append((None, f"stencil values in @{func.name} mix dimensionalities {sorted(dims)}"))
    prog_dims = next(iter(dims)) if len(dims) == 1 else DIM_NAMES

    asserts = {}
    loaded, stored = set(), set()
    for op in ops:
        if op.name == "stencil.assert":
            f = op.operands[0]
            if not (f.is_block_arg and f.owner is func.block):
                out.append((op, "stencil.assert must name a function parameter"))
            if f in asserts:
                out.append((op, "field has more than one stencil.assert"))
            asserts[f] = op
            r = op.attributes.get("range")
            if isinstance(r, Range) and not _unit_dims_ok(r, prog_dims):
                out.append((op, f"range {r} must be [0:1] in dimensions absent from {prog_dims}"))
        elif op.name == "stencil.load":
            loaded.add(op.operands[0])
        elif op.name == "stencil.store":
            stored.add(op.operands[1])
            src = op.operands[0].defining_op
            if src is None or src.name != "stencil.apply":
                out.append((op, "stencil.store must store the result of a stencil.apply"))
            r = op.attributes.get("range")
            a = asserts.get(op.operands[1])
            if isinstance(r, Range):
                if not _unit_dims_ok(r, prog_dims):
                    out.append((op, f"range {r} must be [0:1] in dimensions absent from {prog_dims}"))
                if a is not None and isinstance(a.attributes.get("range"), Range):
                    if not a.attributes["range"].contains(r):
                        out.append((op, f"store range {r} exceeds asserted field range {a.attributes['range']}"))
        elif op.name in ("stencil.access", "stencil.return"):
            out.append((op, f"{op.name.split('.')[1]} outside stencil.apply"))
        elif op.name == "stencil.apply":
            for inner in op.walk():
                if inner is op:
                    continue
                if not (inner.name in APPLY_BODY_OPS or inner.name.startswith(APPLY_BODY_DIALECTS)):
                    out.append((inner, f"'{inner.name}' is not allowed inside stencil.apply"))
            dim = op.attributes.get("unroll_dim")
            if dim is not None and dim not in prog_dims:
                out.append((op, f"unroll dimension {dim} is not a dimension of the program"))
            r = op.attributes.get("range")
            if isinstance(r, Range) and not _unit_dims_ok(r, prog_dims):
                out.append((op, f"range {r} must be [0:1] in dimensions absent from {prog_dims}"))
    for f in fields:
        if f not in asserts:
            out.append((None, f"field parameter #{f.index} of @{func.name} has no stencil.assert"))
        if f in loaded and f in stored:
            out.append((None, f"field parameter #{f.index} of @{func.name} is both loaded and stored (aliasing)"))
    if _has_cycle(ops):
        out.append((None, f"temp def-use graph of @{func.name} is cyclic"))
    return out


def _has_cycle(ops) -> bool:
    graph = {op: [u for r in op.results for u in r.users] for op in ops}
    state = {}

    def visit(n):
        state[n] = 1
        for m in graph.get(n, ()):
            while m is not None and m not in graph:
                m = m.parent_op
            if m is None:
                continue
            s = state.get(m)
            if s == 1 or (s is None and visit(m)):
                return True
        state[n] = 2
        return False

    return any(state.get(op) is None and visit(op) for op in ops)
