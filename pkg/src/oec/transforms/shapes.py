"""Shape inference and shape shifting for stencil programs.

Inference walks each program backwards.  A store demands its range from the
stored temp; an apply's iteration domain is the bounding box of the demands
on its results, and it demands from each operand temp the domain widened by
the extreme access offsets into that operand.  Shifting then translates every
temp so that its range starts at zero, recording on loads and stores the
displacement between temp and field coordinates in a ``shift`` attribute:
a load reads ``field(y + shift)`` and a store writes ``field(x) =
temp(x - shift)``.
"""

from __future__ import annotations

from typing import Dict, List

from ..dialects.stencil import unroll_of
from ..ir import Function, Module, Operation, Value, op_path
from ..types import FieldType, Range, TempType
from ..verifier import Diagnostic

ZERO = (0, 0, 0)


def needs_inference(module: Module) -> bool:
    return any(op.name in ("stencil.load", "stencil.apply") and "range" not in op.attributes
               for op in module.walk())


def access_offsets(apply: Operation) -> Dict[int, List[tuple]]:
    """Offsets of all accesses in ``apply``, keyed by block-argument index."""
    block = apply.regions[0].blocks[0]
    out: Dict[int, List[tuple]] = {}
    for op in apply.walk():
        if op.name == "stencil.access":
            arg = op.operands[0]
            if arg.owner is block:
                out.setdefault(arg.index, []).append(op.attributes["offset"])
    return out


def _round_domain(dom: Range, factor: int, axis: int) -> Range:
    if factor == 1:
        return dom
    ext = dom.extent[axis]
    ub = list(dom.ub)
    ub[axis] = dom.lb[axis] + -(-ext // factor) * factor
    return Range(dom.lb, tuple(ub))


def _operand_demand(dom: Range, offsets, factor: int, axis: int) -> Range:
    """Bounding box of ``p + o`` over domain points ``p`` (stepping by the
    unroll factor along ``axis``) and accesses ``o``."""
    last = list(u - 1 for u in dom.ub)
    last[axis] = dom.lb[axis] + (dom.extent[axis] // factor - 1) * factor
    lo = tuple(l + min(o[d] for o in offsets) for d, l in enumerate(dom.lb))
    hi = tuple(x + max(o[d] for o in offsets) + 1 for d, x in enumerate(last))
    return Range(lo, hi)


def _infer_function(func: Function, diags: List[Diagnostic]) -> None:
    asserts = {op.operands[0]: op.attributes["range"]
               for op in func.block.ops if op.name == "stencil.assert"}
    demand: Dict[Value, Range] = {}

    def add(v: Value, r: Range) -> None:
        old = demand.get(v)
        demand[v] = r if old is None else old.union(r)

    for op in reversed(func.block.ops):
        if op.name == "stencil.store":
            shift = op.attributes.get("shift", ZERO)
            add(op.operands[0], op.attributes["range"].translate(tuple(-s for s in shift)))
        elif op.name == "stencil.apply":
            wanted = [demand[r] for r in op.results if r in demand]
            if not wanted:
                diags.append(Diagnostic(op_path(op), "stencil.apply has no transitive store consumer; run dce"))
                continue
            dom = wanted[0]
            for r in wanted[1:]:
                dom = dom.union(r)
            factor, axis = unroll_of(op)
            dom = _round_domain(dom, factor, axis)
            op.attributes["range"] = dom
            for idx, offsets in access_offsets(op).items():
                v = op.operands[idx]
                if isinstance(v.type, TempType):
                    add(v, _operand_demand(dom, offsets, factor, axis))
        elif op.name == "stencil.load":
            r = demand.get(op.result)
            if r is None:
                diags.append(Diagnostic(op_path(op), "stencil.load result is never used by a stored computation"))
                continue
            op.attributes["range"] = r
            field = op.operands[0]
            bounds = asserts.get(field)
            shift = op.attributes.get("shift", ZERO)
            if bounds is not None and not bounds.contains(r.translate(shift)):
                diags.append(Diagnostic(
                    op_path(op),
                    f"load range {r.translate(shift)} of field #{field.index} exceeds its asserted range {bounds}"))


def infer_shapes(module: Module) -> List[Diagnostic]:
    """Annotate applies and loads with ranges; returns diagnostics (empty on success)."""
    diags: List[Diagnostic] = []
    for func in module.all_functions():
        if any(op.name.startswith("stencil.") for op in func.block.ops):
            _infer_function(func, diags)
    return diags


def _shift_function(func: Function) -> None:
    assert_lb: Dict[Value, tuple] = {}
    temp_lb: Dict[Value, tuple] = {}
    for op in func.block.ops:
        if op.name == "stencil.assert":
            r = op.attributes["range"]
            assert_lb[op.operands[0]] = r.lb
            op.attributes["range"] = Range(ZERO, r.extent)
    for op in func.block.ops:
        if op.name == "stencil.load":
            r = op.attributes["range"]
            flb = assert_lb.get(op.operands[0], ZERO)
            shift = op.attributes.get("shift", ZERO)
            op.attributes["shift"] = tuple(l + s - f for l, s, f in zip(r.lb, shift, flb))
            op.attributes["range"] = Range(ZERO, r.extent)
            temp_lb[op.result] = r.lb
        elif op.name == "stencil.apply":
            dom = op.attributes["range"]
            block = op.regions[0].blocks[0]
            for inner in op.walk():
                if inner.name == "stencil.access":
                    arg = inner.operands[0]
                    src = op.operands[arg.index] if arg.owner is block else None
                    base = temp_lb.get(src, ZERO)
                    inner.attributes["offset"] = tuple(
                        o + d - b for o, d, b in zip(inner.attributes["offset"], dom.lb, base))
            op.attributes["range"] = Range(ZERO, dom.extent)
            for r in op.results:
                temp_lb[r] = dom.lb
        elif op.name == "stencil.store":
            r = op.attributes["range"]
            flb = assert_lb.get(op.operands[1], ZERO)
            base = temp_lb.get(op.operands[0], ZERO)
            shift = op.attributes.get("shift", ZERO)
            op.attributes["range"] = r.translate(tuple(-f for f in flb))
            op.attributes["shift"] = tuple(s + b - f for s, b, f in zip(shift, base, flb))


def shift_shapes(module: Module) -> None:
    """Translate all temps, domains and field ranges to start at zero."""
    for func in module.all_functions():
        if any(op.name.startswith("stencil.") for op in func.block.ops):
            if any(op.name in ("stencil.load", "stencil.apply") and "range" not in op.attributes
                   for op in func.block.ops):
                raise ValueError(f"@{func.name}: run shape inference before shifting")
            _shift_function(func)


def field_params(func: Function) -> List[Value]:
    return [a for a in func.args if isinstance(a.type, FieldType)]
