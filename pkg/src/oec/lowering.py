"""Lowering of shifted, shape-annotated stencil programs to loops and buffers.

Conversions:

1. ``stencil.assert``  -> the field parameter becomes a statically shaped buffer;
2. ``stencil.load``    -> ``buffer.view`` of the parameter displaced by the load shift;
3. ``stencil.apply``   -> one buffer per result (an allocation, or a view of
   the output parameter when the result is stored directly) and a
   ``loop.parallel`` over the domain, stepping by the unroll factor;
4. ``stencil.access``  -> ``buffer.load`` at induction variables + offset;
5. ``stencil.return``  -> ``buffer.store`` per operand at induction variables
   + replica displacement along the unroll dimension;
6. ``stencil.store``   -> nothing for direct stores, otherwise a copy loop
   over the store range.
"""

from __future__ import annotations

from typing import Dict, List, Optional

from .dialects.loop import view_type
from .dialects.stencil import unroll_of
from .ir import (Block, Function, Global, Module, Operation, Region, Value, clone_function, clone_module,
                 clone_op, op_path)
from .types import DIM_NAMES, BufferType, FieldType, TempType, index
from .verifier import Diagnostic, VerificationError


class LoweringError(VerificationError):
    pass


def _const(block: Block, pos: Optional[int], value: int) -> Value:
    op = Operation("arith.constant", (), [index], {"value": int(value)})
    if pos is None:
        block.append(op)
    else:
        block.insert(pos, op)
    return op.result


class _LoopBody:
    """A parallel loop body with a cache of ``iv + constant`` index values
    materialized at the top of the body."""

    def __init__(self, axes):
        self.axes = axes
        self.block = Block([index] * len(axes))
        self.iv = dict(zip(axes, self.block.args))
        self._cache: Dict[tuple, Value] = {}
        self._pos = 0

    def _insert(self, op: Operation) -> Value:
        self.block.insert(self._pos, op)
        self._pos += 1
        return op.results[0] if op.results else None

    def index_of(self, axis: int, offset: int) -> Value:
        if offset == 0:
            return self.iv[axis]
        key = (axis, offset)
        if key not in self._cache:
            c = self._insert(Operation("arith.constant", (), [index], {"value": int(offset)}))
            self._cache[key] = self._insert(Operation("arith.addi", [self.iv[axis], c], [index]))
        return self._cache[key]

    def indices(self, offset) -> List[Value]:
        return [self.index_of(a, offset[a]) for a in self.axes]


def _parallel(block: Block, axes, lb, ub, step, body: _LoopBody) -> Operation:
    bounds = [_const(block, None, lb[a]) for a in axes]
    bounds += [_const(block, None, ub[a]) for a in axes]
    bounds += [_const(block, None, step[a]) for a in axes]
    body.block.append(Operation("loop.yield"))
    loop = Operation("loop.parallel", bounds, [], {}, [Region([body.block])])
    block.append(loop)
    return loop


def _sub(vec, axes):
    return tuple(vec[a] for a in axes)


def _check_ready(func: Function, diags: List[Diagnostic]) -> None:
    for op in func.block.ops:
        if op.name in ("stencil.load", "stencil.apply"):
            r = op.attributes.get("range")
            if r is None:
                diags.append(Diagnostic(op_path(op), "missing range; run shape-infer and shape-shift first"))
            elif any(r.lb):
                diags.append(Diagnostic(op_path(op), f"range {r} is not shifted; run shape-shift first"))
        elif op.name == "stencil.assert" and any(op.attributes["range"].lb):
            diags.append(Diagnostic(op_path(op), "asserted range is not shifted; run shape-shift first"))


def _lower_function(func: Function, direct_store: bool, diags: List[Diagnostic]) -> Function:
    _check_ready(func, diags)
    if diags:
        return func
    ops = func.block.ops
    fields = [a for a in func.args if isinstance(a.type, FieldType)]
    dims = fields[0].type.dims if fields else DIM_NAMES
    axes = tuple(DIM_NAMES.index(d) for d in dims)
    asserts = {op.operands[0]: op.attributes["range"] for op in ops if op.name == "stencil.assert"}
    stored = {op.operands[1] for op in ops if op.name == "stencil.store"}

    arg_types = []
    for a in func.args:
        if isinstance(a.type, FieldType):
            arg_types.append(BufferType(_sub(asserts[a].extent, axes), a.type.element))
        else:
            arg_types.append(a.type)
    attrs = dict(func.attributes)
    attrs["outputs"] = tuple(a.index for a in func.args if a in stored)
    attrs["arg_dims"] = [a.type.dims if isinstance(a.type, FieldType) else "" for a in func.args]
    new = Function(func.name, arg_types, func.result_types, attrs)
    block = new.block
    env: Dict[Value, Value] = dict(zip(func.args, new.args))

    # decide which apply results are written straight into their output
    direct: Dict[Value, Operation] = {}
    if direct_store:
        for op in ops:
            if op.name != "stencil.apply":
                continue
            dom = op.attributes["range"]
            for r in op.results:
                stores = [u for u in r.users if u.name == "stencil.store"]
                if len(stores) != 1:
                    continue
                s = stores[0]
                srange, shift = s.attributes["range"], s.attributes.get("shift", (0, 0, 0))
                if srange.extent == dom.extent and srange.lb == tuple(shift):
                    direct[r] = s

    allocs = []
    for op in ops:
        if op.name == "stencil.apply":
            ext = _sub(op.attributes["range"].extent, axes)
            for r in op.results:
                if r not in direct:
                    a = Operation("buffer.alloc", (), [BufferType(ext, r.type.element)])
                    block.append(a)
                    env[r] = a.result
                    allocs.append(a.result)

    for op in ops:
        if op.name == "stencil.assert":
            continue
        if op.name == "stencil.load":
            base = env[op.operands[0]]
            offs = _sub(op.attributes.get("shift", (0, 0, 0)), axes)
            shape = _sub(op.attributes["range"].extent, axes)
            v = Operation("buffer.view", [base], [view_type(base.type, offs, shape)], {"offsets": offs})
            block.append(v)
            env[op.result] = v.result
        elif op.name == "stencil.apply":
            _lower_apply(op, block, env, direct, axes, diags)
        elif op.name == "stencil.store":
            if direct.get(op.operands[0]) is op:
                continue
            _lower_copy(op, block, env, axes)
        elif op.name.startswith("stencil."):
            diags.append(Diagnostic(op_path(op), f"unexpected {op.name} at function level"))
        else:
            mapping = dict(env)
            block.append(clone_op(op, mapping))
            env.update({k: v for k, v in mapping.items() if k in op.results})
    for buf in allocs:
        block.append(Operation("buffer.dealloc", [buf]))
    return new


def _lower_apply(op: Operation, block: Block, env, direct, axes, diags) -> None:
    dom = op.attributes["range"]
    factor, axis = unroll_of(op)
    if factor > 1:
        for r in op.results:
            for s in r.users:
                if s.name == "stencil.store":
                    ext = s.attributes["range"].extent[axis]
                    if ext % factor:
                        diags.append(Diagnostic(
                            op_path(op),
                            f"unroll factor {factor} does not divide the stored extent {ext} "
                            f"along {DIM_NAMES[axis]}"))
        if axis not in axes:
            diags.append(Diagnostic(op_path(op), f"unroll dimension {DIM_NAMES[axis]} is not a program dimension"))
        if diags:
            return
    for r in op.results:
        s = direct.get(r)
        if s is not None:
            base = env[s.operands[1]]
            offs = _sub(s.attributes["range"].lb, axes)
            v = Operation("buffer.view", [base], [view_type(base.type, offs, _sub(dom.extent, axes))],
                          {"offsets": offs})
            block.append(v)
            env[r] = v.result
    step = [1, 1, 1]
    step[axis] = factor
    body = _LoopBody(axes)
    region_block = op.regions[0].blocks[0]
    mapping: Dict[Value, Value] = {}
    temps: Dict[Value, Value] = {}
    for arg, v in zip(region_block.args, op.operands):
        if isinstance(v.type, TempType):
            temps[arg] = env[v]
        else:
            mapping[arg] = env.get(v, v)
    results = [env[r] for r in op.results]

    def lower_block(src: Block, dst: Block) -> None:
        for inner in src.ops:
            if inner.name == "stencil.access":
                buf = temps[inner.operands[0]]
                load = Operation("buffer.load", [buf, *body.indices(inner.attributes["offset"])],
                                 [buf.type.element])
                dst.append(load)
                mapping[inner.result] = load.result
            elif inner.name == "stencil.return":
                vals = inner.operands
                for k, buf in enumerate(results):
                    for u in range(factor):
                        off = [0, 0, 0]
                        off[axis] = u
                        v = mapping.get(vals[k * factor + u], vals[k * factor + u])
                        dst.append(Operation("buffer.store", [v, buf, *body.indices(off)]))
            else:
                new = Operation(inner.name, [mapping.get(v, v) for v in inner.operands],
                                [r.type for r in inner.results], dict(inner.attributes))
                for region in inner.regions:
                    nr = Region()
                    for b in region.blocks:
                        nb = Block([a.type for a in b.args])
                        mapping.update(zip(b.args, nb.args))
                        nr.add_block(nb)
                        lower_block(b, nb)
                    new.add_region(nr)
                mapping.update(zip(inner.results, new.results))
                dst.append(new)

    lower_block(region_block, body.block)
    _parallel(block, axes, (0, 0, 0), dom.ub, step, body)


def _lower_copy(op: Operation, block: Block, env, axes) -> None:
    srange = op.attributes["range"]
    shift = op.attributes.get("shift", (0, 0, 0))
    temp, field = env[op.operands[0]], env[op.operands[1]]
    body = _LoopBody(axes)
    load = Operation("buffer.load", [temp, *body.indices(tuple(-s for s in shift))], [temp.type.element])
    body.block.append(load)
    body.block.append(Operation("buffer.store", [load.result, field, *body.indices((0, 0, 0))]))
    _parallel(block, axes, srange.lb, srange.ub, (1, 1, 1), body)


def lower_to_loops(module: Module, direct_store: bool = True) -> Module:
    """Return a new module in which no stencil operation remains."""
    diags: List[Diagnostic] = []
    out = Module(module.name, dict(module.attributes), module.kind)
    for entry in module.body:
        if isinstance(entry, Function) and any(op.name.startswith("stencil.") for op in entry.walk()):
            out.append(_lower_function(entry, direct_store, diags))
        elif isinstance(entry, Function):
            out.append(clone_function(entry))
        elif isinstance(entry, Module):
            out.append(clone_module(entry))
        else:
            out.append(Global(entry.name, dict(entry.attributes)))
    if diags:
        raise LoweringError(diags, "lower-loops")
    return out
