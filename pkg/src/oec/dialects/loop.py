"""Mid-level operations: structured loops and conditionals (``loop.*``) and
statically shaped buffers (``buffer.*``)."""

from __future__ import annotations

from ..registry import ALLOC, READ, WRITE, define
from ..types import BufferType, i1, index


def _single_block(region, what):
    if len(region.blocks) != 1:
        return [f"{what} region must have exactly one block"]
    return []


def _verify_yield_of(region, result_types, what):
    errs = _single_block(region, what)
    if errs:
        return errs
    term = region.blocks[0].terminator
    if term is None or term.name != "loop.yield":
        return [f"{what} region must end with loop.yield"]
    got = [v.type for v in term.operands]
    if got != list(result_types):
        return [f"{what} yields {[str(t) for t in got]}, expected {[str(t) for t in result_types]}"]
    return []


def verify_if(op):
    errs = []
    if len(op.operands) != 1 or op.operands[0].type != i1:
        errs.append("loop.if takes a single i1 condition")
    if len(op.regions) != 2:
        return errs + ["loop.if needs a then and an else region"]
    types = [r.type for r in op.results]
    for region, what in zip(op.regions, ("then", "else")):
        if region.blocks and region.blocks[0].args:
            errs.append(f"{what} region takes no arguments")
        errs += _verify_yield_of(region, types, what)
    return errs


def verify_yield(op):
    parent = op.parent_op
    if parent is None or parent.name not in ("loop.if", "loop.parallel", "loop.for"):
        return ["loop.yield must terminate a loop.if, loop.parallel or loop.for region"]
    return []


def _verify_loop(op, n):
    errs = []
    if len(op.regions) != 1:
        return ["loop needs one region"]
    errs += _verify_yield_of(op.regions[0], [], "loop body")
    block = op.regions[0].blocks[0] if op.regions[0].blocks else None
    if block is None:
        return errs
    if len(block.args) != n or any(a.type != index for a in block.args):
        errs.append(f"loop body must take {n} index arguments")
    if op.results:
        errs.append("loops produce no results")
    return errs


def verify_parallel(op):
    if len(op.operands) % 3 or not op.operands:
        return ["loop.parallel expects lower bounds, upper bounds and steps"]
    if any(v.type != index for v in op.operands):
        return ["loop.parallel bounds must be index values"]
    return _verify_loop(op, len(op.operands) // 3)


def verify_for(op):
    if len(op.operands) != 3 or any(v.type != index for v in op.operands):
        return ["loop.for expects index lower bound, upper bound and step"]
    return _verify_loop(op, 1)


def verify_alloc(op):
    if op.operands or len(op.results) != 1:
        return ["buffer.alloc takes no operands and has one result"]
    t = op.result.type
    if not isinstance(t, BufferType) or not t.is_identity_layout:
        return ["buffer.alloc must produce an identity-layout buffer"]
    return []


def verify_dealloc(op):
    if len(op.operands) != 1 or op.results or not isinstance(op.operands[0].type, BufferType):
        return ["buffer.dealloc takes one buffer"]
    return []


def view_type(base: BufferType, offsets, shape) -> BufferType:
    offset = base.offset + sum(o * s for o, s in zip(offsets, base.strides))
    return BufferType(tuple(shape), base.element, offset, tuple(base.strides))


def verify_view(op):
    if len(op.operands) != 1 or len(op.results) != 1:
        return ["buffer.view takes one buffer and has one result"]
    base, res = op.operands[0].type, op.result.type
    if not isinstance(base, BufferType) or not isinstance(res, BufferType):
        return ["buffer.view operates on buffers"]
    offs = op.attributes.get("offsets")
    if not isinstance(offs, tuple) or len(offs) != base.rank or res.rank != base.rank:
        return ["buffer.view needs one offset per dimension"]
    errs = []
    for d, (o, e, be) in enumerate(zip(offs, res.shape, base.shape)):
        if o < 0 or o + e > be:
            errs.append(f"view [{o}, {o + e}) exceeds base extent {be} in dimension {d}")
    if not errs and res != view_type(base, offs, res.shape):
        errs.append(f"view result type {res} inconsistent with base {base}")
    return errs


def _index_operands(op, buf_pos):
    t = op.operands[buf_pos].type if len(op.operands) > buf_pos else None
    if not isinstance(t, BufferType):
        return None, ["expects a buffer operand"]
    idx = op.operands[buf_pos + 1:]
    if len(idx) != t.rank or any(v.type != index for v in idx):
        return t, [f"expects {t.rank} index operands"]
    return t, []


def verify_load(op):
    t, errs = _index_operands(op, 0)
    if errs:
        return errs
    if len(op.results) != 1 or op.result.type != t.element:
        return [f"buffer.load must produce {t.element}"]
    return []


def verify_store(op):
    if not op.operands:
        return ["buffer.store needs a value"]
    t, errs = _index_operands(op, 1)
    if errs:
        return errs
    if op.results or op.operands[0].type != t.element:
        return [f"buffer.store must store {t.element} and produce nothing"]
    return []


define("loop.if", verify_if, num_regions=2)
define("loop.yield", verify_yield, terminator=True)
define("loop.parallel", verify_parallel, num_regions=1)
define("loop.for", verify_for, num_regions=1)
define("buffer.alloc", verify_alloc, effect=ALLOC)
define("buffer.dealloc", verify_dealloc, effect=WRITE)
define("buffer.view", verify_view)
define("buffer.load", verify_load, effect=READ)
define("buffer.store", verify_store, effect=WRITE)

MID_OPS = frozenset({
    "loop.if", "loop.yield", "loop.parallel", "loop.for",
    "buffer.alloc", "buffer.dealloc", "buffer.view", "buffer.load", "buffer.store",
})
