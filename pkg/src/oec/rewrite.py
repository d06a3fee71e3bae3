"""Greedy pattern rewriter and the generic cleanup passes (CSE, DCE, folding)."""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .ir import Block, Function, Module, Operation, erase_dead_op, replace_all_uses, walk_region
from .registry import PURE, READ, WRITE, effect_of, is_cse_candidate, lookup
from .textual import format_attr_dict
from .types import ScalarType, index
from .verifier import VerificationError, verify


class RewritePattern:
    """Base class: ``match`` returns a match state or ``None``; ``rewrite``
    performs the edit through the IR API."""

    name = "pattern"
    benefit = 1

    def match(self, op: Operation):  # pragma: no cover - overridden
        raise NotImplementedError

    def rewrite(self, op: Operation, state) -> None:  # pragma: no cover - overridden
        raise NotImplementedError


class PatternError(Exception):
    """A rewrite produced an invalid module."""

    def __init__(self, pattern: str, diagnostics):
        self.pattern = pattern
        self.diagnostics = list(diagnostics)
        detail = "; ".join(str(d) for d in self.diagnostics[:5])
        super().__init__(f"pattern '{pattern}' produced an invalid module: {detail}")


@dataclass
class ConvergenceReport:
    converged: bool
    edits: int
    applied: Counter = field(default_factory=Counter)
    limit: int = 0


def default_rewrite_limit(module: Module) -> int:
    override = os.environ.get("OEC_MAX_REWRITES")
    if override:
        return int(override)
    return 10 * max(1, sum(1 for _ in module.walk()))


def _live(op: Operation) -> bool:
    return op.function is not None


def apply_greedily(module: Module, patterns: Sequence[RewritePattern],
                   max_iterations: Optional[int] = None, reverse: bool = False,
                   check: bool = True) -> ConvergenceReport:
    """Apply ``patterns`` until none matches or the edit budget is spent.

    Each step scans patterns by decreasing benefit and, for each pattern, the
    ops in program order (or reversed order when ``reverse`` is set); the
    first match is rewritten and the scan restarts.
    """
    limit = default_rewrite_limit(module) if max_iterations is None else max_iterations
    ordered = sorted(patterns, key=lambda p: -p.benefit)
    report = ConvergenceReport(False, 0, Counter(), limit)
    while True:
        worklist = list(module.walk())
        if reverse:
            worklist.reverse()
        fired = None
        for pattern in ordered:
            for op in worklist:
                if not _live(op):
                    continue
                state = pattern.match(op)
                if state is None:
                    continue
                if report.edits >= limit:
                    return report
                pattern.rewrite(op, state)
                fired = pattern
                break
            if fired is not None:
                break
        if fired is None:
            report.converged = True
            return report
        report.edits += 1
        report.applied[fired.name] += 1
        if check:
            diags = verify(module)
            if diags:
                raise PatternError(fired.name, diags)


# -- common subexpression elimination ----------------------------------------

def _cse_key(op: Operation):
    return (
        op.name,
        tuple(v.handle for v in op.operands),
        format_attr_dict(op.attributes),
        tuple(str(r.type) for r in op.results),
    )


def _cse_block(block: Block, pure: Dict, reads: Dict) -> int:
    removed = 0
    pure = dict(pure)
    reads = dict(reads)
    for op in list(block.ops):
        d = lookup(op.name)
        if d is not None and is_cse_candidate(op):
            table = pure if d.effect == PURE else reads
            key = _cse_key(op)
            prev = table.get(key)
            if prev is not None:
                for old, new in zip(op.results, prev.results):
                    replace_all_uses(old, new)
                op.erase()
                removed += 1
                continue
            table[key] = op
            continue
        effect = effect_of(op)
        for region in op.regions:
            isolated = d is not None and d.isolated
            barrier = isolated or op.name == "gpu.launch"
            inner_pure = {} if barrier else pure
            # reads survive into a nested region only if it cannot write
            inner_reads = {} if barrier or effect == WRITE else reads
            for b in region.blocks:
                removed += _cse_block(b, inner_pure, inner_reads)
        if effect == WRITE:
            reads.clear()
    return removed


def run_cse(module: Module) -> int:
    """Deduplicate pure ops (and reads without intervening writes); returns
    the number of ops removed."""
    removed = 0
    for func in list(module.all_functions()):
        removed += _cse_block(func.block, {}, {})
    return removed


# -- dead code elimination ---------------------------------------------------

def _shrink_apply(op: Operation) -> bool:
    """Drop unused results and unused block arguments of a stencil.apply."""
    changed = False
    factor = op.attributes.get("unroll_factor", 1)
    block = op.regions[0].blocks[0]
    used = [k for k, r in enumerate(op.results) if r.uses]
    if used and len(used) < len(op.results):
        term = block.terminator
        vals = list(term.operands)
        term.set_operands([v for k in used for v in vals[k * factor:(k + 1) * factor]])
        op.replace_results([op.results[k].type for k in used], used)
        changed = True
    dead_args = [i for i, a in enumerate(block.args) if not a.uses]
    if dead_args:
        keep = [v for i, v in enumerate(op.operands) if i not in dead_args]
        op.set_operands(keep)
        for i in reversed(dead_args):
            block.erase_arg(i)
        changed = True
    return changed


def run_dce(module: Module) -> int:
    """Erase dead ops to a fixpoint; returns the number of ops removed."""
    before = sum(1 for _ in module.walk())
    changed = True
    while changed:
        changed = False
        for func in list(module.all_functions()):
            for op in reversed(list(func.walk())):
                if not _live(op):
                    continue
                if erase_dead_op(op):
                    changed = True
                elif op.name == "stencil.apply" and _shrink_apply(op):
                    changed = True
    return before - sum(1 for _ in module.walk())


# -- canonical scheduling -------------------------------------------------------

def _captured(op: Operation, block: Block) -> List[Value]:
    """Operands of ``op`` and of everything nested in it that ``block`` defines."""
    vals = list(op.operands)
    for region in op.regions:
        for inner in walk_region(region):
            vals.extend(inner.operands)
    return [v for v in vals if v.defining_op is not None and v.defining_op.parent is block]


def _schedule_block(block: Block) -> bool:
    term = block.terminator
    if term is None:
        return False
    order: List[Operation] = []
    seen = set()
    # iterative post-order walk from the terminator's operands
    stack = [(term, iter(_captured(term, block)))]
    while stack:
        op, deps = stack[-1]
        for v in deps:
            d = v.defining_op
            if id(d) not in seen:
                seen.add(id(d))
                stack.append((d, iter(_captured(d, block))))
                break
        else:
            stack.pop()
            order.append(op)
    rest = [op for op in block.ops if id(op) not in seen and op is not term]
    new = rest + order
    changed = new != block.ops
    block.ops[:] = new
    for op in block.ops:
        for region in op.regions:
            for b in region.blocks:
                changed |= _schedule_block(b)
    return changed


def schedule_applies(module: Module) -> int:
    """Reorder every stencil.apply body into a canonical dataflow order.

    Ops are listed in post-order of a depth-first walk from the return
    operands, so two bodies computing the same expression DAG print the same
    regardless of the order the rewrites happened to create them in.
    Returns the number of reordered bodies.
    """
    changed = 0
    for op in list(module.walk()):
        if op.name == "stencil.apply":
            changed += _schedule_block(op.regions[0].blocks[0])
    return changed


# -- constant folding ----------------------------------------------------------

def _const_of(v):
    op = v.defining_op
    if op is not None and op.name == "arith.constant":
        return op
    return None


def constant_attr(value, t: ScalarType):
    if t.is_float:
        return float(value)
    if t.name == "i1":
        return int(bool(value))
    return int(value)


def _make_constant(anchor: Operation, value, t: ScalarType) -> Operation:
    c = Operation("arith.constant", (), [t], {"value": constant_attr(value, t)})
    anchor.parent.insert_before(anchor, c)
    return c


def _is_const(v, x) -> bool:
    c = _const_of(v)
    return c is not None and c.attributes["value"] == x


def _replace_op(op: Operation, values: Sequence) -> None:
    for r, v in zip(op.results, values):
        replace_all_uses(r, v)
    operands = list(op.operands)
    op.erase()
    for v in operands:
        d = v.defining_op
        if d is not None and d.name == "arith.constant" and _live(d):
            erase_dead_op(d)


def _inline_region_before(op: Operation, region_index: int) -> List:
    """Move the ops of one region of ``op`` before it; returns yielded values."""
    block = op.regions[region_index].blocks[0]
    term = block.terminator
    values = list(term.operands)
    for inner in list(block.ops):
        if inner is term:
            continue
        inner.detach()
        op.parent.insert_before(op, inner)
    return values


def _fold_op(op: Operation, only_index: bool) -> bool:
    from .interpreter import eval_arith

    name = op.name
    if name == "loop.if":
        c = _const_of(op.operands[0])
        if c is None or only_index:
            return False
        vals = _inline_region_before(op, 0 if c.attributes["value"] else 1)
        _replace_op(op, vals)
        return True
    if not name.startswith("arith.") or name == "arith.constant" or len(op.results) != 1:
        return False
    t = op.result.type
    if only_index and t != index:
        return False
    a = op.operands
    if name == "arith.select":
        c = _const_of(a[0])
        if c is not None:
            _replace_op(op, [a[1] if c.attributes["value"] else a[2]])
            return True
        if a[1] is a[2]:
            _replace_op(op, [a[1]])
            return True
    consts = [_const_of(v) for v in a]
    if all(c is not None for c in consts):
        from .interpreter import constant_value

        value = eval_arith(op, [constant_value(c) for c in consts])
        new = _make_constant(op, value, t)
        _replace_op(op, [new.result])
        return True
    # integer identities (float identities would change signed zeros)
    if name == "arith.addi":
        if _is_const(a[1], 0):
            _replace_op(op, [a[0]])
            return True
        if _is_const(a[0], 0):
            _replace_op(op, [a[1]])
            return True
    elif name == "arith.subi" and _is_const(a[1], 0):
        _replace_op(op, [a[0]])
        return True
    elif name == "arith.muli":
        if _is_const(a[1], 1):
            _replace_op(op, [a[0]])
            return True
        if _is_const(a[0], 1):
            _replace_op(op, [a[1]])
            return True
        if _is_const(a[0], 0) or _is_const(a[1], 0):
            new = _make_constant(op, 0, t)
            _replace_op(op, [new.result])
            return True
    return False


def _fold(module: Module, only_index: bool) -> int:
    folded = 0
    changed = True
    while changed:
        changed = False
        for func in list(module.all_functions()):
            for op in list(func.walk()):
                if _live(op) and _fold_op(op, only_index):
                    folded += 1
                    changed = True
    return folded


def fold_constants(module: Module) -> int:
    """Fold arith ops with constant operands, integer identities and
    conditionals with constant conditions; returns the number of folds."""
    return _fold(module, only_index=False)


def canonicalize_index(module: Module) -> int:
    """Fold constant index arithmetic only."""
    return _fold(module, only_index=True)
