"""Stencil unrolling: replicate an apply body to compute several points."""

from __future__ import annotations

from typing import List

from ..dialects.stencil import unroll_of
from ..ir import Module, Operation, clone_op
from ..types import DIM_NAMES
from .inlining import shift_accesses


class UnrollError(ValueError):
    pass


def unroll_stencil(apply: Operation, factor: int, dim: str) -> None:
    """Replicate the body of ``apply`` ``factor`` times along ``dim``.

    Replica ``r`` reads every access at its offset shifted by ``r`` along
    ``dim``; the return lists result ``k`` of replica ``r`` at position
    ``k * factor + r``.  Operands, results and their types are unchanged.
    """
    if not isinstance(factor, int) or factor < 1:
        raise UnrollError(f"unroll factor must be a positive integer, got {factor!r}")
    if dim not in DIM_NAMES:
        raise UnrollError(f"unroll dimension must be one of i, j, k, got {dim!r}")
    if unroll_of(apply)[0] != 1:
        raise UnrollError("apply is already unrolled")
    if factor == 1:
        return
    block = apply.regions[0].blocks[0]
    body = block.ops[:-1]
    term = block.terminator
    axis = DIM_NAMES.index(dim)
    replicas: List[list] = []
    new_ops: List[Operation] = []
    for r in range(factor):
        mapping = {}
        delta = [0, 0, 0]
        delta[axis] = r
        for op in body:
            new = clone_op(op, mapping)
            shift_accesses(new, delta)
            new_ops.append(new)
        replicas.append([mapping.get(v, v) for v in term.operands])
    returned = [replicas[r][k] for k in range(len(term.operands)) for r in range(factor)]
    new_term = Operation("stencil.return", returned)
    term.drop_operand_uses()
    term.detach()
    for op in reversed(body):
        op.erase()
    for op in new_ops:
        block.append(op)
    block.append(new_term)
    apply.attributes["unroll_factor"] = factor
    apply.attributes["unroll_dim"] = dim


def unroll_all(module: Module, factor: int, dim: str) -> int:
    """Unroll every stencil.apply in the module; returns how many were unrolled."""
    count = 0
    for func in module.all_functions():
        for op in list(func.block.ops):
            if op.name == "stencil.apply":
                unroll_stencil(op, factor, dim)
                count += 1
    return count
