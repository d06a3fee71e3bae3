"""Producer-consumer fusion of stencil applies.

Two patterns cooperate: ``inline`` replaces every access of a producer's
result by a clone of the producer's body evaluated at the access offset, and
``reroute`` funnels the results of a producer with several consumers (or a
consumer and a store) through its earliest consumer so that it can be
inlined afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

from ..dialects.stencil import unroll_of
from ..ir import Block, Module, Operation, Region, Value, clone_op, replace_all_uses
from ..rewrite import ConvergenceReport, RewritePattern, apply_greedily


def shift_accesses(op: Operation, delta) -> None:
    """Add ``delta`` to the offset of every stencil.access nested in ``op``."""
    if not any(delta):
        return
    for inner in op.walk():
        if inner.name == "stencil.access":
            off = inner.attributes["offset"]
            inner.attributes["offset"] = tuple(o + d for o, d in zip(off, delta))


def _consumers(op: Operation):
    users = {}
    for r in op.results:
        for u in r.users:
            users[u] = None
    block_ops = op.parent.ops
    return sorted(users, key=block_ops.index) if all(u.parent is op.parent for u in users) else None


@dataclass
class InlineMatch:
    producer: Operation
    consumer: Operation


@dataclass
class RerouteMatch:
    producer: Operation
    consumers: List[Operation]
    stores: List[Operation] = field(default_factory=list)

    @property
    def next_consumer(self) -> Operation:
        return self.consumers[0]


class InlinePattern(RewritePattern):
    name = "inline"
    benefit = 2

    def match(self, op: Operation) -> Optional[InlineMatch]:
        if op.name != "stencil.apply" or unroll_of(op)[0] != 1:
            return None
        users = _consumers(op)
        if not users or len(users) != 1 or users[0].name != "stencil.apply":
            return None
        return InlineMatch(op, users[0])

    def rewrite(self, op: Operation, state: InlineMatch) -> None:
        inline_producer(state)


class ReroutePattern(RewritePattern):
    name = "reroute"
    benefit = 1

    def match(self, op: Operation) -> Optional[RerouteMatch]:
        if op.name != "stencil.apply":
            return None
        users = _consumers(op)
        if not users:
            return None
        applies = [u for u in users if u.name == "stencil.apply"]
        stores = [u for u in users if u.name == "stencil.store"]
        if len(applies) + len(stores) != len(users):
            return None
        if len(applies) >= 2 or (len(applies) == 1 and stores):
            return RerouteMatch(op, applies, stores)
        return None

    def rewrite(self, op: Operation, state: RerouteMatch) -> None:
        reroute_outputs(state)


def _clone_producer_body(producer: Operation, dst: Block, arg_map: Dict[Value, Value], offset) -> List[Value]:
    block = producer.regions[0].blocks[0]
    mapping = dict(arg_map)
    for op in block.ops[:-1]:
        new = clone_op(op, mapping)
        shift_accesses(new, offset)
        dst.append(new)
    return [mapping.get(v, v) for v in block.terminator.operands]


def inline_producer(match: InlineMatch) -> Operation:
    """Fuse ``match.producer`` into ``match.consumer``; returns the new consumer."""
    producer, consumer = match.producer, match.consumer
    assert all(u is consumer for r in producer.results for u in r.users), "producer has other users"
    result_index = {r: k for k, r in enumerate(producer.results)}

    operands: List[Value] = []
    for v in producer.operands:
        if v not in operands:
            operands.append(v)
    for v in consumer.operands:
        if v not in result_index and v not in operands:
            operands.append(v)
    new_block = Block([v.type for v in operands])
    arg_of = dict(zip(operands, new_block.args))
    p_block = producer.regions[0].blocks[0]
    p_map = {a: arg_of[v] for a, v in zip(p_block.args, producer.operands)}

    c_block = consumer.regions[0].blocks[0]
    mapping: Dict[Value, Value] = {}
    inlined: Dict[Value, int] = {}
    for a, v in zip(c_block.args, consumer.operands):
        if v in result_index:
            inlined[a] = result_index[v]
        else:
            mapping[a] = arg_of[v]

    def clone_into(src: Block, dst: Block) -> None:
        for op in src.ops:
            if op.name == "stencil.access" and op.operands[0] in inlined:
                vals = _clone_producer_body(producer, dst, p_map, op.attributes["offset"])
                mapping[op.result] = vals[inlined[op.operands[0]]]
                continue
            new = Operation(op.name, [mapping.get(v, v) for v in op.operands],
                            [r.type for r in op.results], dict(op.attributes))
            for region in op.regions:
                nr = Region()
                for b in region.blocks:
                    nb = Block([a.type for a in b.args])
                    mapping.update(zip(b.args, nb.args))
                    nr.add_block(nb)
                    clone_into(b, nb)
                new.add_region(nr)
            mapping.update(zip(op.results, new.results))
            dst.append(new)

    clone_into(c_block, new_block)
    fused = Operation("stencil.apply", operands, [r.type for r in consumer.results],
                      dict(consumer.attributes), [Region([new_block])])
    consumer.parent.insert_before(consumer, fused)
    for old, new in zip(consumer.results, fused.results):
        replace_all_uses(old, new)
    consumer.erase()
    producer.erase()
    return fused


def reroute_outputs(match: RerouteMatch) -> None:
    """Route every producer result used outside the next consumer through it."""
    producer, first = match.producer, match.next_consumer
    block = first.regions[0].blocks[0]
    term = block.terminator
    factor, axis = unroll_of(first)
    n_old = len(first.results)
    routed = [r for r in producer.results if any(u is not first for u in r.users)]

    operands = list(first.operands)
    args = []
    for r in routed:
        if r in operands:
            args.append(block.args[operands.index(r)])
        else:
            operands.append(r)
            args.append(block.add_arg(r.type))
    first.set_operands(operands)

    returned = list(term.operands)
    for arg in args:
        for u in range(factor):
            off = [0, 0, 0]
            off[axis] = u
            acc = Operation("stencil.access", [arg], [arg.type.element], {"offset": tuple(off)})
            block.insert_before(term, acc)
            returned.append(acc.result)
    term.set_operands(returned)
    first.replace_results([r.type for r in first.results] + [r.type for r in routed], list(range(n_old)))

    ops = first.parent.ops
    anchor = first
    for r, new in zip(routed, first.results[n_old:]):
        for user, i in list(r.uses):
            if user is first:
                continue
            user.set_operand(i, new)
            if user.name == "stencil.store" and ops.index(user) < ops.index(first):
                user.detach()
                first.parent.insert_after(anchor, user)
                anchor = user


def inline_all(module: Module, reverse: bool = False, max_iterations: Optional[int] = None,
               check: bool = True) -> ConvergenceReport:
    """Inline until no producer can be fused any more."""
    return apply_greedily(module, [InlinePattern(), ReroutePattern()], max_iterations, reverse, check)
