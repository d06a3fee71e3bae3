"""Small helpers for constructing IR programmatically."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

from .ir import Block, Operation, Region, Value
from .types import Range, ScalarType, TempType, Type, i1, index


class Builder:
    """Inserts new operations into ``block`` before ``anchor`` (or at the end)."""

    def __init__(self, block: Block, anchor: Optional[Operation] = None):
        self.block = block
        self.anchor = anchor

    @classmethod
    def before(cls, op: Operation) -> "Builder":
        return cls(op.parent, op)

    def insert(self, op: Operation) -> Operation:
        if self.anchor is None:
            self.block.append(op)
        else:
            self.block.insert_before(self.anchor, op)
        return op

    def create(
        self,
        name: str,
        operands: Sequence[Value] = (),
        result_types: Sequence[Type] = (),
        attributes: Optional[dict] = None,
        regions: Sequence[Region] = (),
    ) -> Operation:
        return self.insert(Operation(name, operands, result_types, attributes, regions))

    def value(self, name, operands, result_type, **attributes) -> Value:
        return self.create(name, operands, [result_type], attributes).result

    def constant(self, value, type: ScalarType) -> Value:
        if type.is_float:
            value = float(value)
        elif type == i1:
            value = int(bool(value))
        else:
            value = int(value)
        return self.create("arith.constant", (), [type], {"value": value}).result

    def index(self, value: int) -> Value:
        return self.constant(value, index)

    def arith(self, opname: str, *operands: Value, **attributes) -> Value:
        if opname in ("cmpf", "cmpi"):
            rtype = i1
        elif opname == "select":
            rtype = operands[1].type
        else:
            rtype = operands[0].type
        return self.create(f"arith.{opname}", operands, [rtype], attributes).result

    # stencil conveniences ------------------------------------------------
    def access(self, temp: Value, offset) -> Value:
        return self.create(
            "stencil.access", [temp], [temp.type.element], {"offset": tuple(offset)}
        ).result

    def apply(
        self,
        operands: Sequence[Value],
        result_types: Sequence[TempType],
        body: Callable[["Builder", list], Sequence[Value]],
        attributes: Optional[dict] = None,
    ) -> Operation:
        block = Block([v.type for v in operands])
        inner = Builder(block)
        returned = list(body(inner, list(block.args)))
        inner.create("stencil.return", returned)
        return self.create("stencil.apply", operands, result_types, attributes, [Region([block])])

    def if_(self, cond: Value, result_types, then_body, else_body) -> Operation:
        regions = []
        for body in (then_body, else_body):
            block = Block()
            inner = Builder(block)
            inner.create("loop.yield", list(body(inner)))
            regions.append(Region([block]))
        return self.create("loop.if", [cond], result_types, None, regions)

    def load(self, field: Value, rng: Optional[Range] = None) -> Value:
        attrs = {"range": rng} if rng is not None else {}
        t = TempType(field.type.dims, field.type.element)
        return self.create("stencil.load", [field], [t], attrs).result

    def store(self, temp: Value, field: Value, rng: Range) -> Operation:
        return self.create("stencil.store", [temp, field], [], {"range": rng})
