"""Generic SSA IR: values, operations, blocks, regions, functions and modules.

Values are identified by integer handles; names such as ``%3`` only exist in
the textual format.  Def-use information is kept exact by routing every
operand update through :class:`Operation`.
"""

from __future__ import annotations

import itertools
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Union

from .types import Type

_handles = itertools.count()


class IRError(Exception):
    """Raised on misuse of the IR API (not on invalid programs)."""


class Value:
    __slots__ = ("handle", "type", "owner", "index", "uses")

    def __init__(self, type: Type, owner, index: int):
        self.handle = next(_handles)
        self.type = type
        self.owner = owner  # Operation (result) or Block (argument)
        self.index = index
        self.uses: set = set()  # {(Operation, operand index)}

    @property
    def is_block_arg(self) -> bool:
        return isinstance(self.owner, Block)

    @property
    def defining_op(self) -> Optional["Operation"]:
        return self.owner if isinstance(self.owner, Operation) else None

    @property
    def users(self) -> List["Operation"]:
        """Distinct using operations, in no particular order."""
        return list({op: None for op, _ in self.uses})

    def has_uses(self) -> bool:
        return bool(self.uses)

    def __repr__(self) -> str:
        return f"<Value #{self.handle}: {self.type}>"


class Operation:
    def __init__(
        self,
        name: str,
        operands: Sequence[Value] = (),
        result_types: Sequence[Type] = (),
        attributes: Optional[dict] = None,
        regions: Sequence["Region"] = (),
    ):
        self.name = name
        self._operands: List[Value] = []
        self.results: List[Value] = [Value(t, self, i) for i, t in enumerate(result_types)]
        self.attributes: Dict[str, object] = dict(attributes or {})
        self.regions: List[Region] = []
        self.parent: Optional[Block] = None
        self.location: Optional[tuple] = None  # (line, column) when parsed from text
        for v in operands:
            self._append_operand(v)
        for r in regions:
            self.add_region(r)

    # -- operands -------------------------------------------------------
    @property
    def operands(self) -> tuple:
        return tuple(self._operands)

    def _append_operand(self, v: Value) -> None:
        if not isinstance(v, Value):
            raise IRError(f"operand of {self.name} is not a value: {v!r}")
        v.uses.add((self, len(self._operands)))
        self._operands.append(v)

    def set_operand(self, i: int, v: Value) -> None:
        old = self._operands[i]
        old.uses.discard((self, i))
        v.uses.add((self, i))
        self._operands[i] = v

    def set_operands(self, values: Sequence[Value]) -> None:
        self.drop_operand_uses()
        self._operands = []
        for v in values:
            self._append_operand(v)

    def drop_operand_uses(self) -> None:
        for i, v in enumerate(self._operands):
            v.uses.discard((self, i))

    # -- results / regions ---------------------------------------------
    @property
    def result(self) -> Value:
        if len(self.results) != 1:
            raise IRError(f"{self.name} has {len(self.results)} results")
        return self.results[0]

    def add_region(self, region: "Region") -> "Region":
        if region.parent is not None:
            raise IRError("region already attached")
        region.parent = self
        self.regions.append(region)
        return region

    def replace_results(self, result_types: Sequence[Type], keep: Sequence[Optional[int]]) -> None:
        """Rebuild the result list.  ``keep[i]`` names the old result that
        becomes new result ``i`` (its uses carry over), or ``None``."""
        old = self.results
        new = []
        for i, t in enumerate(result_types):
            src = keep[i] if i < len(keep) else None
            if src is not None:
                v = old[src]
                v.index = i
                v.type = t
            else:
                v = Value(t, self, i)
            new.append(v)
        for v in old:
            if v not in new and v.uses:
                raise IRError(f"dropping result of {self.name} that still has uses")
        self.results = new

    # -- placement -------------------------------------------------------
    @property
    def parent_op(self) -> Optional["Operation"]:
        if self.parent is None or self.parent.parent is None:
            return None
        owner = self.parent.parent.parent
        return owner if isinstance(owner, Operation) else None

    @property
    def function(self) -> Optional["Function"]:
        node = self
        while node is not None:
            block = node.parent
            if block is None or block.parent is None:
                return None
            owner = block.parent.parent
            if isinstance(owner, Function):
                return owner
            node = owner
        return None

    def is_ancestor_of(self, other: "Operation") -> bool:
        node = other.parent_op
        while node is not None:
            if node is self:
                return True
            node = node.parent_op
        return False

    def detach(self) -> None:
        if self.parent is not None:
            self.parent.ops.remove(self)
            self.parent = None

    def erase(self) -> None:
        """Detach and drop all uses held by this op and its nested ops."""
        for r in self.results:
            if r.uses:
                raise IRError(f"erasing {self.name} whose result still has uses")
        for op in list(walk_op(self)):
            op.drop_operand_uses()
        self.detach()

    def walk(self) -> Iterator["Operation"]:
        return walk_op(self)

    def __repr__(self) -> str:
        return f"<Operation {self.name} at 0x{id(self):x}>"


class Block:
    def __init__(self, arg_types: Sequence[Type] = ()):
        self.args: List[Value] = [Value(t, self, i) for i, t in enumerate(arg_types)]
        self.ops: List[Operation] = []
        self.parent: Optional[Region] = None

    def add_arg(self, t: Type) -> Value:
        v = Value(t, self, len(self.args))
        self.args.append(v)
        return v

    def erase_arg(self, i: int) -> None:
        v = self.args[i]
        if v.uses:
            raise IRError("erasing block argument that still has uses")
        del self.args[i]
        for j, a in enumerate(self.args):
            a.index = j

    def append(self, op: Operation) -> Operation:
        return self.insert(len(self.ops), op)

    def insert(self, pos: int, op: Operation) -> Operation:
        if op.parent is not None:
            raise IRError("operation already placed in a block")
        op.parent = self
        self.ops.insert(pos, op)
        return op

    def insert_before(self, anchor: Operation, op: Operation) -> Operation:
        return self.insert(self.ops.index(anchor), op)

    def insert_after(self, anchor: Operation, op: Operation) -> Operation:
        return self.insert(self.ops.index(anchor) + 1, op)

    @property
    def terminator(self) -> Optional[Operation]:
        return self.ops[-1] if self.ops else None

    @property
    def parent_op(self):
        return self.parent.parent if self.parent is not None else None


class Region:
    def __init__(self, blocks: Sequence[Block] = ()):
        self.blocks: List[Block] = []
        self.parent = None  # Operation or Function
        for b in blocks:
            self.add_block(b)

    def add_block(self, block: Block) -> Block:
        block.parent = self
        self.blocks.append(block)
        return block

    @property
    def block(self) -> Block:
        if len(self.blocks) != 1:
            raise IRError(f"region has {len(self.blocks)} blocks, expected 1")
        return self.blocks[0]


class Function:
    def __init__(
        self,
        name: str,
        arg_types: Sequence[Type] = (),
        result_types: Sequence[Type] = (),
        attributes: Optional[dict] = None,
    ):
        self.name = name
        self.result_types: List[Type] = list(result_types)
        self.attributes: Dict[str, object] = dict(attributes or {})
        self.body = Region([Block(arg_types)])
        self.body.parent = self
        self.parent: Optional[Module] = None

    @property
    def block(self) -> Block:
        return self.body.blocks[0]

    @property
    def args(self) -> List[Value]:
        return self.body.blocks[0].args

    @property
    def arg_types(self) -> List[Type]:
        return [a.type for a in self.args]

    def walk(self) -> Iterator[Operation]:
        return walk_region(self.body)

    def __repr__(self) -> str:
        return f"<Function @{self.name}>"


class Global:
    """A named module-level constant (e.g. an embedded kernel artifact)."""

    def __init__(self, name: str, attributes: Optional[dict] = None):
        self.name = name
        self.attributes: Dict[str, object] = dict(attributes or {})
        self.parent: Optional[Module] = None


Entry = Union[Function, "Module", Global]


class Module:
    def __init__(self, name: str = "", attributes: Optional[dict] = None, kind: str = "host"):
        self.name = name
        self.kind = kind  # "host" or "gpu"
        self.attributes: Dict[str, object] = dict(attributes or {})
        self.body: List[Entry] = []
        self.parent: Optional[Module] = None

    def append(self, entry: Entry) -> Entry:
        entry.parent = self
        self.body.append(entry)
        return entry

    def remove(self, entry: Entry) -> None:
        self.body.remove(entry)
        entry.parent = None

    @property
    def functions(self) -> List[Function]:
        return [e for e in self.body if isinstance(e, Function)]

    @property
    def modules(self) -> List["Module"]:
        return [e for e in self.body if isinstance(e, Module)]

    @property
    def globals(self) -> List[Global]:
        return [e for e in self.body if isinstance(e, Global)]

    def lookup(self, name: str) -> Optional[Entry]:
        for e in self.body:
            if e.name == name:
                return e
        return None

    def function(self, name: Optional[str] = None) -> Function:
        funcs = self.functions
        if name is None:
            if len(funcs) != 1:
                raise IRError(f"module has {len(funcs)} functions; name one")
            return funcs[0]
        for f in funcs:
            if f.name == name:
                return f
        raise IRError(f"no function @{name}")

    def walk(self) -> Iterator[Operation]:
        """All operations, including those of nested modules."""
        for e in self.body:
            if isinstance(e, Function):
                yield from e.walk()
            elif isinstance(e, Module):
                yield from e.walk()

    def all_functions(self) -> Iterator[Function]:
        for e in self.body:
            if isinstance(e, Function):
                yield e
            elif isinstance(e, Module):
                yield from e.all_functions()


# -- traversal ---------------------------------------------------------------

def walk_op(op: Operation) -> Iterator[Operation]:
    yield op
    for r in op.regions:
        yield from walk_region(r)


def walk_region(region: Region) -> Iterator[Operation]:
    for b in region.blocks:
        for op in list(b.ops):
            yield from walk_op(op)


def count_ops(container, name: Optional[str] = None) -> int:
    return sum(1 for op in container.walk() if name is None or op.name == name)


# -- editing utilities ---------------------------------------------------

def replace_all_uses(old: Value, new: Value) -> None:
    if old.type != new.type:
        raise IRError(f"cannot replace value of type {old.type} with {new.type}")
    if old is new:
        return
    for op, i in list(old.uses):
        op.set_operand(i, new)


def erase_dead_op(op: Operation) -> bool:
    """Erase ``op`` if its results are unused and it has no side effects."""
    from .registry import is_removable

    if any(r.uses for r in op.results):
        return False
    if not is_removable(op):
        return False
    op.erase()
    return True


def clone_op(op: Operation, mapping: Dict[Value, Value]) -> Operation:
    """Deep-copy ``op``; operands are remapped through ``mapping`` (values not
    in the mapping are reused as is).  New results and block arguments are
    recorded in ``mapping``."""
    new = Operation(
        op.name,
        [mapping.get(v, v) for v in op.operands],
        [r.type for r in op.results],
        dict(op.attributes),
    )
    for old_r, new_r in zip(op.results, new.results):
        mapping[old_r] = new_r
    for region in op.regions:
        new.add_region(clone_region(region, mapping))
    return new


def clone_region(region: Region, mapping: Dict[Value, Value]) -> Region:
    new = Region()
    for block in region.blocks:
        nb = Block([a.type for a in block.args])
        for a, na in zip(block.args, nb.args):
            mapping[a] = na
        new.add_block(nb)
    for block, nb in zip(region.blocks, new.blocks):
        for op in block.ops:
            nb.append(clone_op(op, mapping))
    return new


def clone_function(func: Function, name: Optional[str] = None) -> Function:
    new = Function(name or func.name, func.arg_types, func.result_types, dict(func.attributes))
    mapping = dict(zip(func.args, new.args))
    for op in func.block.ops:
        new.block.append(clone_op(op, mapping))
    return new


def clone_module(module: Module) -> Module:
    new = Module(module.name, dict(module.attributes), module.kind)
    for e in module.body:
        if isinstance(e, Function):
            new.append(clone_function(e))
        elif isinstance(e, Module):
            new.append(clone_module(e))
        else:
            new.append(Global(e.name, dict(e.attributes)))
    return new


def values_defined_outside(region: Region) -> List[Value]:
    """Values used inside ``region`` but defined outside of it, in first-use order."""
    inside = set()
    for op in walk_region(region):
        inside.update(op.results)
        for r in op.regions:
            for b in r.blocks:
                inside.update(b.args)
    for b in region.blocks:
        inside.update(b.args)
    seen: Dict[Value, None] = {}
    for op in walk_region(region):
        for v in op.operands:
            if v not in inside and v not in seen:
                seen[v] = None
    return list(seen)


def op_path(op: Operation) -> str:
    """Human-readable location used by diagnostics."""
    loc = op.attributes.get("loc")
    if isinstance(loc, str):
        return loc
    prefix = f"{op.location[0]}:{op.location[1]}: " if op.location else ""
    parts = []
    node: Union[Operation, None] = op
    while node is not None and node.parent is not None:
        block = node.parent
        parts.append(f"{node.name}#{block.ops.index(node)}")
        owner = block.parent.parent if block.parent is not None else None
        if isinstance(owner, Function):
            parts.append(f"@{owner.name}")
            break
        node = owner if isinstance(owner, Operation) else None
    return prefix + ("/".join(reversed(parts)) or op.name)


def iter_blocks(container) -> Iterable[Block]:
    if isinstance(container, Function):
        regions = [container.body]
    else:
        regions = list(container.regions)
    for r in regions:
        for b in r.blocks:
            yield b
            for op in b.ops:
                yield from iter_blocks(op)
