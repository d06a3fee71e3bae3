"""Closed opcode table.  Each dialect registers its operations here together
with their side-effect class and a structural verifier."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

# Effect classes:
#   pure   - no memory effects; CSE and DCE both apply
#   read   - reads memory; DCE applies, CSE only without intervening writes
#   alloc  - allocates; DCE applies, never CSE'd
#   write  - side effects; never removed or merged
PURE, READ, ALLOC, WRITE = "pure", "read", "alloc", "write"


@dataclass
class OpDef:
    name: str
    effect: str = PURE
    terminator: bool = False
    isolated: bool = False  # region cannot see values from enclosing scopes
    num_regions: int = 0
    verify: Optional[Callable] = None  # verify(op) -> list[str]
    reserved: bool = False  # declared but never produced by this compiler
    extra: dict = field(default_factory=dict)


OPS: Dict[str, OpDef] = {}


def define(name: str, verify=None, **kwargs) -> None:
    OPS[name] = OpDef(name, verify=verify, **kwargs)


def lookup(name: str) -> Optional[OpDef]:
    return OPS.get(name)


def effect_of(op) -> str:
    """Effect of an op, taking nested regions into account."""
    d = OPS.get(op.name)
    if d is None:
        return WRITE
    eff = d.effect
    if eff == WRITE:
        return eff
    for inner in op.walk():
        if inner is op:
            continue
        inner_def = OPS.get(inner.name)
        e = inner_def.effect if inner_def is not None else WRITE
        if e == WRITE:
            return WRITE
        if e in (READ, ALLOC):
            eff = READ
    return eff


def is_removable(op) -> bool:
    d = OPS.get(op.name)
    if d is None or d.terminator:
        return False
    return effect_of(op) != WRITE


def is_cse_candidate(op) -> bool:
    d = OPS.get(op.name)
    if d is None or op.regions or d.terminator:
        return False
    return d.effect in (PURE, READ)


def dialect_of(name: str) -> str:
    return name.split(".", 1)[0]


def messages(op) -> List[str]:
    d = OPS.get(op.name)
    if d is None:
        return [f"unknown operation '{op.name}'"]
    if d.verify is None:
        return []
    return list(d.verify(op) or [])
