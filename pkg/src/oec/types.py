"""Types and compile-time attribute values shared by every dialect."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

DIM_NAMES = "ijk"
ELEMENT_KINDS = ("f32", "f64")


class Type:
    """Base class of all value types."""

    def __str__(self) -> str:  # pragma: no cover - overridden
        raise NotImplementedError


@dataclass(frozen=True)
class ScalarType(Type):
    name: str  # f32 | f64 | index | i1

    def __post_init__(self):
        if self.name not in ("f32", "f64", "index", "i1"):
            raise ValueError(f"unknown scalar type {self.name!r}")

    @property
    def is_float(self) -> bool:
        return self.name in ELEMENT_KINDS

    def __str__(self) -> str:
        return self.name


f32 = ScalarType("f32")
f64 = ScalarType("f64")
index = ScalarType("index")
i1 = ScalarType("i1")


def _check_dims(dims: str) -> None:
    if not dims or any(d not in DIM_NAMES for d in dims):
        raise ValueError(f"invalid dimension set {dims!r}")
    if "".join(sorted(dims, key=DIM_NAMES.index)) != dims or len(set(dims)) != len(dims):
        raise ValueError(f"dimensions must be an ordered subset of 'ijk', got {dims!r}")


@dataclass(frozen=True)
class FieldType(Type):
    dims: str
    element: ScalarType

    def __post_init__(self):
        _check_dims(self.dims)
        if not self.element.is_float:
            raise ValueError("field elements must be f32 or f64")

    def __str__(self) -> str:
        return f"!stencil.field<{self.dims},{self.element}>"


@dataclass(frozen=True)
class TempType(Type):
    dims: str
    element: ScalarType

    def __post_init__(self):
        _check_dims(self.dims)
        if not self.element.is_float:
            raise ValueError("temp elements must be f32 or f64")

    def __str__(self) -> str:
        return f"!stencil.temp<{self.dims},{self.element}>"


def row_major_strides(shape: Tuple[int, ...]) -> Tuple[int, ...]:
    strides = []
    acc = 1
    for extent in reversed(shape):
        strides.append(acc)
        acc *= extent
    return tuple(reversed(strides))


@dataclass(frozen=True)
class BufferType(Type):
    """Statically shaped buffer; ``offset``/``strides`` describe a strided view.

    A plain allocation has ``offset=0`` and row-major strides, printed without
    a layout suffix.
    """

    shape: Tuple[int, ...]
    element: ScalarType
    offset: int = 0
    strides: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if not self.shape or any(e < 1 for e in self.shape):
            raise ValueError(f"buffer extents must be >= 1, got {self.shape}")
        if self.strides is None:
            object.__setattr__(self, "strides", row_major_strides(self.shape))
        elif len(self.strides) != len(self.shape):
            raise ValueError("stride count does not match rank")

    @property
    def rank(self) -> int:
        return len(self.shape)

    @property
    def is_identity_layout(self) -> bool:
        return self.offset == 0 and self.strides == row_major_strides(self.shape)

    def linear_index(self, idx) -> int:
        return self.offset + sum(i * s for i, s in zip(idx, self.strides))

    def __str__(self) -> str:
        text = "x".join(str(e) for e in self.shape) + f"x{self.element}"
        if not self.is_identity_layout:
            strides = ",".join(str(s) for s in self.strides)
            text += f", offset={self.offset}, strides=[{strides}]"
        return f"!buffer<{text}>"


@dataclass(frozen=True)
class Range:
    """Per-dimension inclusive lower / exclusive upper bounds (3 entries)."""

    lb: Tuple[int, ...]
    ub: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "lb", tuple(int(v) for v in self.lb))
        object.__setattr__(self, "ub", tuple(int(v) for v in self.ub))
        if len(self.lb) != len(self.ub):
            raise ValueError("range bounds differ in rank")
        for lo, hi in zip(self.lb, self.ub):
            if lo > hi:
                raise ValueError(f"empty range bounds {self.lb}:{self.ub}")

    @property
    def extent(self) -> Tuple[int, ...]:
        return tuple(u - l for l, u in zip(self.lb, self.ub))

    def is_nonempty(self) -> bool:
        return all(u > l for l, u in zip(self.lb, self.ub))

    def contains(self, other: "Range") -> bool:
        return all(a <= c and d <= b for a, b, c, d in zip(self.lb, self.ub, other.lb, other.ub))

    def union(self, other: "Range") -> "Range":
        return Range(
            tuple(min(a, b) for a, b in zip(self.lb, other.lb)),
            tuple(max(a, b) for a, b in zip(self.ub, other.ub)),
        )

    def translate(self, delta) -> "Range":
        return Range(
            tuple(a + d for a, d in zip(self.lb, delta)),
            tuple(b + d for b, d in zip(self.ub, delta)),
        )

    def __str__(self) -> str:
        return format_vector(self.lb) + ":" + format_vector(self.ub)


def format_vector(values) -> str:
    return "[" + ",".join(str(v) for v in values) + "]"


def dims_to_axes(dims: str) -> Tuple[int, ...]:
    """Positions of ``dims`` inside the internal 3D index space."""
    return tuple(DIM_NAMES.index(d) for d in dims)


def element_of(ty: Type) -> ScalarType:
    if isinstance(ty, ScalarType):
        return ty
    if isinstance(ty, (FieldType, TempType, BufferType)):
        return ty.element
    raise TypeError(f"type {ty} has no element kind")
