"""Named dense tensors exchanged with the interpreter, and their text format.

A file holds one or more tensors.  Each starts with a header line
``name dims shape kind`` (``dims``/``shape`` are ``-`` for scalars, shapes
are written ``64x64x1``) followed by whitespace-separated values in
row-major order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Union

import numpy as np

DTYPES = {"f32": np.float32, "f64": np.float64, "index": np.int64, "i1": np.bool_}


@dataclass
class TensorData:
    name: str
    dims: str
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in DTYPES:
            raise ValueError(f"unknown element kind {self.kind!r}")
        self.values = np.asarray(self.values, dtype=DTYPES[self.kind])
        if self.values.ndim != len(self.dims):
            raise ValueError(
                f"tensor {self.name!r}: {self.values.ndim}-d values for dims {self.dims!r}"
            )

    @property
    def shape(self):
        return self.values.shape

    def copy(self) -> "TensorData":
        return TensorData(self.name, self.dims, self.kind, self.values.copy())


def _format_value(v, kind: str, hex_floats: bool) -> str:
    if kind in ("f32", "f64"):
        f = float(v)
        return f.hex() if hex_floats else repr(f)
    return str(int(v))


def dumps(tensors: Iterable[TensorData], hex_floats: bool = False) -> str:
    out = []
    for t in tensors:
        dims = t.dims or "-"
        shape = "x".join(str(e) for e in t.shape) if t.shape else "-"
        out.append(f"{t.name} {dims} {shape} {t.kind}")
        flat = t.values.reshape(-1)
        for start in range(0, flat.size, 8):
            out.append(" ".join(_format_value(v, t.kind, hex_floats) for v in flat[start:start + 8]))
    return "\n".join(out) + "\n"


def _parse_value(tok: str, kind: str):
    if kind in ("f32", "f64"):
        if tok.lstrip("+-").startswith("0x"):
            return float.fromhex(tok)
        return float(tok)
    return int(tok)


def loads(text: str) -> List[TensorData]:
    tokens = text.split()
    pos = 0
    tensors = []
    while pos < len(tokens):
        if pos + 4 > len(tokens):
            raise ValueError("truncated tensor header")
        name, dims, shape, kind = tokens[pos:pos + 4]
        pos += 4
        if kind not in DTYPES:
            raise ValueError(f"tensor {name!r}: unknown element kind {kind!r}")
        dims = "" if dims == "-" else dims
        extents = () if shape == "-" else tuple(int(e) for e in shape.split("x"))
        count = int(np.prod(extents, dtype=np.int64)) if extents else 1
        raw = tokens[pos:pos + count]
        if len(raw) != count:
            raise ValueError(f"tensor {name!r}: expected {count} values, found {len(raw)}")
        pos += count
        values = np.array([_parse_value(t, kind) for t in raw], dtype=DTYPES[kind]).reshape(extents)
        tensors.append(TensorData(name, dims, kind, values))
    return tensors


def read_tensors(path: Union[str, Path]) -> List[TensorData]:
    return loads(Path(path).read_text())


def write_tensors(path: Union[str, Path], tensors: Iterable[TensorData], hex_floats: bool = False) -> None:
    Path(path).write_text(dumps(tensors, hex_floats))
