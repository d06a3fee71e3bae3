"""Naive reference evaluator for original (untransformed) stencil programs.

It is written independently of the interpreter: every temp lives on a
global canvas spanning all asserted field ranges, reads outside a field or
the canvas produce NaN, and each apply is evaluated over the whole canvas
with shifted whole-array copies.  Only the store ranges are copied out.
"""

from __future__ import annotations

from typing import Dict, List, Optional

import numpy as np

from .ir import Function, Module, Value
from .tensor_io import DTYPES, TensorData
from .types import DIM_NAMES, FieldType, Range, ScalarType


class ReferenceError(Exception):
    pass


def _shifted(arr: np.ndarray, offset) -> np.ndarray:
    """out[p] = arr[p + offset], NaN where p + offset leaves the array."""
    out = np.full_like(arr, np.nan)
    src, dst = [], []
    for o, n in zip(offset, arr.shape):
        if abs(o) >= n:
            return out
        src.append(slice(max(o, 0), n + min(o, 0)))
        dst.append(slice(max(-o, 0), n - max(o, 0)))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def _binary(name):
    return {
        "arith.addf": lambda a, b: a + b,
        "arith.subf": lambda a, b: a - b,
        "arith.mulf": lambda a, b: a * b,
        "arith.divf": lambda a, b: a / b,
        "arith.minf": np.minimum,
        "arith.maxf": np.maximum,
        "arith.andi": lambda a, b: a & b,
        "arith.ori": lambda a, b: a | b,
        "arith.xori": lambda a, b: a ^ b,
    }.get(name)


_PRED = {
    "oeq": lambda a, b: a == b, "one": lambda a, b: (a < b) | (a > b),
    "olt": lambda a, b: a < b, "ole": lambda a, b: a <= b,
    "ogt": lambda a, b: a > b, "oge": lambda a, b: a >= b,
}


class _Body:
    def __init__(self, temps: Dict[Value, np.ndarray], scalars: Dict[Value, object]):
        self.temps = temps
        self.vals: Dict[Value, object] = dict(scalars)

    def run(self, block) -> list:
        for op in block.ops:
            name = op.name
            args = [self.vals.get(v) for v in op.operands]
            if name in ("stencil.return", "loop.yield"):
                return args
            if name == "stencil.access":
                self.vals[op.result] = _shifted(self.temps[op.operands[0]], op.attributes["offset"])
            elif name == "arith.constant":
                self.vals[op.result] = DTYPES[op.result.type.name](op.attributes["value"])
            elif _binary(name) is not None:
                self.vals[op.result] = _binary(name)(*args)
            elif name == "arith.negf":
                self.vals[op.result] = -args[0]
            elif name == "arith.absf":
                self.vals[op.result] = np.abs(args[0])
            elif name == "arith.sqrtf":
                self.vals[op.result] = np.sqrt(args[0])
            elif name == "arith.cmpf":
                self.vals[op.result] = _PRED[op.attributes["predicate"]](*args)
            elif name == "arith.select":
                self.vals[op.result] = np.where(*args)
            elif name == "loop.if":
                then_vals = self.run(op.regions[0].blocks[0])
                else_vals = self.run(op.regions[1].blocks[0])
                for r, a, b in zip(op.results, then_vals, else_vals):
                    self.vals[r] = np.where(args[0], a, b).astype(DTYPES[r.type.name])
            else:
                raise ReferenceError(f"reference evaluator does not support {name}")
        return []


def reference_run(module: Module, inputs, function: Optional[str] = None) -> List[TensorData]:
    """Evaluate the original stencil program ``function`` on ``inputs``."""
    func: Function = module.function(function)
    ops = func.block.ops
    for op in func.walk():
        if op.attributes.get("unroll_factor", 1) != 1 or "shift" in op.attributes:
            raise ReferenceError("the reference evaluator expects an untransformed program")
    names = func.attributes.get("arg_names") or [f"arg{i}" for i in range(len(func.args))]
    asserts = {op.operands[0]: op.attributes["range"] for op in ops if op.name == "stencil.assert"}
    stored = [op.operands[1] for op in ops if op.name == "stencil.store"]
    given = {t.name: t for t in (inputs.values() if isinstance(inputs, dict) else inputs)}
    in_params = [a for a in func.args if a not in stored]
    if not all(names[a.index] in given for a in in_params):
        ordered = list(given.values())
        given = {names[a.index]: t for a, t in zip(in_params, ordered)}

    canvas = None
    for r in asserts.values():
        canvas = r if canvas is None else canvas.union(r)
    if canvas is None:
        return []
    # intermediate temps may be read beyond every asserted range; widen the
    # canvas by the largest offset each apply can add along a chain
    halo = [0, 0, 0]
    for op in ops:
        if op.name == "stencil.apply":
            offs = [o.attributes["offset"] for o in op.walk() if o.name == "stencil.access"]
            for ax in range(3):
                halo[ax] += max((abs(o[ax]) for o in offs), default=0)
    canvas = Range(tuple(l - h for l, h in zip(canvas.lb, halo)), tuple(u + h for u, h in zip(canvas.ub, halo)))
    env: Dict[Value, object] = {}
    outputs: Dict[Value, np.ndarray] = {}
    for a in func.args:
        t = a.type
        if isinstance(t, FieldType):
            r = asserts[a]
            shape3 = r.extent
            if a in stored:
                outputs[a] = np.zeros(shape3, DTYPES[t.element.name])
                env[a] = outputs[a]
            else:
                data = np.asarray(given[names[a.index]].values, DTYPES[t.element.name]).reshape(shape3)
                env[a] = data
        elif isinstance(t, ScalarType):
            env[a] = DTYPES[t.name](given[names[a.index]].values[()])

    def place(r: Range):
        return tuple(slice(l - c, u - c) for l, u, c in zip(r.lb, r.ub, canvas.lb))

    for op in ops:
        if op.name == "stencil.load":
            f = op.operands[0]
            arr = np.full(canvas.extent, np.nan, DTYPES[f.type.element.name])
            arr[place(asserts[f])] = env[f]
            env[op.result] = arr
        elif op.name == "stencil.apply":
            block = op.regions[0].blocks[0]
            temps, scalars = {}, {}
            for arg, v in zip(block.args, op.operands):
                (temps if isinstance(env[v], np.ndarray) and env[v].shape == canvas.extent else scalars)[arg] = env[v]
            with np.errstate(all="ignore"):
                vals = _Body(temps, scalars).run(block)
            for r, v in zip(op.results, vals):
                env[r] = np.broadcast_to(np.asarray(v, DTYPES[r.type.element.name]), canvas.extent)
        elif op.name == "stencil.store":
            temp, f = env[op.operands[0]], op.operands[1]
            r = op.attributes["range"]
            local = tuple(slice(l - a, u - a) for l, u, a in zip(r.lb, r.ub, asserts[f].lb))
            outputs[f][local] = temp[place(r)]
    result = []
    for f in stored:
        dims = f.type.dims
        shape = tuple(e for d, e in zip(DIM_NAMES, asserts[f].extent) if d in dims)
        result.append(TensorData(names[f.index], dims, f.type.element.name, outputs[f].reshape(shape)))
    return result


def relative_error(actual: np.ndarray, expected: np.ndarray) -> float:
    """Normwise relative error max|a - b| / max|b| (absolute when b is zero)."""
    a = np.asarray(actual, np.float64)
    b = np.asarray(expected, np.float64)
    if a.shape != b.shape:
        return float("inf")
    both_nan = np.isnan(a) & np.isnan(b)
    diff = np.where(both_nan, 0.0, np.abs(a - b))
    if np.isnan(diff).any():
        return float("inf")
    if diff.size == 0:
        return 0.0
    scale = np.max(np.abs(np.where(np.isnan(b), 0.0, b)))
    num = float(np.max(diff))
    return num / scale if scale > 0 else num


TOLERANCE = {"f32": 1e-5, "f64": 1e-10}
