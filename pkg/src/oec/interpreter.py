"""Reference interpreter for every IR level.

The same evaluator executes stencil programs, lowered loop nests and GPU
launches.  In ``vector`` mode the body of an apply, a parallel loop or a
launch runs once over numpy arrays holding all iteration points ("lanes");
in ``scalar`` mode it runs point by point in lexicographic or reversed
order.  Both modes use the same numpy kernels, so results are bitwise
identical and no fused multiply-add is ever introduced.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .ir import Block, Function, Module, Operation, Value
from .tensor_io import DTYPES, TensorData
from .types import BufferType, FieldType, Range, ScalarType, TempType


class InterpreterError(Exception):
    """Raised on traps: out-of-bounds accesses, shape mismatches, bad inputs."""


def np_dtype(t: ScalarType):
    return DTYPES[t.name]


# -- scalar/lane arithmetic ----------------------------------------------------

def _cmpf(pred, a, b):
    if pred == "oeq":
        return np.equal(a, b)
    if pred == "one":
        return np.logical_or(np.less(a, b), np.greater(a, b))
    return {"olt": np.less, "ole": np.less_equal, "ogt": np.greater, "oge": np.greater_equal}[pred](a, b)


_CMPI = {"eq": np.equal, "ne": np.not_equal, "slt": np.less, "sle": np.less_equal,
         "sgt": np.greater, "sge": np.greater_equal}

ARITH = {
    "arith.addf": np.add, "arith.subf": np.subtract, "arith.mulf": np.multiply,
    "arith.divf": np.divide, "arith.minf": np.minimum, "arith.maxf": np.maximum,
    "arith.negf": np.negative, "arith.absf": np.abs, "arith.sqrtf": np.sqrt,
    "arith.addi": np.add, "arith.subi": np.subtract, "arith.muli": np.multiply,
    "arith.divi": np.floor_divide, "arith.remi": np.mod,
    "arith.mini": np.minimum, "arith.maxi": np.maximum,
    "arith.andi": np.logical_and, "arith.ori": np.logical_or, "arith.xori": np.logical_xor,
}


def constant_value(op: Operation):
    t = op.result.type
    return np_dtype(t)(op.attributes["value"])


def eval_arith(op: Operation, args: Sequence):
    """Evaluate a region-free ``arith.*`` op on scalars or lane arrays."""
    name = op.name
    if name == "arith.constant":
        return constant_value(op)
    with np.errstate(all="ignore"):
        if name in ARITH:
            res = ARITH[name](*args)
        elif name == "arith.cmpf":
            res = _cmpf(op.attributes["predicate"], *args)
        elif name == "arith.cmpi":
            res = _CMPI[op.attributes["predicate"]](*args)
        elif name == "arith.select":
            c, a, b = args
            if np.ndim(c) == 0:
                return a if bool(c) else b
            res = np.where(c, a, b)
        else:
            raise InterpreterError(f"cannot evaluate {name}")
    t = op.result.type
    if np.ndim(res) == 0:
        return np_dtype(t)(res)
    return res


# -- runtime objects -----------------------------------------------------------

@dataclass
class FieldRT:
    array: np.ndarray  # internal 3D array
    lb: tuple  # absolute coordinate of array[0, 0, 0]
    name: str


@dataclass
class TempRT:
    array: np.ndarray  # internal 3D array
    origin: tuple  # temp coordinate of array[0, 0, 0]
    source: Optional[Value] = None


@dataclass
class BufferRT:
    storage: np.ndarray  # flat backing allocation
    type: BufferType
    name: str


@dataclass
class ExecutionTrace:
    """Counts memory traffic and records touched index boxes.

    ``touched`` maps temp values (stencil level) to the bounding box of the
    temp coordinates read by accesses and stores.  ``loads``/``stores`` count
    executed element accesses per named buffer at the loop and GPU levels.
    """

    record_addresses: bool = False
    touched: Dict[Value, Range] = field(default_factory=dict)
    loads: Counter = field(default_factory=Counter)
    stores: Counter = field(default_factory=Counter)
    addresses: Dict[str, list] = field(default_factory=dict)

    def touch(self, value: Optional[Value], lo, hi) -> None:
        if value is None:
            return
        r = Range(tuple(lo), tuple(h + 1 for h in hi))
        old = self.touched.get(value)
        self.touched[value] = r if old is None else old.union(r)

    @property
    def total_loads(self) -> int:
        return sum(self.loads.values())

    @property
    def total_stores(self) -> int:
        return sum(self.stores.values())

    def duplicate_loads_per_lane(self) -> int:
        """Number of (lane, address) pairs loaded more than once by the same
        lane of one loop nest or kernel launch."""
        dups = 0
        for entries in self.addresses.values():
            groups: Dict[int, list] = {}
            for launch, lin, mask in entries:
                groups.setdefault(launch, []).append((lin, mask))
            for items in groups.values():
                if len(items) < 2:
                    continue
                shape = np.broadcast_shapes(*[np.shape(l) for l, _ in items], *[np.shape(m) for _, m in items if m is not None])
                rows = []
                for row, (lin, mask) in enumerate(items):
                    lin = np.broadcast_to(np.asarray(lin, dtype=np.int64), shape)
                    if mask is not None:
                        lin = np.where(np.broadcast_to(mask, shape), lin, -(row + 1))
                    rows.append(lin.reshape(-1))
                mat = np.sort(np.stack(rows), axis=0)
                same = (mat[1:] == mat[:-1]) & (mat[1:] >= 0)
                dups += int(same.sum())
        return dups


@dataclass
class _Ctx:
    """Execution context of the innermost lane-parallel construct."""

    mask: Optional[np.ndarray] = None
    vector: bool = False
    lanes: tuple = ()  # shape of the lane grid in vector mode
    # stencil.apply
    apply_lb: Optional[tuple] = None
    apply_step: Optional[tuple] = None
    apply_lanes: Optional[tuple] = None
    point: Optional[tuple] = None
    # gpu
    ids: Optional[dict] = None
    launch_id: int = 0


@dataclass
class Param:
    index: int
    name: str
    role: str  # "in" or "out"
    dims: str
    kind: str
    shape: tuple


def _internal_shape(dims: str, shape) -> tuple:
    it = iter(shape)
    return tuple(next(it) if d in dims else 1 for d in "ijk")


def signature(func: Function) -> List[Param]:
    """Input/output parameters of a function at any level."""
    names = func.attributes.get("arg_names")
    outputs = set(func.attributes.get("outputs", ()))
    arg_dims = func.attributes.get("arg_dims")
    asserts, stored = {}, set()
    for op in func.block.ops:
        if op.name == "stencil.assert":
            asserts[op.operands[0]] = op.attributes["range"]
        elif op.name == "stencil.store":
            stored.add(op.operands[1])
    params = []
    for i, a in enumerate(func.args):
        name = names[i] if isinstance(names, list) and i < len(names) else f"arg{i}"
        t = a.type
        if isinstance(t, FieldType):
            r = asserts.get(a)
            if r is None:
                raise InterpreterError(f"field parameter {name} has no stencil.assert")
            ext = tuple(e for d, e in zip("ijk", r.extent) if d in t.dims)
            params.append(Param(i, name, "out" if a in stored else "in", t.dims, t.element.name, ext))
        elif isinstance(t, BufferType):
            dims = arg_dims[i] if isinstance(arg_dims, list) else "ijk"[: t.rank]
            params.append(Param(i, name, "out" if i in outputs else "in", dims, t.element.name, t.shape))
        elif isinstance(t, ScalarType):
            params.append(Param(i, name, "in", "", t.name, ()))
        else:
            raise InterpreterError(f"unsupported parameter type {t}")
    return params


class Interpreter:
    def __init__(self, module: Module, mode: str = "vector", order: str = "lex",
                 trace: Optional[ExecutionTrace] = None):
        if mode not in ("vector", "scalar"):
            raise ValueError(f"unknown mode {mode!r}")
        if order not in ("lex", "reverse"):
            raise ValueError(f"unknown order {order!r}")
        self.module = module
        self.mode = mode
        self.order = order
        self.trace = trace
        self._launches = itertools.count()
        self._allocs = itertools.count()

    # -- entry point -------------------------------------------------------
    def run(self, inputs: Union[Sequence[TensorData], Dict[str, TensorData]],
            function: Optional[str] = None) -> List[TensorData]:
        func = self.module.function(function)
        params = signature(func)
        given = list(inputs.values()) if isinstance(inputs, dict) else list(inputs)
        by_name = {t.name: t for t in given}
        in_params = [p for p in params if p.role == "in"]
        if all(p.name in by_name for p in in_params):
            bound = {p.index: by_name[p.name] for p in in_params}
        elif len(given) == len(in_params):
            bound = {p.index: t for p, t in zip(in_params, given)}
        else:
            raise InterpreterError(
                f"expected inputs {[p.name for p in in_params]}, got {[t.name for t in given]}")
        args, outputs = [], []
        for p, a in zip(params, func.args):
            if p.role == "in":
                t = bound[p.index]
                if tuple(t.shape) != tuple(p.shape) or t.kind != p.kind:
                    raise InterpreterError(
                        f"input {p.name}: expected {p.kind}{list(p.shape)}, got {t.kind}{list(t.shape)}")
                data = np.array(t.values, dtype=DTYPES[p.kind], copy=True)
            else:
                data = np.zeros(p.shape, dtype=DTYPES[p.kind])
                outputs.append((p, data))
            args.append(self._bind_param(a, p, data, func))
        self.call(func, args)
        return [TensorData(p.name, p.dims, p.kind, self._readback(p, data)) for p, data in outputs]

    def _bind_param(self, arg: Value, p: Param, data: np.ndarray, func: Function):
        t = arg.type
        if isinstance(t, FieldType):
            lb = self._assert_lb(func, arg)
            return FieldRT(data.reshape(_internal_shape(p.dims, data.shape)), lb, p.name)
        if isinstance(t, BufferType):
            if not t.is_identity_layout:
                raise InterpreterError(f"parameter {p.name} must have an identity layout")
            return BufferRT(data.reshape(-1), t, p.name)
        return DTYPES[p.kind](data[()])

    def _readback(self, p: Param, data: np.ndarray) -> np.ndarray:
        return data.reshape(p.shape)

    @staticmethod
    def _assert_lb(func: Function, arg: Value) -> tuple:
        for op in func.block.ops:
            if op.name == "stencil.assert" and op.operands[0] is arg:
                return op.attributes["range"].lb
        raise InterpreterError("field without stencil.assert")

    # -- execution -----------------------------------------------------------
    def call(self, func: Function, args: list, ctx: Optional[_Ctx] = None):
        env: Dict[Value, object] = dict(zip(func.args, args))
        return self.exec_block(func.block, env, ctx or _Ctx())

    def exec_block(self, block: Block, env: dict, ctx: _Ctx):
        for op in block.ops:
            out = self.exec_op(op, env, ctx)
            if out is not None:
                return out
        return ()

    def exec_op(self, op: Operation, env: dict, ctx: _Ctx):
        name = op.name
        if name.startswith("arith."):
            env[op.result] = eval_arith(op, [env[v] for v in op.operands])
            return None
        handler = _HANDLERS.get(name)
        if handler is None:
            raise InterpreterError(f"cannot interpret '{name}'")
        return handler(self, op, env, ctx)

    def _ordered(self, ranges: Sequence[range]):
        points = itertools.product(*ranges)
        if self.order == "reverse":
            return reversed(list(points))
        return points

    # -- stencil level -------------------------------------------------------
    def _stencil_assert(self, op, env, ctx):
        f = env[op.operands[0]]
        r = op.attributes["range"]
        if tuple(f.array.shape) != r.extent:
            raise InterpreterError(f"field {f.name} has shape {f.array.shape}, asserted {r}")
        return None

    def _stencil_load(self, op, env, ctx):
        f = env[op.operands[0]]
        r = op.attributes.get("range")
        if r is None:
            raise InterpreterError("stencil.load without range; run shape inference first")
        shift = op.attributes.get("shift", (0, 0, 0))
        start = [lo + s - flb for lo, s, flb in zip(r.lb, shift, f.lb)]
        stop = [a + e for a, e in zip(start, r.extent)]
        if any(a < 0 for a in start) or any(b > n for b, n in zip(stop, f.array.shape)):
            raise InterpreterError(f"load range {r} (shift {list(shift)}) exceeds field {f.name}")
        arr = f.array[tuple(slice(a, b) for a, b in zip(start, stop))]
        env[op.result] = TempRT(arr, r.lb, op.result)
        return None

    def _stencil_apply(self, op, env, ctx):
        dom = op.attributes.get("range")
        if dom is None:
            raise InterpreterError("stencil.apply without range; run shape inference first")
        factor = op.attributes.get("unroll_factor", 1)
        axis = "ijk".index(op.attributes.get("unroll_dim", "i"))
        ext = list(dom.extent)
        if ext[axis] % factor:
            raise InterpreterError(f"apply domain {dom} not divisible by unroll factor {factor}")
        lanes = list(ext)
        lanes[axis] //= factor
        step = [1, 1, 1]
        step[axis] = factor
        block = op.regions[0].blocks[0]
        results = [np.zeros(ext, dtype=np_dtype(r.type.element)) for r in op.results]
        inner_env = dict(env)
        for arg, v in zip(block.args, op.operands):
            inner_env[arg] = env[v]
        n_res = len(op.results)

        def write(vals, base_index):
            for k in range(n_res):
                for u in range(factor):
                    v = vals[k * factor + u]
                    idx = list(base_index)
                    if isinstance(idx[axis], slice):
                        idx[axis] = slice(u, None, factor)
                    else:
                        idx[axis] = idx[axis] + u
                    results[k][tuple(idx)] = v

        if self.mode == "vector":
            sub = _Ctx(vector=True, lanes=tuple(lanes), apply_lb=dom.lb, apply_step=tuple(step),
                       apply_lanes=tuple(lanes))
            vals = self.exec_block(block, inner_env, sub)
            write(vals, (slice(None), slice(None), slice(None)))
        else:
            for p in self._ordered([range(n) for n in lanes]):
                sub = _Ctx(point=tuple(lb + q * s for lb, q, s in zip(dom.lb, p, step)))
                vals = self.exec_block(block, dict(inner_env), sub)
                write(vals, tuple(q * s for q, s in zip(p, step)))
        for r, arr in zip(op.results, results):
            env[r] = TempRT(arr, dom.lb, r)
        return None

    def _stencil_access(self, op, env, ctx):
        temp = env[op.operands[0]]
        off = op.attributes["offset"]
        arr = temp.array
        if ctx.point is not None:
            idx = tuple(p + o - g for p, o, g in zip(ctx.point, off, temp.origin))
            if any(i < 0 or i >= n for i, n in zip(idx, arr.shape)):
                coord = tuple(p + o for p, o in zip(ctx.point, off))
                raise InterpreterError(f"access out of range at temp coordinate {list(coord)}")
            if self.trace is not None:
                coord = tuple(i + g for i, g in zip(idx, temp.origin))
                self.trace.touch(temp.source, coord, coord)
            env[op.result] = arr[idx]
            return None
        start = [lb + o - g for lb, o, g in zip(ctx.apply_lb, off, temp.origin)]
        last = [a + (n - 1) * s for a, n, s in zip(start, ctx.apply_lanes, ctx.apply_step)]
        if any(a < 0 for a in start) or any(b >= n for b, n in zip(last, arr.shape)):
            lo = [a + g for a, g in zip(start, temp.origin)]
            hi = [b + g for b, g in zip(last, temp.origin)]
            raise InterpreterError(
                f"access at offset {list(off)} reads temp coordinates {lo}..{hi} "
                f"outside [{list(temp.origin)}, {[g + n for g, n in zip(temp.origin, arr.shape)]})")
        if self.trace is not None:
            self.trace.touch(temp.source,
                             [a + g for a, g in zip(start, temp.origin)],
                             [b + g for b, g in zip(last, temp.origin)])
        env[op.result] = arr[tuple(slice(a, b + 1, s) for a, b, s in zip(start, last, ctx.apply_step))]
        return None

    def _stencil_return(self, op, env, ctx):
        return [env[v] for v in op.operands]

    def _stencil_store(self, op, env, ctx):
        temp, f = env[op.operands[0]], env[op.operands[1]]
        r = op.attributes["range"]
        shift = op.attributes.get("shift", (0, 0, 0))
        src = [lo - s - g for lo, s, g in zip(r.lb, shift, temp.origin)]
        dst = [lo - flb for lo, flb in zip(r.lb, f.lb)]
        ext = r.extent
        if any(a < 0 for a in src) or any(a + e > n for a, e, n in zip(src, ext, temp.array.shape)):
            raise InterpreterError(f"store range {r} reads outside the stored temp")
        if any(a < 0 for a in dst) or any(a + e > n for a, e, n in zip(dst, ext, f.array.shape)):
            raise InterpreterError(f"store range {r} exceeds field {f.name}")
        if self.trace is not None:
            self.trace.touch(temp.source, [a + g for a, g in zip(src, temp.origin)],
                             [a + g + e - 1 for a, g, e in zip(src, temp.origin, ext)])
        f.array[tuple(slice(a, a + e) for a, e in zip(dst, ext))] = \
            temp.array[tuple(slice(a, a + e) for a, e in zip(src, ext))]
        return None

    # -- control flow ----------------------------------------------------------
    def _loop_if(self, op, env, ctx):
        cond = env[op.operands[0]]
        then_r, else_r = op.regions
        if np.ndim(cond) == 0 and not ctx.vector:
            region = then_r if bool(cond) else else_r
            vals = self.exec_block(region.blocks[0], env, ctx)
        else:
            base = ctx.mask
            t_mask = cond if base is None else np.logical_and(base, cond)
            e_mask = np.logical_not(cond) if base is None else np.logical_and(base, np.logical_not(cond))
            t_vals = self.exec_block(then_r.blocks[0], env, replace(ctx, mask=t_mask))
            e_vals = self.exec_block(else_r.blocks[0], env, replace(ctx, mask=e_mask))
            vals = []
            for r, a, b in zip(op.results, t_vals, e_vals):
                v = np.where(cond, a, b)
                vals.append(v.astype(np_dtype(r.type), copy=False))
        for r, v in zip(op.results, vals):
            env[r] = v
        return None

    def _loop_yield(self, op, env, ctx):
        return [env[v] for v in op.operands]

    def _loop_parallel(self, op, env, ctx):
        vals = [env[v] for v in op.operands]
        if any(np.ndim(v) for v in vals):
            raise InterpreterError("loop.parallel bounds must be uniform across lanes")
        n = len(vals) // 3
        lbs, ubs, steps = [int(v) for v in vals[:n]], [int(v) for v in vals[n:2 * n]], [int(v) for v in vals[2 * n:]]
        if any(s <= 0 for s in steps):
            raise InterpreterError("loop.parallel steps must be positive")
        block = op.regions[0].blocks[0]
        ranges = [range(lb, ub, s) for lb, ub, s in zip(lbs, ubs, steps)]
        if any(len(r) == 0 for r in ranges):
            return None
        if self.mode == "vector" and not ctx.vector:
            ivs = []
            for d, r in enumerate(ranges):
                shape = [1] * n
                shape[d] = len(r)
                ivs.append(np.arange(r.start, r.stop, r.step, dtype=np.int64).reshape(shape))
            inner = dict(env)
            inner.update(zip(block.args, ivs))
            self.exec_block(block, inner, _Ctx(vector=True, lanes=tuple(len(r) for r in ranges),
                                               launch_id=next(self._launches)))
        else:
            launch = next(self._launches)
            for p in self._ordered(ranges):
                inner = dict(env)
                inner.update(zip(block.args, (np.int64(x) for x in p)))
                self.exec_block(block, inner, replace(ctx, launch_id=ctx.launch_id if ctx.vector else launch))
        return None

    def _loop_for(self, op, env, ctx):
        lb, ub, step = (env[v] for v in op.operands)
        if any(np.ndim(v) for v in (lb, ub, step)):
            raise InterpreterError("loop.for bounds must be uniform across lanes")
        block = op.regions[0].blocks[0]
        for i in range(int(lb), int(ub), int(step)):
            inner = dict(env)
            inner[block.args[0]] = np.int64(i)
            self.exec_block(block, inner, ctx)
        return None

    # -- buffers ---------------------------------------------------------------
    def _buffer_alloc(self, op, env, ctx):
        t = op.result.type
        n = int(np.prod(t.shape))
        env[op.result] = BufferRT(np.zeros(n, dtype=np_dtype(t.element)), t, f"alloc{next(self._allocs)}")
        return None

    def _buffer_dealloc(self, op, env, ctx):
        return None

    def _buffer_view(self, op, env, ctx):
        base = env[op.operands[0]]
        env[op.result] = BufferRT(base.storage, op.result.type, base.name)
        return None

    def _linear(self, buf: BufferRT, idx, ctx, what):
        t = buf.type
        mask = ctx.mask
        for d, (i, n) in enumerate(zip(idx, t.shape)):
            bad = np.logical_or(np.less(i, 0), np.greater_equal(i, n))
            if mask is not None:
                bad = np.logical_and(bad, mask)
            if np.any(bad):
                shape = np.broadcast_shapes(np.shape(bad), *(np.shape(j) for j in idx))
                where = tuple(np.argwhere(np.broadcast_to(bad, shape))[0])
                vec = [int(np.broadcast_to(j, shape)[where]) for j in idx]
                raise InterpreterError(f"out-of-bounds {what} of {buf.name} at index {vec} (shape {list(t.shape)})")
        lin = t.offset
        for i, s in zip(idx, t.strides):
            lin = lin + np.asarray(i, dtype=np.int64) * s
        if mask is not None:
            lin = np.where(mask, lin, t.offset)
        return lin

    def _buffer_load(self, op, env, ctx):
        buf = env[op.operands[0]]
        idx = [env[v] for v in op.operands[1:]]
        lin = self._linear(buf, idx, ctx, "load")
        if self.trace is not None:
            self._record(buf, lin, ctx, self.trace.loads)
        env[op.result] = buf.storage[lin]
        return None

    def _record(self, buf, lin, ctx, counter, addresses=True) -> None:
        """Count one access per active lane and optionally keep its addresses."""
        lanes = ctx.lanes
        if ctx.mask is None:
            active = None
            count = int(np.prod(lanes)) if lanes else 1
        else:
            active = np.broadcast_to(ctx.mask, lanes) if lanes else ctx.mask
            count = int(np.sum(active))
        counter[buf.name] += count
        if addresses and self.trace.record_addresses:
            full = np.broadcast_to(lin, lanes) if lanes else lin
            self.trace.addresses.setdefault(buf.name, []).append((ctx.launch_id, full, active))

    def _buffer_store(self, op, env, ctx):
        val = env[op.operands[0]]
        buf = env[op.operands[1]]
        idx = [env[v] for v in op.operands[2:]]
        lin = self._linear(buf, idx, ctx, "store")
        mask = ctx.mask
        if mask is not None:
            shape = np.broadcast_shapes(np.shape(lin), np.shape(val), np.shape(mask))
            m = np.broadcast_to(mask, shape)
            lin_b = np.broadcast_to(lin, shape)[m]
            val_b = np.broadcast_to(val, shape)[m]
            buf.storage[lin_b] = val_b
        else:
            shape = np.broadcast_shapes(np.shape(lin), np.shape(val))
            if shape:
                buf.storage[np.broadcast_to(lin, shape)] = np.broadcast_to(val, shape)
            else:
                buf.storage[lin] = val
        if self.trace is not None:
            self._record(buf, lin, ctx, self.trace.stores, addresses=False)
        return None

    # -- functions ---------------------------------------------------------------
    def _func_call(self, op, env, ctx):
        callee = self._resolve_function(op, op.attributes["callee"])
        vals = self.call(callee, [env[v] for v in op.operands], ctx)
        for r, v in zip(op.results, vals):
            env[r] = v
        return None

    def _resolve_function(self, op, name):
        func = op.function
        module = func.parent if func is not None else self.module
        target = module.lookup(name) if module is not None else None
        if not isinstance(target, Function):
            raise InterpreterError(f"call to unknown function @{name}")
        return target

    def _func_return(self, op, env, ctx):
        return [env[v] for v in op.operands]

    # -- gpu ---------------------------------------------------------------------
    def _grid(self, vals):
        dims = [int(v) for v in vals]
        if any(d <= 0 for d in dims):
            raise InterpreterError(f"invalid launch configuration {dims}")
        return dims[:3], dims[3:]

    def _launch_ids(self, grid, block):
        """Yield (ids dict, vector flag) for every thread or all threads at once."""
        if self.mode == "vector":
            ids = {}
            for a, axis in enumerate("xyz"):
                shape_b = [1] * 6
                shape_b[a] = grid[a]
                shape_t = [1] * 6
                shape_t[3 + a] = block[a]
                ids[("block_id", axis)] = np.arange(grid[a], dtype=np.int64).reshape(shape_b)
                ids[("thread_id", axis)] = np.arange(block[a], dtype=np.int64).reshape(shape_t)
                ids[("grid_dim", axis)] = np.int64(grid[a])
                ids[("block_dim", axis)] = np.int64(block[a])
            yield ids, True
            return
        ranges = [range(n) for n in (*grid, *block)]
        for p in self._ordered(ranges):
            ids = {}
            for a, axis in enumerate("xyz"):
                ids[("block_id", axis)] = np.int64(p[a])
                ids[("thread_id", axis)] = np.int64(p[3 + a])
                ids[("grid_dim", axis)] = np.int64(grid[a])
                ids[("block_dim", axis)] = np.int64(block[a])
            yield ids, False

    def _gpu_launch(self, op, env, ctx):
        grid, block = self._grid([env[v] for v in op.operands])
        body = op.regions[0].blocks[0]
        launch = next(self._launches)
        for ids, vec in self._launch_ids(grid, block):
            inner = dict(env)
            order = [("block_id", a) for a in "xyz"] + [("thread_id", a) for a in "xyz"] + \
                    [("grid_dim", a) for a in "xyz"] + [("block_dim", a) for a in "xyz"]
            inner.update(zip(body.args, (ids[k] for k in order)))
            lanes = (*grid, *block) if vec else ()
            self.exec_block(body, inner, _Ctx(vector=vec, lanes=lanes, ids=ids, launch_id=launch))
        return None

    def _gpu_terminator(self, op, env, ctx):
        return ()

    def _gpu_launch_func(self, op, env, ctx):
        mod_name, kernel_name = op.attributes["kernel"].split("::", 1)
        func = op.function
        host = func.parent if func is not None else self.module
        gpu_module = host.lookup(mod_name)
        if not isinstance(gpu_module, Module):
            raise InterpreterError(f"unknown GPU module @{mod_name}")
        kernel = gpu_module.lookup(kernel_name)
        if not isinstance(kernel, Function):
            raise InterpreterError(f"unknown kernel @{mod_name}::@{kernel_name}")
        vals = [env[v] for v in op.operands]
        grid, block = self._grid(vals[:6])
        args = vals[6:]
        launch = next(self._launches)
        for ids, vec in self._launch_ids(grid, block):
            lanes = (*grid, *block) if vec else ()
            self.call(kernel, args, _Ctx(vector=vec, lanes=lanes, ids=ids, launch_id=launch))
        return None

    def _gpu_id(self, op, env, ctx):
        if ctx.ids is None:
            raise InterpreterError(f"{op.name} outside a kernel")
        kind = op.name.split(".", 1)[1]
        env[op.result] = ctx.ids[(kind, op.attributes["dim"])]
        return None


_HANDLERS = {
    "stencil.assert": Interpreter._stencil_assert,
    "stencil.load": Interpreter._stencil_load,
    "stencil.apply": Interpreter._stencil_apply,
    "stencil.access": Interpreter._stencil_access,
    "stencil.return": Interpreter._stencil_return,
    "stencil.store": Interpreter._stencil_store,
    "loop.if": Interpreter._loop_if,
    "loop.yield": Interpreter._loop_yield,
    "loop.parallel": Interpreter._loop_parallel,
    "loop.for": Interpreter._loop_for,
    "buffer.alloc": Interpreter._buffer_alloc,
    "buffer.dealloc": Interpreter._buffer_dealloc,
    "buffer.view": Interpreter._buffer_view,
    "buffer.load": Interpreter._buffer_load,
    "buffer.store": Interpreter._buffer_store,
    "func.call": Interpreter._func_call,
    "func.return": Interpreter._func_return,
    "gpu.launch": Interpreter._gpu_launch,
    "gpu.terminator": Interpreter._gpu_terminator,
    "gpu.launch_func": Interpreter._gpu_launch_func,
    "gpu.block_id": Interpreter._gpu_id,
    "gpu.thread_id": Interpreter._gpu_id,
    "gpu.block_dim": Interpreter._gpu_id,
    "gpu.grid_dim": Interpreter._gpu_id,
}


# -- level entry points ---------------------------------------------------------

def _has_prefix(module: Module, prefix: str) -> bool:
    return any(op.name.startswith(prefix) for op in module.walk())


def _prepare_stencil(module: Module) -> Module:
    from .ir import clone_module
    from .transforms.shapes import infer_shapes, needs_inference

    if not needs_inference(module):
        return module
    module = clone_module(module)
    infer_shapes(module)
    return module


def run_stencil(module: Module, inputs, function: Optional[str] = None, *, mode: str = "vector",
                order: str = "lex", trace: Optional[ExecutionTrace] = None) -> List[TensorData]:
    """Evaluate a stencil-level program (shape inference runs on a copy if needed)."""
    if _has_prefix(module, "buffer.") or _has_prefix(module, "gpu."):
        raise InterpreterError("run_stencil expects a stencil-level module")
    prepared = _prepare_stencil(module)
    if trace is not None and prepared is not module:
        raise InterpreterError("tracing requires a shape-annotated module")
    return Interpreter(prepared, mode, order, trace).run(inputs, function)


def run_loops(module: Module, inputs, function: Optional[str] = None, *, mode: str = "vector",
              order: str = "lex", trace: Optional[ExecutionTrace] = None) -> List[TensorData]:
    """Evaluate a lowered (loop + buffer) module."""
    if _has_prefix(module, "stencil.") or _has_prefix(module, "gpu."):
        raise InterpreterError("run_loops expects a loop-level module")
    return Interpreter(module, mode, order, trace).run(inputs, function)


def run_gpu(module: Module, inputs, function: Optional[str] = None, *, mode: str = "vector",
            order: str = "lex", trace: Optional[ExecutionTrace] = None) -> List[TensorData]:
    """Evaluate a module with inline or outlined GPU launches (simulated SIMT)."""
    if _has_prefix(module, "stencil."):
        raise InterpreterError("run_gpu expects a GPU-level module")
    return Interpreter(module, mode, order, trace).run(inputs, function)


def run(module: Module, inputs, function: Optional[str] = None, **kwargs) -> List[TensorData]:
    """Dispatch on the module's level."""
    if _has_prefix(module, "stencil."):
        return run_stencil(module, inputs, function, **kwargs)
    if _has_prefix(module, "gpu."):
        return run_gpu(module, inputs, function, **kwargs)
    return run_loops(module, inputs, function, **kwargs)


def level_of(module: Module) -> str:
    if _has_prefix(module, "stencil."):
        return "stencil"
    if _has_prefix(module, "gpu."):
        return "gpu"
    return "loops"
