"""GPU level: mapping parallel loops to launches, outlining kernels into GPU
modules and emitting C-like kernel source embedded in the host module."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .dialects.gpu import AXES, ID_OPS
from .ir import (Block, Function, Global, Module, Operation, Region, Value, clone_function, clone_module,
                 clone_op, op_path, values_defined_outside)
from .registry import lookup
from .types import BufferType, ScalarType, index
from .verifier import Diagnostic, VerificationError

DEFAULT_BLOCK = (128, 1, 1)
ID_ARG_ORDER = [(k, a) for k in ("block_id", "thread_id", "grid_dim", "block_dim") for a in AXES]


class GpuLoweringError(VerificationError):
    pass


def _constant_int(v: Value) -> Optional[int]:
    op = v.defining_op
    if op is not None and op.name == "arith.constant" and v.type == index:
        return int(op.attributes["value"])
    return None


def _const(block: Block, value: int, anchor: Optional[Operation] = None) -> Value:
    op = Operation("arith.constant", (), [index], {"value": int(value)})
    if anchor is None:
        block.append(op)
    else:
        block.insert_before(anchor, op)
    return op.result


def launch_config(counts: Sequence[int], block_size: Optional[Sequence[int]]) -> Tuple[tuple, tuple, List[str]]:
    """Grid and block sizes for a loop nest with ``counts`` iterations per
    mapped axis.  Without an explicit block size the default is clamped per
    axis to the largest divisor of the iteration count."""
    errors = []
    counts = list(counts) + [1] * (3 - len(counts))
    if block_size is None:
        block = [math.gcd(b, c) for b, c in zip(DEFAULT_BLOCK, counts)]
    else:
        block = list(block_size)
        for a, (b, c) in enumerate(zip(block, counts)):
            if b < 1:
                errors.append(f"block size {b} along {AXES[a]} must be positive")
            elif c % b:
                errors.append(f"block size {b} does not divide the {c} iterations along {AXES[a]}")
    if errors:
        return (), (), errors
    grid = tuple(c // b for c, b in zip(counts, block))
    return grid, tuple(block), errors


def _map_loop(loop: Operation, block_size, diags: List[Diagnostic]) -> None:
    n = len(loop.operands) // 3
    if n > 3:
        diags.append(Diagnostic(op_path(loop), f"cannot map {n} parallel dimensions to a 3D grid"))
        return
    bounds = [_constant_int(v) for v in loop.operands]
    if any(b is None for b in bounds):
        diags.append(Diagnostic(op_path(loop), "loop bounds must be constants to map to a GPU grid"))
        return
    lbs, ubs, steps = bounds[:n], bounds[n:2 * n], bounds[2 * n:]
    counts = [max(0, -(-(u - l) // s)) for l, u, s in zip(lbs, ubs, steps)]
    grid, block, errors = launch_config(counts, block_size)
    for e in errors:
        diags.append(Diagnostic(op_path(loop), e))
    if errors:
        return
    for c, g, b in zip(counts, grid, block):
        assert g * b == c, "grid x block must cover the iteration space"

    parent = loop.parent
    sizes = [_const(parent, v, loop) for v in (*grid, *block)]
    body = Block([index] * 12)
    ids = dict(zip(ID_ARG_ORDER, body.args))
    mapping: Dict[Value, Value] = {}
    loop_block = loop.regions[0].blocks[0]
    for d in range(n):
        axis = AXES[d]
        bid, tid, bdim = ids[("block_id", axis)], ids[("thread_id", axis)], ids[("block_dim", axis)]
        t = Operation("arith.muli", [bid, bdim], [index])
        body.append(t)
        t = Operation("arith.addi", [t.result, tid], [index])
        body.append(t)
        iv = t.result
        if steps[d] != 1:
            t = Operation("arith.muli", [iv, _const(body, steps[d])], [index])
            body.append(t)
            iv = t.result
        if lbs[d] != 0:
            t = Operation("arith.addi", [iv, _const(body, lbs[d])], [index])
            body.append(t)
            iv = t.result
        mapping[loop_block.args[d]] = iv
    for op in loop_block.ops[:-1]:
        body.append(clone_op(op, mapping))
    body.append(Operation("gpu.terminator"))
    launch = Operation("gpu.launch", sizes, [], {}, [Region([body])])
    parent.insert_before(loop, launch)
    loop.erase()


def map_loops_to_gpu(module: Module, block_size: Optional[Sequence[int]] = None) -> Module:
    """Return a copy of ``module`` where every outermost loop.parallel is a gpu.launch."""
    out = clone_module(module)
    diags: List[Diagnostic] = []
    for func in out.functions:
        roots = [op for op in func.walk() if op.name == "loop.parallel"
                 and not _inside(op, ("loop.parallel", "gpu.launch"))]
        for loop in roots:
            _map_loop(loop, block_size, diags)
    if diags:
        raise GpuLoweringError(diags, "gpu-map")
    return out


def _inside(op: Operation, names) -> bool:
    node = op.parent_op
    while node is not None:
        if node.name in names:
            return True
        node = node.parent_op
    return False


# -- outlining -------------------------------------------------------------------

def _callees(func: Function) -> List[str]:
    return [op.attributes["callee"] for op in func.walk() if op.name == "func.call"]


def _outline_launch(launch: Operation, func: Function, host: Module, n: int) -> None:
    name = f"{func.name}_kernel{n}"
    body = launch.regions[0].blocks[0]
    captured = values_defined_outside(launch.regions[0])
    params = [v for v in captured if not (v.defining_op is not None and v.defining_op.name == "arith.constant")]
    constants = [v for v in captured if v not in params]

    kernel = Function(name, [v.type for v in params], [], {"kernel": True})
    kblock = kernel.block
    mapping: Dict[Value, Value] = dict(zip(params, kernel.args))
    for v in constants:
        c = clone_op(v.defining_op, {})
        kblock.append(c)
        mapping[v] = c.result
    for (kind, axis), arg in zip(ID_ARG_ORDER, body.args):
        if arg.uses:
            q = Operation(f"gpu.{kind}", (), [index], {"dim": axis})
            kblock.append(q)
            mapping[arg] = q.result
    for op in body.ops[:-1]:
        kblock.append(clone_op(op, mapping))

    gpu_module = Module(name, {}, kind="gpu")
    gpu_module.append(kernel)
    pending = _callees(kernel)
    while pending:
        callee = pending.pop()
        if gpu_module.lookup(callee) is not None:
            continue
        src = host.lookup(callee)
        if isinstance(src, Function):
            copy = clone_function(src)
            gpu_module.append(copy)
            pending.extend(_callees(copy))
    host.append(gpu_module)

    call = Operation("gpu.launch_func", [*launch.operands, *params], [], {"kernel": f"{name}::{name}"})
    launch.parent.insert_before(launch, call)
    launch.erase()


def outline_kernels(module: Module) -> Module:
    """Return a copy of ``module`` with each gpu.launch outlined into its own GPU module."""
    out = clone_module(module)
    host_funcs = list(out.functions)
    for func in host_funcs:
        launches = [op for op in func.walk() if op.name == "gpu.launch"]
        for n, launch in enumerate(launches):
            _outline_launch(launch, func, out, n)
    # keep a host copy of a function iff it is public or reachable from one
    public = [f for f in out.functions if not f.attributes.get("private")]
    reachable = {f.name for f in public}
    pending = list(public)
    while pending:
        for callee in _callees(pending.pop()):
            target = out.lookup(callee)
            if isinstance(target, Function) and callee not in reachable:
                reachable.add(callee)
                pending.append(target)
    for f in list(out.functions):
        if f.name not in reachable:
            out.remove(f)
    return out


def cross_module_references(module: Module) -> int:
    """Number of operands inside GPU modules that refer to values not defined
    in the same kernel function."""
    count = 0
    for gpu_module in module.modules:
        for func in gpu_module.functions:
            defined = set(func.args)
            for op in func.walk():
                defined.update(op.results)
                for r in op.regions:
                    for b in r.blocks:
                        defined.update(b.args)
            for op in func.walk():
                count += sum(1 for v in op.operands if v not in defined)
    return count


# -- kernel source emission ------------------------------------------------------

C_TYPES = {"f32": "float", "f64": "double", "index": "long", "i1": "bool"}
INTRINSICS = {"block_id": "blockIdx", "thread_id": "threadIdx", "block_dim": "blockDim", "grid_dim": "gridDim"}
BINARY_C = {
    "arith.addf": "+", "arith.subf": "-", "arith.mulf": "*", "arith.divf": "/",
    "arith.addi": "+", "arith.subi": "-", "arith.muli": "*",
    "arith.andi": "&&", "arith.ori": "||", "arith.xori": "!=",
}
CALL_C = {"arith.minf": "fmin", "arith.maxf": "fmax", "arith.absf": "fabs", "arith.sqrtf": "sqrt",
          "arith.mini": "min", "arith.maxi": "max", "arith.divi": "floordiv", "arith.remi": "floormod"}
CMP_C = {"oeq": "==", "one": "!=", "olt": "<", "ole": "<=", "ogt": ">", "oge": ">=",
         "eq": "==", "ne": "!=", "slt": "<", "sle": "<=", "sgt": ">", "sge": ">="}


class KernelEmitError(Exception):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


@dataclass
class KernelArtifact:
    module: str
    source: str
    manifest: dict
    warnings: List[str] = field(default_factory=list)

    @property
    def symbol(self) -> str:
        return f"{self.module}_artifact"


def _c_type(t) -> str:
    if isinstance(t, BufferType):
        return f"{C_TYPES[t.element.name]}*"
    return C_TYPES[t.name]


def _c_literal(value, t: ScalarType) -> str:
    if t.is_float:
        f = float(value)
        if math.isnan(f):
            return "NAN"
        if math.isinf(f):
            return "INFINITY" if f > 0 else "-INFINITY"
        text = repr(f)
        return text + ("f" if t.name == "f32" else "")
    if t.name == "i1":
        return "true" if value else "false"
    return str(int(value))


class _Emitter:
    def __init__(self, func: Function):
        self.func = func
        self.names: Dict[Value, str] = {}
        self.lines: List[str] = []
        self.errors: List[Diagnostic] = []
        self.statements = 0

    def name(self, v: Value) -> str:
        if v not in self.names:
            self.names[v] = f"v{len(self.names)}"
        return self.names[v]

    def emit(self, depth: int, text: str) -> None:
        self.lines.append("  " * depth + text)

    def address(self, buf: Value, idx) -> str:
        t = buf.type
        terms = [str(t.offset)] if t.offset else []
        for v, s in zip(idx, t.strides):
            terms.append(self.name(v) if s == 1 else f"{self.name(v)} * {s}")
        return f"{self.name(buf)}[{' + '.join(terms) or '0'}]"

    def block(self, block: Block, depth: int) -> None:
        for op in block.ops:
            self.op(op, depth)

    def define(self, depth: int, v: Value, expr: str) -> None:
        self.emit(depth, f"{_c_type(v.type)} {self.name(v)} = {expr};")

    def op(self, op: Operation, depth: int) -> None:
        name = op.name
        d = lookup(name)
        if d is not None and d.reserved:
            self.errors.append(Diagnostic(op_path(op), f"reserved operation '{name}' is not supported by the emitter"))
            return
        ops = [self.name(v) for v in op.operands]
        if name == "arith.constant":
            self.define(depth, op.result, _c_literal(op.attributes["value"], op.result.type))
        elif name in BINARY_C:
            self.define(depth, op.result, f"{ops[0]} {BINARY_C[name]} {ops[1]}")
        elif name in CALL_C:
            self.define(depth, op.result, f"{CALL_C[name]}({', '.join(ops)})")
        elif name == "arith.negf":
            self.define(depth, op.result, f"-{ops[0]}")
        elif name in ("arith.cmpf", "arith.cmpi"):
            self.define(depth, op.result, f"{ops[0]} {CMP_C[op.attributes['predicate']]} {ops[1]}")
        elif name == "arith.select":
            self.define(depth, op.result, f"{ops[0]} ? {ops[1]} : {ops[2]}")
        elif name in ID_OPS:
            kind = name.split(".", 1)[1]
            self.define(depth, op.result, f"{INTRINSICS[kind]}.{op.attributes['dim']}")
        elif name == "buffer.view":
            self.define(depth, op.result, ops[0])
        elif name == "buffer.load":
            self.define(depth, op.result, self.address(op.operands[0], op.operands[1:]))
            self.statements += 1
        elif name == "buffer.store":
            self.emit(depth, f"{self.address(op.operands[1], op.operands[2:])} = {ops[0]};")
            self.statements += 1
        elif name == "loop.if":
            for r in op.results:
                self.emit(depth, f"{_c_type(r.type)} {self.name(r)};")
            self.emit(depth, f"if ({ops[0]}) {{")
            self._branch(op, 0, depth)
            self.emit(depth, "} else {")
            self._branch(op, 1, depth)
            self.emit(depth, "}")
        elif name == "loop.for":
            iv = self.name(op.regions[0].blocks[0].args[0])
            self.emit(depth, f"for (long {iv} = {ops[0]}; {iv} < {ops[1]}; {iv} += {ops[2]}) {{")
            self.block(op.regions[0].blocks[0], depth + 1)
            self.emit(depth, "}")
        elif name == "loop.parallel":
            n = len(op.operands) // 3
            args = op.regions[0].blocks[0].args
            for d in range(n):
                iv = self.name(args[d])
                self.emit(depth + d, f"for (long {iv} = {ops[d]}; {iv} < {ops[n + d]}; {iv} += {ops[2 * n + d]}) {{")
            self.block(op.regions[0].blocks[0], depth + n)
            for d in reversed(range(n)):
                self.emit(depth + d, "}")
        elif name == "loop.yield":
            return
        elif name == "func.call":
            call = f"{op.attributes['callee']}({', '.join(ops)})"
            if op.results:
                self.define(depth, op.results[0], call)
            else:
                self.emit(depth, call + ";")
            self.statements += 1
        elif name == "func.return":
            self.emit(depth, f"return {ops[0]};" if ops else "return;")
        else:
            self.errors.append(Diagnostic(op_path(op), f"operation '{name}' cannot be emitted as kernel source"))

    def _branch(self, op: Operation, which: int, depth: int) -> None:
        block = op.regions[which].blocks[0]
        self.block(block, depth + 1)
        for r, v in zip(op.results, block.terminator.operands):
            self.emit(depth + 1, f"{self.name(r)} = {self.name(v)};")


def _emit_function(func: Function, errors: List[Diagnostic]) -> Tuple[str, int]:
    e = _Emitter(func)
    params = ", ".join(f"{_c_type(a.type)} {e.name(a)}" for a in func.args)
    qualifier = "__global__ void" if func.attributes.get("kernel") else \
        ("__device__ " + (_c_type(func.result_types[0]) if func.result_types else "void"))
    e.emit(0, f"{qualifier} {func.name}({params}) {{")
    e.block(func.block, 1)
    e.emit(0, "}")
    errors.extend(e.errors)
    return "\n".join(e.lines), e.statements


def _launch_sites(host: Optional[Module], symbol: str) -> List[dict]:
    sites = []
    if host is None:
        return sites
    for func in host.functions:
        for op in func.walk():
            if op.name == "gpu.launch_func" and op.attributes.get("kernel") == symbol:
                sizes = [_constant_int(v) for v in op.operands[:6]]
                sites.append({"function": func.name, "grid": sizes[:3], "block": sizes[3:]})
    return sites


def emit_kernel_source(gpu_module: Module, target: str = "c-like") -> KernelArtifact:
    """Emit deterministic C-like source for every function of a GPU module."""
    if target != "c-like":
        raise ValueError(f"unsupported kernel target {target!r}")
    errors: List[Diagnostic] = []
    warnings: List[str] = []
    chunks = [f"// GPU module @{gpu_module.name}"]
    kernels = []
    helpers = [f for f in gpu_module.functions if not f.attributes.get("kernel")]
    for func in helpers + [f for f in gpu_module.functions if f.attributes.get("kernel")]:
        text, statements = _emit_function(func, errors)
        chunks.append(text)
        if func.attributes.get("kernel"):
            if statements == 0:
                warnings.append(f"kernel @{func.name} has an empty body")
            symbol = f"{gpu_module.name}::{func.name}"
            kernels.append({
                "kernel": func.name,
                "symbol": symbol,
                "params": [str(t) for t in func.arg_types],
                "launches": _launch_sites(gpu_module.parent, symbol),
            })
    if errors:
        raise KernelEmitError(errors)
    manifest = {"module": gpu_module.name, "target": target, "kernels": kernels}
    return KernelArtifact(gpu_module.name, "\n\n".join(chunks) + "\n", manifest, warnings)


def embed_kernel_sources(module: Module, target: str = "c-like") -> List[KernelArtifact]:
    """Emit every GPU module and attach the result to ``module`` as a global."""
    artifacts = []
    for gpu_module in module.modules:
        art = emit_kernel_source(gpu_module, target)
        existing = module.lookup(art.symbol)
        if existing is not None:
            module.remove(existing)
        module.append(Global(art.symbol, {
            "source": art.source,
            "manifest": json.dumps(art.manifest, sort_keys=True),
        }))
        artifacts.append(art)
    return artifacts
