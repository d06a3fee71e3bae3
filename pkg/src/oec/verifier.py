"""Structural verification of modules: SSA visibility, terminators, closed
opcode set, symbol tables and the per-dialect verifiers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

from . import dialects  # noqa: F401  (registers the opcode table)
from .dialects.stencil import verify_stencil_function
from .ir import Block, Function, Module, Operation, op_path
from .registry import lookup, messages


@dataclass(frozen=True)
class Diagnostic:
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


class VerificationError(Exception):
    def __init__(self, diagnostics: List[Diagnostic], context: str = ""):
        self.diagnostics = list(diagnostics)
        head = f"{context}: " if context else ""
        super().__init__(head + "; ".join(str(d) for d in self.diagnostics))


def _diag(op: Optional[Operation], func: Optional[Function], message: str) -> Diagnostic:
    if op is not None:
        return Diagnostic(op_path(op), message)
    return Diagnostic(f"@{func.name}" if func is not None else "module", message)


def verify(module: Module) -> List[Diagnostic]:
    """Return every violated invariant; an empty list means the module is valid."""
    out: List[Diagnostic] = []
    _verify_module(module, out, nested=False)
    return out


def verify_stencil(module: Module) -> List[Diagnostic]:
    out: List[Diagnostic] = []
    for func in module.all_functions():
        for op, msg in verify_stencil_function(func):
            out.append(_diag(op, func, msg))
    return out


def check(module: Module, context: str = "") -> Module:
    """Raise :class:`VerificationError` unless ``module`` verifies."""
    diags = verify(module)
    if diags:
        raise VerificationError(diags, context)
    return module


def _verify_module(module: Module, out: List[Diagnostic], nested: bool) -> None:
    names = set()
    where = f"module @{module.name}" if module.name else "module"
    for entry in module.body:
        if entry.name in names:
            out.append(Diagnostic(where, f"duplicate symbol @{entry.name}"))
        names.add(entry.name)
        if isinstance(entry, Module):
            if entry.kind != "gpu":
                out.append(Diagnostic(where, f"nested module @{entry.name} is not a GPU module"))
            if nested:
                out.append(Diagnostic(where, f"GPU module @{entry.name} cannot nest further modules"))
            _verify_module(entry, out, nested=True)
        elif isinstance(entry, Function):
            _verify_function(entry, module, out)
    if not nested:
        for func in module.functions:
            for op, msg in verify_stencil_function(func):
                out.append(_diag(op, func, msg))


def _verify_function(func: Function, module: Module, out: List[Diagnostic]) -> None:
    if len(func.body.blocks) != 1:
        out.append(_diag(None, func, "function bodies must have exactly one block"))
        return
    _verify_block(func.block, set(), func, module, out)
    term = func.block.terminator
    if func.result_types and (term is None or term.name != "func.return"):
        out.append(_diag(None, func, "function with results must end with func.return"))


def _verify_block(block: Block, visible: set, func: Function, module: Module, out: List[Diagnostic]) -> None:
    scope = set(visible)
    scope.update(block.args)
    for pos, op in enumerate(block.ops):
        d = lookup(op.name)
        if d is None:
            out.append(_diag(op, func, f"unknown operation '{op.name}'"))
            continue
        for i, v in enumerate(op.operands):
            if v not in scope:
                out.append(_diag(op, func, f"SSA violation: operand #{i} is used before its definition or outside its scope"))
        if d.terminator and pos != len(block.ops) - 1:
            out.append(_diag(op, func, f"terminator '{op.name}' must be the last operation of its block"))
        if d.num_regions and len(op.regions) != d.num_regions:
            out.append(_diag(op, func, f"'{op.name}' expects {d.num_regions} region(s), got {len(op.regions)}"))
        for msg in messages(op):
            out.append(_diag(op, func, msg))
        if op.name == "func.call":
            out.extend(_verify_call(op, func, module))
        elif op.name == "gpu.launch_func":
            out.extend(_verify_launch_func(op, func, module))
        inner_scope = set() if d.isolated else scope
        for region in op.regions:
            if len(region.blocks) > 1:
                out.append(_diag(op, func, "multi-block regions are not supported by the dialects"))
            for b in region.blocks:
                _verify_block(b, inner_scope, func, module, out)
        scope.update(op.results)


def _verify_call(op: Operation, func: Function, module: Module) -> List[Diagnostic]:
    callee = module.lookup(op.attributes.get("callee", ""))
    if not isinstance(callee, Function):
        return [_diag(op, func, f"call to unknown function @{op.attributes.get('callee')}")]
    if [v.type for v in op.operands] != callee.arg_types:
        return [_diag(op, func, f"call operand types do not match @{callee.name}")]
    if [r.type for r in op.results] != callee.result_types:
        return [_diag(op, func, f"call result types do not match @{callee.name}")]
    return []


def _verify_launch_func(op: Operation, func: Function, module: Module) -> List[Diagnostic]:
    sym = op.attributes.get("kernel")
    if not isinstance(sym, str) or "::" not in sym:
        return []
    mod_name, kernel_name = sym.split("::", 1)
    gpu_module = module.lookup(mod_name)
    if not isinstance(gpu_module, Module) or gpu_module.kind != "gpu":
        return [_diag(op, func, f"unknown GPU module @{mod_name}")]
    kernel = gpu_module.lookup(kernel_name)
    if not isinstance(kernel, Function) or not kernel.attributes.get("kernel"):
        return [_diag(op, func, f"@{mod_name} has no kernel @{kernel_name}")]
    if [v.type for v in op.operands[6:]] != kernel.arg_types:
        return [_diag(op, func, f"launch arguments do not match kernel @{kernel_name}")]
    return []


def use_lists_exact(module: Module) -> bool:
    """Cross-check recorded uses against a full scan of the IR."""
    found = {}
    values = set()
    for func in module.all_functions():
        values.update(func.args)
        for op in func.walk():
            values.update(op.results)
            for r in op.regions:
                for b in r.blocks:
                    values.update(b.args)
            for i, v in enumerate(op.operands):
                found.setdefault(v, set()).add((op, i))
                values.add(v)
    return all(v.uses == found.get(v, set()) for v in values)
