"""Named passes, pass-spec parsing and the default compilation pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .gpu_lowering import map_loops_to_gpu, outline_kernels
from .interpreter import level_of
from .ir import Module
from .lowering import lower_to_loops
from .rewrite import canonicalize_index, fold_constants, run_cse, run_dce, schedule_applies
from .transforms import infer_shapes, inline_all, shift_shapes, unroll_all
from .verifier import Diagnostic, VerificationError, verify


class PassError(VerificationError):
    """A pass reported diagnostics or left the module invalid."""


@dataclass
class PassSpec:
    name: str
    options: Dict[str, str] = field(default_factory=dict)

    def __str__(self) -> str:
        if not self.options:
            return self.name
        opts = ",".join(f"{k}={v}" for k, v in self.options.items())
        return f"{self.name}:{opts}"


def parse_pass(text: str) -> PassSpec:
    """Parse ``name`` or ``name:key=value,key=value``."""
    name, _, rest = text.strip().partition(":")
    if name not in PASSES:
        raise ValueError(f"unknown pass {name!r}; known passes: {', '.join(sorted(PASSES))}")
    options = {}
    if rest:
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq or not key:
                raise ValueError(f"malformed option {item!r} in pass {text!r}")
            options[key.strip()] = value.strip()
    return PassSpec(name, options)


def parse_block(text: Optional[str]):
    if text is None or text == "":
        return None
    parts = [int(p) for p in str(text).replace("x", ",").split(",")]
    if len(parts) > 3:
        raise ValueError(f"block size {text!r} has more than three components")
    return tuple(parts + [1] * (3 - len(parts)))


def _truthy(value) -> bool:
    return str(value).lower() in ("1", "true", "yes", "on")


@dataclass
class PassContext:
    """Shared settings and the per-pass log of a pipeline run."""

    block: Optional[Tuple[int, int, int]] = None
    direct_store: bool = True
    reverse: bool = False
    log: List[str] = field(default_factory=list)


def _inline(module, opts, ctx):
    report = inline_all(module, reverse=ctx.reverse)
    ctx.log.append(f"inline: {report.edits} edits ({dict(report.applied)}), converged={report.converged}")
    if not report.converged:
        raise PassError([Diagnostic("module", f"inlining did not converge within {report.limit} edits")], "inline")
    return module


def _unroll(module, opts, ctx):
    factor = int(opts.get("factor", 2))
    dim = opts.get("dim", "j")
    try:
        n = unroll_all(module, factor, dim)
    except ValueError as e:
        raise PassError([Diagnostic("module", str(e))], "unroll") from None
    ctx.log.append(f"unroll: {n} applies by {factor} along {dim}")
    return module


def _count(fn, label):
    def run(module, opts, ctx):
        ctx.log.append(f"{label}: {fn(module)}")
        return module
    return run


def _shape_infer(module, opts, ctx):
    diags = infer_shapes(module)
    if diags:
        raise PassError(diags, "shape-infer")
    return module


def _shape_shift(module, opts, ctx):
    try:
        shift_shapes(module)
    except ValueError as e:
        raise PassError([Diagnostic("module", str(e))], "shape-shift") from None
    return module


def _lower(module, opts, ctx):
    direct = _truthy(opts["direct_store"]) if "direct_store" in opts else ctx.direct_store
    return lower_to_loops(module, direct_store=direct)


def _gpu_map(module, opts, ctx):
    block = parse_block(opts.get("block")) if "block" in opts else ctx.block
    return map_loops_to_gpu(module, block)


def _gpu_outline(module, opts, ctx):
    return outline_kernels(module)


PASSES: Dict[str, Callable] = {
    "inline": _inline,
    "unroll": _unroll,
    "cse": _count(run_cse, "cse"),
    "dce": _count(run_dce, "dce"),
    "fold": _count(fold_constants, "fold"),
    "canonicalize-index": _count(canonicalize_index, "canonicalize-index"),
    "schedule": _count(schedule_applies, "schedule"),
    "shape-infer": _shape_infer,
    "shape-shift": _shape_shift,
    "lower-loops": _lower,
    "gpu-map": _gpu_map,
    "gpu-outline": _gpu_outline,
}

# the mandatory stages that take a module from one level to the next
TO_LOOPS = ["cse", "dce", "shape-infer", "shape-shift", "lower-loops", "fold", "cse", "dce"]
TO_GPU = ["gpu-map", "fold", "cse", "dce"]
TO_KERNELS = ["gpu-outline", "cse", "dce"]
LEVELS = ("stencil", "loops", "gpu", "kernel-src")


def default_passes(emit: str = "kernel-src", unroll: Optional[PassSpec] = None) -> List[PassSpec]:
    """Full pipeline up to the ``emit`` level."""
    if emit not in LEVELS:
        raise ValueError(f"unknown emit level {emit!r}")
    specs = [PassSpec("inline"), PassSpec("cse"), PassSpec("dce"), PassSpec("schedule")]
    if unroll is not None:
        specs += [unroll, PassSpec("cse"), PassSpec("schedule")]
    if emit == "stencil":
        return specs
    specs += [PassSpec(n) for n in TO_LOOPS]
    if emit == "loops":
        return specs
    # the GPU level is emitted in function form, after outlining
    return specs + [PassSpec(n) for n in TO_GPU + TO_KERNELS]


_STAGE_OF_PASS = {"lower-loops": 1, "gpu-map": 2, "gpu-outline": 3}


def completion_passes(module: Module, emit: str, prefix: Sequence[PassSpec] = ()) -> List[PassSpec]:
    """Stages still needed to bring ``module`` to the ``emit`` level after
    running ``prefix`` on it."""
    level = level_of(module)
    if level == "gpu" and not any(op.name == "gpu.launch" for op in module.walk()):
        level = "kernels"
    target = {"stencil": 0, "loops": 1, "gpu": 3, "kernel-src": 3}[emit]
    current = {"stencil": 0, "loops": 1, "gpu": 2, "kernels": 3}[level]
    current = max([current] + [_STAGE_OF_PASS.get(p.name, 0) for p in prefix])
    specs: List[PassSpec] = []
    if current < 1 <= target:
        # inference and shifting are idempotent, so they always run
        specs += [PassSpec(n) for n in TO_LOOPS]
    if current < 2 <= target:
        specs += [PassSpec(n) for n in TO_GPU]
    if current < 3 <= target:
        specs += [PassSpec(n) for n in TO_KERNELS]
    return specs


class PassPipeline:
    """An ordered list of passes; every pass must leave the module valid."""

    def __init__(self, passes: Sequence[PassSpec] = (), context: Optional[PassContext] = None):
        self.passes = list(passes)
        self.context = context or PassContext()

    @classmethod
    def parse(cls, texts: Sequence[str], context: Optional[PassContext] = None) -> "PassPipeline":
        return cls([parse_pass(t) for t in texts], context)

    def __str__(self) -> str:
        return " -> ".join(str(p) for p in self.passes)

    def run(self, module: Module, observe: Optional[Callable[[PassSpec, Module], None]] = None) -> Module:
        for spec in self.passes:
            module = PASSES[spec.name](module, spec.options, self.context)
            diags = verify(module)
            if diags:
                raise PassError(diags, f"after {spec}")
            if observe is not None:
                observe(spec, module)
        return module
