"""Pass-by-pass equivalence checking against the interpreter and the
naive reference evaluator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from .interpreter import level_of, run
from .ir import Module, clone_module
from .pipeline import PassContext, PassPipeline, PassSpec, default_passes
from .reference import TOLERANCE, reference_run, relative_error
from .tensor_io import TensorData
from .textual import print_module

ALL_LEVELS = frozenset({"stencil", "loops", "gpu"})


@dataclass
class TensorDiff:
    """Where two runs of the same output tensor disagree."""

    tensor: str
    mismatches: int
    first_index: Optional[tuple] = None
    expected: Optional[float] = None
    actual: Optional[float] = None

    def __str__(self) -> str:
        if not self.mismatches:
            return f"{self.tensor}: identical"
        return (f"{self.tensor}: {self.mismatches} elements differ, first at {self.first_index} "
                f"(expected {self.expected!r}, got {self.actual!r})")


@dataclass
class StageCheck:
    """Bitwise comparison of one pipeline prefix with the unoptimized run."""

    stage: str
    level: str
    seed: int
    diffs: List[TensorDiff]

    @property
    def passed(self) -> bool:
        return all(d.mismatches == 0 for d in self.diffs)


@dataclass
class ToleranceCheck:
    """Relative error of a final output tensor against the reference."""

    tensor: str
    kind: str
    seed: int
    error: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.error <= self.threshold


@dataclass
class EquivalenceReport:
    program: str
    stages: List[StageCheck] = field(default_factory=list)
    tolerance: List[ToleranceCheck] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.errors and all(s.passed for s in self.stages) and all(t.passed for t in self.tolerance)

    def max_error(self) -> float:
        return max((t.error for t in self.tolerance), default=0.0)

    def failures(self) -> List[str]:
        out = list(self.errors)
        for s in self.stages:
            if not s.passed:
                bad = "; ".join(str(d) for d in s.diffs if d.mismatches)
                out.append(f"after {s.stage} ({s.level}, seed {s.seed}): {bad}")
        for t in self.tolerance:
            if not t.passed:
                out.append(f"{t.tensor} (seed {t.seed}): relative error {t.error:.3e} > {t.threshold:g}")
        return out

    def summary(self) -> str:
        lines = [f"{self.program}: {'PASS' if self.passed else 'FAIL'} "
                 f"({len(self.stages)} stage runs, max relative error {self.max_error():.3e})"]
        lines += [f"  {f}" for f in self.failures()]
        return "\n".join(lines)


def tensor_diff(expected: TensorData, actual: TensorData) -> TensorDiff:
    """Bitwise comparison; NaNs compare equal to NaNs."""
    a, b = np.asarray(expected.values), np.asarray(actual.values)
    if a.shape != b.shape or a.dtype != b.dtype:
        return TensorDiff(expected.name, max(a.size, b.size, 1), None,
                          f"{a.dtype}{a.shape}", f"{b.dtype}{b.shape}")
    same = (a == b) | (np.isnan(a) & np.isnan(b)) if a.dtype.kind == "f" else a == b
    bad = np.argwhere(~same)
    if not len(bad):
        return TensorDiff(expected.name, 0)
    idx = tuple(int(i) for i in bad[0])
    return TensorDiff(expected.name, len(bad), idx, a[idx].item(), b[idx].item())


def _by_name(tensors: Sequence[TensorData]):
    return {t.name: t for t in tensors}


def verify_equivalence(
    module: Module,
    inputs: Iterable[Sequence[TensorData]],
    levels: Iterable[str] = ALL_LEVELS,
    passes: Optional[Sequence[PassSpec]] = None,
    context: Optional[PassContext] = None,
    function: Optional[str] = None,
    name: str = "",
    mutate: Optional[Callable[[PassSpec, Module], None]] = None,
) -> EquivalenceReport:
    """Compile ``module`` and interpret it after every pass.

    Every intermediate module at a requested level must reproduce the
    unoptimized interpreter output bitwise; the final outputs must match the
    reference evaluator within the element kind's tolerance.  ``mutate`` may
    edit a module right after a pass, to check that the harness notices.
    """
    levels = set(levels)
    report = EquivalenceReport(name or module.function(function).name)
    inputs = [list(ts) for ts in inputs]
    original = clone_module(module)
    baselines, references = [], []
    for ts in inputs:
        baselines.append(_by_name(run(original, ts, function)))
        references.append(_by_name(reference_run(original, ts, function)))

    snapshots: List[tuple] = []
    last_text = [print_module(original)]

    def observe(spec: PassSpec, mod: Module) -> None:
        if mutate is not None:
            mutate(spec, mod)
        level = level_of(mod)
        if level not in levels:
            return
        text = print_module(mod)
        if text == last_text[0]:
            return  # the pass changed nothing
        last_text[0] = text
        snapshots.append((str(spec), level, clone_module(mod)))

    specs = list(passes) if passes is not None else default_passes("gpu")
    try:
        result = PassPipeline(specs, context).run(clone_module(module), observe)
    except Exception as e:  # noqa: BLE001 - reported, not raised
        report.errors.append(f"pipeline failed: {type(e).__name__}: {e}")
        return report

    for seed, ts in enumerate(inputs):
        final = None
        for stage, level, snap in snapshots:
            try:
                got = _by_name(run(snap, ts, function))
            except Exception as e:  # noqa: BLE001
                report.errors.append(f"after {stage}: interpreter failed: {type(e).__name__}: {e}")
                break
            diffs = [tensor_diff(t, got[n]) if n in got else TensorDiff(n, t.values.size, None, None, "missing")
                     for n, t in baselines[seed].items()]
            report.stages.append(StageCheck(stage, level, seed, diffs))
            final = got
        if not snapshots or snapshots[-1][1] != level_of(result) or final is None:
            # the tolerance check always uses the fully compiled module
            try:
                final = _by_name(run(result, ts, function))
            except Exception as e:  # noqa: BLE001
                report.errors.append(f"final module: interpreter failed: {type(e).__name__}: {e}")
                continue
        for n, ref in references[seed].items():
            if n not in final:
                continue
            report.tolerance.append(ToleranceCheck(n, ref.kind, seed, relative_error(final[n].values, ref.values),
                                                   TOLERANCE[ref.kind]))
    return report
