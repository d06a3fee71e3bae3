from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from oec import corpus
from oec.tensor_io import TensorData

GOLDEN = Path(__file__).parent / "golden"


def pytest_addoption(parser):
    parser.addoption("--update-golden", action="store_true", help="rewrite golden files from current output")


@pytest.fixture
def golden(request):
    """Compare text against tests/golden/<name>, or rewrite it with --update-golden."""

    def check(name: str, text: str) -> None:
        path = GOLDEN / name
        if request.config.getoption("--update-golden") or not path.exists():
            path.write_text(text)
        assert text == path.read_text(), f"output differs from golden file {name}"

    return check


@pytest.fixture
def fig3():
    return corpus.fig3(16)


@pytest.fixture
def fig5():
    return corpus.fig5(16)


@pytest.fixture
def fig6():
    return corpus.fig6(16)


def ramp(name: str, shape, dims: str = "ijk", kind: str = "f64") -> TensorData:
    """Index-valued input: element (a, b, c) holds a * 10000 + b * 100 + c."""
    idx = np.indices(shape)
    weights = [10000, 100, 1][: len(shape)]
    return TensorData(name, dims, kind, sum(w * i for w, i in zip(weights, idx)).astype(np.float64))


# one line per acceptance criterion, repeated in the terminal summary so it
# shows up even when pytest captures stdout
ACCEPTANCE_LINES: list = []


def record_criterion(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}" + (f": {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
