from __future__ import annotations

import pytest

from oec import corpus
from oec.ir import Operation, count_ops, replace_all_uses
from oec.rewrite import (PatternError, RewritePattern, apply_greedily, fold_constants, run_cse, run_dce,
                         schedule_applies)
from oec.textual import parse_module, print_module
from oec.transforms import inline_all

NEGS = """func @f(%0: f64) {
  %1 = arith.negf(%0) : (f64) -> f64
  %2 = arith.negf(%1) : (f64) -> f64
  %3 = arith.negf(%2) : (f64) -> f64
  %4 = arith.negf(%3) : (f64) -> f64
  %5 = arith.addf(%4, %0) : (f64, f64) -> f64
}
"""


class CancelNegations(RewritePattern):
    """negf(negf(x)) -> x"""

    name = "cancel-neg"

    def match(self, op):
        if op.name == "arith.negf":
            inner = op.operands[0].defining_op
            if inner is not None and inner.name == "arith.negf":
                return inner
        return None

    def rewrite(self, op, inner):
        replace_all_uses(op.result, inner.operands[0])
        op.erase()


class Tag(RewritePattern):
    """Marks an op once; records the order patterns fired in."""

    def __init__(self, name, benefit, log, opname="arith.negf"):
        self.name, self.benefit, self.log, self.opname = name, benefit, log, opname

    def match(self, op):
        return True if op.name == self.opname and self.name not in op.attributes else None

    def rewrite(self, op, _):
        op.attributes[self.name] = True
        self.log.append((self.name, op.operands[0]))


class Breaker(RewritePattern):
    name = "breaker"

    def match(self, op):
        return True if op.name == "arith.addf" else None

    def rewrite(self, op, _):
        # leaves a second result type that does not match the operands
        op.replace_results([op.results[0].type] * 2, [0, None])


def test_rewriter_reaches_fixpoint():
    m = parse_module(NEGS)
    report = apply_greedily(m, [CancelNegations()])
    run_dce(m)
    assert report.converged
    assert report.applied["cancel-neg"] == 2
    assert count_ops(m, "arith.negf") == 0


def test_higher_benefit_pattern_fires_first():
    log = []
    m = parse_module(NEGS)
    apply_greedily(m, [Tag("low", 1, log), Tag("high", 5, log)])
    names = [n for n, _ in log]
    assert names == ["high"] * 4 + ["low"] * 4


def test_program_order_and_reverse_order():
    for reverse in (False, True):
        log = []
        m = parse_module(NEGS)
        args = [m.function().args[0]] + [op.result for op in m.function().block.ops[:3]]
        apply_greedily(m, [Tag("t", 1, log)], reverse=reverse)
        expected = list(reversed(args)) if reverse else args
        assert [v for _, v in log] == expected


def test_edit_budget_stops_without_converging():
    m = parse_module(NEGS)
    report = apply_greedily(m, [Tag("t", 1, [])], max_iterations=2)
    assert not report.converged and report.edits == 2 and report.limit == 2


def test_budget_defaults_to_ten_per_op_and_honours_environment(monkeypatch):
    m = parse_module(NEGS)
    assert apply_greedily(m, [], max_iterations=None).limit == 10 * count_ops(m)
    monkeypatch.setenv("OEC_MAX_REWRITES", "3")
    report = apply_greedily(parse_module(NEGS), [Tag("t", 1, [])])
    assert report.limit == 3 and not report.converged


def test_invalid_rewrite_raises_pattern_error():
    m = parse_module(NEGS)
    with pytest.raises(PatternError) as info:
        apply_greedily(m, [Breaker()])
    assert info.value.pattern == "breaker"
    assert info.value.diagnostics


def test_cse_merges_pure_duplicates():
    m = parse_module("""func @f(%0: f64) {
  %1 = arith.addf(%0, %0) : (f64, f64) -> f64
  %2 = arith.addf(%0, %0) : (f64, f64) -> f64
  %3 = arith.mulf(%1, %2) : (f64, f64) -> f64
}
""")
    assert run_cse(m) == 1
    mul = m.function().block.ops[-1]
    assert mul.operands[0] is mul.operands[1]


def test_cse_keeps_reads_separated_by_a_write():
    m = parse_module("""func @f(%0: !buffer<4xf64>) {
  %1 = arith.constant() {value = 0} : () -> index
  %2 = buffer.load(%0, %1) : (!buffer<4xf64>, index) -> f64
  %3 = arith.negf(%2) : (f64) -> f64
  buffer.store(%3, %0, %1) : (f64, !buffer<4xf64>, index) -> ()
  %4 = buffer.load(%0, %1) : (!buffer<4xf64>, index) -> f64
  buffer.store(%4, %0, %1) : (f64, !buffer<4xf64>, index) -> ()
}
""")
    assert run_cse(m) == 0


def test_cse_is_scoped_to_regions():
    """A value first computed inside a branch cannot replace one computed later outside it."""
    m = parse_module("""func @f(%0: i1, %1: f64) {
  %2 = loop.if(%0) : (i1) -> f64 {
    %3 = arith.negf(%1) : (f64) -> f64
    loop.yield(%3) : (f64) -> ()
  } {
    loop.yield(%1) : (f64) -> ()
  }
  %4 = arith.negf(%1) : (f64) -> f64
  %5 = arith.addf(%2, %4) : (f64, f64) -> f64
}
""")
    assert run_cse(m) == 0
    # the other direction is legal: an outer value dominates the branch
    m = parse_module("""func @f(%0: i1, %1: f64) {
  %4 = arith.negf(%1) : (f64) -> f64
  %2 = loop.if(%0) : (i1) -> f64 {
    %3 = arith.negf(%1) : (f64) -> f64
    loop.yield(%3) : (f64) -> ()
  } {
    loop.yield(%1) : (f64) -> ()
  }
  %5 = arith.addf(%2, %4) : (f64, f64) -> f64
}
""")
    assert run_cse(m) == 1


def test_dce_removes_unused_results_and_apply_operands():
    m = corpus.fig5(8)
    text = print_module(m)
    store = next(op for op in m.walk() if op.name == "stencil.store")
    store.erase()
    removed = run_dce(m)
    assert removed > 0
    assert count_ops(m, "stencil.apply") == 0
    assert count_ops(m, "stencil.load") == 0
    assert "stencil.apply" in text


def test_fold_constants():
    m = parse_module("""func @f(%0: index) {
  %1 = arith.constant() {value = 3} : () -> index
  %2 = arith.constant() {value = 4} : () -> index
  %3 = arith.muli(%1, %2) : (index, index) -> index
  %4 = arith.constant() {value = 0} : () -> index
  %5 = arith.addi(%0, %4) : (index, index) -> index
  %6 = arith.addi(%5, %3) : (index, index) -> index
}
""")
    assert fold_constants(m) >= 2
    ops = m.function().block.ops
    add = ops[-1]
    assert add.operands[0] is m.function().args[0]
    assert add.operands[1].defining_op.attributes["value"] == 12


def test_fold_selects_branch_of_constant_condition():
    m = parse_module("""func @f(%1: f64) {
  %0 = arith.constant() {value = 1} : () -> i1
  %2 = loop.if(%0) : (i1) -> f64 {
    %3 = arith.negf(%1) : (f64) -> f64
    loop.yield(%3) : (f64) -> ()
  } {
    loop.yield(%1) : (f64) -> ()
  }
  %4 = arith.addf(%2, %2) : (f64, f64) -> f64
}
""")
    fold_constants(m)
    assert count_ops(m, "loop.if") == 0
    assert [op.name for op in m.function().block.ops] == ["arith.negf", "arith.addf"]


def test_float_identities_are_not_folded():
    # x + 0.0 is not x when x is -0.0
    m = parse_module("""func @f(%0: f64) {
  %1 = arith.constant() {value = 0.0} : () -> f64
  %2 = arith.addf(%0, %1) : (f64, f64) -> f64
}
""")
    assert fold_constants(m) == 0


def test_schedule_gives_order_independent_bodies():
    a, b = corpus.fig5(8), corpus.fig5(8)
    inline_all(a)
    inline_all(b, reverse=True)
    for m in (a, b):
        run_cse(m)
        run_dce(m)
        schedule_applies(m)
    assert print_module(a) == print_module(b)
    assert schedule_applies(a) == 0  # already canonical
