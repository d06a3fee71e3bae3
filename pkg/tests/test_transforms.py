from __future__ import annotations

from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from oec import corpus
from oec.interpreter import run
from oec.ir import clone_module, count_ops
from oec.rewrite import run_cse, run_dce
from oec.tensor_io import TensorData
from oec.textual import parse_module, print_module
from oec.transforms import infer_shapes, inline_all, shift_shapes, unroll_all, unroll_stencil
from oec.transforms.inlining import InlinePattern, ReroutePattern
from oec.transforms.unrolling import UnrollError
from oec.types import Range

DATA = Path(__file__).parent / "data"


def _applies(m):
    return [op for op in m.walk() if op.name == "stencil.apply"]


def _offsets(op):
    return [tuple(a.attributes["offset"]) for a in op.walk() if a.name == "stencil.access"]


def _same_outputs(a, b, inputs):
    return all(np.array_equal(x.values, y.values) for x, y in zip(run(a, inputs), run(b, inputs)))


# -- inlining -------------------------------------------------------------------

def test_two_stage_program_fuses_into_one_apply(fig5):
    fused = clone_module(fig5)
    report = inline_all(fused)
    assert report.converged and report.applied == Counter({"inline": 1})
    (apply,) = _applies(fused)
    # the producer body (acc 0 + acc 1) is cloned at the consumer's offsets 0 and 1
    assert sorted(_offsets(apply)) == [(0, 0, 0), (1, 0, 0), (1, 0, 0), (2, 0, 0)]
    assert count_ops(apply, "arith.addf") == 3
    inputs = corpus.random_inputs(fig5, 0)
    assert _same_outputs(fig5, fused, inputs)


def test_single_use_chain_census():
    """A -> B -> C, each reading its producer at one offset: all bodies are cloned once."""
    text = (DATA / "diamond.oec").read_text()
    m = parse_module(text)
    arith_before = sum(count_ops(a, n) for a in _applies(m) for n in ("arith.mulf", "arith.negf", "arith.addf",
                                                                       "arith.subf"))
    inline_all(m)
    (apply,) = _applies(m)
    arith_after = sum(count_ops(apply, n) for n in ("arith.mulf", "arith.negf", "arith.addf", "arith.subf"))
    # A is consumed twice (through B and C), so its mulf appears twice
    assert arith_after == arith_before + 1


def test_diamond_fuses_without_reroute():
    m = parse_module((DATA / "diamond.oec").read_text())
    original = clone_module(m)
    report = inline_all(m)
    assert report.converged and report.applied == Counter({"inline": 3})
    assert len(_applies(m)) == 1
    x = np.linspace(-2, 3, 14)
    assert _same_outputs(original, m, [TensorData("in", "i", "f64", x)])


def test_reroute_funnels_stored_producer_through_consumer():
    m = parse_module((DATA / "reroute.oec").read_text())
    original = clone_module(m)
    report = inline_all(m)
    run_cse(m)
    run_dce(m)
    assert report.applied == Counter({"reroute": 1, "inline": 1})
    (apply,) = _applies(m)
    assert len(apply.results) == 2
    # both stores now read the fused apply
    stores = [op for op in m.walk() if op.name == "stencil.store"]
    assert {s.operands[0].defining_op for s in stores} == {apply}
    x = np.arange(12.0) ** 2
    assert _same_outputs(original, m, [TensorData("in", "i", "f64", x)])


def test_inline_pattern_requires_a_single_consumer():
    m = parse_module((DATA / "reroute.oec").read_text())
    producer = _applies(m)[0]
    # consumed by an apply and a store: inline must wait for reroute
    assert InlinePattern().match(producer) is None
    assert ReroutePattern().match(producer) is not None
    m = parse_module((DATA / "diamond.oec").read_text())
    a, b, c, d = _applies(m)
    assert InlinePattern().match(a) is None  # two apply consumers
    assert InlinePattern().match(b).consumer is d
    assert InlinePattern().match(d) is None  # stored only


def test_inlining_preserves_semantics_on_table_kernels():
    for name in corpus.TABLE_II:
        m = corpus.program(name, 12)
        fused = clone_module(m)
        assert inline_all(fused).converged
        run_cse(fused)
        run_dce(fused)
        assert len(_applies(fused)) == 1
        assert _same_outputs(m, fused, corpus.random_inputs(m, 3))


def test_unrolled_applies_are_not_inlined(fig5):
    m = clone_module(fig5)
    unroll_all(m, 2, "i")
    report = inline_all(m)
    assert report.edits == 0 and len(_applies(m)) == 2


# -- unrolling ------------------------------------------------------------------

def test_fig3_unroll_by_two_along_j(fig3, golden):
    unroll_all(fig3, 2, "j")
    (apply,) = _applies(fig3)
    assert apply.attributes["unroll_factor"] == 2 and apply.attributes["unroll_dim"] == "j"
    assert len(apply.regions[0].blocks[0].terminator.operands) == 2
    assert _offsets(apply) == [(-1, 0, 0), (1, 0, 0), (-1, 1, 0), (1, 1, 0)]
    assert apply.results[0].type == corpus.fig3(16).function().block.ops[3].results[0].type


def test_unroll_by_one_is_identity(fig3):
    before = print_module(fig3)
    unroll_all(fig3, 1, "j")
    assert print_module(fig3) == before


@pytest.mark.parametrize("factor, dim", [(0, "j"), (-2, "i"), (2, "x")])
def test_bad_unroll_arguments(fig3, factor, dim):
    with pytest.raises(UnrollError):
        unroll_stencil(_applies(fig3)[0], factor, dim)


def test_unroll_twice_is_rejected(fig3):
    unroll_all(fig3, 2, "j")
    with pytest.raises(UnrollError):
        unroll_stencil(_applies(fig3)[0], 2, "k")


def test_unrolled_program_computes_the_same_values(fig3):
    inputs = corpus.random_inputs(fig3, 1)
    for factor, dim in [(2, "j"), (4, "k"), (8, "i")]:
        m = clone_module(fig3)
        unroll_all(m, factor, dim)
        assert _same_outputs(fig3, m, inputs)


def test_cse_after_unroll_shares_overlapping_accesses(fig5):
    inline_all(fig5)
    run_cse(fig5)
    unroll_all(fig5, 2, "i")
    before = count_ops(fig5)
    removed = run_cse(fig5)
    assert removed > 0 and count_ops(fig5) == before - removed


# -- shape inference and shifting ------------------------------------------------

def test_fig3_inferred_ranges():
    m = corpus.fig3(64)
    assert infer_shapes(m) == []
    load = next(op for op in m.walk() if op.name == "stencil.load")
    (apply,) = _applies(m)
    assert load.attributes["range"] == Range((-1, 0, 0), (65, 64, 64))
    assert apply.attributes["range"] == Range((0, 0, 0), (64, 64, 64))


def test_inference_follows_chains(fig5):
    infer_shapes(fig5)
    load = next(op for op in fig5.walk() if op.name == "stencil.load")
    producer, consumer = _applies(fig5)
    assert consumer.attributes["range"] == Range((0, 0, 0), (16, 16, 16))
    assert producer.attributes["range"] == Range((0, 0, 0), (17, 16, 16))
    assert load.attributes["range"] == Range((0, 0, 0), (18, 16, 16))


def test_inference_with_unrolling_rounds_up_the_domain():
    m = corpus.fig3(16)
    unroll_all(m, 2, "j")
    infer_shapes(m)
    (apply,) = _applies(m)
    assert apply.attributes["range"] == Range((0, 0, 0), (16, 16, 16))
    load = next(op for op in m.walk() if op.name == "stencil.load")
    assert load.attributes["range"] == Range((-1, 0, 0), (17, 16, 16))


def test_inference_reports_reads_outside_the_assert():
    text = print_module(corpus.fig3(16)).replace("[-4,-4,-4]:[20,20,20]", "[0,0,0]:[16,16,16]", 1)
    diags = infer_shapes(parse_module(text))
    assert any("exceeds its asserted range" in d.message for d in diags)


def test_inference_is_idempotent():
    for name in ("fig3", "fig5", "p_grad_c", "fvtp2d_qj"):
        m = corpus.program(name, 16)
        infer_shapes(m)
        once = print_module(m)
        infer_shapes(m)
        assert print_module(m) == once


def test_shift_makes_lower_bounds_zero():
    m = corpus.fig3(64)
    infer_shapes(m)
    shift_shapes(m)
    load = next(op for op in m.walk() if op.name == "stencil.load")
    store = next(op for op in m.walk() if op.name == "stencil.store")
    (apply,) = _applies(m)
    assert load.attributes["range"] == Range((0, 0, 0), (66, 64, 64))
    assert tuple(load.attributes["shift"]) == (3, 4, 4)
    assert apply.attributes["range"] == Range((0, 0, 0), (64, 64, 64))
    assert _offsets(apply) == [(0, 0, 0), (2, 0, 0)]
    assert store.attributes["range"] == Range((4, 4, 4), (68, 68, 68))
    once = print_module(m)
    shift_shapes(m)
    assert print_module(m) == once


def test_shift_in_two_dimensions():
    m = corpus.program("uvbke", 8)
    infer_shapes(m)
    shift_shapes(m)
    for op in m.walk():
        if "range" in op.attributes and op.name != "stencil.store":
            r = op.attributes["range"]
            assert r.lb == (0, 0, 0) and r.ub[2] == 1
        if op.name == "stencil.access":
            assert min(op.attributes["offset"]) >= 0 and op.attributes["offset"][2] == 0


def test_shifted_program_computes_the_same_values():
    for name in ("fig3", "fig5", "fig6", "uvbke", "fvtp2d_qi"):
        m = corpus.program(name, 12)
        s = clone_module(m)
        infer_shapes(s)
        shift_shapes(s)
        assert _same_outputs(m, s, corpus.random_inputs(m, 2))
