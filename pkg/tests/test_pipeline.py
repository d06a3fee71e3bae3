from __future__ import annotations

import pytest

from oec import corpus
from oec.interpreter import level_of
from oec.verifier import VerificationError
from oec.pipeline import (PassContext, PassError, PassPipeline, PassSpec, completion_passes, default_passes,
                          parse_block, parse_pass)


def _names(specs):
    return [s.name for s in specs]


def test_parse_pass_and_block():
    spec = parse_pass("unroll:factor=4,dim=i")
    assert spec == PassSpec("unroll", {"factor": "4", "dim": "i"})
    assert str(spec) == "unroll:factor=4,dim=i"
    assert parse_pass(" cse ") == PassSpec("cse")
    with pytest.raises(ValueError, match="unknown pass"):
        parse_pass("fuse")
    with pytest.raises(ValueError, match="malformed option"):
        parse_pass("unroll:4")
    assert parse_block("8,4") == (8, 4, 1)
    assert parse_block("8x4x2") == (8, 4, 2)
    assert parse_block(None) is None
    with pytest.raises(ValueError):
        parse_block("1,2,3,4")


def test_default_pipeline_shape():
    assert _names(default_passes("stencil")) == ["inline", "cse", "dce", "schedule"]
    unrolled = default_passes("stencil", PassSpec("unroll", {"factor": "2"}))
    assert _names(unrolled)[4:] == ["unroll", "cse", "schedule"]
    full = _names(default_passes("kernel-src"))
    assert full.index("lower-loops") < full.index("gpu-map") < full.index("gpu-outline")
    assert default_passes("gpu") == default_passes("kernel-src")
    with pytest.raises(ValueError):
        default_passes("ptx")


def test_completion_passes_start_from_the_current_level():
    m = corpus.fig3(8)
    assert completion_passes(m, "stencil") == []
    assert _names(completion_passes(m, "loops"))[-4:] == ["lower-loops", "fold", "cse", "dce"]
    loops = PassPipeline(default_passes("loops")).run(m)
    assert _names(completion_passes(loops, "gpu")) == ["gpu-map", "fold", "cse", "dce", "gpu-outline", "cse", "dce"]
    assert completion_passes(loops, "loops") == []
    # an explicit lowering prefix counts as progress
    assert _names(completion_passes(corpus.fig3(8), "loops", [PassSpec("lower-loops")])) == []


@pytest.mark.parametrize("emit, level", [("stencil", "stencil"), ("loops", "loops"), ("gpu", "gpu")])
def test_pipeline_reaches_each_level(emit, level):
    assert level_of(PassPipeline(default_passes(emit)).run(corpus.fig5(8))) == level


def test_pipeline_observer_and_log():
    seen = []
    ctx = PassContext()
    PassPipeline(default_passes("loops"), ctx).run(corpus.fig5(8), lambda spec, mod: seen.append(spec.name))
    assert seen == _names(default_passes("loops"))
    assert ctx.log[0].startswith("inline: 1 edits")


def test_pass_diagnostics_raise_pass_error():
    with pytest.raises(PassError, match="unroll"):
        PassPipeline([parse_pass("unroll:factor=0")]).run(corpus.fig3(8))
    # lowering passes raise their own VerificationError subclasses
    with pytest.raises(VerificationError, match="does not divide"):
        PassPipeline(default_passes("gpu"), PassContext(block=(3, 1, 1))).run(corpus.fig3(8))


def test_inline_budget_exhaustion_is_a_pass_error(monkeypatch):
    monkeypatch.setenv("OEC_MAX_REWRITES", "1")
    with pytest.raises(PassError, match="did not converge"):
        PassPipeline([PassSpec("inline")]).run(corpus.program("fvtp2d_qj", 8))
