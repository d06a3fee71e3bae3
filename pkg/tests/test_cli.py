from __future__ import annotations

import json

import numpy as np
import pytest

from oec import corpus
from oec.cli import EXIT_DIAGNOSTICS, EXIT_INTERNAL, EXIT_OK, main
from oec.interpreter import run, signature
from oec.tensor_io import read_tensors, write_tensors
from oec.textual import parse_module, print_module


@pytest.fixture
def workdir(tmp_path):
    assert main(["gen-corpus", "fig3", "fig5", "fig6", "fvtp2d_qi", "--size", "64", "-o", str(tmp_path)]) == EXIT_OK
    return tmp_path


def test_gen_corpus_writes_census_matching_programs(tmp_path):
    assert main(["gen-corpus", "all", "--size", "16", "-o", str(tmp_path)]) == EXIT_OK
    names = sorted(p.stem for p in tmp_path.glob("*.oec"))
    assert names == sorted(corpus.corpus_names())
    for name, expected in corpus.TABLE_II.items():
        m = parse_module((tmp_path / f"{name}.oec").read_text())
        assert corpus.census(m) == expected


def test_gen_corpus_random_with_inputs(tmp_path):
    assert main(["gen-corpus", "random", "--seed", "12", "--size", "8", "-o", str(tmp_path), "--inputs"]) == 0
    m = parse_module((tmp_path / "random12.oec").read_text())
    tensors = read_tensors(tmp_path / "random12.inputs")
    assert [t.name for t in tensors] == [p.name for p in signature(m.function()) if p.role == "in"]


def test_compile_loops_golden(workdir, golden, capsys):
    assert main(["compile", str(workdir / "fig3.oec"), "--emit=loops"]) == EXIT_OK
    golden("fig3_loops.oec", capsys.readouterr().out)


def test_compile_gpu_golden(workdir, golden, capsys):
    assert main(["compile", str(workdir / "fig3.oec"), "--emit=gpu"]) == EXIT_OK
    golden("fig3_gpu.oec", capsys.readouterr().out)


def test_compile_unroll_golden(workdir, golden, capsys):
    assert main(["compile", str(workdir / "fig3.oec"), "--emit=stencil", "--no-optimize", "--unroll=2,j"]) == 0
    golden("fig3_unrolled.oec", capsys.readouterr().out)


def test_kernel_source_golden_and_manifest(workdir, golden, capsys, tmp_path):
    manifest = tmp_path / "kernels.json"
    argv = ["compile", str(workdir / "fvtp2d_qi.oec"), "--pass=inline", "--pass=unroll:factor=4,dim=i",
            "--emit=kernel-src", "--manifest", str(manifest)]
    assert main(argv) == EXIT_OK
    golden("fvtp2d_qi_kernel.c", capsys.readouterr().out)
    (entry,) = json.loads(manifest.read_text())
    assert entry["kernels"][0]["symbol"] == "fvtp2d_qi_kernel0::fvtp2d_qi_kernel0"


def test_stencil_emit_without_optimization_is_identity(workdir, capsys):
    text = (workdir / "fig5.oec").read_text()
    assert main(["compile", str(workdir / "fig5.oec"), "--emit=stencil", "--no-optimize"]) == EXIT_OK
    assert capsys.readouterr().out == text


def test_compiling_lowered_input_continues_from_its_level(workdir, tmp_path, capsys):
    loops = tmp_path / "loops.oec"
    assert main(["compile", str(workdir / "fig3.oec"), "--emit=loops", "-o", str(loops)]) == EXIT_OK
    assert main(["compile", str(loops), "--emit=gpu"]) == EXIT_OK
    assert capsys.readouterr().out == main_output(["compile", str(workdir / "fig3.oec"), "--emit=gpu"], capsys)


def main_output(argv, capsys):
    assert main(argv) == EXIT_OK
    return capsys.readouterr().out


def test_run_matches_interpreter(workdir, tmp_path, capsys):
    m = parse_module((workdir / "fig6.oec").read_text())
    inputs = corpus.random_inputs(m, 5)
    data = tmp_path / "in.txt"
    write_tensors(data, inputs, hex_floats=True)
    out = tmp_path / "out.txt"
    assert main(["run", str(workdir / "fig6.oec"), "--data", str(data), "-o", str(out), "--hex-floats"]) == 0
    (got,) = read_tensors(out)
    (expected,) = run(m, inputs)
    assert np.array_equal(got.values, expected.values)


def test_verify_passes_and_reports(workdir, capsys):
    assert main(["verify", str(workdir / "fig5.oec"), "--seeds", "2", "-v"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("fig5: PASS")
    assert "after lower-loops [loops]" in out and "relative error" in out


def test_verify_with_levels_and_unroll(workdir, capsys):
    argv = ["verify", str(workdir / "fig3.oec"), "--seeds", "1", "--levels", "loops,gpu", "--unroll", "2,j"]
    assert main(argv) == EXIT_OK
    assert main(["verify", str(workdir / "fig3.oec"), "--levels", "bogus"]) == EXIT_DIAGNOSTICS


@pytest.mark.parametrize("argv, message", [
    (["compile", "{dir}/fig3.oec", "--unroll=3,j", "--emit=loops"], "does not divide"),
    (["compile", "{dir}/fig3.oec", "--block=3,1,1", "--emit=gpu"], "does not divide"),
    (["compile", "{dir}/fig3.oec", "--pass=frobnicate"], "unknown pass"),
    (["compile", "{dir}/missing.oec"], "No such file"),
    (["compile", "{dir}/broken.oec"], "1:1"),
])
def test_diagnostics_exit_with_one(workdir, capsys, argv, message):
    (workdir / "broken.oec").write_text("fun @f() {}\n")
    assert main([a.format(dir=workdir) for a in argv]) == EXIT_DIAGNOSTICS
    assert message in capsys.readouterr().err


def test_internal_failures_exit_with_two(workdir, monkeypatch, capsys):
    import oec.cli

    def explode(*args, **kwargs):
        raise RuntimeError("invariant broken")

    monkeypatch.setattr(oec.cli, "print_module", explode)
    assert main(["compile", str(workdir / "fig3.oec"), "--emit=stencil"]) == EXIT_INTERNAL
    assert "internal error" in capsys.readouterr().err


def test_trace_logs_each_pass(workdir, capsys):
    assert main(["compile", str(workdir / "fig5.oec"), "--emit=loops", "--trace"]) == EXIT_OK
    err = capsys.readouterr().err
    assert "inline" in err and "lower-loops" in err


def test_reverse_worklist_gives_the_same_output(workdir, capsys):
    fwd = main_output(["compile", str(workdir / "fvtp2d_qi.oec"), "--emit=stencil"], capsys)
    rev = main_output(["compile", str(workdir / "fvtp2d_qi.oec"), "--emit=stencil", "--reverse"], capsys)
    assert fwd == rev
    assert print_module(parse_module(fwd)) == fwd
