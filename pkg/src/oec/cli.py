"""Command-line driver: ``oec compile | run | verify | gen-corpus``.

Exit codes: 0 on success, 1 when the input is rejected with diagnostics (or a
verification fails), 2 on an internal invariant failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import corpus
from .gpu_lowering import KernelEmitError, embed_kernel_sources
from .harness import ALL_LEVELS, verify_equivalence
from .interpreter import InterpreterError, level_of, run
from .ir import Module
from .pipeline import (LEVELS, PassContext, PassError, PassPipeline, PassSpec, completion_passes,
                       default_passes, parse_block, parse_pass)
from .reference import ReferenceError
from .tensor_io import dumps, read_tensors, write_tensors
from .textual import ParseError, parse_module, print_module
from .verifier import VerificationError

EXIT_OK, EXIT_DIAGNOSTICS, EXIT_INTERNAL = 0, 1, 2

# failures that describe a problem with the user's input rather than a bug
USER_ERRORS = (ParseError, VerificationError, KernelEmitError, InterpreterError, ReferenceError,
               ValueError, OSError)


class CliError(Exception):
    pass


def _read_module(path: str) -> Module:
    text = sys.stdin.read() if path == "-" else Path(path).read_text()
    return parse_module(text)


def _write(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _unroll_spec(text: Optional[str]) -> Optional[PassSpec]:
    """``--unroll=4`` or ``--unroll=4,j`` or ``--unroll=factor=4,dim=j``."""
    if not text:
        return None
    if "=" in text:
        return parse_pass(f"unroll:{text}")
    factor, _, dim = text.partition(",")
    opts = {"factor": factor}
    if dim:
        opts["dim"] = dim
    return PassSpec("unroll", opts)


def _context(args) -> PassContext:
    return PassContext(block=parse_block(args.block), direct_store=args.direct_store,
                       reverse=getattr(args, "reverse", False))


def build_pipeline(module: Module, args, emit: Optional[str] = None) -> PassPipeline:
    """Explicit ``--pass`` prefix (or the default optimizations), followed by
    whatever lowering stages the emit level still needs."""
    ctx = _context(args)
    emit = emit or args.emit
    unroll = _unroll_spec(args.unroll)
    if args.passes:
        prefix = [parse_pass(p) for p in args.passes] + ([unroll] if unroll else [])
        return PassPipeline(prefix + completion_passes(module, emit, prefix), ctx)
    if getattr(args, "no_optimize", False):
        return PassPipeline(([unroll] if unroll else []) + completion_passes(module, emit), ctx)
    if level_of(module) != "stencil":
        return PassPipeline(completion_passes(module, emit), ctx)
    return PassPipeline(default_passes(emit, unroll), ctx)


def cmd_compile(args) -> int:
    module = _read_module(args.input)
    pipeline = build_pipeline(module, args)
    log = []

    def observe(spec, mod):
        if args.trace:
            n = sum(1 for _ in mod.walk())
            log.append(f"[{time.perf_counter() - start:8.3f}s] {spec}: {n} ops")

    start = time.perf_counter()
    result = pipeline.run(module, observe)
    if args.trace:
        for line in log + pipeline.context.log:
            print(line, file=sys.stderr)
    if args.emit == "kernel-src":
        artifacts = embed_kernel_sources(result)
        for art in artifacts:
            for w in art.warnings:
                print(f"warning: {w}", file=sys.stderr)
        _write("".join(a.source for a in artifacts), args.output)
        if args.manifest:
            Path(args.manifest).write_text(json.dumps([a.manifest for a in artifacts], indent=2, sort_keys=True))
    else:
        _write(print_module(result), args.output)
    return EXIT_OK


def cmd_run(args) -> int:
    module = _read_module(args.input)
    inputs = [t for path in args.data for t in read_tensors(path)]
    outputs = run(module, inputs, args.function, mode=args.mode)
    _write(dumps(outputs, hex_floats=args.hex_floats), args.output)
    return EXIT_OK


def cmd_verify(args) -> int:
    module = _read_module(args.input)
    if args.data:
        input_sets = [read_tensors(p) for p in args.data]
    else:
        input_sets = [corpus.random_inputs(module, s, args.function) for s in range(args.seeds)]
    levels = set(args.levels.split(",")) if args.levels else set(ALL_LEVELS)
    unknown = levels - set(ALL_LEVELS)
    if unknown:
        raise CliError(f"unknown levels: {', '.join(sorted(unknown))}")
    pipeline = build_pipeline(module, args, emit="gpu")
    report = verify_equivalence(module, input_sets, levels, pipeline.passes, pipeline.context, args.function,
                                name=Path(args.input).stem)
    print(report.summary())
    if args.verbose:
        for s in report.stages:
            print(f"  {'ok  ' if s.passed else 'FAIL'} seed {s.seed} after {s.stage} [{s.level}]")
        for t in report.tolerance:
            print(f"  {'ok  ' if t.passed else 'FAIL'} seed {t.seed} {t.tensor} ({t.kind}): "
                  f"relative error {t.error:.3e} <= {t.threshold:g}")
    return EXIT_OK if report.passed else EXIT_DIAGNOSTICS


def cmd_gen_corpus(args) -> int:
    names = []
    for name in args.names:
        for n in corpus.corpus_names() if name == "all" else [name]:
            if n not in names:
                names.append(n)
    if args.output_dir:
        out_dir = Path(args.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    for name in names:
        module = corpus.program(name, args.size, args.seed)
        label = f"random{args.seed}" if name == "random" else name
        text = print_module(module)
        if args.output_dir:
            (out_dir / f"{label}.oec").write_text(text)
            if args.inputs:
                write_tensors(out_dir / f"{label}.inputs", corpus.random_inputs(module, args.seed or 0),
                              hex_floats=True)
        else:
            sys.stdout.write(text)
    return EXIT_OK


def _add_pass_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pass", dest="passes", action="append", default=[], metavar="NAME[:K=V,...]",
                   help="run this pass (repeatable); replaces the default optimizations")
    p.add_argument("--unroll", metavar="FACTOR[,DIM]", help="unroll every apply (e.g. 4,j)")
    p.add_argument("--block", metavar="X,Y,Z", help="GPU block size")
    p.add_argument("--direct-store", dest="direct_store", action="store_true", default=True,
                   help="write stored results straight into outputs (default)")
    p.add_argument("--no-direct-store", dest="direct_store", action="store_false",
                   help="compute into temporaries and copy into outputs")
    p.add_argument("--reverse", action="store_true", help="scan rewrite worklists in reverse order")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oec", description="Stencil IR compiler and verifier")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="optimize and lower a program")
    p.add_argument("input", help=".oec file ('-' for stdin)")
    p.add_argument("--emit", choices=LEVELS, default="kernel-src")
    p.add_argument("-o", "--output")
    p.add_argument("--manifest", help="write the kernel manifest JSON here (kernel-src only)")
    p.add_argument("--trace", action="store_true", help="log every pass to stderr")
    p.add_argument("--no-optimize", action="store_true", help="run only the lowering stages")
    _add_pass_options(p)
    p.set_defaults(handler=cmd_compile)

    p = sub.add_parser("run", help="interpret a program at its current level")
    p.add_argument("input")
    p.add_argument("--data", action="append", default=[], help="input tensor file (repeatable)")
    p.add_argument("--function")
    p.add_argument("--mode", choices=("vector", "scalar"), default="vector")
    p.add_argument("-o", "--output")
    p.add_argument("--hex-floats", action="store_true", help="write floats as exact hex literals")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("verify", help="check every pass against the interpreter and reference")
    p.add_argument("input")
    p.add_argument("--data", action="append", default=[], help="input tensor file, one per input set")
    p.add_argument("--seeds", type=int, default=5, help="random input sets when no --data is given")
    p.add_argument("--levels", help="comma-separated subset of stencil,loops,gpu")
    p.add_argument("--function")
    p.add_argument("-v", "--verbose", action="store_true")
    _add_pass_options(p)
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("gen-corpus", help="write corpus programs")
    p.add_argument("names", nargs="+", help="program names, 'random' or 'all'")
    p.add_argument("--seed", type=int, help="seed for 'random'")
    p.add_argument("--size", type=int, default=64, help="domain extent per dimension")
    p.add_argument("-o", "--output-dir")
    p.add_argument("--inputs", action="store_true", help="also write random input tensors")
    p.set_defaults(handler=cmd_gen_corpus)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (PassError, CliError) + USER_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    except Exception as e:  # noqa: BLE001 - the exit code is the contract
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
