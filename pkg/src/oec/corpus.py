"""Benchmark corpus: the figure listings, census-matched benchmark kernels,
and seeded random stencil DAGs.

Every generated program follows the same layout.  Applies form a chain in
which apply ``k`` reads apply ``k - 1`` (and sometimes ``k - 2``); the last
``outputs`` applies are stored, all over one common store range.  All
access offsets of a program lie along a single axis.  Input fields are read
over contiguous intervals; another apply's result is read at one (possibly
nonzero) offset, so inlining shifts footprints instead of widening them.
Input fields are asserted to exactly the range shape inference demands.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .builder import Builder
from .ir import Function, Module, clone_module
from .interpreter import signature
from .tensor_io import DTYPES, TensorData
from .transforms import inline_all, infer_shapes
from .types import DIM_NAMES, FieldType, Range, ScalarType, TempType, f64, i1
from .verifier import verify

MAX_WIDTH = 5  # widest contiguous offset interval per input operand
EDGE_WIDTH = 1  # accesses into another apply's result (at a shifted offset)


@dataclass(frozen=True)
class Census:
    dims: str
    applies: int
    inputs: int
    outputs: int
    arith: int
    access: int
    control_flow: bool


TABLE_II: Dict[str, Census] = {
    "p_grad_c": Census("ijk", 3, 7, 2, 24, 25, False),
    "nh_p_grad": Census("ijk", 5, 8, 2, 47, 48, False),
    "uvbke": Census("ij", 2, 4, 2, 12, 12, False),
    "fvtp2d_qi": Census("ij", 5, 5, 2, 27, 23, True),
    "fvtp2d_qj": Census("ij", 8, 6, 3, 49, 39, True),
    "fvtp2d_flux": Census("ij", 5, 7, 2, 28, 22, True),
}

# conditionals placed in each control-flow kernel
_IFS = {"fvtp2d_qi": 2, "fvtp2d_qj": 3, "fvtp2d_flux": 2}

FIGURES = ("fig3", "fig5", "fig6")
ALIASES = {"two_stage": "fig5", "ifelse": "fig6"}


def census(module: Module, function: Optional[str] = None) -> Census:
    """Shape statistics of a stencil-level program."""
    func = module.function(function)
    ops = list(func.walk())
    stored = {op.operands[1] for op in ops if op.name == "stencil.store"}
    fields = [a for a in func.args if isinstance(a.type, FieldType)]
    return Census(
        dims=fields[0].type.dims if fields else "",
        applies=sum(op.name == "stencil.apply" for op in ops),
        inputs=sum(a not in stored for a in fields),
        outputs=len(stored),
        arith=sum(op.name.startswith("arith.") for op in ops),
        access=sum(op.name == "stencil.access" for op in ops),
        control_flow=any(op.name == "loop.if" for op in ops),
    )


# -- figure listings ------------------------------------------------------------

def _store_range(dims: str, size: int, lb: int = 0) -> Range:
    return Range(tuple(lb if d in dims else 0 for d in DIM_NAMES),
                 tuple(lb + size if d in dims else 1 for d in DIM_NAMES))


def _new_function(name: str, field_names: Sequence[str], dims: str, element, scalars=()) -> Function:
    ftype = FieldType(dims, element)
    types = [ftype] * len(field_names) + [t for _, t in scalars]
    names = list(field_names) + [n for n, _ in scalars]
    return Function(name, types, [], {"arg_names": names})


def fig3(size: int = 64) -> Module:
    """Sum of the left and right neighbour of ``in``."""
    func = _new_function("fig3", ["in", "out"], "ijk", f64)
    b = Builder(func.block)
    src, dst = func.args
    halo = Range((-4, -4, -4), (size + 4,) * 3)
    b.create("stencil.assert", [src], [], {"range": halo})
    b.create("stencil.assert", [dst], [], {"range": halo})
    t = b.load(src)
    temp = TempType("ijk", f64)

    def body(ib: Builder, args):
        return [ib.arith("addf", ib.access(args[0], (-1, 0, 0)), ib.access(args[0], (1, 0, 0)))]

    r = b.apply([t], [temp], body).result
    b.store(r, dst, _store_range("ijk", size))
    m = Module()
    m.append(func)
    return m


def fig5(size: int = 64) -> Module:
    """Two dependent stencils: ``p = in[0] + in[1]`` then ``out = p[0] + p[1]``."""
    func = _new_function("fig5", ["in", "out"], "ijk", f64)
    b = Builder(func.block)
    src, dst = func.args
    b.create("stencil.assert", [src], [], {"range": Range((0, 0, 0), (size + 2, size, size))})
    b.create("stencil.assert", [dst], [], {"range": _store_range("ijk", size)})
    t = b.load(src)
    temp = TempType("ijk", f64)

    def pair(ib: Builder, args):
        return [ib.arith("addf", ib.access(args[0], (0, 0, 0)), ib.access(args[0], (1, 0, 0)))]

    p = b.apply([t], [temp], pair).result
    r = b.apply([p], [temp], pair).result
    b.store(r, dst, _store_range("ijk", size))
    m = Module()
    m.append(func)
    return m


def fig6(size: int = 64) -> Module:
    """Selects ``in1`` or ``in2`` pointwise depending on the scalar ``flag``."""
    func = _new_function("fig6", ["in1", "in2", "out"], "ijk", f64, scalars=[("flag", i1)])
    b = Builder(func.block)
    in1, in2, dst, flag = func.args
    rng = _store_range("ijk", size)
    for f in (in1, in2, dst):
        b.create("stencil.assert", [f], [], {"range": rng})
    t1, t2 = b.load(in1), b.load(in2)
    temp = TempType("ijk", f64)

    def body(ib: Builder, args):
        c, a1, a2 = args
        sel = ib.if_(c, [f64],
                     lambda tb: [tb.access(a1, (0, 0, 0))],
                     lambda eb: [eb.access(a2, (0, 0, 0))])
        return [sel.result]

    r = b.apply([flag, t1, t2], [temp], body).result
    b.store(r, dst, rng)
    m = Module()
    m.append(func)
    return m


# -- generated DAG programs ----------------------------------------------------

@dataclass
class _ApplyPlan:
    operands: List[tuple]        # ("in", k) or ("apply", k)
    widths: List[int]            # offsets per operand
    ifs: int = 0
    padding: int = 0


def _plan(c: Census, ifs: int, rng: np.random.Generator, shared_inputs: float = 0.0) -> List[_ApplyPlan]:
    n = c.applies
    plans = [_ApplyPlan([], []) for _ in range(n)]
    for k in range(c.inputs):
        plans[k % n].operands.append(("in", k))
    for k in range(1, n):
        plans[k].operands.append(("apply", k - 1))
        if k >= 2 and rng.random() < 0.5:
            plans[k].operands.append(("apply", k - 2))
    if shared_inputs and c.inputs:
        for k in range(n):
            if rng.random() < shared_inputs:
                src = ("in", int(rng.integers(c.inputs)))
                if src not in plans[k].operands:
                    plans[k].operands.append(src)
    for p in plans:
        rng.shuffle(p.operands)
        p.widths = [1] * len(p.operands)

    slots = [(a, o) for a, p in enumerate(plans) for o in range(len(p.operands))]
    extra = c.access - len(slots)
    # drop second-back edges until the access budget fits
    while extra < 0:
        for p in reversed(plans):
            back = [o for o in p.operands if o[0] == "apply"]
            if len(back) > 1:
                p.operands.remove(min(back, key=lambda o: o[1]))
                p.widths.pop()
                extra += 1
                break
        else:
            raise ValueError(f"{c.access} accesses cannot cover {len(slots)} operands")
    # Wide intervals go to input fields only: every access of an apply
    # result becomes a clone of the producer once inlined, and each extra
    # offset would widen the fused footprint of every upstream input.
    def cap(a, o):
        return MAX_WIDTH if plans[a].operands[o][0] == "in" else EDGE_WIDTH

    slots = [(a, o) for a, p in enumerate(plans) for o in range(len(p.operands))]
    while extra > sum(cap(a, o) - 1 for a, o in slots):
        k = int(rng.integers(n))
        if c.inputs == 0:
            raise ValueError("access count exceeds the widest offset intervals")
        src = ("in", int(rng.integers(c.inputs)))
        if src not in plans[k].operands:
            plans[k].operands.append(src)
            plans[k].widths.append(1)
            slots.append((k, len(plans[k].operands) - 1))
            extra -= 1
    weights = np.array([4.0 if plans[a].operands[o][0] == "in" else 1.0 for a, o in slots])
    while extra:
        a, o = slots[int(rng.choice(len(slots), p=weights / weights.sum()))]
        if plans[a].widths[o] < cap(a, o):
            plans[a].widths[o] += 1
            extra -= 1

    # conditionals need two values to combine
    remaining = ifs
    while remaining:
        candidates = [p for p in plans if sum(p.widths) - 1 > p.ifs]
        if not candidates:
            raise ValueError("not enough accesses to place the conditionals")
        candidates[int(rng.integers(len(candidates)))].ifs += 1
        remaining -= 1
    padding = c.arith - sum(sum(p.widths) - 1 + 2 * p.ifs for p in plans)
    if padding < 0:
        raise ValueError(f"{c.arith} arithmetic ops are too few for {c.access} accesses")
    for _ in range(padding):
        plans[int(rng.integers(n))].padding += 1
    return plans


_COMBINE = ("addf", "subf", "addf", "maxf", "minf")


def _body(plan: _ApplyPlan, axis: int, rng: np.random.Generator, element: ScalarType):
    starts = [int(rng.integers(-(w - 1), 1)) if src[0] == "in" else int(rng.integers(-1, 2))
              for src, w in zip(plan.operands, plan.widths)]
    picks = [str(rng.choice(_COMBINE)) for _ in range(sum(plan.widths))]
    order = rng.permutation(sum(plan.widths) * 2)
    scale = float(rng.choice([0.5, 0.25, 2.0, 1.5]))

    def body(b: Builder, args):
        vals = []
        for arg, w, s in zip(args, plan.widths, starts):
            for d in range(s, s + w):
                off = [0, 0, 0]
                off[axis] = d
                vals.append(b.access(arg, off))
        vals = [vals[i] for i in order if i < len(vals)]
        ifs, pad, step = plan.ifs, plan.padding, 0
        while pad:
            if pad >= 2:
                c = b.constant(scale, element)
                vals[0] = b.arith("mulf", vals[0], c)
                pad -= 2
            else:
                vals[0] = b.arith("negf", vals[0])
                pad -= 1
        while len(vals) > 1:
            x, y = vals.pop(0), vals.pop(0)
            if ifs:
                cond = b.arith("cmpf", x, y, predicate="olt")
                r = b.if_(cond, [element],
                          lambda tb: [tb.arith("subf", y, x)],
                          lambda eb: [eb.arith("subf", x, y)]).result
                ifs -= 1
            else:
                r = b.arith(picks[step], x, y)
            step += 1
            vals.append(r)
        return vals

    return body


def _name_seed(name: str) -> int:
    return zlib.crc32(name.encode())


def build_program(name: str, c: Census, seed: int, size: int = 64, ifs: int = 0,
                  element: ScalarType = f64, axis: Optional[int] = None, store_lb: int = 0,
                  shared_inputs: float = 0.0) -> Module:
    """Generate a program with exactly the shape statistics ``c``."""
    rng = np.random.default_rng(seed)
    dims = c.dims
    plans = _plan(c, ifs, rng, shared_inputs)
    if axis is None:
        axis = DIM_NAMES.index(str(rng.choice(list(dims))))
    names = [f"in{k}" for k in range(c.inputs)] + [f"out{k}" for k in range(c.outputs)]
    func = _new_function(name, names, dims, element)
    b = Builder(func.block)
    srange = _store_range(dims, size, store_lb)
    asserts = [b.create("stencil.assert", [f], [], {"range": srange}) for f in func.args]
    loads = [b.load(func.args[k]) for k in range(c.inputs)]
    temp = TempType(dims, element)
    results = []
    for plan in plans:
        operands = [loads[k] if kind == "in" else results[k] for kind, k in plan.operands]
        results.append(b.apply(operands, [temp], _body(plan, axis, rng, element)).result)
    for k in range(c.outputs):
        b.store(results[len(results) - c.outputs + k], func.args[c.inputs + k], srange)
    m = Module()
    m.append(func)
    _fit_asserts(m, asserts[:c.inputs])
    return m


def _fit_asserts(module: Module, asserts) -> None:
    """Set each input's asserted range to the union of its inferred load
    ranges before and after full inlining (a fused apply computes all of its
    results over one domain, which can demand more than the separate ones)."""
    inferred: Dict[int, Range] = {}
    for fuse in (False, True):
        probe = clone_module(module)
        if fuse:
            inline_all(probe)
        # the placeholder asserts are too small by design; only other problems matter
        diags = [d for d in infer_shapes(probe) if "exceeds its asserted range" not in str(d)]
        if diags:
            raise ValueError("; ".join(str(d) for d in diags))
        for op in probe.functions[0].block.ops:
            if op.name == "stencil.load":
                k, r = op.operands[0].index, op.attributes["range"]
                inferred[k] = r if k not in inferred else inferred[k].union(r)
    for a in asserts:
        a.attributes["range"] = inferred[a.operands[0].index]


def table_program(name: str, size: int = 64) -> Module:
    c = TABLE_II[name]
    return build_program(name, c, _name_seed(name), size, ifs=_IFS.get(name, 0))


def random_program(seed: int, size: int = 64) -> Module:
    """A random acyclic stencil program; the same seed gives the same program."""
    rng = np.random.default_rng([seed, 0x5EED])
    dims = str(rng.choice(["ijk", "ij", "ij", "i", "ik"]))
    applies = int(rng.integers(1, 6))
    inputs = int(rng.integers(1, 5))
    outputs = int(rng.integers(1, min(applies, 3) + 1))
    ifs = int(rng.integers(0, 3)) if rng.random() < 0.4 else 0
    # enough accesses for every operand plus some spread
    operands = inputs + 2 * max(applies - 1, 0)
    access = operands + int(rng.integers(0, 2 * applies + 1))
    arith = access - applies + 2 * ifs + int(rng.integers(0, 4))
    c = Census(dims, applies, inputs, outputs, arith, access, ifs > 0)
    element = ScalarType(str(rng.choice(["f32", "f64"])))
    store_lb = int(rng.integers(-2, 3))
    for attempt in range(8):
        try:
            return build_program(f"random{seed}", c, seed * 31 + attempt, size, ifs=ifs, element=element,
                                 store_lb=store_lb, shared_inputs=0.3)
        except ValueError:
            c = Census(dims, applies, inputs, outputs, c.arith + 2, c.access + 1, c.control_flow)
    raise ValueError(f"could not build random program {seed}")


def program(name: str, size: int = 64, seed: Optional[int] = None) -> Module:
    """Look up a corpus program by name (``random`` needs ``seed``)."""
    name = ALIASES.get(name, name)
    if name == "fig3":
        return fig3(size)
    if name == "fig5":
        return fig5(size)
    if name == "fig6":
        return fig6(size)
    if name in TABLE_II:
        return table_program(name, size)
    if name == "random":
        if seed is None:
            raise ValueError("random programs need a seed")
        return random_program(seed, size)
    raise ValueError(f"unknown corpus program {name!r}; known: {', '.join(corpus_names())}, random")


def corpus_names() -> List[str]:
    return list(FIGURES) + list(TABLE_II)


def corpus(size: int = 64, random_count: int = 100) -> Dict[str, Module]:
    """All named programs followed by ``random_count`` seeded random ones."""
    out = {n: program(n, size) for n in corpus_names()}
    for s in range(random_count):
        out[f"random{s}"] = random_program(s, size)
    for name, m in out.items():
        diags = verify(m)
        if diags:
            raise AssertionError(f"corpus program {name} does not verify: {diags[0]}")
    return out


def random_inputs(module: Module, seed: int, function: Optional[str] = None) -> List[TensorData]:
    """Random input tensors matching the program's parameters."""
    rng = np.random.default_rng(seed)
    func = module.function(function)
    tensors = []
    for p in signature(func):
        if p.role != "in":
            continue
        if p.kind == "i1":
            values = np.asarray(rng.random() < 0.5)
        elif p.kind == "index":
            values = np.asarray(rng.integers(-8, 9))
        else:
            values = rng.standard_normal(p.shape).astype(DTYPES[p.kind])
        tensors.append(TensorData(p.name, p.dims, p.kind, values))
    return tensors
