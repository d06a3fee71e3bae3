from __future__ import annotations

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from oec import corpus
from oec.textual import ParseError, parse_module, print_module, roundtrip_fixpoint, structurally_equal
from oec.types import BufferType, FieldType, Range, TempType
from oec.textual import parse_type_text
from oec.verifier import VerificationError


def _roundtrips(text: str) -> bool:
    once = print_module(parse_module(text))
    return once == text and structurally_equal(parse_module(text), parse_module(once))


@pytest.mark.parametrize("name", corpus.FIGURES + tuple(corpus.TABLE_II))
def test_corpus_programs_roundtrip(name):
    assert _roundtrips(print_module(corpus.program(name, 16)))


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(min_value=0, max_value=10_000))
def test_random_programs_roundtrip(seed):
    assert _roundtrips(print_module(corpus.random_program(seed, 8)))


@pytest.mark.parametrize("text", [
    "f64", "f32", "index", "i1",
    "!stencil.field<ijk,f64>", "!stencil.temp<ij,f32>", "!stencil.field<k,f64>",
    "!buffer<16x16x16xf64>",
    "!buffer<10x8x8xf64, offset=836, strides=[256,16,1]>",
])
def test_types_print_as_parsed(text):
    assert str(parse_type_text(text)) == text


def test_type_fields():
    assert parse_type_text("!stencil.field<ij,f32>") == FieldType("ij", parse_type_text("f32"))
    assert isinstance(parse_type_text("!stencil.temp<ijk,f64>"), TempType)
    b = parse_type_text("!buffer<10x8x8xf64, offset=836, strides=[256,16,1]>")
    assert isinstance(b, BufferType)
    assert b.shape == (10, 8, 8) and b.offset == 836 and b.strides == (256, 16, 1)


def test_comments_and_whitespace_are_ignored():
    text = """// header
func @f(%0: f64) {   // trailing
  %1 = arith.addf(%0,%0):(f64,f64)->f64
}"""
    m = parse_module(text)
    assert print_module(m) == "func @f(%0: f64) {\n  %1 = arith.addf(%0, %0) : (f64, f64) -> f64\n}\n"


def test_value_names_are_renumbered_densely():
    text = """func @f(%a: f64) {
  %x = arith.negf(%a) : (f64) -> f64
}"""
    assert "%1 = arith.negf(%0)" in print_module(parse_module(text))


def test_range_attribute_roundtrip():
    m = corpus.fig3(16)
    store = next(op for op in m.walk() if op.name == "stencil.store")
    assert store.attributes["range"] == Range((0, 0, 0), (16, 16, 16))
    assert "{range = [0,0,0]:[16,16,16]}" in print_module(m)


def test_float_constants_roundtrip_exactly():
    text = """func @f() {
  %0 = arith.constant() {value = 0.1} : () -> f64
  %1 = arith.constant() {value = -2.5e-300} : () -> f64
  %2 = arith.constant() {value = inf} : () -> f64
}
"""
    m = parse_module(text)
    values = [op.attributes["value"] for op in m.walk()]
    assert values == [0.1, -2.5e-300, float("inf")]
    ok, once = roundtrip_fixpoint(text)
    assert ok and parse_module(once).function().block.ops[0].attributes["value"] == 0.1


@pytest.mark.parametrize("text, line, column, fragment", [
    ("func @f(%0: f64) {\n  %1 = arith.addf(%0, %9) : (f64, f64) -> f64\n}", 2, 23, "undefined value %9"),
    ("func @f(%0: f64) {\n  %1 = arith.addf(%0, %0) : (f64, f64) -> f64 $\n}", 2, 47, "unexpected character"),
    ("func @f(%0: f64) {\n  %1 = arith.frob(%0) : (f64) -> f64\n}", 2, 8, "unknown operation"),
    ("func @f(%0: f64) {\n  %0 = arith.negf(%0) : (f64) -> f64\n}", 2, 3, "redefinition of %0"),
    ("func @f(%0: f64) {\n  %1 = arith.negf(%0) : (f64) -> f64\n", 3, 1, "expected"),
])
def test_parse_errors_carry_line_and_column(text, line, column, fragment):
    with pytest.raises(ParseError) as info:
        parse_module(text)
    err = info.value
    assert (err.line, err.column) == (line, column)
    assert fragment in err.message
    assert str(err).startswith(f"{line}:{column}:")


def test_invalid_module_is_reported_with_source_location():
    text = "func @f(%0: f64, %1: f32) {\n  %2 = arith.addf(%0, %1) : (f64, f32) -> f64\n}"
    with pytest.raises(VerificationError) as info:
        parse_module(text)
    assert "2:3" in str(info.value)
    # verification can be deferred
    assert parse_module(text, verify=False).function().name == "f"


def test_structural_equality_ignores_value_numbering_but_not_attributes():
    a = parse_module("func @f(%a: f64) {\n  %b = arith.negf(%a) : (f64) -> f64\n}")
    b = parse_module("func @f(%0: f64) {\n  %7 = arith.negf(%0) : (f64) -> f64\n}")
    assert structurally_equal(a, b)
    c = corpus.fig3(16)
    d = corpus.fig3(16)
    next(op for op in d.walk() if op.name == "stencil.access").attributes["offset"] = (-2, 0, 0)
    assert not structurally_equal(c, d)
