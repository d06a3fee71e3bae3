"""Scalar arithmetic (``arith.*``) and function-level (``func.*``) operations."""

from __future__ import annotations

from ..registry import OPS, WRITE, define
from ..types import ScalarType, i1, index

FLOAT_BINARY = ("addf", "subf", "mulf", "divf", "minf", "maxf")
FLOAT_UNARY = ("negf", "absf", "sqrtf")
INT_BINARY = ("addi", "subi", "muli", "divi", "remi", "mini", "maxi")
BOOL_BINARY = ("andi", "ori", "xori")
CMPF_PREDICATES = ("oeq", "one", "olt", "ole", "ogt", "oge")
CMPI_PREDICATES = ("eq", "ne", "slt", "sle", "sgt", "sge")


def _shape(op, n_operands, n_results):
    errs = []
    if len(op.operands) != n_operands:
        errs.append(f"expects {n_operands} operands, got {len(op.operands)}")
    if len(op.results) != n_results:
        errs.append(f"expects {n_results} results, got {len(op.results)}")
    return errs


def _verify_constant(op):
    errs = _shape(op, 0, 1)
    if errs:
        return errs
    t = op.result.type
    v = op.attributes.get("value")
    if not isinstance(t, ScalarType):
        return ["constant must produce a scalar"]
    if t.is_float and not isinstance(v, float):
        errs.append("float constant needs a float 'value'")
    if t == index and (not isinstance(v, int) or isinstance(v, bool)):
        errs.append("index constant needs an integer 'value'")
    if t == i1 and v not in (0, 1):
        errs.append("i1 constant needs value 0 or 1")
    return errs


def _verify_float_binary(op):
    errs = _shape(op, 2, 1)
    if errs:
        return errs
    a, b = op.operands
    t = op.result.type
    if not (isinstance(t, ScalarType) and t.is_float):
        return ["result must be f32 or f64"]
    if a.type != t or b.type != t:
        errs.append(f"operand types ({a.type}, {b.type}) do not match result {t}")
    return errs


def _verify_float_unary(op):
    errs = _shape(op, 1, 1)
    if errs:
        return errs
    t = op.result.type
    if not (isinstance(t, ScalarType) and t.is_float) or op.operands[0].type != t:
        errs.append("operand and result must share a float type")
    return errs


def _verify_int_binary(op):
    errs = _shape(op, 2, 1)
    if errs:
        return errs
    if any(v.type != index for v in (*op.operands, op.result)):
        errs.append("operands and result must be index")
    return errs


def _verify_bool_binary(op):
    errs = _shape(op, 2, 1)
    if errs:
        return errs
    if any(v.type != i1 for v in (*op.operands, op.result)):
        errs.append("operands and result must be i1")
    return errs


def _verify_cmp(predicates, float_operands):
    def verify(op):
        errs = _shape(op, 2, 1)
        if errs:
            return errs
        if op.attributes.get("predicate") not in predicates:
            errs.append(f"predicate must be one of {', '.join(predicates)}")
        a, b = op.operands
        if a.type != b.type:
            errs.append("compared operands differ in type")
        elif float_operands != (isinstance(a.type, ScalarType) and a.type.is_float):
            errs.append("operand kind does not match comparison kind")
        if op.result.type != i1:
            errs.append("comparison result must be i1")
        return errs

    return verify


def _verify_select(op):
    errs = _shape(op, 3, 1)
    if errs:
        return errs
    c, a, b = op.operands
    if c.type != i1:
        errs.append("select condition must be i1")
    if a.type != b.type or a.type != op.result.type:
        errs.append("select operands and result must share a type")
    return errs


def _verify_return(op):
    func = op.parent.parent.parent if op.parent is not None and op.parent.parent is not None else None
    from ..ir import Function

    if not isinstance(func, Function):
        return ["func.return must terminate a function body"]
    types = [v.type for v in op.operands]
    if types != list(func.result_types):
        return [f"returned types {types} do not match function results {func.result_types}"]
    return []


define("arith.constant", _verify_constant)
for _n in FLOAT_BINARY:
    define(f"arith.{_n}", _verify_float_binary)
for _n in FLOAT_UNARY:
    define(f"arith.{_n}", _verify_float_unary)
for _n in INT_BINARY:
    define(f"arith.{_n}", _verify_int_binary)
for _n in BOOL_BINARY:
    define(f"arith.{_n}", _verify_bool_binary)
define("arith.cmpf", _verify_cmp(CMPF_PREDICATES, True))
define("arith.cmpi", _verify_cmp(CMPI_PREDICATES, False))
define("arith.select", _verify_select)
define("func.return", _verify_return, terminator=True)
# callee signature is checked by the module verifier
define("func.call", lambda op: [] if isinstance(op.attributes.get("callee"), str) else ["missing callee"],
       effect=WRITE)

ARITH_OPS = frozenset(n for n in OPS if n.startswith("arith."))
