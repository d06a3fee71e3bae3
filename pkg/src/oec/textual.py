"""Line-oriented textual form of modules (``.oec`` files).

Grammar (informal; ``docs/ir-reference.md`` is normative)::

    module   := ['module' 'attributes' attrs] entry*
    entry    := func | 'gpu.module' '@'name ['attributes' attrs] '{' entry* '}'
              | 'global' '@'name attrs
    func     := 'func' '@'name '(' [arg {',' arg}] ')' ['->' '(' types ')']
                ['attributes' attrs] '{' op* '}'
    op       := [%v {',' %v} '='] opname '(' [%v {',' %v}] ')' [attrs]
                ':' '(' [types] ')' '->' results region*
    region   := '{' ['^'label '(' [arg {',' arg}] ')' ':'] op* '}'
"""

from __future__ import annotations

import json
import re
from typing import Dict, List, Optional, Tuple

from . import dialects  # noqa: F401
from .ir import Block, Function, Global, Module, Operation, Region, Value
from .registry import lookup
from .types import (
    BufferType,
    FieldType,
    Range,
    ScalarType,
    TempType,
    Type,
    format_vector,
)
from .verifier import check


class ParseError(Exception):
    def __init__(self, message: str, line: int, column: int):
        self.message, self.line, self.column = message, line, column
        super().__init__(f"{line}:{column}: {message}")


# -- printing ----------------------------------------------------------------

def format_attr(value) -> str:
    if value is True:
        return "unit"
    if isinstance(value, bool):
        raise TypeError("only unit (True) boolean attributes are supported")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, Range):
        return str(value)
    if isinstance(value, tuple):
        return format_vector(value)
    if isinstance(value, list):
        if value and all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            return format_vector(value)  # integer lists parse back as vectors
        return "[" + ", ".join(format_attr(v) for v in value) + "]"
    if isinstance(value, Type):
        return str(value)
    raise TypeError(f"unsupported attribute value {value!r}")


def format_attr_dict(attrs: dict) -> str:
    items = []
    for name in sorted(attrs):
        v = attrs[name]
        items.append(name if v is True else f"{name} = {format_attr(v)}")
    return "{" + ", ".join(items) + "}"


def _format_results(types) -> str:
    if len(types) == 1:
        return str(types[0])
    return "(" + ", ".join(str(t) for t in types) + ")"


class _Printer:
    def __init__(self):
        self.lines: List[str] = []
        self.names: Dict[Value, str] = {}

    def name(self, v: Value) -> str:
        if v not in self.names:
            self.names[v] = f"%{len(self.names)}"
        return self.names[v]

    def ref(self, v: Value) -> str:
        # values from outside the printed scope get a stable placeholder
        return self.names.get(v) or f"%<undef{v.handle}>"

    def module(self, module: Module, indent: int = 0) -> None:
        pad = "  " * indent
        for entry in module.body:
            if isinstance(entry, Function):
                self.function(entry, indent)
            elif isinstance(entry, Module):
                head = f"{pad}gpu.module @{entry.name}"
                if entry.attributes:
                    head += " attributes " + format_attr_dict(entry.attributes)
                self.lines.append(head + " {")
                self.module(entry, indent + 1)
                self.lines.append(pad + "}")
            else:
                self.lines.append(f"{pad}global @{entry.name} {format_attr_dict(entry.attributes)}")

    def function(self, func: Function, indent: int) -> None:
        self.names = {}
        pad = "  " * indent
        args = ", ".join(f"{self.name(a)}: {a.type}" for a in func.args)
        head = f"{pad}func @{func.name}({args})"
        if func.result_types:
            head += " -> (" + ", ".join(str(t) for t in func.result_types) + ")"
        if func.attributes:
            head += " attributes " + format_attr_dict(func.attributes)
        self.lines.append(head + " {")
        for op in func.block.ops:
            self.op(op, indent + 1)
        self.lines.append(pad + "}")

    def op(self, op: Operation, indent: int) -> None:
        pad = "  " * indent
        operands = ", ".join(self.ref(v) for v in op.operands)
        text = f"{op.name}({operands})"
        if op.attributes:
            text += " " + format_attr_dict(op.attributes)
        text += " : (" + ", ".join(str(v.type) for v in op.operands) + ") -> "
        text += _format_results([r.type for r in op.results])
        if op.results:
            text = ", ".join(self.name(r) for r in op.results) + " = " + text
        if not op.regions:
            self.lines.append(pad + text)
            return
        self.lines.append(pad + text + " {")
        for i, region in enumerate(op.regions):
            if i:
                self.lines.append(pad + "} {")
            for bi, block in enumerate(region.blocks):
                if block.args or bi:
                    args = ", ".join(f"{self.name(a)}: {a.type}" for a in block.args)
                    self.lines.append(f"{pad}^bb{bi}({args}):")
                for inner in block.ops:
                    self.op(inner, indent + 1)
        self.lines.append(pad + "}")


def print_module(module: Module) -> str:
    p = _Printer()
    if module.attributes:
        p.lines.append("module attributes " + format_attr_dict(module.attributes))
    p.module(module)
    return "".join(line + "\n" for line in p.lines)


def print_op(op: Operation) -> str:
    p = _Printer()
    p.op(op, 0)
    return "\n".join(p.lines)


# -- lexing ------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<value>%[A-Za-z0-9_.$]+)
  | (?P<symbol>@[A-Za-z0-9_.$]+)
  | (?P<label>\^[A-Za-z0-9_]+)
  | (?P<dtype>![A-Za-z_][\w.]*<[^<>]*>)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<number>-?inf\b|nan\b|-?\d+\.\d*(?:[eE][+-]?\d+)?|-?\d+[eE][+-]?\d+|-?\d+)
  | (?P<ident>[A-Za-z_][\w.]*)
  | (?P<arrow>->)
  | (?P<punct>[(){}\[\],:=])
    """,
    re.VERBOSE,
)


class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind, self.text, self.line, self.col = kind, text, line, col

    def __repr__(self):
        return f"{self.kind}:{self.text!r}@{self.line}:{self.col}"


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        tok = m.group()
        if kind != "ws":
            tokens.append(_Token(kind, tok, line, pos - line_start + 1))
        newlines = tok.count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + tok.rindex("\n") + 1
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


# -- parsing -----------------------------------------------------------------

_BUFFER_RE = re.compile(
    r"^(?P<shape>(?:\d+x)+)(?P<elem>f32|f64|index|i1)"
    r"(?:,\s*offset=(?P<offset>-?\d+),\s*strides=\[(?P<strides>[-\d,\s]*)\])?$"
)
_STENCIL_TYPE_RE = re.compile(r"^(?P<dims>[ijk]+),\s*(?P<elem>f32|f64)$")


def parse_type_text(text: str) -> Type:
    if text in ("f32", "f64", "index", "i1"):
        return ScalarType(text)
    m = re.match(r"^!([\w.]+)<(.*)>$", text, re.S)
    if m is None:
        raise ValueError(f"unknown type {text!r}")
    kind, body = m.group(1), m.group(2).strip()
    if kind in ("stencil.field", "stencil.temp"):
        sm = _STENCIL_TYPE_RE.match(body)
        if sm is None:
            raise ValueError(f"malformed stencil type {text!r}")
        cls = FieldType if kind == "stencil.field" else TempType
        return cls(sm.group("dims"), ScalarType(sm.group("elem")))
    if kind == "buffer":
        bm = _BUFFER_RE.match(body)
        if bm is None:
            raise ValueError(f"malformed buffer type {text!r}")
        shape = tuple(int(x) for x in bm.group("shape").rstrip("x").split("x"))
        elem = ScalarType(bm.group("elem"))
        if bm.group("offset") is None:
            return BufferType(shape, elem)
        strides = tuple(int(x) for x in bm.group("strides").split(",") if x.strip())
        return BufferType(shape, elem, int(bm.group("offset")), strides)
    raise ValueError(f"unknown type {text!r}")


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0
        self.values: Dict[str, Value] = {}

    # token helpers
    @property
    def tok(self) -> _Token:
        return self.toks[self.pos]

    def error(self, message: str, tok: Optional[_Token] = None):
        tok = tok or self.tok
        raise ParseError(message, tok.line, tok.col)

    def advance(self) -> _Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("punct", "arrow", "ident")

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> _Token:
        if not self.at(text):
            self.error(f"expected '{text}', found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def expect_kind(self, kind: str, what: str) -> _Token:
        if self.tok.kind != kind:
            self.error(f"expected {what}, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    # grammar
    def parse_module(self) -> Module:
        module = Module()
        if self.accept("module"):
            self.expect("attributes")
            module.attributes = self.parse_attr_dict()
        self.parse_entries(module, top=True)
        self.expect_kind("eof", "end of input")
        return module

    def parse_entries(self, module: Module, top: bool) -> None:
        while True:
            if self.tok.kind == "eof" or self.at("}"):
                return
            if self.accept("func"):
                module.append(self.parse_function())
            elif self.at("gpu.module"):
                if not top:
                    self.error("GPU modules cannot nest further modules")
                self.advance()
                name = self.expect_kind("symbol", "module name").text[1:]
                sub = Module(name, kind="gpu")
                if self.accept("attributes"):
                    sub.attributes = self.parse_attr_dict()
                self.expect("{")
                self.parse_entries(sub, top=False)
                self.expect("}")
                module.append(sub)
            elif self.accept("global"):
                name = self.expect_kind("symbol", "global name").text[1:]
                module.append(Global(name, self.parse_attr_dict()))
            else:
                self.error(f"expected 'func', 'gpu.module' or 'global', found {self.tok.text!r}")

    def parse_function(self) -> Function:
        name = self.expect_kind("symbol", "function name").text[1:]
        self.values = {}
        self.expect("(")
        arg_names, arg_types = [], []
        if not self.at(")"):
            while True:
                tok = self.expect_kind("value", "argument name")
                self.expect(":")
                arg_names.append(tok)
                arg_types.append(self.parse_type())
                if not self.accept(","):
                    break
        self.expect(")")
        result_types = []
        if self.accept("->"):
            result_types = self.parse_type_list()
        attrs = {}
        if self.accept("attributes"):
            attrs = self.parse_attr_dict()
        func = Function(name, arg_types, result_types, attrs)
        for tok, v in zip(arg_names, func.args):
            self.define(tok, v)
        self.expect("{")
        while not self.at("}"):
            func.block.append(self.parse_op())
        self.expect("}")
        return func

    def define(self, tok: _Token, v: Value) -> None:
        if tok.text in self.values:
            self.error(f"redefinition of {tok.text}", tok)
        self.values[tok.text] = v

    def parse_type(self) -> Type:
        tok = self.tok
        if tok.kind not in ("dtype", "ident"):
            self.error(f"expected a type, found {tok.text!r}")
        self.advance()
        try:
            return parse_type_text(tok.text)
        except ValueError as exc:
            self.error(str(exc), tok)

    def parse_type_list(self) -> List[Type]:
        self.expect("(")
        types = []
        if not self.at(")"):
            while True:
                types.append(self.parse_type())
                if not self.accept(","):
                    break
        self.expect(")")
        return types

    def parse_op(self) -> Operation:
        start = self.tok
        result_toks = []
        if self.tok.kind == "value":
            while True:
                result_toks.append(self.expect_kind("value", "result name"))
                if not self.accept(","):
                    break
            self.expect("=")
        name_tok = self.expect_kind("ident", "operation name")
        opdef = lookup(name_tok.text)
        if opdef is None:
            self.error(f"unknown operation '{name_tok.text}'", name_tok)
        self.expect("(")
        operand_toks = []
        if not self.at(")"):
            while True:
                operand_toks.append(self.expect_kind("value", "operand"))
                if not self.accept(","):
                    break
        self.expect(")")
        operands = []
        for t in operand_toks:
            if t.text not in self.values:
                self.error(f"use of undefined value {t.text}", t)
            operands.append(self.values[t.text])
        attrs = self.parse_attr_dict() if self.at("{") else {}
        self.expect(":")
        type_tok = self.tok
        operand_types = self.parse_type_list()
        self.expect("->")
        if self.at("("):
            result_types = self.parse_type_list()
        else:
            result_types = [self.parse_type()]
        if len(operand_types) != len(operands):
            self.error(f"{len(operands)} operands but {len(operand_types)} operand types", type_tok)
        for v, t, vt in zip(operands, operand_types, operand_toks):
            if v.type != t:
                self.error(f"type mismatch for {vt.text}: annotated {t}, defined as {v.type}", vt)
        if len(result_types) != len(result_toks):
            self.error(f"{len(result_toks)} results named but {len(result_types)} result types", type_tok)
        op = Operation(name_tok.text, operands, result_types, attrs)
        op.location = (start.line, start.col)
        for tok, r in zip(result_toks, op.results):
            self.define(tok, r)
        while self.at("{"):
            op.add_region(self.parse_region())
            if not self.at("{"):
                break
        return op

    def parse_region(self) -> Region:
        self.expect("{")
        region = Region()
        block = None
        while not self.at("}"):
            if self.tok.kind == "label":
                self.advance()
                self.expect("(")
                arg_toks, arg_types = [], []
                if not self.at(")"):
                    while True:
                        arg_toks.append(self.expect_kind("value", "block argument"))
                        self.expect(":")
                        arg_types.append(self.parse_type())
                        if not self.accept(","):
                            break
                self.expect(")")
                self.expect(":")
                block = region.add_block(Block(arg_types))
                for tok, v in zip(arg_toks, block.args):
                    self.define(tok, v)
                continue
            if block is None:
                block = region.add_block(Block())
            block.append(self.parse_op())
        self.expect("}")
        if not region.blocks:
            region.add_block(Block())
        return region

    def parse_attr_dict(self) -> dict:
        self.expect("{")
        attrs = {}
        if not self.at("}"):
            while True:
                key = self.expect_kind("ident", "attribute name")
                if self.accept("="):
                    attrs[key.text] = self.parse_attr_value()
                else:
                    attrs[key.text] = True
                if not self.accept(","):
                    break
        self.expect("}")
        return attrs

    def parse_attr_value(self):
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return _number(tok.text)
        if tok.kind == "string":
            self.advance()
            return json.loads(tok.text)
        if tok.kind in ("dtype",) or (tok.kind == "ident" and tok.text in ("f32", "f64", "index", "i1")):
            return self.parse_type()
        if tok.kind == "ident" and tok.text == "unit":
            self.advance()
            return True
        if self.accept("["):
            items = []
            if not self.at("]"):
                while True:
                    items.append(self.parse_attr_value())
                    if not self.accept(","):
                        break
            self.expect("]")
            if all(isinstance(x, int) and not isinstance(x, bool) for x in items):
                vec = tuple(items)
                if self.accept(":"):
                    self.expect("[")
                    ub = []
                    while True:
                        t = self.expect_kind("number", "range bound")
                        ub.append(int(t.text))
                        if not self.accept(","):
                            break
                    self.expect("]")
                    try:
                        return Range(vec, tuple(ub))
                    except ValueError as exc:
                        self.error(str(exc), tok)
                return vec
            return items
        self.error(f"expected an attribute value, found {tok.text!r}")


def _number(text: str):
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    return float(text)


def parse_module(text: str, verify: bool = True) -> Module:
    """Parse ``text``; raises :class:`ParseError` on malformed input and
    :class:`~oec.verifier.VerificationError` if the module does not verify."""
    module = _Parser(text).parse_module()
    if verify:
        check(module, "parsed module does not verify")
    return module


# -- structural equality -------------------------------------------------------

def structurally_equal(a: Module, b: Module) -> bool:
    """Equality up to value handles: compares entries, ops, types and attributes
    while tracking a bijection between the two modules' values."""
    return _modules_equal(a, b, {})


def _attrs_equal(x: dict, y: dict) -> bool:
    if set(x) != set(y):
        return False
    return all(format_attr(x[k]) == format_attr(y[k]) for k in x)


def _modules_equal(a: Module, b: Module, m: dict) -> bool:
    if (a.name, a.kind) != (b.name, b.kind) or not _attrs_equal(a.attributes, b.attributes):
        return False
    if len(a.body) != len(b.body):
        return False
    for x, y in zip(a.body, b.body):
        if type(x) is not type(y) or x.name != y.name or not _attrs_equal(x.attributes, y.attributes):
            return False
        if isinstance(x, Module) and not _modules_equal(x, y, m):
            return False
        if isinstance(x, Function):
            if x.result_types != y.result_types or not _blocks_equal(x.block, y.block, m):
                return False
    return True


def _blocks_equal(a: Block, b: Block, m: dict) -> bool:
    if [v.type for v in a.args] != [v.type for v in b.args] or len(a.ops) != len(b.ops):
        return False
    m.update(zip(a.args, b.args))
    for x, y in zip(a.ops, b.ops):
        if x.name != y.name or len(x.operands) != len(y.operands) or len(x.regions) != len(y.regions):
            return False
        if any(m.get(u) is not v for u, v in zip(x.operands, y.operands)):
            return False
        if [r.type for r in x.results] != [r.type for r in y.results]:
            return False
        if not _attrs_equal(x.attributes, y.attributes):
            return False
        m.update(zip(x.results, y.results))
        for rx, ry in zip(x.regions, y.regions):
            if len(rx.blocks) != len(ry.blocks):
                return False
            if not all(_blocks_equal(bx, by, m) for bx, by in zip(rx.blocks, ry.blocks)):
                return False
    return True


def roundtrip_fixpoint(text: str) -> Tuple[bool, str]:
    """``print(parse(text))`` and whether printing it again is stable."""
    once = print_module(parse_module(text))
    return print_module(parse_module(once)) == once, once
