from __future__ import annotations

import pytest

from oec import corpus
from oec.ir import (Block, Function, IRError, Module, Operation, Region, clone_module, count_ops,
                    erase_dead_op, replace_all_uses)
from oec.textual import parse_module, print_module
from oec.types import f64, index
from oec.verifier import use_lists_exact, verify

CHAIN = """func @f(%0: f64) {
  %1 = arith.addf(%0, %0) : (f64, f64) -> f64
  %2 = arith.mulf(%1, %0) : (f64, f64) -> f64
  %3 = arith.negf(%2) : (f64) -> f64
}
"""


def _func(m):
    return m.function()


def test_use_lists_record_every_operand_slot():
    m = parse_module(CHAIN)
    arg = _func(m).args[0]
    add, mul, neg = _func(m).block.ops
    assert arg.uses == {(add, 0), (add, 1), (mul, 1)}
    assert add.result.users == [mul]
    assert use_lists_exact(m)


def test_replace_all_uses_moves_every_use():
    m = parse_module(CHAIN)
    add, mul, neg = _func(m).block.ops
    replace_all_uses(add.result, _func(m).args[0])
    assert not add.result.uses
    assert mul.operands == (_func(m).args[0], _func(m).args[0])
    assert use_lists_exact(m)


def test_erase_dead_op_reaches_fixpoint_in_reverse_order():
    m = parse_module(CHAIN)
    ops = list(_func(m).block.ops)
    assert not erase_dead_op(ops[0])  # still used
    for op in reversed(ops):
        assert erase_dead_op(op)
    assert count_ops(m) == 0
    assert not _func(m).args[0].uses
    assert use_lists_exact(m)


def test_erase_with_uses_is_an_api_error():
    m = parse_module(CHAIN)
    with pytest.raises(IRError):
        _func(m).block.ops[0].erase()


def test_side_effecting_ops_are_never_dead():
    m = corpus.fig3(8)
    store = next(op for op in m.walk() if op.name == "stencil.store")
    assert not erase_dead_op(store)


def test_set_operand_updates_both_use_lists():
    m = parse_module(CHAIN)
    add, mul, _ = _func(m).block.ops
    mul.set_operand(1, add.result)
    assert (mul, 1) in add.result.uses
    assert (mul, 1) not in _func(m).args[0].uses
    assert use_lists_exact(m)


def test_clone_module_is_deep_and_independent():
    m = corpus.fig5(8)
    c = clone_module(m)
    assert print_module(c) == print_module(m)
    for op in list(c.walk()):
        if op.name == "stencil.access":
            op.attributes["offset"] = (9, 9, 9)
    assert "9,9,9" not in print_module(m)
    assert use_lists_exact(c) and use_lists_exact(m)


def test_built_function_verifies():
    func = Function("g", [f64])
    block = func.block
    c = block.append(Operation("arith.constant", (), [f64], {"value": 2.0}))
    block.append(Operation("arith.mulf", [func.args[0], c.result], [f64]))
    m = Module()
    m.append(func)
    assert verify(m) == []
    assert "arith.mulf" in print_module(m)


def test_multi_block_regions_are_rejected():
    func = Function("g", [index])
    op = Operation("loop.if", [func.args[0]], [], {}, [Region([Block(), Block()]), Region([Block()])])
    func.block.append(op)
    m = Module()
    m.append(func)
    messages = [d.message for d in verify(m)]
    assert any("multi-block" in msg for msg in messages)


def test_undefined_operand_is_diagnosed():
    outer = parse_module(CHAIN)
    stray = _func(outer).block.ops[0].result
    func = Function("g", [f64])
    func.block.append(Operation("arith.negf", [stray], [f64]))
    m = Module()
    m.append(func)
    assert any("SSA violation" in d.message for d in verify(m))
