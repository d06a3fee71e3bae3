"""GPU operations: inline launches, outlined launches and thread-id queries."""

from __future__ import annotations

from ..registry import WRITE, define
from ..types import index

AXES = "xyz"
ID_OPS = ("gpu.block_id", "gpu.thread_id", "gpu.block_dim", "gpu.grid_dim")
# declared for completeness; never produced, rejected by the kernel emitter
RESERVED_OPS = ("gpu.barrier", "gpu.shuffle", "gpu.all_reduce", "gpu.alloc_shared")


def verify_launch(op):
    errs = []
    if len(op.operands) != 6 or any(v.type != index for v in op.operands):
        errs.append("gpu.launch takes 3 grid and 3 block sizes of type index")
    if len(op.regions) != 1 or len(op.regions[0].blocks) != 1:
        return errs + ["gpu.launch needs a single-block region"]
    block = op.regions[0].blocks[0]
    if len(block.args) != 12 or any(a.type != index for a in block.args):
        errs.append("gpu.launch body takes 12 index arguments (block ids, thread ids, grid dims, block dims)")
    term = block.terminator
    if term is None or term.name != "gpu.terminator":
        errs.append("gpu.launch region must end with gpu.terminator")
    if op.results:
        errs.append("gpu.launch has no results")
    return errs


def verify_terminator(op):
    parent = op.parent_op
    if parent is None or parent.name != "gpu.launch":
        return ["gpu.terminator must terminate a gpu.launch region"]
    return []


def verify_launch_func(op):
    errs = []
    kernel = op.attributes.get("kernel")
    if not isinstance(kernel, str) or "::" not in kernel:
        errs.append("gpu.launch_func needs a 'module::kernel' symbol")
    if len(op.operands) < 6 or any(v.type != index for v in op.operands[:6]):
        errs.append("gpu.launch_func starts with 3 grid and 3 block sizes of type index")
    return errs


def verify_id(op):
    if op.operands or len(op.results) != 1 or op.result.type != index:
        return [f"{op.name} takes no operands and returns an index"]
    if op.attributes.get("dim") not in AXES:
        return [f"{op.name} needs dim = \"x\", \"y\" or \"z\""]
    return []


define("gpu.launch", verify_launch, effect=WRITE, num_regions=1)
define("gpu.terminator", verify_terminator, terminator=True)
define("gpu.launch_func", verify_launch_func, effect=WRITE)
for _n in ID_OPS:
    define(_n, verify_id)
for _n in RESERVED_OPS:
    define(_n, effect=WRITE, reserved=True)
