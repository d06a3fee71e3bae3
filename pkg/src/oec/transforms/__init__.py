"""Stencil-level transformations."""

from .inlining import InlinePattern, ReroutePattern, inline_all, inline_producer, reroute_outputs
from .shapes import infer_shapes, shift_shapes
from .unrolling import unroll_all, unroll_stencil

__all__ = [
    "InlinePattern", "ReroutePattern", "inline_all", "inline_producer", "reroute_outputs",
    "infer_shapes", "shift_shapes", "unroll_all", "unroll_stencil",
]
