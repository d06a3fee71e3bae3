"""Importing this package registers every operation of the closed dialect set."""

from . import arith, gpu, loop, stencil  # noqa: F401
