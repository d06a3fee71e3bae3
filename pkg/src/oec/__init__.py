"""Multi-level rewriting compiler for stencil programs."""

from . import dialects  # noqa: F401

__version__ = "0.1.0"
