"""Multi-species weakly asymmetric zero-range fluctuation toolkit."""
from zrpfluct.version import __version__

__all__ = ("__version__",)
