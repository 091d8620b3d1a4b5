"""Rigidity-based contact force planning and force-to-motion mapping for multi-finger in-hand manipulation."""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
