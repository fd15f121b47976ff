"""Kernel backend selection.

The compiled extension is used when importable; set ``QSPATCH_PURE_PYTHON=1``
to force the pure-Python implementation.
"""
import os

BACKEND = "python"
if not os.environ.get("QSPATCH_PURE_PYTHON"):
    try:
        from ._ckernels import hold, hold_levels

        BACKEND = "compiled"
    except ImportError:  # extension not built
        pass
if BACKEND == "python":
    from ._pykernels import hold, hold_levels

__all__ = ["BACKEND", "hold", "hold_levels"]
