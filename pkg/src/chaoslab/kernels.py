"""Kernel backend selection.

The compiled module is used when it imports; setting CHAOSLAB_PURE_PYTHON=1
forces the numpy twins.  ``use_backend`` switches at runtime (tests and the
benchmark use it).
"""
import os

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_active = None


def available():
    out = ["python"]
    if _compiled is not None:
        out.append("cython")
    return out


def use_backend(name):
    global _active
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        _active = _compiled
    elif name == "python":
        _active = _kernels_py
    else:
        raise ValueError(f"unknown backend {name!r}")


def backend():
    return "cython" if _active is _compiled and _compiled is not None else "python"


def bridge_step(x, lo, hi, z, u, dt):
    """Advance x in place by one stopped step.  Returns (dx, side)."""
    dx = np.empty_like(x)
    side = np.empty(x.shape[0], dtype=np.int8)
    _active.bridge_step(x, lo, hi, z, u, float(dt), dx, side)
    return dx, side


def exit_block(x, lo, hi, z, u, dt):
    """Advance x in place through a block of steps.  Returns (steps, side)."""
    steps = np.empty(x.shape[0], dtype=np.int_)
    side = np.empty(x.shape[0], dtype=np.int8)
    _active.exit_block(x, lo, hi, z, u, float(dt), steps, side)
    return steps, side


def series_direct(t, a1, a2, k0=1):
    out = np.empty(t.shape[0], dtype=np.float64)
    _active.series_direct(np.ascontiguousarray(t, dtype=np.float64),
                          np.ascontiguousarray(a1, dtype=np.float64),
                          np.ascontiguousarray(a2, dtype=np.float64), int(k0), out)
    return out


if os.environ.get("CHAOSLAB_PURE_PYTHON") == "1" or _compiled is None:
    use_backend("python")
else:
    use_backend("cython")
