"""Numerical backend selection: compiled extension when importable, numpy otherwise.

Set HAWKCAST_PURE=1 in the environment to force the numpy reference backend.
"""

import os

from . import _ref

_compiled = None
if not os.environ.get("HAWKCAST_PURE"):
    try:
        from . import _speedups as _compiled
    except ImportError:
        _compiled = None

_impl = _compiled if _compiled is not None else _ref

BACKEND = "compiled" if _impl is not _ref else "python"

convolve_history = _impl.convolve_history
correlate_future = _impl.correlate_future
cd_sweep = _impl.cd_sweep


def use_backend(name):
    """Rebind the kernel functions; mainly for benchmarks and parity tests."""
    global convolve_history, correlate_future, cd_sweep, BACKEND
    if name == "python":
        mod = _ref
    elif name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled backend is not available")
        mod = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")
    convolve_history = mod.convolve_history
    correlate_future = mod.correlate_future
    cd_sweep = mod.cd_sweep
    BACKEND = "compiled" if mod is not _ref else "python"
