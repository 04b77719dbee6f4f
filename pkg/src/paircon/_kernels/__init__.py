"""Hot kernels with a compiled core and a numpy fallback.

The compiled extension is preferred. Set ``PAIRCON_PURE_PYTHON=1`` to force
the fallback, e.g. for benchmarking or on platforms without a compiler.
"""
import os

from . import _fallback

if os.environ.get("PAIRCON_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

crop_resize = _impl.crop_resize
augment = _impl.augment
centered_cosine_mean = _impl.centered_cosine_mean
mw_counts = _impl.mw_counts


def compiled_module():
    """Return the compiled module, or None if it failed to build."""
    try:
        from . import _core
    except ImportError:
        return None
    return _core


__all__ = ["BACKEND", "crop_resize", "augment", "centered_cosine_mean", "mw_counts", "compiled_module"]
