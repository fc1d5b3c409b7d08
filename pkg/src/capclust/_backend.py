"""Pick the kernel implementation at import time.

Set ``CAPCLUST_BACKEND=python`` to force the pure-Python fallback even when the
compiled extension is available.
"""
import os

from . import _fallback

BACKEND = "python"
kernels = _fallback

if os.environ.get("CAPCLUST_BACKEND", "").lower() not in ("python", "fallback", "pure"):
    try:
        from . import _kernels as kernels  # noqa: F811
        BACKEND = "compiled"
    except ImportError:
        pass


def get_kernels(name=None):
    """Return the kernel module for ``name`` ("compiled" or "python"), default the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _fallback
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names
