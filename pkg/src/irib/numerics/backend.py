"""Kernel backend selection.

The compiled extension is used when it imports; set ``IRIB_KERNELS=python``
to force the numpy fallback.
"""

import os

from . import _conv_py

try:
    from . import _conv_ext
except ImportError:  # extension not built
    _conv_ext = None

_BACKENDS = {"python": _conv_py}
if _conv_ext is not None:
    _BACKENDS["compiled"] = _conv_ext

_requested = os.environ.get("IRIB_KERNELS", "").strip().lower()
if _requested and _requested not in ("python", "compiled"):
    raise ImportError(f"IRIB_KERNELS must be 'python' or 'compiled', got {_requested!r}")
if _requested == "compiled" and _conv_ext is None:
    raise ImportError("IRIB_KERNELS=compiled but irib.numerics._conv_ext is not built")

NAME = _requested or ("compiled" if _conv_ext is not None else "python")
_active = _BACKENDS[NAME]


def available():
    return sorted(_BACKENDS)


def get(name=None):
    """Return the kernel module ``name`` (default: the active one)."""
    if name is None:
        return _active
    return _BACKENDS[name]


def use(name):
    """Switch the process-wide kernel backend; returns the previous name."""
    global _active, NAME
    previous = NAME
    _active = _BACKENDS[name]
    NAME = name
    return previous
