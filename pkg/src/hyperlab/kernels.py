"""Backend selection for the hot stencil kernels.

The compiled Cython extension is preferred. Setting the environment
variable ``HYPERLAB_BACKEND=python`` forces the numpy fallback, which is
also used automatically when the extension was not built.
"""
import os

from . import _core_py

_compiled = None
if os.environ.get("HYPERLAB_BACKEND", "").lower() != "python":
    try:
        from . import _core as _compiled
    except ImportError:
        _compiled = None

BACKENDS = {"python": _core_py}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

BACKEND = "cython" if _compiled is not None else "python"


def get_kernel(name=None):
    """Return the module implementing ``leapfrog_step`` for ``name`` (default: active backend)."""
    name = name or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None


def leapfrog_step(*args, **kwargs):
    return BACKENDS[BACKEND].leapfrog_step(*args, **kwargs)
