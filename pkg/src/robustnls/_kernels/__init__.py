"""Hot kernels with a compiled backend and a pure-Python fallback.

The compiled Cython module is used when it was built and importable; set
``ROBUSTNLS_PURE_PYTHON=1`` to force the NumPy fallback.  ``BACKEND`` names
the active choice.
"""
import os

from . import _pdhg_py

if os.environ.get("ROBUSTNLS_PURE_PYTHON", "") not in ("", "0"):
    pdhg = _pdhg_py.pdhg
    BACKEND = "python"
else:
    try:
        from ._pdhg import pdhg
        BACKEND = "cython"
    except ImportError:
        pdhg = _pdhg_py.pdhg
        BACKEND = "python"

__all__ = ["pdhg", "BACKEND", "get_pdhg"]


def get_pdhg(backend):
    """Return the kernel for ``backend`` (``"cython"`` or ``"python"``)."""
    if backend == "python":
        return _pdhg_py.pdhg
    if backend == "cython":
        from ._pdhg import pdhg as compiled
        return compiled
    raise ValueError(f"unknown backend {backend!r}")
