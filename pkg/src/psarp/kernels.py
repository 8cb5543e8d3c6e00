"""Backend selection for the hot kernels.

The compiled extension ``psarp._ckernels`` is used when it was built;
otherwise (or when ``PSARP_PURE_PYTHON=1``) the numpy fallback is loaded.
``BACKEND`` names the active implementation.
"""
import os

from . import _kernels_py

if os.environ.get("PSARP_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

poly_eval = _impl.poly_eval
mu_coefficients = _impl.mu_coefficients
hard_groups = _impl.hard_groups
normpow_quadform = _impl.normpow_quadform
normpow_multilinear = _impl.normpow_multilinear


def backends():
    """Return ``{name: module}`` for every importable backend."""
    out = {"python": _kernels_py}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
