"""Backend dispatch for the numeric hot loops.

The compiled extension ``fldtransfer._kernels`` is used when it imports
cleanly; otherwise the numpy versions in ``fldtransfer._kernels_py`` are.
Setting ``FLDTRANSFER_PURE_PYTHON=1`` forces the fallback.

All functions take C-contiguous float64 arrays (int64 for labels and ranks);
the wrappers here do the coercion so callers can pass anything array-like.
"""

import os

import numpy as np

from . import _kernels_py

_compiled = None
if not os.environ.get("FLDTRANSFER_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _kernels_py


def _f64(a, ndim):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {a.shape}")
    return a


def projected_risks(W, nu, sigma, impl=None):
    """Per-row risk ``Phi(-w.nu / sqrt(w' sigma w))`` for the rows of ``W``."""
    impl = impl or _impl
    return impl.projected_risks(_f64(W, 2), _f64(nu, 1), _f64(sigma, 2))


def mean_projected_risk(W, nu, sigma, impl=None):
    impl = impl or _impl
    return float(impl.mean_projected_risk(_f64(W, 2), _f64(nu, 1), _f64(sigma, 2)))


def rule_balanced_accuracy(X, y, W, impl=None):
    """Balanced accuracy of every linear rule ``1{w.x > 0}`` (rows of ``W``)
    on the labelled set ``(X, y)``. Both classes must be present."""
    impl = impl or _impl
    y = np.ascontiguousarray(y, dtype=np.int64)
    return impl.rule_balanced_accuracy(_f64(X, 2), y, _f64(W, 2))


def signed_rank_null_counts(doubled_ranks, impl=None):
    """Number of sign patterns attaining each value of twice the positive
    rank sum, for integer-valued doubled ranks."""
    impl = impl or _impl
    return impl.signed_rank_null_counts(np.ascontiguousarray(doubled_ranks, dtype=np.int64))


def backends():
    """Available implementations, keyed by name."""
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out
