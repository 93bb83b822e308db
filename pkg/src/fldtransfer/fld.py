"""Fisher's Linear Discriminant under the symmetric shared-covariance model.

Samples are passed as a feature matrix ``X`` of shape ``(n, d)`` and a label
vector ``y`` with entries in ``{0, 1}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateCovariance,
    DimensionMismatch,
    MissingClass,
    SingularCovariance,
    ZeroSignal,
)

RIDGE = 1e-6


class ClassStats(NamedTuple):
    nu0: np.ndarray
    nu1: np.ndarray
    sigma: np.ndarray
    pi_hat: float


@dataclass(frozen=True, eq=False)
class AssumptionTransform:
    """``x -> scale * (x + shift)``: centres the class-mean midpoint at the
    origin and rescales so that ``||inv(Sigma) nu|| == 1``."""

    shift: np.ndarray
    scale: float

    def apply(self, X) -> np.ndarray:
        return self.scale * (np.asarray(X, dtype=float) + self.shift)


@dataclass(frozen=True, eq=False)
class FldFit:
    omega_raw: np.ndarray
    omega: np.ndarray
    nu_hat: np.ndarray
    sigma_hat: np.ndarray
    n_total: int
    sigma_omega: np.ndarray

    @property
    def d(self) -> int:
        return self.omega.shape[0]


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2:
        raise DimensionMismatch(f"X must be 2-d, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise DimensionMismatch(f"y has shape {y.shape}, expected ({X.shape[0]},)")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return X, y.astype(np.int64)


def estimate_class_stats(X, y) -> ClassStats:
    """Class means, ridge-regularised pooled covariance and class-1 fraction.

    The pooled covariance is the within-class scatter divided by ``n - 2``
    plus ``lambda * I`` with ``lambda = 1e-6 * trace / d`` (``1e-6`` when the
    scatter is exactly zero).
    """
    X, y = _check_xy(X, y)
    n, d = X.shape
    n1 = int(y.sum())
    n0 = n - n1
    if n0 == 0 or n1 == 0:
        raise MissingClass(f"need both classes, got {n0} of class 0 and {n1} of class 1")
    if n0 < 2 or n1 < 2:
        raise MissingClass(f"need at least 2 samples per class, got {n0} and {n1}")
    if not np.all(np.isfinite(X)):
        raise DegenerateCovariance("features have non-finite entries")
    X0, X1 = X[y == 0], X[y == 1]
    nu0 = X0.mean(axis=0)
    nu1 = X1.mean(axis=0)
    r0 = X0 - nu0
    r1 = X1 - nu1
    sigma = (r0.T @ r0 + r1.T @ r1) / (n - 2)
    sigma = (sigma + sigma.T) / 2
    if not np.all(np.isfinite(sigma)):
        raise DegenerateCovariance("pooled covariance has non-finite entries")
    tr = np.trace(sigma)
    lam = RIDGE * tr / d if tr > 0 else RIDGE
    sigma = sigma + lam * np.eye(d)
    return ClassStats(nu0, nu1, sigma, n1 / n)


def fit_assumption_transform(X, y) -> AssumptionTransform:
    stats = estimate_class_stats(X, y)
    shift = -(stats.nu0 + stats.nu1) / 2
    nu = (stats.nu1 - stats.nu0) / 2  # class-1 mean after shifting
    direction = np.linalg.solve(stats.sigma, nu)
    norm = float(np.linalg.norm(direction))
    if norm < 1e-12:
        raise ZeroSignal(f"||inv(Sigma) nu|| = {norm:.3g}; class means coincide")
    # scaling x by s maps inv(Sigma) nu to inv(Sigma) nu / s
    return AssumptionTransform(shift=shift, scale=norm)


def projection_covariance(nu, sigma, n: int) -> np.ndarray:
    """Asymptotic covariance ``Sigma_tilde / n`` of ``inv(Sigma_hat) nu_hat``,
    where ``Sigma_tilde = (1 + nu' inv(S) nu) inv(S) + inv(S) nu nu' inv(S)``.

    The first term comes from the noise in ``nu_hat`` and the
    ``nu' inv(S) nu`` part of the inverse-Wishart noise; the outer product is
    the remaining inverse-Wishart term (delta method).
    """
    nu = np.asarray(nu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    d = nu.shape[0]
    if sigma.shape != (d, d):
        raise DimensionMismatch(f"sigma is {sigma.shape}, nu has length {d}")
    if n < 1:
        raise ValueError("n must be >= 1")
    try:
        if np.linalg.cond(sigma) > 1e14:
            raise SingularCovariance("sigma is numerically singular")
        inv = np.linalg.inv(sigma)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from None
    a = inv @ nu
    m = (1.0 + nu @ a) * inv + np.outer(a, a)
    m = m / n
    return (m + m.T) / 2


def fit_fld(X, y, sigma=None) -> FldFit:
    """Fit the projection vector ``0.5 * inv(Sigma) (nu1 - nu0)``.

    ``X`` should already be conformant (see :func:`fit_assumption_transform`).
    With ``sigma`` given, that covariance is used in place of the pooled
    estimate. The threshold is always 0.
    """
    stats = estimate_class_stats(X, y)
    n = np.asarray(X).shape[0]
    nu = (stats.nu1 - stats.nu0) / 2
    sig = stats.sigma if sigma is None else np.asarray(sigma, dtype=float)
    if sig.shape != (nu.shape[0],) * 2:
        raise DimensionMismatch(f"sigma is {sig.shape}, data has d={nu.shape[0]}")
    try:
        omega_raw = np.linalg.solve(sig, nu)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from None
    norm = np.linalg.norm(omega_raw)
    if norm < 1e-12:
        raise ZeroSignal("estimated projection vector is zero")
    return FldFit(
        omega_raw=omega_raw,
        omega=omega_raw / norm,
        nu_hat=nu,
        sigma_hat=sig,
        n_total=n,
        sigma_omega=projection_covariance(nu, sig, n),
    )


def predict(omega, x):
    """``1{omega . x > 0}``; ties go to class 0. ``x`` may be one point or a
    ``(n, d)`` matrix."""
    omega = np.asarray(omega, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != omega.shape[0]:
        raise DimensionMismatch(f"omega has d={omega.shape[0]}, x has d={x.shape[-1]}")
    s = x @ omega
    if x.ndim == 1:
        return int(s > 0)
    return (s > 0).astype(np.int64)
