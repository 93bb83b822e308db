"""Convex combinations of a target projection vector and the average-source
direction, their risk, and Monte-Carlo selection of the mixing coefficient.

The hypothesis for coefficient ``alpha`` is the linear rule
``1{(alpha * omega_target + (1 - alpha) * mu_hat) . x > 0}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    DegenerateDraw,
    DimensionMismatch,
    EmptySources,
    MissingClass,
    ZeroResultant,
    ZeroVector,
)
from .fld import FldFit
from .stats import RngStream, covariance_factor, normal_cdf

DEFAULT_B = 100
MAX_REDRAWS = 100


@dataclass(frozen=True, eq=False)
class SourceSummary:
    """Everything the coefficient search needs from the sources: the mean
    direction ``mu_hat``, the isotropic covariance scale of ``mu_hat``, the
    source count and the mean resultant length. This is also the
    privacy-preserving aggregate that can be shared instead of the vectors.
    """

    mu_hat: np.ndarray
    psi_scale: float
    j_count: int
    resultant_length: float

    def __post_init__(self):
        mu = np.asarray(self.mu_hat, dtype=float)
        if mu.ndim != 1 or abs(np.linalg.norm(mu) - 1.0) > 1e-10:
            raise ValueError("mu_hat must be a unit vector")
        if not self.psi_scale >= 0:
            raise ValueError(f"psi_scale must be >= 0, got {self.psi_scale}")
        if self.j_count < 1:
            raise EmptySources("j_count must be >= 1")
        if not 0.0 <= self.resultant_length <= 1.0 + 1e-12:
            raise ValueError(f"resultant_length must lie in [0, 1], got {self.resultant_length}")
        object.__setattr__(self, "mu_hat", mu)

    @property
    def d(self) -> int:
        return self.mu_hat.shape[0]

    @property
    def psi(self) -> np.ndarray:
        return self.psi_scale * np.eye(self.d)


@dataclass(frozen=True)
class AlphaGrid:
    values: tuple = tuple(i / 10 for i in range(11))

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("alpha grid is empty")
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise ValueError("alpha values must lie in [0, 1]")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("alpha values must be strictly increasing")
        object.__setattr__(self, "values", vals)

    @classmethod
    def with_step(cls, step: float) -> "AlphaGrid":
        k = round(1.0 / step)
        if k < 1 or abs(k * step - 1.0) > 1e-9:
            raise ValueError(f"step {step} does not divide [0, 1] evenly")
        return cls(tuple(i / k for i in range(k + 1)))

    def index(self, alpha: float) -> int:
        return self.values.index(float(alpha))

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class RiskCurve:
    alphas: AlphaGrid
    risks: tuple
    alpha_star: float
    b_samples: int
    star_index: int = field(default=0)


def summarize_sources(omegas) -> SourceSummary:
    """Mean direction of the source vectors and the covariance scale of that
    estimate, ``sqrt((1 - mean((mu_hat . w_j)^2)) / (J * ||w_bar||))``."""
    W = np.asarray(omegas, dtype=float)
    if W.ndim == 1:
        W = W[None, :]
    if W.shape[0] == 0:
        raise EmptySources("no source vectors")
    norms = np.linalg.norm(W, axis=1)
    if np.max(np.abs(norms - 1.0)) > 1e-6:
        raise ValueError("source vectors must have unit norm")
    J = W.shape[0]
    w_bar = W.mean(axis=0)
    r = float(np.linalg.norm(w_bar))
    if r <= 1e-12:
        raise ZeroResultant(f"zero resultant: ||mean source vector|| = {r:.3g}")
    mu_hat = w_bar / r
    cos2 = float(np.mean((W @ mu_hat) ** 2))
    psi_scale = math.sqrt(max(0.0, 1.0 - cos2) / (J * r))
    return SourceSummary(mu_hat=mu_hat, psi_scale=psi_scale, j_count=J, resultant_length=min(r, 1.0))


def reparameterize_alpha(alpha: float, j_count: int, resultant_length: float) -> float:
    """Map a coefficient on the *sum* of source vectors to the equivalent
    coefficient on ``mu_hat``."""
    den = alpha + j_count * (1.0 - alpha) * resultant_length
    if not den > 0:
        raise ValueError("alpha + J (1 - alpha) ||w_bar|| must be positive")
    return alpha / den


def combine(alpha: float, omega_target, mu_hat) -> np.ndarray:
    omega_target = np.asarray(omega_target, dtype=float)
    mu_hat = np.asarray(mu_hat, dtype=float)
    if omega_target.shape != mu_hat.shape:
        raise DimensionMismatch(f"target has shape {omega_target.shape}, mu_hat {mu_hat.shape}")
    return alpha * omega_target + (1.0 - alpha) * mu_hat


def closed_form_risk(omega, nu, sigma) -> float:
    """0-1 risk of ``1{omega . x > 0}`` on the task ``(nu, sigma, 1/2)``:
    ``Phi(-omega.nu / sqrt(omega' sigma omega))``."""
    omega = np.asarray(omega, dtype=float)
    if np.linalg.norm(omega) < 1e-12:
        raise ZeroVector("omega is (numerically) zero")
    nu = np.asarray(nu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if nu.shape != omega.shape or sigma.shape != omega.shape * 2:
        raise DimensionMismatch("omega, nu and sigma dimensions disagree")
    return normal_cdf(-float(omega @ nu) / math.sqrt(float(omega @ sigma @ omega)))


def combined_covariance(alpha: float, fit: FldFit, sources: SourceSummary) -> np.ndarray:
    return alpha**2 * fit.sigma_omega + (1.0 - alpha) ** 2 * sources.psi


def draw_combined(alpha: float, fit: FldFit, sources: SourceSummary, b_samples: int, rng) -> np.ndarray:
    """``b_samples`` draws of the combined vector from its normal
    approximation; (near-)zero draws are replaced."""
    if b_samples < 1:
        raise ValueError("b_samples must be >= 1")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    mean = combine(alpha, fit.omega, sources.mu_hat)
    L = covariance_factor(combined_covariance(alpha, fit, sources))
    W = mean + gen.standard_normal((b_samples, mean.shape[0])) @ L.T
    for _ in range(MAX_REDRAWS):
        bad = np.flatnonzero(np.linalg.norm(W, axis=1) < 1e-12)
        if bad.size == 0:
            return W
        W[bad] = mean + gen.standard_normal((bad.size, mean.shape[0])) @ L.T
    raise DegenerateDraw(f"draws stayed at zero after {MAX_REDRAWS} retries (alpha={alpha})")


def expected_risk_mc(alpha: float, fit: FldFit, sources: SourceSummary, b_samples: int, rng,
                     nu=None, sigma=None) -> float:
    """Monte-Carlo estimate of the expected risk of the ``alpha`` rule.

    Draws come from ``N(alpha*omega + (1-alpha)*mu_hat,
    alpha^2 Sigma_omega + (1-alpha)^2 Psi)``; each is scored with the
    closed-form risk against ``fit.nu_hat``/``fit.sigma_hat`` unless ``nu``
    and ``sigma`` are given.
    """
    W = draw_combined(alpha, fit, sources, b_samples, rng)
    nu = fit.nu_hat if nu is None else nu
    sigma = fit.sigma_hat if sigma is None else sigma
    return kernels.mean_projected_risk(W, nu, sigma)


def optimal_alpha(fit: FldFit, sources: SourceSummary, grid: AlphaGrid | None = None,
                  b_samples: int = DEFAULT_B, rng=None) -> RiskCurve:
    """Evaluate the Monte-Carlo risk on every grid point and take the argmin
    (smallest alpha on ties). Grid point ``i`` uses ``rng.child(i)``."""
    grid = grid or AlphaGrid()
    if rng is None:
        rng = RngStream(0)
    if fit.d != sources.d:
        raise DimensionMismatch(f"target has d={fit.d}, sources have d={sources.d}")
    risks = tuple(
        expected_risk_mc(a, fit, sources, b_samples, rng.child(i)) for i, a in enumerate(grid.values)
    )
    k = int(np.argmin(risks))
    return RiskCurve(alphas=grid, risks=risks, alpha_star=grid.values[k], b_samples=b_samples, star_index=k)


def grid_rules(omega_target, mu_hat, grid: AlphaGrid) -> np.ndarray:
    return np.stack([combine(a, omega_target, mu_hat) for a in grid.values])


def grid_accuracies(omega_target, mu_hat, grid: AlphaGrid, X, y) -> np.ndarray:
    """Balanced accuracy of every grid rule on ``(X, y)``."""
    y = np.asarray(y)
    if not (np.any(y == 0) and np.any(y == 1)):
        raise MissingClass("test set must contain both classes")
    return kernels.rule_balanced_accuracy(X, y, grid_rules(omega_target, mu_hat, grid))


def oracle_alpha(omega_target, mu_hat, grid: AlphaGrid, X, y) -> tuple[float, float]:
    """The grid coefficient with the best balanced accuracy on ``(X, y)``."""
    accs = grid_accuracies(omega_target, mu_hat, grid, X, y)
    k = int(np.argmax(accs))
    return grid.values[k], float(accs[k])
