"""Samplers for the two-Gaussian task model, the multivariate normal and the
von Mises-Fisher distribution, plus the reproducible stream type they share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionTooSmall, IndefiniteCovariance, NonSymmetric

SYMMETRY_TOL = 1e-10
CLAMP_TOL = 1e-10
INDEFINITE_TOL = 1e-6


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by ``(seed, stream)``.

    ``stream`` is a tuple of non-negative integers; child streams append a
    key, so ``RngStream(7).child(3, 2)`` is independent of
    ``RngStream(7).child(3, 1)`` and of its parent. Backed by numpy's PCG64
    seeded through ``SeedSequence(seed, spawn_key=stream)``.
    """

    seed: int
    stream: tuple = ()

    def __post_init__(self):
        if isinstance(self.stream, int):
            object.__setattr__(self, "stream", (self.stream,))
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if any((not isinstance(k, (int, np.integer))) or k < 0 or k >= 2**64 for k in self.stream):
            raise ValueError(f"stream keys must be 64-bit unsigned integers, got {self.stream}")

    def child(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.stream + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.PCG64(seq))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def _check_symmetric(m: np.ndarray, name: str = "matrix") -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonSymmetric(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonSymmetric(f"{name} has non-finite entries")
    if np.max(np.abs(m - m.T), initial=0.0) > SYMMETRY_TOL:
        raise NonSymmetric(f"{name} is not symmetric within {SYMMETRY_TOL}")


@dataclass(frozen=True, eq=False)
class TaskDistribution:
    """Binary task ``pi N(nu, sigma) + (1 - pi) N(-nu, sigma)``."""

    nu: np.ndarray
    sigma: np.ndarray
    pi: float = 0.5

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if nu.ndim != 1:
            raise ValueError("nu must be a vector")
        _check_symmetric(sigma, "sigma")
        if sigma.shape[0] != nu.shape[0]:
            raise ValueError(f"sigma is {sigma.shape}, nu has length {nu.shape[0]}")
        if np.linalg.eigvalsh(sigma).min() <= 0:
            raise ValueError("sigma must be positive definite")
        if not 0.0 < self.pi < 1.0:
            raise ValueError(f"pi must lie in (0, 1), got {self.pi}")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def d(self) -> int:
        return self.nu.shape[0]


@dataclass(frozen=True, eq=False)
class VmfModel:
    """Von Mises-Fisher distribution with mean direction ``mu`` and
    concentration ``kappa`` (``kappa == 0`` is uniform on the sphere)."""

    mu: np.ndarray
    kappa: float = field(default=0.0)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 1:
            raise ValueError("mu must be a vector")
        if abs(np.linalg.norm(mu) - 1.0) > 1e-10:
            raise ValueError("mu must have unit norm")
        if not self.kappa >= 0 or not math.isfinite(self.kappa):
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa}")
        object.__setattr__(self, "mu", mu)

    @property
    def d(self) -> int:
        return self.mu.shape[0]


def covariance_factor(cov) -> np.ndarray:
    """Return ``L`` with ``L @ L.T == cov``.

    Cholesky when ``cov`` is positive definite; otherwise a symmetric
    eigendecomposition with small negative eigenvalues clamped to zero.
    Raises :class:`NonSymmetric` or :class:`IndefiniteCovariance`.
    """
    cov = np.asarray(cov, dtype=float)
    _check_symmetric(cov, "cov")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh((cov + cov.T) / 2)
    if vals.min() < -INDEFINITE_TOL:
        raise IndefiniteCovariance(f"smallest eigenvalue {vals.min():.3g} < -{INDEFINITE_TOL}")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sample_mvn(mean, cov, rng, size: int | None = None) -> np.ndarray:
    """Draw from ``N(mean, cov)``; one vector, or ``size`` rows."""
    mean = np.asarray(mean, dtype=float)
    L = covariance_factor(cov)
    if L.shape[0] != mean.shape[0]:
        raise ValueError(f"cov is {L.shape}, mean has length {mean.shape[0]}")
    gen = _as_generator(rng)
    if size is None:
        return mean + L @ gen.standard_normal(mean.shape[0])
    z = gen.standard_normal((size, mean.shape[0]))
    return mean + z @ L.T


def sample_task(dist: TaskDistribution, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` labelled points from ``dist``.

    Labels are drawn first (``y ~ Bernoulli(pi)``), then
    ``x ~ N((2y - 1) nu, sigma)``. Returns ``(X, y)`` with ``X`` of shape
    ``(n, d)`` and integer labels in draw order.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = _as_generator(rng)
    y = (gen.random(n) < dist.pi).astype(np.int64)
    z = gen.standard_normal((n, dist.d))
    L = np.linalg.cholesky(dist.sigma)
    X = (2 * y - 1)[:, None] * dist.nu + z @ L.T
    return X, y


def _wood_cosines(kappa: float, d: int, count: int, gen: np.random.Generator) -> np.ndarray:
    # Wood (1994) envelope for the cosine with the mean direction
    m = d - 1.0
    b = m / (math.sqrt(4.0 * kappa * kappa + m * m) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + m * math.log(4.0 * b / (1.0 + b) ** 2)
    out = np.empty(count)
    filled = 0
    while filled < count:
        k = max(count - filled, 16)
        z = gen.beta(m / 2.0, m / 2.0, size=k)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = gen.random(k)
        ok = kappa * w + m * np.log1p(-x0 * w) - c >= np.log(u)
        acc = w[ok][: count - filled]
        out[filled : filled + acc.shape[0]] = acc
        filled += acc.shape[0]
    return out


def _householder_to(mu: np.ndarray, pts: np.ndarray) -> np.ndarray:
    # reflect e1 onto mu
    e1 = np.zeros_like(mu)
    e1[0] = 1.0
    u = e1 - mu
    un = np.linalg.norm(u)
    if un < 1e-15:
        return pts
    u /= un
    return pts - 2.0 * np.outer(pts @ u, u)


def sample_vmf(model: VmfModel, count: int, rng) -> np.ndarray:
    """Draw ``count`` unit vectors from ``model``, shape ``(count, d)``.

    Uses the Ulrich-Wood rejection scheme for the cosine along the mean
    direction, a uniform tangent direction, and a Householder reflection
    from the north pole to ``mu``. ``kappa == 0`` draws uniformly.
    """
    d = model.d
    if d < 2:
        raise DimensionTooSmall(f"vMF sampling needs d >= 2, got {d}")
    if count < 1:
        raise ValueError("count must be >= 1")
    gen = _as_generator(rng)
    if model.kappa == 0:
        g = gen.standard_normal((count, d))
        return g / np.linalg.norm(g, axis=1, keepdims=True)
    w = _wood_cosines(float(model.kappa), d, count, gen)
    v = gen.standard_normal((count, d - 1))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    pts = np.empty((count, d))
    pts[:, 0] = w
    pts[:, 1:] = np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None] * v
    pts = _householder_to(model.mu, pts)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def normal_cdf(x: float) -> float:
    """Standard normal CDF via ``erfc`` (accurate in both tails)."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def mean_cosine_3d(kappa: float) -> float:
    """``E[mu . w]`` for a vMF on the 2-sphere: ``coth(kappa) - 1/kappa``."""
    if kappa == 0:
        return 0.0
    return 1.0 / math.tanh(kappa) - 1.0 / kappa
