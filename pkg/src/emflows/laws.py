"""Latent-law representations and the metrics the product geometry needs.

Laws live on R^{d_x} and come in two forms: exact Gaussians (the
closed-form path) and particle clouds (the Monte Carlo path).  Points of
the parameter-law product space pair a parameter vector with a law; the
product distance combines Euclidean parameter distance with the
Wasserstein-2 distance between laws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import (
    InsufficientParticlesError,
    InvalidParameterError,
    UnsupportedRepresentationError,
)

_EIG_CLAMP = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GaussianLaw:
    """A Gaussian measure N(mean, cov) with SPD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _readonly(np.atleast_1d(self.mean)))
        object.__setattr__(self, "cov", _readonly(np.atleast_2d(self.cov)))
        d = self.mean.shape[0]
        if self.cov.shape != (d, d):
            raise InvalidParameterError(
                f"covariance shape {self.cov.shape} does not match dimension {d}"
            )
        if not (np.isfinite(self.mean).all() and np.isfinite(self.cov).all()):
            raise InvalidParameterError("law has non-finite mean or covariance")
        asym = np.linalg.norm(self.cov - self.cov.T)
        if asym > 1e-12 * max(1.0, np.linalg.norm(self.cov)):
            raise InvalidParameterError("covariance is not symmetric")
        if np.linalg.eigvalsh(self.cov).min() <= 0.0:
            raise InvalidParameterError("covariance is not positive definite")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class ParticleCloud:
    """An N-particle empirical approximation of a latent law."""

    particles: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "particles", _readonly(np.atleast_2d(self.particles))
        )
        if self.particles.shape[0] < 1:
            raise InvalidParameterError("need at least one particle")
        if not np.isfinite(self.particles).all():
            raise InvalidParameterError("particles contain non-finite entries")

    @property
    def n(self) -> int:
        return self.particles.shape[0]

    @property
    def dim(self) -> int:
        return self.particles.shape[1]


@dataclass(frozen=True)
class ProductPoint:
    """A point (theta, q) of the parameter-law product space."""

    theta: np.ndarray
    law: object  # GaussianLaw | ParticleCloud

    def __post_init__(self):
        object.__setattr__(self, "theta", _readonly(np.atleast_1d(self.theta)))


def sqrtm_spd(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition, eigenvalues clamped
    at 1e-12 to absorb round-off on near-singular inputs."""
    w, v = np.linalg.eigh(np.asarray(mat, dtype=np.float64))
    if w.min() < -1e-8 * max(1.0, abs(w.max())):
        raise InvalidParameterError("matrix is not positive semidefinite")
    w = np.sqrt(np.clip(w, _EIG_CLAMP, None))
    return (v * w) @ v.T


def w2_gaussian(g1: GaussianLaw, g2: GaussianLaw) -> float:
    """Wasserstein-2 distance between Gaussians (Bures closed form).

    W2^2 = |m1 - m2|^2 + tr(S1 + S2 - 2 (S2^{1/2} S1 S2^{1/2})^{1/2})
    """
    if g1.dim != g2.dim:
        raise InvalidParameterError("dimension mismatch")
    r2 = sqrtm_spd(g2.cov)
    cross = sqrtm_spd(r2 @ g1.cov @ r2)
    scale = np.trace(g1.cov) + np.trace(g2.cov)
    tr = scale - 2.0 * np.trace(cross)
    # The eigendecompositions resolve the trace only to ~1e-14 * scale;
    # anything below that is round-off, not distance.
    if tr < 1e-13 * max(1.0, scale):
        tr = 0.0
    d2 = float(np.sum((g1.mean - g2.mean) ** 2) + tr)
    return float(np.sqrt(d2))


def kl_gaussian(g1: GaussianLaw, g2: GaussianLaw) -> float:
    """KL(g1 || g2) between Gaussians, in nats."""
    if g1.dim != g2.dim:
        raise InvalidParameterError("dimension mismatch")
    d = g1.dim
    chol2 = np.linalg.cholesky(g2.cov)
    solved = np.linalg.solve(g2.cov, g1.cov)
    dm = g2.mean - g1.mean
    maha = float(dm @ np.linalg.solve(g2.cov, dm))
    logdet2 = 2.0 * float(np.sum(np.log(np.diag(chol2))))
    logdet1 = 2.0 * float(np.sum(np.log(np.diag(np.linalg.cholesky(g1.cov)))))
    val = 0.5 * (np.trace(solved) + maha - d + logdet2 - logdet1)
    return float(max(val, 0.0))


def w2_empirical_1d(cloud: ParticleCloud, g: GaussianLaw) -> float:
    """Quantile-coupling W2 between a 1D cloud and a 1D Gaussian.

    Sorted particle i pairs with the Gaussian quantile at (i - 0.5)/N;
    the distance is the root mean square pairing gap.
    """
    if cloud.dim != 1 or g.dim != 1:
        raise UnsupportedRepresentationError(
            "empirical W2 is only provided in dimension 1"
        )
    xs = np.sort(cloud.particles[:, 0])
    n = xs.shape[0]
    u = (np.arange(1, n + 1) - 0.5) / n
    qs = g.mean[0] + np.sqrt(g.cov[0, 0]) * ndtri(u)
    return float(np.sqrt(np.mean((xs - qs) ** 2)))


def _w2_any(q1, q2) -> float:
    if isinstance(q1, GaussianLaw) and isinstance(q2, GaussianLaw):
        return w2_gaussian(q1, q2)
    if isinstance(q1, ParticleCloud) and isinstance(q2, GaussianLaw):
        return w2_empirical_1d(q1, q2)
    if isinstance(q1, GaussianLaw) and isinstance(q2, ParticleCloud):
        return w2_empirical_1d(q2, q1)
    if isinstance(q1, ParticleCloud) and isinstance(q2, ParticleCloud):
        if q1.dim != 1 or q2.dim != 1 or q1.n != q2.n:
            raise UnsupportedRepresentationError(
                "cloud-to-cloud W2 needs matching 1D clouds"
            )
        a = np.sort(q1.particles[:, 0])
        b = np.sort(q2.particles[:, 0])
        return float(np.sqrt(np.mean((a - b) ** 2)))
    raise UnsupportedRepresentationError(
        f"unsupported law pair {type(q1).__name__}/{type(q2).__name__}"
    )


def product_distance(p1: ProductPoint, p2: ProductPoint) -> float:
    """sqrt(|theta - theta'|^2 + W2(q, q')^2) on the product space."""
    if p1.theta.shape != p2.theta.shape:
        raise InvalidParameterError("parameter dimension mismatch")
    w2 = _w2_any(p1.law, p2.law)
    return float(np.sqrt(np.sum((p1.theta - p2.theta) ** 2) + w2 * w2))


def distance_to_optimum(p: ProductPoint, optimum_set) -> float:
    """Distance from p to the nearest point of a finite optimal set."""
    optimum_set = list(optimum_set)
    if not optimum_set:
        raise InvalidParameterError("optimum set is empty")
    return min(product_distance(p, q) for q in optimum_set)


def moments(cloud: ParticleCloud):
    """Empirical mean and unbiased covariance of a cloud.

    A single particle has no covariance estimate; N >= 2 clouds return
    whatever the data give, including an exactly zero matrix.
    """
    if cloud.n < 2:
        raise InsufficientParticlesError(
            "covariance needs at least two particles"
        )
    mean = cloud.particles.mean(axis=0)
    centered = cloud.particles - mean
    cov = centered.T @ centered / (cloud.n - 1)
    return mean, cov
