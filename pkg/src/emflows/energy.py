"""Free energy and extended Fisher information.

The free energy of a pair (theta, q) is int log(q/rho_theta) dq.  Every
bound in this package is stated for the gap F - F_star, which decomposes
as

    gap = KL(q || pi_theta) + [log Z_star - log Z_theta],

so the gap is computed from that identity and never from an absolute
free energy (the absolute value is reported only when the Gaussian
differential entropy makes it well defined).

The extended Fisher information is the squared gradient norm of F in the
product Euclidean x Wasserstein geometry:

    I(theta, q) = |int grad_theta l dq|^2 + int |grad_x log(q/rho_theta)|^2 dq,

the second term being the relative Fisher information of q with respect
to rho_theta.  For Gaussian q and affine model scores both terms are
exact moments of affine functions; otherwise a trapezoid quadrature
fallback is used (d_x <= 2).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    InsufficientParticlesError,
    UnsupportedModelError,
    UnsupportedRepresentationError,
)
from .laws import GaussianLaw, ParticleCloud, ProductPoint, kl_gaussian, moments
from .models import ModelSpec
from .quadrature import GRID_POINTS, grid_interval, integrate_2d


@dataclass(frozen=True)
class EnergyReport:
    """Per-point energy diagnostics.

    ``gap = kl_term + logz_term`` and
    ``fisher = theta_grad_norm_sq + relative_fisher`` hold by
    construction.  ``proxy`` marks particle-cloud evaluations whose
    KL/Fisher terms go through a moment-matched Gaussian stand-in.
    """

    gap: float
    kl_term: float
    logz_term: float
    fisher: float
    theta_grad_norm_sq: float
    relative_fisher: float
    free_energy: Optional[float] = None
    proxy: bool = False


def _require_gaussian(point: ProductPoint) -> GaussianLaw:
    if not isinstance(point.law, GaussianLaw):
        raise UnsupportedRepresentationError(
            "this operation needs an exact Gaussian law; use the particle"
            " estimator for clouds"
        )
    return point.law


def _log_z_star(model: ModelSpec) -> float:
    cf = model.closed_forms
    if cf is None or cf.log_marginal is None or cf.mle is None:
        raise UnsupportedModelError(
            f"{model.label}: needs log_marginal and mle closed forms"
        )
    return float(cf.log_marginal(np.atleast_1d(cf.mle())))


def _gauss_logpdf_batch(xs: np.ndarray, law: GaussianLaw) -> np.ndarray:
    d = law.dim
    diff = xs - law.mean
    sol = np.linalg.solve(law.cov, diff.T).T
    _, logdet = np.linalg.slogdet(law.cov)
    return -0.5 * (d * np.log(2 * np.pi) + logdet + np.einsum("ij,ij->i", diff, sol))


def _quad_nodes(model: ModelSpec, theta, law: GaussianLaw):
    """Integration window under q, widened by the model's posterior window."""
    if law.dim == 1:
        s = float(np.sqrt(law.cov[0, 0]))
        lo, hi = law.mean[0] - 8.0 * s, law.mean[0] + 8.0 * s
        if model.posterior_window is not None:
            wlo, whi = model.posterior_window(theta)
            lo, hi = min(lo, wlo), max(hi, whi)
        xs, dx = grid_interval(lo, hi, GRID_POINTS)
        return xs[:, None], dx
    raise UnsupportedRepresentationError("quadrature nodes are 1D here")


def quad_free_energy_gap(model: ModelSpec, theta, law: GaussianLaw):
    """(gap, kl, logz) by trapezoid quadrature; exact-path oracle, and the
    evaluation route for models without a Gaussian posterior (d_x <= 2)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    logz_star = _log_z_star(model)
    logz_theta = float(model.closed_forms.log_marginal(theta))
    if law.dim == 1:
        xs, dx = _quad_nodes(model, theta, law)
        logq = _gauss_logpdf_batch(xs, law)
        logrho = model.eval_log_rho(theta, xs)
        q = np.exp(logq)
        free = float(np.trapezoid(q * (logq - logrho), dx=dx))
    elif law.dim == 2:
        sigmas = np.sqrt(np.diag(law.cov))

        def integrand(pts):
            logq = _gauss_logpdf_batch(pts, law)
            logrho = model.eval_log_rho(theta, pts)
            return np.exp(logq) * (logq - logrho)

        free = integrate_2d(integrand, law.mean, sigmas)
    else:
        raise UnsupportedRepresentationError("quadrature energies need d_x <= 2")
    gap = free + logz_star
    logz = logz_star - logz_theta
    return gap, gap - logz, logz


def quad_extended_fisher(model: ModelSpec, theta, law: GaussianLaw):
    """(fisher, theta term, relative Fisher) by trapezoid quadrature."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    prec = np.linalg.inv(law.cov)

    def score_diff_sq(pts):
        score_q = -(pts - law.mean) @ prec.T
        diff = score_q - model.eval_grad_x(theta, pts)
        return np.einsum("ij,ij->i", diff, diff)

    if law.dim == 1:
        xs, dx = _quad_nodes(model, theta, law)
        q = np.exp(_gauss_logpdf_batch(xs, law))
        rf = float(np.trapezoid(q * score_diff_sq(xs), dx=dx))
        mean_gt = np.trapezoid(model.eval_grad_theta(theta, xs) * q[:, None], dx=dx, axis=0)
    elif law.dim == 2:
        sigmas = np.sqrt(np.diag(law.cov))

        def rf_integrand(pts):
            return np.exp(_gauss_logpdf_batch(pts, law)) * score_diff_sq(pts)

        rf = integrate_2d(rf_integrand, law.mean, sigmas)
        mean_gt = np.array([
            integrate_2d(
                lambda pts, j=j: np.exp(_gauss_logpdf_batch(pts, law))
                * model.eval_grad_theta(theta, pts)[:, j],
                law.mean,
                sigmas,
            )
            for j in range(model.d_theta)
        ])
    else:
        raise UnsupportedRepresentationError("quadrature energies need d_x <= 2")
    tgns = float(mean_gt @ mean_gt)
    return tgns + rf, tgns, rf


def _closed_form_ready(model: ModelSpec) -> bool:
    cf = model.closed_forms
    return (
        model.grad_affine
        and cf is not None
        and cf.exact_posterior is not None
        and cf.log_marginal is not None
        and cf.mle is not None
    )


def free_energy_gap(model: ModelSpec, point: ProductPoint):
    """(gap, kl_term, logz_term) at a Gaussian point.

    Closed form when the model has a Gaussian posterior; quadrature
    otherwise (d_x <= 2 with log_marginal and mle available).
    """
    law = _require_gaussian(point)
    theta = point.theta
    if _closed_form_ready(model):
        cf = model.closed_forms
        kl = kl_gaussian(law, cf.exact_posterior(theta))
        logz = _log_z_star(model) - float(cf.log_marginal(theta))
        return kl + logz, kl, logz
    return quad_free_energy_gap(model, theta, law)


def extended_fisher(model: ModelSpec, point: ProductPoint):
    """(fisher, theta_grad_norm_sq, relative_fisher) at a Gaussian point."""
    law = _require_gaussian(point)
    theta = point.theta
    if model.grad_affine:
        mean_gt = model.mean_grad_theta(theta, law)
        tgns = float(mean_gt @ mean_gt)
        a, b = model.x_gradient_affine(theta)
        prec = np.linalg.inv(law.cov)
        mat = -(prec + a)
        vec = prec @ law.mean - b
        at_mean = mat @ law.mean + vec
        rf = float(at_mean @ at_mean) + float(np.trace(mat.T @ mat @ law.cov))
        return tgns + rf, tgns, rf
    return quad_extended_fisher(model, theta, law)


def _absolute_free_energy(model: ModelSpec, theta, law: GaussianLaw) -> Optional[float]:
    """int q log q - int l dq, exact for Gaussian q on quadratic models."""
    if not model.grad_affine:
        return None
    d = law.dim
    _, logdet = np.linalg.slogdet(law.cov)
    entropy = 0.5 * (d * (1.0 + np.log(2 * np.pi)) + logdet)
    h_xx = model.hessian[model.d_theta:, model.d_theta:]
    mean_ll = float(model.log_rho(theta, law.mean)) + 0.5 * float(
        np.trace(h_xx @ law.cov)
    )
    return float(-entropy - mean_ll)


def energy_report(model: ModelSpec, point: ProductPoint) -> EnergyReport:
    """Full exact-path report at a Gaussian point."""
    gap, kl, logz = free_energy_gap(model, point)
    fisher, tgns, rf = extended_fisher(model, point)
    law = point.law
    return EnergyReport(
        gap=gap,
        kl_term=kl,
        logz_term=logz,
        fisher=fisher,
        theta_grad_norm_sq=tgns,
        relative_fisher=rf,
        free_energy=_absolute_free_energy(model, point.theta, law),
        proxy=False,
    )


def particle_energy_estimates(
    model: ModelSpec, theta, cloud: ParticleCloud
) -> EnergyReport:
    """Diagnostics for a particle cloud.

    The parameter-gradient term is the exact empirical average; the KL
    and relative-Fisher terms are computed against the moment-matched
    Gaussian stand-in of the cloud, hence ``proxy=True``.  The log-Z term
    is exact.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    mean, cov = moments(cloud)
    if np.linalg.eigvalsh(cov).min() <= 0:
        raise InsufficientParticlesError(
            "cloud covariance is degenerate; Gaussian stand-in undefined"
        )
    proxy_law = GaussianLaw(mean, cov)
    grads = model.eval_grad_theta(theta, cloud.particles)
    mean_grad = grads.mean(axis=0)
    tgns = float(mean_grad @ mean_grad)

    cf = model.closed_forms
    if not _closed_form_ready(model):
        raise UnsupportedModelError(
            f"{model.label}: particle diagnostics need Gaussian closed forms"
        )
    kl = kl_gaussian(proxy_law, cf.exact_posterior(theta))
    logz = _log_z_star(model) - float(cf.log_marginal(theta))
    _, _, rf = extended_fisher(model, ProductPoint(theta, proxy_law))
    return EnergyReport(
        gap=kl + logz,
        kl_term=kl,
        logz_term=logz,
        fisher=tgns + rf,
        theta_grad_norm_sq=tgns,
        relative_fisher=rf,
        free_energy=None,
        proxy=True,
    )
