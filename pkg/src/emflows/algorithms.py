"""The four iteration schemes and the instrumented runner.

Schemes (``scheme`` field of :class:`AlgorithmConfig`):

* ``em`` - exact maximization step on theta, exact posterior refresh.
* ``first_order_em`` - gradient ascent step on theta (step h <= 1/L_theta),
  exact posterior refresh.
* ``langevin_em`` - exact maximization step on theta, one unadjusted
  Langevin step on the law (h <= 1/(4 L_x)).
* ``agd`` - gradient step on theta, then the Langevin step at the new
  theta (h <= 1/(4 L), L = max(L_theta, L_x)).

On models whose latent score is affine the Langevin transition maps a
Gaussian law to a Gaussian law, so ``exact_gaussian`` runs propagate the
law in closed form with zero Monte Carlo error; that is what makes the
finite-step bias measurable at all.  ``particles`` runs use the
counter-based kernels, so a fixed seed gives bit-identical traces and
per-particle streams are independent of execution order.

Step-size preconditions are hard errors: every convergence statement
assumes them, and a silent violation would invalidate any comparison
against the bound curves.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import kernels
from .energy import energy_report, particle_energy_estimates
from .errors import (
    DivergenceError,
    InvalidParameterError,
    StepSizeError,
    UnsupportedModelError,
    UnsupportedRepresentationError,
)
from .laws import GaussianLaw, ParticleCloud, ProductPoint, distance_to_optimum, moments
from .models import ModelSpec

SCHEMES = ("em", "first_order_em", "langevin_em", "agd")
_SLACK = 1e-12


@dataclass
class AlgorithmConfig:
    """Everything a run needs besides the model."""

    scheme: str
    iterations: int
    init_theta: np.ndarray
    step_h: float = 0.0
    representation: str = "exact_gaussian"  # or "particles"
    particle_count: int = 0
    seed: int = 0
    init_law: Optional[GaussianLaw] = None  # None = posterior at init_theta

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidParameterError(f"unknown scheme '{self.scheme}'")
        if self.iterations < 0:
            raise InvalidParameterError("iterations must be >= 0")
        if self.representation not in ("exact_gaussian", "particles"):
            raise InvalidParameterError(
                f"unknown representation '{self.representation}'"
            )
        if self.representation == "particles" and self.particle_count < 2:
            raise InvalidParameterError("particle runs need particle_count >= 2")
        if self.step_h < 0:
            raise StepSizeError("step size must be nonnegative")


@dataclass
class IterateRecord:
    """State after iteration k (k = 0 is the post-initialization state).

    ``mid_gap`` on record k >= 1 is F(theta_k, q_{k-1}) - F_star: the
    free energy after the parameter update but before the law update.
    """

    k: int
    theta: np.ndarray
    law_mean: np.ndarray
    law_cov: np.ndarray
    gap: float
    fisher: float
    dist: float
    wall_nanos: int
    mid_gap: Optional[float] = None


@dataclass
class Trace:
    """A fully instrumented run."""

    scheme: str
    model_label: str
    records: List[IterateRecord]
    exact: bool
    proxy: bool
    config: dict = field(default_factory=dict)

    @property
    def gaps(self) -> np.ndarray:
        return np.array([r.gap for r in self.records])

    @property
    def fishers(self) -> np.ndarray:
        return np.array([r.fisher for r in self.records])

    @property
    def dists(self) -> np.ndarray:
        return np.array([r.dist for r in self.records])

    @property
    def mid_gaps(self) -> np.ndarray:
        return np.array(
            [np.nan if r.mid_gap is None else r.mid_gap for r in self.records]
        )

    @property
    def thetas(self) -> np.ndarray:
        return np.array([r.theta for r in self.records])


def _m_step(model: ModelSpec, mean, cov):
    cf = model.closed_forms
    if cf is None or cf.exact_m_step is None:
        raise UnsupportedModelError(
            f"{model.label}: no exact maximization step available"
        )
    return np.atleast_1d(np.asarray(cf.exact_m_step(mean, cov), dtype=np.float64))


def _posterior(model: ModelSpec, theta) -> GaussianLaw:
    cf = model.closed_forms
    if cf is None or cf.exact_posterior is None:
        raise UnsupportedModelError(
            f"{model.label}: no exact posterior available"
        )
    return cf.exact_posterior(theta)


def _check_step(scheme: str, h: float, model: ModelSpec) -> None:
    if scheme == "first_order_em":
        limit = 1.0 / model.lipschitz_theta
    elif scheme == "langevin_em":
        limit = 1.0 / (4.0 * model.lipschitz_x)
    elif scheme == "agd":
        limit = 1.0 / (4.0 * model.lipschitz)
    else:
        return
    if h > limit + _SLACK:
        raise StepSizeError(
            f"{scheme}: step {h:g} exceeds the stability limit {limit:g}"
        )


def _langevin_law(model: ModelSpec, theta, law: GaussianLaw, h: float) -> GaussianLaw:
    """Exact law of one Langevin step from a Gaussian under an affine score."""
    a, b = model.x_gradient_affine(theta)
    m = np.eye(model.d_x) + h * a
    mean = m @ law.mean + h * b
    cov = m @ law.cov @ m.T + 2.0 * h * np.eye(model.d_x)
    cov = (cov + cov.T) / 2.0
    return GaussianLaw(mean, cov)


def _langevin_cloud(
    model: ModelSpec, theta, cloud: ParticleCloud, h: float, seed: int, stream: int
) -> ParticleCloud:
    if model.grad_affine:
        a, b = model.x_gradient_affine(theta)
        new = kernels.langevin_affine_update(cloud.particles, a, b, h, seed, stream)
    else:
        g = model.eval_grad_x(theta, cloud.particles)
        z = kernels.standard_normals(seed, stream, cloud.n, cloud.dim)
        new = cloud.particles + h * g
        new += np.sqrt(2.0 * h) * z
    return ParticleCloud(new)


# ---------------------------------------------------------------------------
# Single steps (exact path unless stated otherwise)
# ---------------------------------------------------------------------------

def em_step(model: ModelSpec, theta, law: GaussianLaw):
    """One exact alternating-minimization step."""
    theta_next = _m_step(model, law.mean, law.cov)
    return theta_next, _posterior(model, theta_next)


def first_order_em_step(model: ModelSpec, theta, law: GaussianLaw, h: float):
    """Gradient step on theta, exact posterior refresh."""
    _check_step("first_order_em", h, model)
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    theta_next = theta + h * model.mean_grad_theta(theta, law)
    return theta_next, _posterior(model, theta_next)


def langevin_em_step_exact(model: ModelSpec, theta, law: GaussianLaw, h: float):
    """Exact maximization on theta, closed-form Langevin transition on the law."""
    _check_step("langevin_em", h, model)
    theta_next = _m_step(model, law.mean, law.cov)
    return theta_next, _langevin_law(model, theta_next, law, h)


def langevin_em_step_particles(
    model: ModelSpec,
    theta,
    cloud: ParticleCloud,
    h: float,
    seed: int,
    step_index: int,
):
    """Particle version; noise stream is (seed, step_index + 1, particle)."""
    _check_step("langevin_em", h, model)
    mean, cov = moments(cloud)
    theta_next = _m_step(model, mean, cov)
    return theta_next, _langevin_cloud(
        model, theta_next, cloud, h, seed, step_index + 1
    )


def agd_step(
    model: ModelSpec,
    theta,
    law,
    h: float,
    seed: int = 0,
    step_index: int = 0,
):
    """Gradient step on theta with the current law, then the Langevin step
    at the updated theta (the law update sees theta_{k+1})."""
    _check_step("agd", h, model)
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if isinstance(law, GaussianLaw):
        theta_next = theta + h * model.mean_grad_theta(theta, law)
        return theta_next, _langevin_law(model, theta_next, law, h)
    if isinstance(law, ParticleCloud):
        grads = model.eval_grad_theta(theta, law.particles)
        theta_next = theta + h * grads.mean(axis=0)
        return theta_next, _langevin_cloud(
            model, theta_next, law, h, seed, step_index + 1
        )
    raise UnsupportedRepresentationError(f"unsupported law type {type(law).__name__}")


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

def sample_gaussian_cloud(
    law: GaussianLaw, n: int, seed: int, stream: int = 0
) -> ParticleCloud:
    """n particles drawn from a Gaussian via the counter-based generator."""
    z = kernels.standard_normals(seed, stream, n, law.dim)
    chol = np.linalg.cholesky(law.cov)
    return ParticleCloud(law.mean + z @ chol.T)


def _optimum_or_none(model: ModelSpec):
    try:
        return model.optimum_points()
    except UnsupportedModelError:
        return None


def _finite_or_raise(k: int, **named) -> None:
    for name, value in named.items():
        if not np.all(np.isfinite(value)):
            raise DivergenceError(k, name)


def run(model: ModelSpec, config: AlgorithmConfig) -> Trace:
    """Run a scheme for K iterations and instrument every iterate.

    The trace has K + 1 records; record 0 is the initialized state,
    with the law set to the exact posterior at ``init_theta`` unless an
    explicit ``init_law`` is given.
    """
    k_iter = int(config.iterations)
    theta = np.atleast_1d(np.asarray(config.init_theta, dtype=np.float64))
    if theta.shape != (model.d_theta,):
        raise InvalidParameterError(
            f"init_theta must have shape ({model.d_theta},)"
        )
    h = float(config.step_h)
    if config.scheme != "em":
        _check_step(config.scheme, h, model)

    init_law = config.init_law
    if init_law is None:
        init_law = _posterior(model, theta)
    if init_law.dim != model.d_x:
        raise InvalidParameterError("init law dimension does not match the model")

    particles = config.representation == "particles"
    if particles and config.scheme in ("em", "first_order_em"):
        raise UnsupportedRepresentationError(
            f"{config.scheme} performs an exact law update; particle"
            " approximations of it are out of scope"
        )

    if particles:
        state = sample_gaussian_cloud(init_law, config.particle_count, config.seed, 0)
    else:
        state = init_law

    optimum = _optimum_or_none(model)
    records: List[IterateRecord] = []

    def instrument(k: int, theta_k, state_k, wall: int, mid_gap=None):
        if particles:
            rep = particle_energy_estimates(model, theta_k, state_k)
            mean, cov = moments(state_k)
        else:
            rep = energy_report(model, ProductPoint(theta_k, state_k))
            mean, cov = state_k.mean, state_k.cov
        if optimum is not None:
            try:
                dist = distance_to_optimum(ProductPoint(theta_k, state_k), optimum)
            except UnsupportedRepresentationError:
                dist = float("nan")
        else:
            dist = float("nan")
        _finite_or_raise(k, theta=theta_k, law_mean=mean, law_cov=cov,
                         gap=rep.gap, fisher=rep.fisher)
        records.append(
            IterateRecord(
                k=k,
                theta=np.array(theta_k, dtype=np.float64),
                law_mean=np.array(mean, dtype=np.float64),
                law_cov=np.array(cov, dtype=np.float64),
                gap=rep.gap,
                fisher=rep.fisher,
                dist=dist,
                wall_nanos=wall,
                mid_gap=mid_gap,
            )
        )

    t0 = time.perf_counter_ns()
    instrument(0, theta, state, time.perf_counter_ns() - t0)

    for k in range(k_iter):
        t0 = time.perf_counter_ns()
        # Overflow on a diverging run is reported as DivergenceError below,
        # not as numpy warnings or a failed law construction.
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                if particles:
                    if config.scheme == "langevin_em":
                        theta, state = langevin_em_step_particles(
                            model, theta, state, h, config.seed, k
                        )
                    else:
                        theta, state = agd_step(model, theta, state, h,
                                                config.seed, k)
                    mid_gap = None
                else:
                    law = state
                    if config.scheme == "em":
                        theta_next = _m_step(model, law.mean, law.cov)
                        state = _posterior(model, theta_next)
                    elif config.scheme == "first_order_em":
                        theta_next = theta + h * model.mean_grad_theta(theta, law)
                        state = _posterior(model, theta_next)
                    elif config.scheme == "langevin_em":
                        theta_next = _m_step(model, law.mean, law.cov)
                        state = _langevin_law(model, theta_next, law, h)
                    else:  # agd
                        theta_next = theta + h * model.mean_grad_theta(theta, law)
                        state = _langevin_law(model, theta_next, law, h)
                    mid = energy_report(model, ProductPoint(theta_next, law))
                    mid_gap = mid.gap
                    theta = theta_next
        except InvalidParameterError as exc:
            raise DivergenceError(k + 1, f"state ({exc})") from exc
        instrument(k + 1, theta, state, time.perf_counter_ns() - t0, mid_gap)

    return Trace(
        scheme=config.scheme,
        model_label=model.label,
        records=records,
        exact=not particles,
        proxy=particles,
        config={
            "scheme": config.scheme,
            "iterations": k_iter,
            "step_h": h,
            "representation": config.representation,
            "particle_count": config.particle_count,
            "seed": config.seed,
            "init_theta": [float(v) for v in np.atleast_1d(config.init_theta)],
        },
    )


def evaluate_points(model: ModelSpec, points, scheme: str = "evaluated") -> Trace:
    """Instrument a given sequence of Gaussian points for ``model``.

    The points need not come from an algorithm targeting this model;
    gradient-growth checks quantify over the whole product space, so any
    exactly-evaluated point sequence is a legitimate check set.  Useful
    for re-scoring a trace under a model with a different completion.
    """
    optimum = _optimum_or_none(model)
    records = []
    for k, p in enumerate(points):
        if not isinstance(p.law, GaussianLaw):
            raise UnsupportedRepresentationError("evaluate_points needs Gaussian laws")
        rep = energy_report(model, p)
        if optimum is not None:
            dist = distance_to_optimum(p, optimum)
        else:
            dist = float("nan")
        records.append(
            IterateRecord(
                k=k,
                theta=np.array(p.theta, dtype=np.float64),
                law_mean=np.array(p.law.mean, dtype=np.float64),
                law_cov=np.array(p.law.cov, dtype=np.float64),
                gap=rep.gap,
                fisher=rep.fisher,
                dist=dist,
                wall_nanos=0,
            )
        )
    return Trace(
        scheme=scheme,
        model_label=model.label,
        records=records,
        exact=True,
        proxy=False,
        config={"scheme": scheme, "iterations": len(records) - 1},
    )
