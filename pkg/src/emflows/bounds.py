"""Theoretical convergence bounds as explicit curves over iterations.

Every curve is evaluated with constants computed from the model (never
fitted), so a trace lying below its curve is a genuine check of the
corresponding convergence statement.  Two metrics appear:

* ``free_energy_gap`` - the curve bounds F(theta_k, q_k) - F_star.
* ``lambda_d_squared`` - the curve bounds lambda * d((theta_k,q_k), opt)^2.

``gap_to_distance`` converts the former into the latter by doubling,
which is exactly how the distance statements follow from the gap
statements.

The bias constant is

    B = 8 L_x^2 d_x + C L_x / 2,

with C the second-moment constant assembled by :func:`constant_C`; for
the Langevin and alternating-gradient curves the exact-EM form of C is
reused and flagged in the curve's constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidConstantsError,
    InvalidParameterError,
    StepSizeError,
    UnsupportedModelError,
)
from .models import ModelSpec

_SLACK = 1e-12


@dataclass(frozen=True)
class BoundCurve:
    """An upper-bound sequence over k = 0..K plus the constants behind it."""

    scheme: str
    values: np.ndarray
    constants: dict
    metric: str  # "free_energy_gap" | "lambda_d_squared"


def _validate_positives(**named) -> None:
    for name, value in named.items():
        if not np.isfinite(value) or value <= 0:
            raise InvalidConstantsError(f"{name} must be positive, got {value!r}")


def em_bound_basic(lam: float, l_theta: float, gap0: float, k_max: int) -> BoundCurve:
    """Gap bound (1 - lambda/L_theta)^k * gap0 from the parameter-step
    decrease alone."""
    _validate_positives(lam=lam, l_theta=l_theta)
    if gap0 < 0:
        raise InvalidConstantsError("gap0 must be nonnegative")
    if lam >= l_theta:
        raise InvalidConstantsError(
            f"lambda = {lam:g} >= L_theta = {l_theta:g}: contraction factor"
            " would be nonpositive"
        )
    k = np.arange(k_max + 1)
    return BoundCurve(
        scheme="em",
        values=(1.0 - lam / l_theta) ** k * gap0,
        constants={"lambda": lam, "L_theta": l_theta, "gap0": gap0},
        metric="free_energy_gap",
    )


def constant_C(model: ModelSpec, lam: float, gap0: float) -> float:
    """Second-moment constant controlling how far iterates sit from the
    stationary point:

        C = L^2 [ int |x - x_dag|^2 dpi_star + |theta_star - theta_dag|^2 ]
            + (2 L^2 / lambda) * gap0.

    Single-maximizer models only (the supremum over the optimal set
    collapses); the posterior second moment is exact from the Gaussian
    closed form.
    """
    _validate_positives(lam=lam)
    if gap0 < 0:
        raise InvalidConstantsError("gap0 must be nonnegative")
    cf = model.closed_forms
    if (
        cf is None
        or cf.stationary_point is None
        or cf.mle is None
        or cf.exact_posterior is None
    ):
        raise UnsupportedModelError(
            f"{model.label}: constant C needs stationary_point, mle and posterior"
        )
    theta_dag, x_dag = cf.stationary_point()
    theta_star = np.atleast_1d(np.asarray(cf.mle(), dtype=np.float64))
    post = cf.exact_posterior(theta_star)
    second_moment = float(np.sum((post.mean - x_dag) ** 2) + np.trace(post.cov))
    l_sq = model.lipschitz ** 2
    return l_sq * (
        second_moment + float(np.sum((theta_star - theta_dag) ** 2))
    ) + (2.0 * l_sq / lam) * gap0


def _bias_b(l_x: float, d_x: int, c_const: float) -> float:
    return 8.0 * l_x * l_x * d_x + c_const * l_x / 2.0


def em_bound_sharp(
    lam: float,
    l_theta: float,
    l_x: float,
    d_x: int,
    c_const: float,
    gap0: float,
    k_max: int,
    grid_points: int = 200,
) -> BoundCurve:
    """Gap bound combining parameter and law-update decreases:

        min over h in {0} u grid(0, 1/(4 L_x)] of
            exp(-k lambda (h + 1/L_theta)) gap0
            + h^2 B / (1 - exp(-lambda (h + 1/L_theta)))

    The infimum over h is taken on a 1 + ``grid_points`` log grid; a grid
    minimum only over-estimates the true infimum, so the curve stays a
    valid upper bound.
    """
    _validate_positives(lam=lam, l_theta=l_theta, l_x=l_x, d_x=d_x)
    if gap0 < 0 or c_const < 0:
        raise InvalidConstantsError("gap0 and C must be nonnegative")
    b_const = _bias_b(l_x, d_x, c_const)
    hs = np.concatenate([[0.0], np.geomspace(1e-6, 1.0 / (4.0 * l_x), grid_points)])
    rate = lam * (hs + 1.0 / l_theta)  # (H,)
    k = np.arange(k_max + 1)[:, None]  # (K+1, 1)
    decay = np.exp(-k * rate[None, :]) * gap0
    bias = hs ** 2 * b_const / (1.0 - np.exp(-rate))
    values = (decay + bias[None, :]).min(axis=1)
    return BoundCurve(
        scheme="em",
        values=values,
        constants={
            "lambda": lam,
            "L_theta": l_theta,
            "L_x": l_x,
            "d_x": d_x,
            "C": c_const,
            "B": b_const,
            "gap0": gap0,
            "h_grid_points": len(hs),
        },
        metric="free_energy_gap",
    )


def first_order_bound(
    lam: float, h: float, gap0: float, k_max: int, l_theta: float
) -> BoundCurve:
    """Distance bound 2 exp(-k lambda h) gap0 for the gradient parameter
    update with step h <= 1/L_theta."""
    _validate_positives(lam=lam, l_theta=l_theta)
    if gap0 < 0:
        raise InvalidConstantsError("gap0 must be nonnegative")
    if h < 0 or h > 1.0 / l_theta + _SLACK:
        raise StepSizeError(
            f"first_order: step {h:g} outside (0, {1.0 / l_theta:g}]"
        )
    k = np.arange(k_max + 1)
    return BoundCurve(
        scheme="first_order_em",
        values=2.0 * np.exp(-k * lam * h) * gap0,
        constants={"lambda": lam, "h": h, "gap0": gap0, "L_theta": l_theta},
        metric="lambda_d_squared",
    )


def langevin_em_bound(
    lam: float,
    l_theta: float,
    l_x: float,
    d_x: int,
    c_const: float,
    h: float,
    gap0: float,
    k_max: int,
) -> BoundCurve:
    """Distance bound for the Langevin law update (h <= 1/(4 L_x)):

        2 exp(-k lambda h) gap0 + 2 h^2 B / (1 - exp(-lambda (h + 1/L_theta)))

    The h^2 term is a true bias: no admissible h makes it vanish while
    keeping a nonzero rate.  C is the exact-EM constant, reused here and
    recorded as such.
    """
    _validate_positives(lam=lam, l_theta=l_theta, l_x=l_x, d_x=d_x)
    if gap0 < 0 or c_const < 0:
        raise InvalidConstantsError("gap0 and C must be nonnegative")
    if h < 0 or h > 1.0 / (4.0 * l_x) + _SLACK:
        raise StepSizeError(
            f"langevin_em: step {h:g} outside [0, {1.0 / (4.0 * l_x):g}]"
        )
    b_const = _bias_b(l_x, d_x, c_const)
    asymptote = 2.0 * h * h * b_const / (1.0 - np.exp(-lam * (h + 1.0 / l_theta)))
    k = np.arange(k_max + 1)
    return BoundCurve(
        scheme="langevin_em",
        values=2.0 * np.exp(-k * lam * h) * gap0 + asymptote,
        constants={
            "lambda": lam,
            "L_theta": l_theta,
            "L_x": l_x,
            "d_x": d_x,
            "C": c_const,
            "B": b_const,
            "h": h,
            "gap0": gap0,
            "asymptote": float(asymptote),
            "em_path_C_reused": True,
        },
        metric="lambda_d_squared",
    )


def agd_bound(
    lam: float, l_const: float, d_x: int, h: float, gap0: float, k_max: int
) -> BoundCurve:
    """Distance bound for the two-sided gradient scheme (h <= 1/(4 L)):

        2 exp(-k lambda h) gap0 + 12 L^2 d_x h^2 / (1 - exp(-lambda h))

    For small h the asymptote scales like 12 L^2 d_x h / lambda.
    """
    _validate_positives(lam=lam, l_const=l_const, d_x=d_x)
    if gap0 < 0:
        raise InvalidConstantsError("gap0 must be nonnegative")
    if h <= 0 or h > 1.0 / (4.0 * l_const) + _SLACK:
        raise StepSizeError(
            f"agd: step {h:g} outside (0, {1.0 / (4.0 * l_const):g}]"
        )
    asymptote = 12.0 * l_const ** 2 * d_x * h * h / (1.0 - np.exp(-lam * h))
    k = np.arange(k_max + 1)
    return BoundCurve(
        scheme="agd",
        values=2.0 * np.exp(-k * lam * h) * gap0 + asymptote,
        constants={
            "lambda": lam,
            "L": l_const,
            "d_x": d_x,
            "h": h,
            "gap0": gap0,
            "asymptote": float(asymptote),
        },
        metric="lambda_d_squared",
    )


def gap_to_distance(curve: BoundCurve, lam: float) -> BoundCurve:
    """Convert a gap bound into a lambda*d^2 bound (multiply by two)."""
    if curve.metric != "free_energy_gap":
        raise InvalidParameterError(
            f"expected a free_energy_gap curve, got metric '{curve.metric}'"
        )
    _validate_positives(lam=lam)
    constants = dict(curve.constants)
    constants["lambda"] = lam
    return BoundCurve(
        scheme=curve.scheme,
        values=2.0 * curve.values,
        constants=constants,
        metric="lambda_d_squared",
    )
