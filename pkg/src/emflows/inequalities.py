"""Trajectory checkers for the functional inequalities, and the rules that
propagate a certified gradient-growth constant through model wrappers.

The two inequalities, stated so that the reported margin must be >= 0:

* gradient growth (``xlsi``):   I(theta, q) - 2 lambda [F - F_star] >= 0
* distance transfer (``xt2i``): 2 [F - F_star] - lambda d((theta,q), opt)^2 >= 0

Both quantify over the whole product space; a trajectory check can only
ever report "no violation found along the trajectory", never that the
inequality holds globally, and the reports say so.

Checks run only on exact traces.  Particle traces carry proxy KL/Fisher
values whose violations would be uninterpretable, so they are refused
outright rather than checked approximately.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .algorithms import Trace
from .errors import (
    InvalidParameterError,
    NoCertificateError,
    NotLogConcaveError,
    UnsupportedModelError,
    UnsupportedRepresentationError,
    UnsupportedSchemeError,
)
from .models import ModelSpec, concavity_from_hessian

DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class InequalityReport:
    """Per-iterate margins of one inequality along one trace."""

    name: str
    margins: np.ndarray
    min_margin: float
    lambda_used: Optional[float]
    tolerance: float
    violated_at: Optional[int]
    note: str = "no violation found along trajectory"

    @property
    def ok(self) -> bool:
        return self.violated_at is None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "min_margin": self.min_margin,
            "lambda": self.lambda_used,
            "tolerance": self.tolerance,
            "violated_at": self.violated_at,
            "ok": self.ok,
            "note": self.note if self.ok else "violated",
        }


def _report(name, margins, lam, tol) -> InequalityReport:
    margins = np.asarray(margins, dtype=np.float64)
    bad = np.nonzero(margins < -tol)[0]
    return InequalityReport(
        name=name,
        margins=margins,
        min_margin=float(margins.min()) if margins.size else 0.0,
        lambda_used=lam,
        tolerance=tol,
        violated_at=int(bad[0]) if bad.size else None,
    )


def _require_exact(trace: Trace) -> None:
    if trace.proxy or not trace.exact:
        raise UnsupportedRepresentationError(
            "inequality checks need exact traces; particle traces carry"
            " proxy energies and are refused"
        )


def bakry_emery_lambda(model: ModelSpec) -> float:
    """Strong-concavity constant of the complete log-likelihood.

    For constant-Hessian models this is the smallest eigenvalue of the
    negated Hessian; otherwise the model's declared constant is used.
    """
    if model.hessian is not None:
        lam = concavity_from_hessian(model.hessian)
        if lam <= 0:
            raise NotLogConcaveError(
                f"{model.label}: negated Hessian has smallest eigenvalue {lam:g}"
            )
        return lam
    if model.strong_concavity is not None:
        return float(model.strong_concavity)
    raise UnsupportedModelError(
        f"{model.label}: no constant Hessian and no declared concavity"
    )


def contraction_lambda(lam: float, lipschitz_t: float) -> float:
    """Constant surviving an L_T-Lipschitz pushforward: lambda / max(1, L_T^2)."""
    if lam <= 0 or lipschitz_t <= 0:
        raise InvalidParameterError("constants must be positive")
    return lam / max(1.0, lipschitz_t ** 2)


def perturbation_lambda(lam: float, c: float, b: float) -> float:
    """Constant surviving a c-bounded completion change: (lambda - c^2 b) / (2 c^2).

    May be <= 0, in which case the certificate is vacuous; callers decide
    whether that is an error.
    """
    if c <= 1.0:
        raise InvalidParameterError("perturbation bound c must exceed 1")
    if lam <= 0 or b < 0:
        raise InvalidParameterError("need lambda > 0 and b >= 0")
    return (lam - c * c * b) / (2.0 * c * c)


def certified_lambda(model: ModelSpec):
    """Walk the model's construction chain and compose a certified constant.

    Returns (lambda, provenance) where provenance is a list of
    human-readable derivation steps.  Raises ``NoCertificateError`` when
    the chain is empty, contains an unknown link, or composes to a
    vacuous (nonpositive) constant.
    """
    chain = model.xlsi_chain
    if not chain:
        raise NoCertificateError(f"{model.label}: no certification chain")
    lam = None
    trail = []
    for link in chain:
        kind = link[0]
        if kind in ("bakry_emery", "declared"):
            lam = float(link[1])
            if lam <= 0:
                raise NoCertificateError(
                    f"{model.label}: base constant {lam:g} is not positive"
                )
            trail.append(f"{kind}: lambda = {lam:.12g}")
        elif kind == "contraction":
            if lam is None:
                raise NoCertificateError("contraction link before a base constant")
            lip_t = float(link[1])
            lam = contraction_lambda(lam, lip_t)
            trail.append(
                f"contraction: L_T = {lip_t:.12g} -> lambda = {lam:.12g}"
            )
        elif kind == "perturbation":
            if lam is None:
                raise NoCertificateError("perturbation link before a base constant")
            c = float(link[1])
            lam = perturbation_lambda(lam, c, 0.0)
            trail.append(
                f"perturbation: c = {c:.12g}, b = 0 -> lambda = {lam:.12g}"
            )
            if lam <= 0:
                raise NoCertificateError(
                    f"{model.label}: perturbation makes the certificate vacuous"
                )
        else:
            raise NoCertificateError(f"{model.label}: unknown chain link '{kind}'")
    return lam, trail


def check_xlsi(
    model: ModelSpec, trace: Trace, lam: float, tol: float = DEFAULT_TOL
) -> InequalityReport:
    """Margins I_k - 2 lambda gap_k along an exact trace."""
    _require_exact(trace)
    if lam <= 0:
        raise InvalidParameterError("lambda must be positive")
    margins = trace.fishers - 2.0 * lam * trace.gaps
    return _report("xlsi", margins, lam, tol)


def check_xt2i(
    model: ModelSpec, trace: Trace, lam: float, tol: float = DEFAULT_TOL
) -> InequalityReport:
    """Margins 2 gap_k - lambda dist_k^2 along an exact trace."""
    _require_exact(trace)
    if lam <= 0:
        raise InvalidParameterError("lambda must be positive")
    dists = trace.dists
    if not np.all(np.isfinite(dists)):
        raise UnsupportedRepresentationError(
            "trace has no distance-to-optimum values"
        )
    margins = 2.0 * trace.gaps - lam * dists ** 2
    return _report("xt2i", margins, lam, tol)


def check_descent(
    model: ModelSpec, trace: Trace, tol: float = 1e-9
) -> InequalityReport:
    """Per-step margins of the parameter-update decrease bound for exact EM:

        [F(theta_k, q_k) - F(theta_{k+1}, q_k)] - I(theta_k, q_k) / (2 L_theta)
    """
    _require_exact(trace)
    if trace.scheme != "em":
        raise UnsupportedSchemeError(
            f"descent check applies to exact EM traces, not '{trace.scheme}'"
        )
    mid = trace.mid_gaps
    if len(trace.records) > 1 and not np.all(np.isfinite(mid[1:])):
        raise UnsupportedSchemeError("trace lacks the mid-step free energies")
    gaps = trace.gaps
    fishers = trace.fishers
    decrease = gaps[:-1] - mid[1:]
    margins = decrease - fishers[:-1] / (2.0 * model.lipschitz_theta)
    return _report("descent", margins, None, tol)


def check_monotonicity(
    model: ModelSpec, trace: Trace, tol: float = 1e-10
) -> InequalityReport:
    """The two-sided decrease chain of exact EM:

        F(theta_{k+1}, q_{k+1}) <= F(theta_{k+1}, q_k) <= F(theta_k, q_k).

    Margins alternate (parameter-update decrease, law-update decrease).
    """
    _require_exact(trace)
    if trace.scheme != "em":
        raise UnsupportedSchemeError(
            f"monotonicity check applies to exact EM traces, not '{trace.scheme}'"
        )
    mid = trace.mid_gaps
    gaps = trace.gaps
    margins = np.empty(2 * (len(gaps) - 1))
    margins[0::2] = gaps[:-1] - mid[1:]
    margins[1::2] = mid[1:] - gaps[1:]
    return _report("monotonicity", margins, None, tol)
