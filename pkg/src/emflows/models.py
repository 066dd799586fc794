"""Latent-variable model contract and the built-in Gaussian families.

A model is the complete likelihood rho_theta(x) = exp(l(theta; x)) on
R^{d_theta} x R^{d_x}, together with its gradients, smoothness constants
and (when available) closed forms: the exact posterior pi_theta, the
exact maximizer of theta -> int l(theta; x) q(dx) given q's moments, the
log marginal log Z_theta, the marginal maximizer, and the stationary
point of l.

Three constructors are provided:

* ``make_conjugate_1d`` - a scalar observation with a Gaussian prior on
  the latent mean; every closed form is available, which makes it the
  verification workhorse.
* ``make_hierarchical`` - m conditionally independent blocks
  Y_i = C_i X_i + U_i, X_i = D theta + V_i with Gaussian noise.
* ``pushforward_model`` / ``perturbed_model`` - wrappers that change the
  completion (the posterior family) while preserving the marginal
  likelihood, used to exercise the constant-propagation rules.

Smoothness constants are stored, never estimated: for the Gaussian
families they are operator norms of constant Hessian blocks, and the
strong-concavity constant is the smallest eigenvalue of the negated
Hessian.  Estimating them from samples would silently weaken every
downstream bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateModelError,
    InvalidParameterError,
    UnsupportedModelError,
)
from .laws import GaussianLaw, ProductPoint
from .quadrature import GRID_POINTS, grid_interval


@dataclass(frozen=True)
class ClosedForms:
    """Optional exact operations a model family may provide.

    exact_posterior: theta -> GaussianLaw, the posterior pi_theta.
    exact_m_step: (mean, cov) of q -> argmax_theta int l(theta;x) q(dx).
    log_marginal: theta -> log Z_theta.
    mle: () -> the marginal maximizer.
    stationary_point: () -> (theta, x) with grad l = 0.
    """

    exact_posterior: Optional[Callable] = None
    exact_m_step: Optional[Callable] = None
    log_marginal: Optional[Callable] = None
    mle: Optional[Callable] = None
    stationary_point: Optional[Callable] = None


@dataclass(frozen=True)
class ModelSpec:
    """A latent-variable model with gradients and smoothness constants.

    ``hessian`` is the full constant Hessian of l in (theta, x) when the
    model is quadratic (both built-in families); it powers exact
    Lipschitz/concavity constants and affine-gradient fast paths.
    ``xlsi_chain`` records how a gradient-growth constant is certified:
    a base entry ('bakry_emery', lam) or ('declared', lam) followed by
    ('contraction', L_T) / ('perturbation', c) wrapper entries.
    """

    d_theta: int
    d_x: int
    log_rho: Callable
    grad_theta: Callable
    grad_x: Callable
    lipschitz_theta: float
    lipschitz_x: float
    strong_concavity: Optional[float] = None
    closed_forms: Optional[ClosedForms] = None
    hessian: Optional[np.ndarray] = None
    label: str = "model"
    xlsi_chain: tuple = ()
    posterior_window: Optional[Callable] = None  # theta -> (lo, hi), d_x = 1
    log_rho_batch: Optional[Callable] = None     # (theta, (m,d_x)) -> (m,)
    grad_theta_batch: Optional[Callable] = None  # (theta, (m,d_x)) -> (m,d_theta)
    grad_x_batch: Optional[Callable] = None      # (theta, (m,d_x)) -> (m,d_x)

    def __post_init__(self):
        if self.d_theta < 1 or self.d_x < 1:
            raise InvalidParameterError("dimensions must be positive")
        if self.lipschitz_theta <= 0 or self.lipschitz_x <= 0:
            raise InvalidParameterError("Lipschitz constants must be positive")
        if self.strong_concavity is not None:
            lam = self.strong_concavity
            if lam <= 0:
                raise InvalidParameterError("strong concavity must be positive")
            if lam > min(self.lipschitz_theta, self.lipschitz_x) * (1 + 1e-12):
                raise InvalidParameterError(
                    "strong concavity exceeds min(L_theta, L_x)"
                )
        if self.hessian is not None:
            h = np.asarray(self.hessian, dtype=np.float64)
            n = self.d_theta + self.d_x
            if h.shape != (n, n) or np.linalg.norm(h - h.T) > 1e-10 * (
                1 + np.linalg.norm(h)
            ):
                raise InvalidParameterError("hessian must be symmetric (d+d)x(d+d)")
            object.__setattr__(self, "hessian", h)

    @property
    def lipschitz(self) -> float:
        """L = max(L_theta, L_x); the full gradient is L-Lipschitz."""
        return max(self.lipschitz_theta, self.lipschitz_x)

    @property
    def grad_affine(self) -> bool:
        """True when grad l is affine in (theta, x) (constant Hessian)."""
        return self.hessian is not None

    def x_gradient_affine(self, theta):
        """(A, b) with grad_x l(theta; x) = A x + b for constant-Hessian models."""
        if self.hessian is None:
            raise UnsupportedModelError(
                f"{self.label}: x-gradient is not affine"
            )
        a = self.hessian[self.d_theta:, self.d_theta:]
        b = np.asarray(self.grad_x(theta, np.zeros(self.d_x)), dtype=np.float64)
        return a, b

    def mean_grad_theta(self, theta, law: GaussianLaw):
        """int grad_theta l(theta; x) q(dx) for Gaussian q, exact for affine
        gradients (the integrand is evaluated at the mean)."""
        if self.hessian is None:
            raise UnsupportedModelError(
                f"{self.label}: averaged parameter gradient needs an affine gradient"
            )
        return np.asarray(self.grad_theta(theta, law.mean), dtype=np.float64)

    def eval_log_rho(self, theta, xs: np.ndarray) -> np.ndarray:
        if self.log_rho_batch is not None:
            return np.asarray(self.log_rho_batch(theta, xs), dtype=np.float64)
        return np.array([self.log_rho(theta, x) for x in xs])

    def eval_grad_theta(self, theta, xs: np.ndarray) -> np.ndarray:
        if self.grad_theta_batch is not None:
            return np.asarray(self.grad_theta_batch(theta, xs), dtype=np.float64)
        return np.array([self.grad_theta(theta, x) for x in xs])

    def eval_grad_x(self, theta, xs: np.ndarray) -> np.ndarray:
        if self.grad_x_batch is not None:
            return np.asarray(self.grad_x_batch(theta, xs), dtype=np.float64)
        return np.array([self.grad_x(theta, x) for x in xs])

    def optimum_points(self):
        """The optimal set [(theta_star, pi_{theta_star})] when closed forms
        provide it (a singleton under strong concavity)."""
        cf = self.closed_forms
        if cf is None or cf.mle is None or cf.exact_posterior is None:
            raise UnsupportedModelError(
                f"{self.label}: optimum requires mle and exact_posterior"
            )
        theta_star = np.atleast_1d(np.asarray(cf.mle(), dtype=np.float64))
        return [ProductPoint(theta_star, cf.exact_posterior(theta_star))]


def lipschitz_from_hessian(hessian: np.ndarray, d_theta: int):
    """(L_theta, L_x) as operator norms of the Hessian's column blocks."""
    h = np.asarray(hessian, dtype=np.float64)
    l_theta = float(np.linalg.norm(h[:, :d_theta], 2))
    l_x = float(np.linalg.norm(h[:, d_theta:], 2))
    return l_theta, l_x


def concavity_from_hessian(hessian: np.ndarray) -> float:
    """Smallest eigenvalue of -H; positive iff l is strongly concave."""
    h = np.asarray(hessian, dtype=np.float64)
    return float(np.linalg.eigvalsh(-(h + h.T) / 2.0).min())


def _gauss_logpdf(x, mean, cov):
    x = np.atleast_1d(x)
    mean = np.atleast_1d(mean)
    cov = np.atleast_2d(cov)
    d = x.shape[-1]
    diff = x - mean
    sol = np.linalg.solve(cov, diff)
    _, logdet = np.linalg.slogdet(cov)
    return -0.5 * (d * np.log(2 * np.pi) + logdet + float(diff @ sol))


# ---------------------------------------------------------------------------
# Conjugate 1D family
# ---------------------------------------------------------------------------

def make_conjugate_1d(y: float, prior_var: float, obs_var: float) -> ModelSpec:
    """Scalar model rho_theta(x) = N(y; x, obs_var) N(x; theta, prior_var).

    Everything is closed-form: the posterior is Gaussian with precision
    1/obs_var + 1/prior_var, the marginal is N(y; theta,
    obs_var + prior_var), the marginal maximizer is theta = y, and the
    exact parameter update for a law q is theta = E_q[x].
    """
    if prior_var <= 0 or obs_var <= 0:
        raise InvalidParameterError("variances must be positive")
    y = float(y)
    vp, vo = float(prior_var), float(obs_var)

    hessian = np.array([[-1.0 / vp, 1.0 / vp],
                        [1.0 / vp, -1.0 / vo - 1.0 / vp]])
    l_theta, l_x = lipschitz_from_hessian(hessian, 1)
    lam = concavity_from_hessian(hessian)

    log_norm = -0.5 * (np.log(2 * np.pi * vo) + np.log(2 * np.pi * vp))

    def log_rho(theta, x):
        th = float(np.atleast_1d(theta)[0])
        xx = float(np.atleast_1d(x)[0])
        return (-0.5 * (y - xx) ** 2 / vo - 0.5 * (xx - th) ** 2 / vp + log_norm)

    def grad_theta(theta, x):
        th = float(np.atleast_1d(theta)[0])
        xx = float(np.atleast_1d(x)[0])
        return np.array([(xx - th) / vp])

    def grad_x(theta, x):
        th = float(np.atleast_1d(theta)[0])
        xx = float(np.atleast_1d(x)[0])
        return np.array([(y - xx) / vo + (th - xx) / vp])

    def log_rho_batch(theta, xs):
        th = float(np.atleast_1d(theta)[0])
        xx = np.asarray(xs, dtype=np.float64).reshape(-1)
        return -0.5 * (y - xx) ** 2 / vo - 0.5 * (xx - th) ** 2 / vp + log_norm

    def grad_theta_batch(theta, xs):
        th = float(np.atleast_1d(theta)[0])
        xx = np.asarray(xs, dtype=np.float64).reshape(-1)
        return ((xx - th) / vp)[:, None]

    def grad_x_batch(theta, xs):
        th = float(np.atleast_1d(theta)[0])
        xx = np.asarray(xs, dtype=np.float64).reshape(-1)
        return ((y - xx) / vo + (th - xx) / vp)[:, None]

    post_prec = 1.0 / vo + 1.0 / vp
    post_var = 1.0 / post_prec

    def exact_posterior(theta):
        th = float(np.atleast_1d(theta)[0])
        mean = post_var * (y / vo + th / vp)
        return GaussianLaw(np.array([mean]), np.array([[post_var]]))

    def exact_m_step(mean, cov=None):
        return np.atleast_1d(np.asarray(mean, dtype=np.float64)).copy()

    def log_marginal(theta):
        th = float(np.atleast_1d(theta)[0])
        return _gauss_logpdf(np.array([y]), np.array([th]),
                             np.array([[vo + vp]]))

    def mle():
        return np.array([y])

    def stationary_point():
        return np.array([y]), np.array([y])

    def posterior_window(theta):
        law = exact_posterior(theta)
        s = float(np.sqrt(law.cov[0, 0]))
        return law.mean[0] - 8.0 * s, law.mean[0] + 8.0 * s

    return ModelSpec(
        d_theta=1,
        d_x=1,
        log_rho=log_rho,
        grad_theta=grad_theta,
        grad_x=grad_x,
        lipschitz_theta=l_theta,
        lipschitz_x=l_x,
        strong_concavity=lam,
        closed_forms=ClosedForms(
            exact_posterior=exact_posterior,
            exact_m_step=exact_m_step,
            log_marginal=log_marginal,
            mle=mle,
            stationary_point=stationary_point,
        ),
        hessian=hessian,
        label=f"conjugate_1d(y={y:g}, prior_var={vp:g}, obs_var={vo:g})",
        xlsi_chain=(("bakry_emery", lam),),
        posterior_window=posterior_window,
        log_rho_batch=log_rho_batch,
        grad_theta_batch=grad_theta_batch,
        grad_x_batch=grad_x_batch,
    )


# ---------------------------------------------------------------------------
# Normal hierarchical family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HierarchicalModelConfig:
    """m Gaussian blocks: Y_i = C_i X_i + U_i, X_i = D theta + V_i.

    ``c_blocks`` holds the m observation matrices (block_dim x block_dim
    each), ``loading`` maps theta into one latent block (block_dim x
    d_theta, so that loading @ theta is an x_i-block vector), ``sigma_u``
    and ``sigma_v`` are the shared SPD noise covariances, and ``y`` is
    the stacked observation of length m * block_dim.
    """

    m: int
    c_blocks: Sequence[np.ndarray]
    loading: np.ndarray
    sigma_u: np.ndarray
    sigma_v: np.ndarray
    y: np.ndarray


def _require_spd(mat: np.ndarray, name: str) -> np.ndarray:
    m = np.asarray(mat, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidParameterError(f"{name} must be square")
    if np.linalg.norm(m - m.T) > 1e-10 * (1 + np.linalg.norm(m)):
        raise DegenerateModelError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(m).min() <= 0:
        raise DegenerateModelError(f"{name} is not positive definite")
    return m


def make_hierarchical(config: HierarchicalModelConfig) -> ModelSpec:
    """Build the Normal hierarchical model from its block configuration.

    The posterior factorizes over blocks with precision
    C_i' Su^{-1} C_i + Sv^{-1}; the marginal of block i is
    N(C_i D theta, C_i Sv C_i' + Su); the exact parameter update is
    theta = (m D' Sv^{-1} D)^{-1} D' Sv^{-1} sum_i E_q[x_i].
    """
    m = int(config.m)
    if m < 1:
        raise InvalidParameterError("block count m must be positive")
    sigma_u = _require_spd(config.sigma_u, "sigma_u")
    sigma_v = _require_spd(config.sigma_v, "sigma_v")
    d_b = sigma_v.shape[0]
    if sigma_u.shape != (d_b, d_b):
        raise InvalidParameterError("sigma_u and sigma_v block sizes differ")
    c_blocks = [np.asarray(c, dtype=np.float64) for c in config.c_blocks]
    if len(c_blocks) != m:
        raise InvalidParameterError(f"expected {m} observation matrices")
    for i, c in enumerate(c_blocks):
        if c.shape != (d_b, d_b):
            raise InvalidParameterError(f"observation matrix {i} has shape {c.shape}")
    loading = np.asarray(config.loading, dtype=np.float64)
    if loading.ndim != 2 or loading.shape[0] != d_b:
        raise InvalidParameterError(
            f"loading must be ({d_b}, d_theta), got {loading.shape}"
        )
    d_theta = loading.shape[1]
    d_x = m * d_b
    y = np.asarray(config.y, dtype=np.float64).reshape(-1)
    if y.shape[0] != d_x:
        raise InvalidParameterError(f"y must have length {d_x}, got {y.shape[0]}")

    su_inv = np.linalg.inv(sigma_u)
    sv_inv = np.linalg.inv(sigma_v)
    dsd = loading.T @ sv_inv @ loading  # D' Sv^{-1} D
    if np.linalg.matrix_rank(dsd, tol=1e-10 * max(1.0, np.linalg.norm(dsd))) < d_theta:
        raise DegenerateModelError("D' Sigma_v^{-1} D is singular")

    y_blocks = [y[i * d_b:(i + 1) * d_b] for i in range(m)]

    # Constant Hessian of l in (theta, x).
    n = d_theta + d_x
    hessian = np.zeros((n, n))
    hessian[:d_theta, :d_theta] = -m * dsd
    for i, c in enumerate(c_blocks):
        sl = slice(d_theta + i * d_b, d_theta + (i + 1) * d_b)
        hessian[:d_theta, sl] = loading.T @ sv_inv
        hessian[sl, :d_theta] = sv_inv @ loading
        hessian[sl, sl] = -(c.T @ su_inv @ c + sv_inv)

    l_theta, l_x = lipschitz_from_hessian(hessian, d_theta)
    lam = concavity_from_hessian(hessian)

    log_norm = -0.5 * m * (
        np.linalg.slogdet(2 * np.pi * sigma_u)[1]
        + np.linalg.slogdet(2 * np.pi * sigma_v)[1]
    )

    def _blocks(x):
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        return [x[i * d_b:(i + 1) * d_b] for i in range(m)]

    def log_rho(theta, x):
        th = np.asarray(theta, dtype=np.float64).reshape(-1)
        val = log_norm
        dth = loading @ th
        for i, xi in enumerate(_blocks(x)):
            ru = y_blocks[i] - c_blocks[i] @ xi
            rv = xi - dth
            val += -0.5 * float(ru @ su_inv @ ru) - 0.5 * float(rv @ sv_inv @ rv)
        return val

    def grad_theta(theta, x):
        th = np.asarray(theta, dtype=np.float64).reshape(-1)
        dth = loading @ th
        g = np.zeros(d_theta)
        for xi in _blocks(x):
            g += loading.T @ (sv_inv @ (xi - dth))
        return g

    def grad_x(theta, x):
        th = np.asarray(theta, dtype=np.float64).reshape(-1)
        dth = loading @ th
        g = np.zeros(d_x)
        for i, xi in enumerate(_blocks(x)):
            gu = c_blocks[i].T @ (su_inv @ (y_blocks[i] - c_blocks[i] @ xi))
            gv = sv_inv @ (xi - dth)
            g[i * d_b:(i + 1) * d_b] = gu - gv
        return g

    post_prec_blocks = [c.T @ su_inv @ c + sv_inv for c in c_blocks]
    post_cov_blocks = [np.linalg.inv(p) for p in post_prec_blocks]

    def exact_posterior(theta):
        th = np.asarray(theta, dtype=np.float64).reshape(-1)
        dth = loading @ th
        mean = np.zeros(d_x)
        cov = np.zeros((d_x, d_x))
        for i in range(m):
            rhs = c_blocks[i].T @ (su_inv @ y_blocks[i]) + sv_inv @ dth
            mean[i * d_b:(i + 1) * d_b] = post_cov_blocks[i] @ rhs
            cov[i * d_b:(i + 1) * d_b, i * d_b:(i + 1) * d_b] = post_cov_blocks[i]
        return GaussianLaw(mean, cov)

    def exact_m_step(mean, cov=None):
        mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        total = np.zeros(d_b)
        for i in range(m):
            total += mean[i * d_b:(i + 1) * d_b]
        return np.linalg.solve(m * dsd, loading.T @ (sv_inv @ total))

    marg_covs = [c @ sigma_v @ c.T + sigma_u for c in c_blocks]

    def log_marginal(theta):
        th = np.asarray(theta, dtype=np.float64).reshape(-1)
        dth = loading @ th
        val = 0.0
        for i in range(m):
            val += _gauss_logpdf(y_blocks[i], c_blocks[i] @ dth, marg_covs[i])
        return float(val)

    def mle():
        lhs = np.zeros((d_theta, d_theta))
        rhs = np.zeros(d_theta)
        for i in range(m):
            cd = c_blocks[i] @ loading
            s_inv_cd = np.linalg.solve(marg_covs[i], cd)
            lhs += cd.T @ s_inv_cd
            rhs += s_inv_cd.T @ y_blocks[i]
        if np.linalg.matrix_rank(lhs, tol=1e-10 * max(1.0, np.linalg.norm(lhs))) < d_theta:
            raise DegenerateModelError("marginal likelihood has no unique maximizer")
        return np.linalg.solve(lhs, rhs)

    def stationary_point():
        g0 = np.concatenate([grad_theta(np.zeros(d_theta), np.zeros(d_x)),
                             grad_x(np.zeros(d_theta), np.zeros(d_x))])
        z = np.linalg.solve(hessian, -g0)
        return z[:d_theta], z[d_theta:]

    def log_rho_batch(theta, xs):
        th = np.asarray(theta, dtype=np.float64).reshape(-1)
        xs = np.asarray(xs, dtype=np.float64).reshape(-1, d_x)
        dth = loading @ th
        val = np.full(xs.shape[0], log_norm)
        for i, c in enumerate(c_blocks):
            xi = xs[:, i * d_b:(i + 1) * d_b]
            ru = y_blocks[i] - xi @ c.T
            rv = xi - dth
            val += -0.5 * np.einsum("ij,ij->i", ru @ su_inv, ru)
            val += -0.5 * np.einsum("ij,ij->i", rv @ sv_inv, rv)
        return val

    def grad_theta_batch(theta, xs):
        th = np.asarray(theta, dtype=np.float64).reshape(-1)
        xs = np.asarray(xs, dtype=np.float64).reshape(-1, d_x)
        dth = loading @ th
        g = np.zeros((xs.shape[0], d_theta))
        for i in range(m):
            xi = xs[:, i * d_b:(i + 1) * d_b]
            g += (xi - dth) @ sv_inv @ loading
        return g

    def grad_x_batch(theta, xs):
        th = np.asarray(theta, dtype=np.float64).reshape(-1)
        xs = np.asarray(xs, dtype=np.float64).reshape(-1, d_x)
        dth = loading @ th
        g = np.empty_like(xs)
        for i, c in enumerate(c_blocks):
            xi = xs[:, i * d_b:(i + 1) * d_b]
            gu = (y_blocks[i] - xi @ c.T) @ su_inv @ c
            gv = (xi - dth) @ sv_inv
            g[:, i * d_b:(i + 1) * d_b] = gu - gv
        return g

    posterior_window = None
    if d_x == 1:
        def posterior_window(theta):  # noqa: F811 - only bound when 1D
            law = exact_posterior(theta)
            s = float(np.sqrt(law.cov[0, 0]))
            return law.mean[0] - 8.0 * s, law.mean[0] + 8.0 * s

    return ModelSpec(
        d_theta=d_theta,
        d_x=d_x,
        log_rho=log_rho,
        grad_theta=grad_theta,
        grad_x=grad_x,
        lipschitz_theta=l_theta,
        lipschitz_x=l_x,
        strong_concavity=lam if lam > 0 else None,
        closed_forms=ClosedForms(
            exact_posterior=exact_posterior,
            exact_m_step=exact_m_step,
            log_marginal=log_marginal,
            mle=mle,
            stationary_point=stationary_point,
        ),
        hessian=hessian,
        label=f"hierarchical(m={m}, block_dim={d_b}, d_theta={d_theta})",
        xlsi_chain=(("bakry_emery", lam),) if lam > 0 else (),
        posterior_window=posterior_window,
        log_rho_batch=log_rho_batch,
        grad_theta_batch=grad_theta_batch,
        grad_x_batch=grad_x_batch,
    )


# ---------------------------------------------------------------------------
# Completion-changing wrappers
# ---------------------------------------------------------------------------

def pushforward_model(model: ModelSpec, scale: np.ndarray, shift: np.ndarray) -> ModelSpec:
    """Model whose completion is the image of ``model``'s under T(x) = scale @ x + shift.

    The marginal likelihood is unchanged; densities transform as
    l~(theta; x) = l(theta; T^{-1}(x)) - log|det scale|, and Gaussian
    closed forms map through T.  Requires a constant-Hessian base so the
    transformed smoothness constants are exact.
    """
    a = np.atleast_2d(np.asarray(scale, dtype=np.float64))
    b = np.atleast_1d(np.asarray(shift, dtype=np.float64))
    d_x = model.d_x
    if a.shape != (d_x, d_x) or b.shape != (d_x,):
        raise InvalidParameterError("affine map dimensions do not match the model")
    sign, logdet = np.linalg.slogdet(a)
    if sign == 0 or not np.isfinite(logdet):
        raise InvalidParameterError("affine map must be invertible")
    if model.hessian is None:
        raise UnsupportedModelError(
            "pushforward requires a constant-Hessian base model"
        )
    a_inv = np.linalg.inv(a)
    log_jac = float(np.log(abs(np.linalg.det(a))))
    lip_t = float(np.linalg.norm(a, 2))

    d_theta = model.d_theta
    base_h = model.hessian
    hessian = np.zeros_like(base_h)
    hessian[:d_theta, :d_theta] = base_h[:d_theta, :d_theta]
    hessian[:d_theta, d_theta:] = base_h[:d_theta, d_theta:] @ a_inv
    hessian[d_theta:, :d_theta] = a_inv.T @ base_h[d_theta:, :d_theta]
    hessian[d_theta:, d_theta:] = a_inv.T @ base_h[d_theta:, d_theta:] @ a_inv
    l_theta, l_x = lipschitz_from_hessian(hessian, d_theta)
    lam = concavity_from_hessian(hessian)

    def pull(x):
        return a_inv @ (np.asarray(x, dtype=np.float64).reshape(-1) - b)

    def log_rho(theta, x):
        return model.log_rho(theta, pull(x)) - log_jac

    def grad_theta(theta, x):
        return model.grad_theta(theta, pull(x))

    def grad_x(theta, x):
        return a_inv.T @ np.asarray(model.grad_x(theta, pull(x)), dtype=np.float64)

    def pull_batch(xs):
        xs = np.asarray(xs, dtype=np.float64)
        return (xs - b) @ a_inv.T

    def log_rho_batch(theta, xs):
        return model.eval_log_rho(theta, pull_batch(xs)) - log_jac

    def grad_theta_batch(theta, xs):
        return model.eval_grad_theta(theta, pull_batch(xs))

    def grad_x_batch(theta, xs):
        return model.eval_grad_x(theta, pull_batch(xs)) @ a_inv

    base_cf = model.closed_forms
    cf = None
    if base_cf is not None:
        exact_posterior = None
        if base_cf.exact_posterior is not None:
            def exact_posterior(theta):
                law = base_cf.exact_posterior(theta)
                return GaussianLaw(a @ law.mean + b, a @ law.cov @ a.T)

        exact_m_step = None
        if base_cf.exact_m_step is not None:
            def exact_m_step(mean, cov=None):
                mean = np.asarray(mean, dtype=np.float64).reshape(-1)
                pulled_cov = None
                if cov is not None:
                    pulled_cov = a_inv @ np.asarray(cov, dtype=np.float64) @ a_inv.T
                return base_cf.exact_m_step(a_inv @ (mean - b), pulled_cov)

        stationary_point = None
        if base_cf.stationary_point is not None:
            def stationary_point():
                th, x = base_cf.stationary_point()
                return th, a @ np.asarray(x, dtype=np.float64) + b

        cf = ClosedForms(
            exact_posterior=exact_posterior,
            exact_m_step=exact_m_step,
            log_marginal=base_cf.log_marginal,
            mle=base_cf.mle,
            stationary_point=stationary_point,
        )

    posterior_window = None
    if d_x == 1 and cf is not None and cf.exact_posterior is not None:
        def posterior_window(theta):
            law = cf.exact_posterior(theta)
            s = float(np.sqrt(law.cov[0, 0]))
            return law.mean[0] - 8.0 * s, law.mean[0] + 8.0 * s

    return ModelSpec(
        d_theta=d_theta,
        d_x=d_x,
        log_rho=log_rho,
        grad_theta=grad_theta,
        grad_x=grad_x,
        lipschitz_theta=l_theta,
        lipschitz_x=l_x,
        strong_concavity=lam if lam > 0 else None,
        closed_forms=cf,
        hessian=hessian,
        label=f"pushforward(L_T={lip_t:g}) of {model.label}",
        xlsi_chain=model.xlsi_chain + (("contraction", lip_t),),
        posterior_window=posterior_window,
        log_rho_batch=log_rho_batch,
        grad_theta_batch=grad_theta_batch,
        grad_x_batch=grad_x_batch,
    )


def perturbed_model(
    model: ModelSpec,
    log_weight: Callable,
    bound: float,
    grad_log_weight: Optional[Callable] = None,
    weight_hessian_bound: float = 0.0,
) -> ModelSpec:
    """Model with completion pi~_theta proportional to pi_theta * exp(w(x)).

    ``log_weight`` w must be independent of theta and bounded in
    [-log(bound), log(bound)].  The density is renormalized per theta by
    quadrature so the marginal likelihood is untouched:

        l~(theta; x) = l(theta; x) + w(x) - log int exp(w) dpi_theta.

    Posterior-side closed forms are dropped (the completion is no longer
    Gaussian); log_marginal and mle survive since the marginal is the
    same.  Only d_x = 1 is supported (the renormalizer is a quadrature).
    """
    if bound <= 1.0:
        raise InvalidParameterError("perturbation bound must exceed 1")
    if model.d_x != 1:
        raise UnsupportedModelError("bounded perturbations are 1D only")
    base_cf = model.closed_forms
    if (
        base_cf is None
        or base_cf.exact_posterior is None
        or base_cf.log_marginal is None
    ):
        raise UnsupportedModelError(
            "perturbation needs the base posterior and marginal in closed form"
        )
    if model.posterior_window is None:
        raise UnsupportedModelError("perturbation needs a 1D integration window")
    log_c = float(np.log(bound))

    def w_vals(xs):
        return np.asarray(log_weight(np.asarray(xs, dtype=np.float64)), dtype=np.float64)

    def _check_bound(xs):
        vals = w_vals(xs)
        if np.max(np.abs(vals)) > log_c + 1e-12:
            raise InvalidParameterError(
                "log_weight exceeds the declared bound on the quadrature grid"
            )
        return vals

    if grad_log_weight is None:
        def grad_log_weight(xs):  # noqa: F811 - central difference fallback
            xs = np.asarray(xs, dtype=np.float64)
            e = 1e-6
            return (w_vals(xs + e) - w_vals(xs - e)) / (2 * e)

    def _grid(theta):
        lo, hi = model.posterior_window(theta)
        return grid_interval(lo, hi, GRID_POINTS)

    def _log_normalizer(theta):
        """log int exp(w) dpi_theta by trapezoid quadrature."""
        xs, dx = _grid(theta)
        vals = _check_bound(xs)
        log_post = model.eval_log_rho(theta, xs[:, None]) - base_cf.log_marginal(theta)
        return float(np.log(np.trapezoid(np.exp(log_post + vals), dx=dx)))

    def log_rho(theta, x):
        xx = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return float(
            model.log_rho(theta, xx) + w_vals(xx[:1])[0] - _log_normalizer(theta)
        )

    def grad_x(theta, x):
        xx = np.atleast_1d(np.asarray(x, dtype=np.float64))
        base = np.asarray(model.grad_x(theta, xx), dtype=np.float64)
        return base + grad_log_weight(xx[:1])

    def _mean_grads(theta):
        """E_{pi~}[grad_theta l] and E_pi[grad_theta l] by quadrature."""
        xs, dx = _grid(theta)
        vals = _check_bound(xs)
        log_post = model.eval_log_rho(theta, xs[:, None]) - base_cf.log_marginal(theta)
        post = np.exp(log_post)
        tilted = post * np.exp(vals)
        tilted /= np.trapezoid(tilted, dx=dx)
        grads = model.eval_grad_theta(theta, xs[:, None])
        mean_tilted = np.trapezoid(grads * tilted[:, None], dx=dx, axis=0)
        mean_base = np.trapezoid(grads * post[:, None], dx=dx, axis=0)
        return mean_tilted, mean_base

    def grad_theta(theta, x):
        xx = np.atleast_1d(np.asarray(x, dtype=np.float64))
        base = np.asarray(model.grad_theta(theta, xx), dtype=np.float64)
        mean_tilted, mean_base = _mean_grads(theta)
        return base - (mean_tilted - mean_base)

    def log_rho_batch(theta, xs):
        xs = np.asarray(xs, dtype=np.float64)
        flat = xs.reshape(-1)
        return (
            model.eval_log_rho(theta, xs)
            + w_vals(flat)
            - _log_normalizer(theta)
        )

    def grad_x_batch(theta, xs):
        xs = np.asarray(xs, dtype=np.float64)
        flat = xs.reshape(-1)
        return model.eval_grad_x(theta, xs) + grad_log_weight(flat)[:, None]

    def grad_theta_batch(theta, xs):
        xs = np.asarray(xs, dtype=np.float64)
        mean_tilted, mean_base = _mean_grads(theta)
        return model.eval_grad_theta(theta, xs) - (mean_tilted - mean_base)[None, :]

    if base_cf.mle is None:
        raise UnsupportedModelError("perturbation needs the base marginal maximizer")
    # Surface bound violations at construction, on the window around the
    # base optimum (each later quadrature re-validates its own grid).
    xs0, _ = _grid(np.atleast_1d(base_cf.mle()))
    _check_bound(xs0)

    cf = ClosedForms(
        log_marginal=base_cf.log_marginal,
        mle=base_cf.mle,
    )

    return ModelSpec(
        d_theta=model.d_theta,
        d_x=1,
        log_rho=log_rho,
        grad_theta=grad_theta,
        grad_x=grad_x,
        lipschitz_theta=model.lipschitz_theta,
        lipschitz_x=model.lipschitz_x + float(weight_hessian_bound),
        strong_concavity=None,
        closed_forms=cf,
        hessian=None,
        label=f"perturbed(c={bound:g}) of {model.label}",
        xlsi_chain=model.xlsi_chain + (("perturbation", float(bound)),),
        posterior_window=model.posterior_window,
        log_rho_batch=log_rho_batch,
        grad_theta_batch=grad_theta_batch,
        grad_x_batch=grad_x_batch,
    )
