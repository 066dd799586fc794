"""Acceptance suite.

Each test is one acceptance criterion, run at its stated tolerance and
wall-clock budget, printing one PASS/FAIL line (run with ``pytest -s``
to see them).  Expected values are analytic or oracle-derived; nothing
here is fitted to the implementation's own output.
"""

import time
from contextlib import contextmanager
from functools import lru_cache

import numpy as np
import pytest

import emflows as ef
from emflows.bounds import constant_C, em_bound_basic, em_bound_sharp, agd_bound, langevin_em_bound

from conftest import law1, random_spd
from test_algorithms import langevin_mean_se, langevin_var_se

LAMBDA_CONJ = (3 - np.sqrt(5)) / 2


@contextmanager
def criterion(number, name, budget_seconds):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number} {name}: FAIL "
              f"({time.perf_counter() - start:.2f} s)")
        raise
    elapsed = time.perf_counter() - start
    status = "PASS" if elapsed < budget_seconds else "FAIL (over budget)"
    print(f"ACCEPTANCE {number} {name}: {status} ({elapsed:.2f} s)")
    assert elapsed < budget_seconds, f"runtime {elapsed:.2f}s over {budget_seconds}s"


@lru_cache(maxsize=1)
def conjugate_model():
    return ef.make_conjugate_1d(0.0, 1.0, 1.0)


@lru_cache(maxsize=1)
def conjugate_em_trace():
    return ef.run(conjugate_model(),
                  ef.AlgorithmConfig(scheme="em", iterations=20, init_theta=[1.0]))


def random_small_hierarchical(rng):
    """Random well-posed model with d_x <= 4 and m <= 4."""
    m = int(rng.integers(1, 5))
    d_b = int(rng.integers(1, 4 // m + 1))
    d_theta = int(rng.integers(1, d_b + 1))
    c_blocks = []
    for _ in range(m):
        c = rng.standard_normal((d_b, d_b))
        c += np.eye(d_b) * 2.0 * (1.0 if np.linalg.det(c) >= 0 else -1.0)
        c_blocks.append(c)
    loading = rng.standard_normal((d_b, d_theta))
    u, _, vt = np.linalg.svd(loading, full_matrices=False)
    loading = u @ vt + 0.1 * rng.standard_normal((d_b, d_theta))
    return ef.make_hierarchical(ef.HierarchicalModelConfig(
        m=m, c_blocks=c_blocks, loading=loading,
        sigma_u=random_spd(rng, d_b), sigma_v=random_spd(rng, d_b),
        y=rng.standard_normal(m * d_b),
    ))


@lru_cache(maxsize=1)
def hierarchical_em_traces():
    """50 randomized hierarchical EM runs (shared by criteria 2-4)."""
    rng = np.random.default_rng(20260811)
    out = []
    for _ in range(50):
        model = random_small_hierarchical(rng)
        trace = ef.run(model, ef.AlgorithmConfig(
            scheme="em", iterations=50,
            init_theta=rng.standard_normal(model.d_theta),
        ))
        out.append((model, trace))
    return out


def test_criterion_1_exact_em_rate():
    with criterion(1, "exact-em-rate", 1.0):
        model = conjugate_model()
        trace = ef.run(model, ef.AlgorithmConfig(scheme="em", iterations=20,
                                                 init_theta=[1.0]))
        expected = 0.25 * 4.0 ** -np.arange(21)
        assert np.max(np.abs(trace.gaps - expected)) <= 1e-10
        curve = em_bound_basic(LAMBDA_CONJ, np.sqrt(2.0), trace.gaps[0], 20)
        assert (trace.gaps <= curve.values + 1e-12).all()


def test_criterion_2_descent_inequality_suite():
    with criterion(2, "descent-inequality-suite", 10.0):
        runs = hierarchical_em_traces()
        assert len(runs) == 50
        for model, trace in runs:
            report = ef.check_descent(model, trace, tol=1e-9)
            assert report.ok, f"{model.label}: min margin {report.min_margin}"
            assert report.min_margin >= -1e-9


def test_criterion_3_xlsi_xt2i_soundness():
    with criterion(3, "xlsi-xt2i-trajectory-soundness", 10.0):
        model = conjugate_model()
        lam, _ = ef.certified_lambda(model)
        variant_cfgs = [
            ef.AlgorithmConfig(scheme="first_order_em", iterations=50,
                               step_h=1 / (2 * model.lipschitz_theta),
                               init_theta=[1.0]),
            ef.AlgorithmConfig(scheme="langevin_em", iterations=200,
                               step_h=0.05, init_theta=[1.0]),
            ef.AlgorithmConfig(scheme="langevin_em", iterations=200,
                               step_h=0.01, init_theta=[1.0]),
            ef.AlgorithmConfig(scheme="agd", iterations=200,
                               step_h=1 / (8 * model.lipschitz),
                               init_theta=[1.0]),
        ]
        traces = [(model, lam, conjugate_em_trace())]
        traces += [(model, lam, ef.run(model, cfg)) for cfg in variant_cfgs]
        for hmodel, htrace in hierarchical_em_traces():
            hlam, _ = ef.certified_lambda(hmodel)
            traces.append((hmodel, hlam, htrace))
        for mod, lam_used, trace in traces:
            assert ef.check_xlsi(mod, trace, lam_used, tol=1e-8).ok
            assert ef.check_xt2i(mod, trace, lam_used, tol=1e-8).ok


def test_criterion_4_sharp_bound_dominance_and_sharpness():
    with criterion(4, "sharp-bound-dominance", 10.0):
        model = conjugate_model()
        trace = conjugate_em_trace()
        lam, _ = ef.certified_lambda(model)
        cases = [(model, trace, lam)]
        for hmodel, htrace in hierarchical_em_traces():
            hlam, _ = ef.certified_lambda(hmodel)
            cases.append((hmodel, htrace, hlam))
        for mod, tr, lam_used in cases:
            gap0 = tr.gaps[0]
            c_const = constant_C(mod, lam_used, gap0)
            curve = em_bound_sharp(lam_used, mod.lipschitz_theta,
                                   mod.lipschitz_x, mod.d_x, c_const, gap0,
                                   len(tr.records) - 1)
            assert (tr.gaps <= curve.values + 1e-9).all(), mod.label
        # Sharpness on the scalar model: the infimum picks h > 0 at small k,
        # beating the h = 0 exponential envelope strictly.
        gap0 = trace.gaps[0]
        c_const = constant_C(model, lam, gap0)
        sharp = em_bound_sharp(lam, model.lipschitz_theta, model.lipschitz_x,
                               1, c_const, gap0, 20)
        envelope = np.exp(-np.arange(21) * lam / model.lipschitz_theta) * gap0
        for k in (1, 2, 3):
            assert sharp.values[k] < envelope[k] - 1e-9


def test_criterion_5_langevin_bias_scaling():
    with criterion(5, "langevin-bias-scaling", 5.0):
        model = conjugate_model()
        lam, _ = ef.certified_lambda(model)
        plateaus, asymptotes = {}, {}
        for h in (0.05, 0.025):
            trace = ef.run(model, ef.AlgorithmConfig(
                scheme="langevin_em", iterations=2000, step_h=h,
                init_theta=[1.0]))
            plateaus[h] = trace.gaps[-1]
            c_const = constant_C(model, lam, trace.gaps[0])
            curve = langevin_em_bound(lam, model.lipschitz_theta,
                                      model.lipschitz_x, 1, c_const, h,
                                      trace.gaps[0], 2000)
            asymptotes[h] = curve.constants["asymptote"]
        ratio = plateaus[0.05] / plateaus[0.025]
        assert 1.8 <= ratio <= 4.2, ratio
        for h in (0.05, 0.025):
            assert plateaus[h] < asymptotes[h]


def test_criterion_6_agd_bound_and_bias():
    with criterion(6, "agd-bound-and-bias", 10.0):
        hier = ef.make_hierarchical(ef.HierarchicalModelConfig(
            m=1, c_blocks=[np.eye(2)], loading=np.eye(2),
            sigma_u=np.eye(2), sigma_v=np.eye(2), y=np.array([0.5, -0.5]),
        ))
        for model, theta0 in [(conjugate_model(), [1.0]),
                              (hier, [1.5, 0.5])]:
            lam, _ = ef.certified_lambda(model)
            h = 1 / (8 * model.lipschitz)
            trace = ef.run(model, ef.AlgorithmConfig(
                scheme="agd", iterations=400, step_h=h, init_theta=theta0))
            curve = agd_bound(lam, model.lipschitz, model.d_x, h,
                              trace.gaps[0], 400)
            assert (lam * trace.dists ** 2 <= curve.values + 1e-9).all(), \
                model.label
            # Bias shrinks with the step: the long-run distance to the
            # optimum decreases monotonically as h is halved twice.
            finals = []
            for div in (8, 16, 32):
                tr = ef.run(model, ef.AlgorithmConfig(
                    scheme="agd", iterations=2000,
                    step_h=1 / (div * model.lipschitz), init_theta=theta0))
                finals.append(tr.dists[-1])
            assert finals[0] > finals[1] > finals[2], (model.label, finals)


def test_criterion_7_particle_exact_agreement():
    with criterion(7, "particle-exact-agreement", 30.0):
        model = conjugate_model()
        n = 100_000
        h = 0.05
        exact = ef.run(model, ef.AlgorithmConfig(
            scheme="langevin_em", iterations=50, step_h=h, init_theta=[1.0]))
        cloud = ef.run(model, ef.AlgorithmConfig(
            scheme="langevin_em", iterations=50, step_h=h, init_theta=[1.0],
            representation="particles", particle_count=n, seed=20260811))
        v0 = exact.records[0].law_cov[0, 0]
        for k in (10, 50):
            mean_e = exact.records[k].law_mean[0]
            var_e = exact.records[k].law_cov[0, 0]
            se_mean = langevin_mean_se(v0, h, k, n)
            se_var = langevin_var_se(var_e, h, n)
            assert abs(cloud.records[k].law_mean[0] - mean_e) <= 3 * se_mean
            assert abs(cloud.records[k].law_cov[0, 0] - var_e) <= 3 * se_var


def test_criterion_8_constant_propagation():
    with criterion(8, "constant-propagation-soundness", 10.0):
        model = conjugate_model()
        lam, _ = ef.certified_lambda(model)
        # Lipschitz pushforward: run natively, check with the contracted
        # constant.
        doubled = ef.pushforward_model(model, [[2.0]], [0.0])
        trace = ef.run(doubled, ef.AlgorithmConfig(scheme="em", iterations=20,
                                                   init_theta=[1.0]))
        lam_t = ef.contraction_lambda(lam, 2.0)
        assert ef.check_xlsi(doubled, trace, lam_t, tol=1e-8).ok
        # Bounded completion change: score the base EM points under the
        # perturbed model and check with the perturbation constant.
        c = float(np.exp(0.1))
        pert = ef.perturbed_model(model, lambda xs: 0.1 * np.cos(xs), c,
                                  grad_log_weight=lambda xs: -0.1 * np.sin(xs))
        base = conjugate_em_trace()
        points = [ef.ProductPoint(r.theta, ef.GaussianLaw(r.law_mean, r.law_cov))
                  for r in base.records]
        scored = ef.evaluate_points(pert, points)
        lam_p = ef.perturbation_lambda(lam, c, 0.0)
        assert ef.check_xlsi(pert, scored, lam_p, tol=1e-8).ok


def test_criterion_9_gradient_and_closed_form_cross_checks():
    with criterion(9, "gradient-closed-form-cross-checks", 30.0):
        rng = np.random.default_rng(99)
        model = conjugate_model()
        pert = ef.perturbed_model(model, lambda xs: 0.1 * np.cos(xs),
                                  float(np.exp(0.1)),
                                  grad_log_weight=lambda xs: -0.1 * np.sin(xs))
        models = [model,
                  ef.pushforward_model(model, [[2.0]], [0.5]),
                  random_small_hierarchical(rng)]

        # Finite-difference gradients.
        for mod in models + [pert]:
            for _ in range(25):
                theta = rng.standard_normal(mod.d_theta)
                x = rng.standard_normal(mod.d_x)
                eps = 1e-5
                for dim in range(mod.d_theta):
                    e = np.zeros(mod.d_theta); e[dim] = eps
                    fd = (mod.log_rho(theta + e, x)
                          - mod.log_rho(theta - e, x)) / (2 * eps)
                    assert abs(mod.grad_theta(theta, x)[dim] - fd) <= 1e-4 * (
                        1 + abs(fd))
                for dim in range(mod.d_x):
                    e = np.zeros(mod.d_x); e[dim] = eps
                    fd = (mod.log_rho(theta, x + e)
                          - mod.log_rho(theta, x - e)) / (2 * eps)
                    assert abs(mod.grad_x(theta, x)[dim] - fd) <= 1e-4 * (
                        1 + abs(fd))

        # Quadrature vs closed-form energies in one latent dimension.
        from emflows.energy import quad_extended_fisher, quad_free_energy_gap
        for _ in range(20):
            theta = rng.standard_normal(1) * 1.5
            law = law1(rng.standard_normal() * 1.5, rng.uniform(0.2, 2.0))
            p = ef.ProductPoint(theta, law)
            gap = ef.free_energy_gap(model, p)[0]
            fisher = ef.extended_fisher(model, p)[0]
            assert quad_free_energy_gap(model, theta, law)[0] == pytest.approx(
                gap, rel=1e-4, abs=1e-8)
            assert quad_extended_fisher(model, theta, law)[0] == pytest.approx(
                fisher, rel=1e-4, abs=1e-8)

        # Triangle inequality for the Gaussian transport distance.
        for _ in range(1000):
            d = int(rng.integers(1, 4))
            gs = [ef.GaussianLaw(rng.standard_normal(d), random_spd(rng, d))
                  for _ in range(3)]
            assert ef.w2_gaussian(gs[0], gs[2]) <= (
                ef.w2_gaussian(gs[0], gs[1]) + ef.w2_gaussian(gs[1], gs[2])
                + 1e-9)

        # Exact parameter updates zero the averaged parameter gradient.
        for mod in models:
            for _ in range(20):
                law = ef.GaussianLaw(rng.standard_normal(mod.d_x),
                                     random_spd(rng, mod.d_x, scale=0.6))
                theta = mod.closed_forms.exact_m_step(law.mean, law.cov)
                assert np.linalg.norm(mod.mean_grad_theta(theta, law)) <= 1e-8
