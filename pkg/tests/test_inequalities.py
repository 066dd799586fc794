"""Inequality checkers and constant-propagation rules."""

import numpy as np
import pytest

from emflows import (
    AlgorithmConfig,
    GaussianLaw,
    HierarchicalModelConfig,
    ProductPoint,
    bakry_emery_lambda,
    certified_lambda,
    check_descent,
    check_monotonicity,
    check_xlsi,
    check_xt2i,
    contraction_lambda,
    evaluate_points,
    make_hierarchical,
    perturbation_lambda,
    perturbed_model,
    pushforward_model,
    run,
)
from emflows.errors import (
    InvalidParameterError,
    NoCertificateError,
    NotLogConcaveError,
    UnsupportedRepresentationError,
    UnsupportedSchemeError,
)

from conftest import random_hierarchical

LAMBDA_CONJ = (3 - np.sqrt(5)) / 2


# ---------------------------------------------------------------------------
# Constant calculators
# ---------------------------------------------------------------------------

def test_bakry_emery_conjugate(conjugate):
    assert bakry_emery_lambda(conjugate) == pytest.approx(LAMBDA_CONJ, abs=1e-14)


def test_bakry_emery_block_diagonal_doubling(hierarchical_2d, conjugate):
    # Two independent scalar copies share the scalar model's constant.
    assert bakry_emery_lambda(hierarchical_2d) == pytest.approx(
        bakry_emery_lambda(conjugate), abs=1e-12
    )


def test_bakry_emery_rejects_flat_direction():
    # A zero observation map leaves l constant along x = D theta, so the
    # negated Hessian has a zero eigenvalue.
    flat = make_hierarchical(HierarchicalModelConfig(
        m=1, c_blocks=[np.zeros((1, 1))], loading=np.eye(1),
        sigma_u=np.eye(1), sigma_v=np.eye(1), y=np.zeros(1),
    ))
    with pytest.raises(NotLogConcaveError):
        bakry_emery_lambda(flat)


def test_contraction_lambda_values():
    assert contraction_lambda(0.4, 1.0) == pytest.approx(0.4)
    assert contraction_lambda(0.4, 2.0) == pytest.approx(0.1)
    assert contraction_lambda(0.4, 0.5) == pytest.approx(0.4)


def test_perturbation_lambda_values():
    # c -> 1 recovers lambda/2 (the half-strength one-distribution rule).
    assert perturbation_lambda(0.4, 1.0 + 1e-9, 0.0) == pytest.approx(0.2, abs=1e-8)
    assert perturbation_lambda(0.4, 2.0, 0.2) == pytest.approx(-0.05)
    assert perturbation_lambda(0.4, 2.0, 0.0) == pytest.approx(0.05)
    with pytest.raises(InvalidParameterError):
        perturbation_lambda(0.4, 1.0, 0.0)


def test_certified_lambda_chains(conjugate):
    lam, trail = certified_lambda(conjugate)
    assert lam == pytest.approx(LAMBDA_CONJ, abs=1e-14)
    assert len(trail) == 1 and trail[0].startswith("bakry_emery")

    doubled = pushforward_model(conjugate, [[2.0]], [0.0])
    lam2, trail2 = certified_lambda(doubled)
    assert lam2 == pytest.approx(LAMBDA_CONJ / 4, abs=1e-14)
    assert len(trail2) == 2

    pert = perturbed_model(conjugate, lambda xs: 0.1 * np.cos(xs),
                           float(np.exp(0.1)),
                           grad_log_weight=lambda xs: -0.1 * np.sin(xs))
    lam3, trail3 = certified_lambda(pert)
    assert lam3 == pytest.approx(LAMBDA_CONJ / (2 * np.exp(0.2)), abs=1e-14)


def test_certified_lambda_monotone_in_wrapper_strength(conjugate):
    lams_t = []
    for lip_t in (0.5, 1.0, 1.5, 2.0, 4.0):
        model = pushforward_model(conjugate, [[lip_t]], [0.0])
        lams_t.append(certified_lambda(model)[0])
    assert all(a >= b - 1e-15 for a, b in zip(lams_t, lams_t[1:]))
    lams_c = []
    for amp in (0.05, 0.1, 0.2, 0.4):
        model = perturbed_model(conjugate, lambda xs, a=amp: a * np.cos(xs),
                                float(np.exp(amp)),
                                grad_log_weight=lambda xs, a=amp: -a * np.sin(xs))
        lams_c.append(certified_lambda(model)[0])
    assert all(a >= b - 1e-15 for a, b in zip(lams_c, lams_c[1:]))


def test_certified_lambda_requires_chain(conjugate):
    import dataclasses
    bare = dataclasses.replace(conjugate, xlsi_chain=())
    with pytest.raises(NoCertificateError):
        certified_lambda(bare)


# ---------------------------------------------------------------------------
# Gradient-growth check
# ---------------------------------------------------------------------------

def test_xlsi_on_em_trace(conjugate):
    trace = run(conjugate, AlgorithmConfig(scheme="em", iterations=20,
                                           init_theta=[1.0]))
    report = check_xlsi(conjugate, trace, LAMBDA_CONJ)
    assert report.ok
    # At these iterates the information equals the gap, so the margin is
    # gap * (1 - 2 lambda) exactly.
    np.testing.assert_allclose(
        report.margins, trace.gaps * (1 - 2 * LAMBDA_CONJ), atol=1e-12
    )


def test_xlsi_violated_for_inflated_lambda(conjugate):
    trace = run(conjugate, AlgorithmConfig(scheme="em", iterations=20,
                                           init_theta=[1.0]))
    report = check_xlsi(conjugate, trace, 0.6)
    assert not report.ok
    assert report.violated_at == 0
    assert report.min_margin < 0


def test_xlsi_at_optimum_is_flat(conjugate):
    trace = run(conjugate, AlgorithmConfig(scheme="em", iterations=5,
                                           init_theta=[0.0]))
    report = check_xlsi(conjugate, trace, LAMBDA_CONJ)
    assert report.ok
    assert np.all(np.abs(report.margins) <= 1e-10)


def test_xlsi_rejects_particle_trace(conjugate):
    trace = run(conjugate, AlgorithmConfig(
        scheme="langevin_em", iterations=5, step_h=0.05, init_theta=[1.0],
        representation="particles", particle_count=64, seed=1,
    ))
    with pytest.raises(UnsupportedRepresentationError):
        check_xlsi(conjugate, trace, LAMBDA_CONJ)


# ---------------------------------------------------------------------------
# Distance-transfer check
# ---------------------------------------------------------------------------

def test_xt2i_threshold_on_conjugate(conjugate):
    # 2 gap = theta^2/2 and d^2 = (5/4) theta^2 at these iterates, so the
    # check holds iff lambda <= 2/5.
    trace = run(conjugate, AlgorithmConfig(scheme="em", iterations=15,
                                           init_theta=[1.0]))
    assert check_xt2i(conjugate, trace, LAMBDA_CONJ).ok  # 0.382 < 0.4
    report = check_xt2i(conjugate, trace, 0.41)
    assert not report.ok
    # Violated wherever theta_k is away from zero (all finite-precision
    # iterates here): d^2 = 5 gap at these iterates, so the margin is
    # gap (2 - 0.41 * 5) = -0.05 gap.
    assert report.violated_at == 0
    assert (report.margins[trace.gaps > 1e-20] < 0).all()
    np.testing.assert_allclose(
        report.margins, trace.gaps * (2 - 0.41 * 5), atol=1e-12
    )


def test_xt2i_at_optimum(conjugate):
    trace = run(conjugate, AlgorithmConfig(scheme="em", iterations=5,
                                           init_theta=[0.0]))
    report = check_xt2i(conjugate, trace, LAMBDA_CONJ)
    assert report.ok and np.all(np.abs(report.margins) <= 1e-10)


# ---------------------------------------------------------------------------
# Descent and monotonicity checks
# ---------------------------------------------------------------------------

def test_descent_margins_closed_form(conjugate):
    # Decrease per step is theta_k^2/8 while the bound is
    # theta_k^2 / (8 sqrt 2); margin = theta_k^2/8 (1 - 1/sqrt 2) > 0.
    trace = run(conjugate, AlgorithmConfig(scheme="em", iterations=12,
                                           init_theta=[1.0]))
    report = check_descent(conjugate, trace)
    assert report.ok
    thetas = trace.thetas[:-1, 0]
    expected = thetas ** 2 / 8 * (1 - 1 / np.sqrt(2))
    np.testing.assert_allclose(report.margins, expected, atol=1e-12)


def test_descent_at_fixed_point(conjugate):
    trace = run(conjugate, AlgorithmConfig(scheme="em", iterations=5,
                                           init_theta=[0.0]))
    report = check_descent(conjugate, trace)
    assert np.all(np.abs(report.margins) <= 1e-10)


def test_descent_margin_grows_with_inflated_lipschitz(conjugate):
    import dataclasses
    trace = run(conjugate, AlgorithmConfig(scheme="em", iterations=10,
                                           init_theta=[1.0]))
    inflated = dataclasses.replace(conjugate,
                                   lipschitz_theta=10 * conjugate.lipschitz_theta,
                                   strong_concavity=None)
    r1 = check_descent(conjugate, trace)
    r2 = check_descent(inflated, trace)
    assert (r2.margins >= r1.margins).all()
    assert (r2.margins[trace.gaps[:-1] > 1e-18] >
            r1.margins[trace.gaps[:-1] > 1e-18]).all()


def test_descent_rejects_other_schemes(conjugate):
    trace = run(conjugate, AlgorithmConfig(scheme="first_order_em", iterations=5,
                                           step_h=0.3, init_theta=[1.0]))
    with pytest.raises(UnsupportedSchemeError):
        check_descent(conjugate, trace)


def test_monotonicity_check(conjugate):
    trace = run(conjugate, AlgorithmConfig(scheme="em", iterations=15,
                                           init_theta=[1.0]))
    report = check_monotonicity(conjugate, trace)
    assert report.ok
    assert len(report.margins) == 30


# ---------------------------------------------------------------------------
# Soundness across schemes and wrappers
# ---------------------------------------------------------------------------

def test_certified_soundness_all_schemes(conjugate):
    lam, _ = certified_lambda(conjugate)
    l_theta, l_all = conjugate.lipschitz_theta, conjugate.lipschitz
    runs = [
        AlgorithmConfig(scheme="em", iterations=25, init_theta=[1.0]),
        AlgorithmConfig(scheme="first_order_em", iterations=25,
                        step_h=0.5 / l_theta, init_theta=[1.0]),
        AlgorithmConfig(scheme="langevin_em", iterations=100, step_h=0.05,
                        init_theta=[1.0]),
        AlgorithmConfig(scheme="langevin_em", iterations=100, step_h=0.01,
                        init_theta=[1.0]),
        AlgorithmConfig(scheme="agd", iterations=100, step_h=1 / (8 * l_all),
                        init_theta=[1.0]),
    ]
    for cfg in runs:
        trace = run(conjugate, cfg)
        assert check_xlsi(conjugate, trace, lam).ok, cfg.scheme
        assert check_xt2i(conjugate, trace, lam).ok, cfg.scheme


def test_certified_soundness_random_hierarchical():
    rng = np.random.default_rng(21)
    for _ in range(5):
        model = random_hierarchical(rng)
        lam, _ = certified_lambda(model)
        trace = run(model, AlgorithmConfig(
            scheme="em", iterations=40,
            init_theta=rng.standard_normal(model.d_theta),
        ))
        assert check_xlsi(model, trace, lam).ok
        assert check_xt2i(model, trace, lam).ok
        assert check_descent(model, trace).ok


def test_pushforward_trace_passes_with_contracted_constant(conjugate):
    lam, _ = certified_lambda(conjugate)
    doubled = pushforward_model(conjugate, [[2.0]], [0.0])
    trace = run(doubled, AlgorithmConfig(scheme="em", iterations=20,
                                         init_theta=[1.0]))
    lam_t = contraction_lambda(lam, 2.0)
    assert check_xlsi(doubled, trace, lam_t).ok
    assert check_xt2i(doubled, trace, lam_t).ok


def test_perturbed_points_pass_with_perturbation_constant(conjugate):
    lam, _ = certified_lambda(conjugate)
    pert = perturbed_model(conjugate, lambda xs: 0.1 * np.cos(xs),
                           float(np.exp(0.1)),
                           grad_log_weight=lambda xs: -0.1 * np.sin(xs))
    base = run(conjugate, AlgorithmConfig(scheme="em", iterations=20,
                                          init_theta=[1.0]))
    points = [ProductPoint(r.theta, GaussianLaw(r.law_mean, r.law_cov))
              for r in base.records]
    trace = evaluate_points(pert, points)
    lam_p = perturbation_lambda(lam, float(np.exp(0.1)), 0.0)
    assert check_xlsi(pert, trace, lam_p).ok
