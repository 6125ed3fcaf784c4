from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import rosen, rosen_der, rosen_hess
from statsmodels.stats.sandwich_covariance import S_hac_simple

from tvtp.estimate import (
    EstimationResult,
    FitOptions,
    Objective,
    bfgs_minimize,
    default_hac_lag,
    fit,
    hessian_cov,
    long_run_covariance,
    moment_anchor,
    numerical_gradient,
    numerical_hessian,
    perturbed_starts,
    sandwich_from_parts,
    t_stats,
)
from tvtp.exceptions import DomainError, NumericError
from tvtp.filter import Dataset, loglik
from tvtp.model import ModelConfig, ParamVector, pack, design_params, swap_regimes
from tvtp.simulate import DgpSpec, simulate_dgp


def test_bfgs_solves_rosenbrock():
    out = bfgs_minimize(lambda x: (rosen(x), rosen_der(x)), np.array([-1.2, 1.0, -0.5, 0.8]), grad_tol=1e-10)
    assert out.converged
    assert_allclose(out.x, 1.0, atol=1e-8)
    h = np.asarray(out.history)
    assert np.all(np.diff(h) <= 8 * np.finfo(float).eps * np.abs(h[:-1]))


def test_bfgs_reports_nonconvergence_on_iteration_cap():
    out = bfgs_minimize(lambda x: (rosen(x), rosen_der(x)), np.array([-1.2, 1.0]), max_iter=3)
    assert not out.converged
    assert out.n_iter == 3


def test_bfgs_rejects_nonfinite_start():
    with pytest.raises(NumericError):
        bfgs_minimize(lambda x: (np.inf, x), np.zeros(2))


def test_numerical_derivatives_on_rosenbrock():
    x = np.array([0.3, -0.7, 1.1])
    assert_allclose(numerical_gradient(rosen, x), rosen_der(x), rtol=1e-7)
    assert_allclose(numerical_hessian(None, x, grad=rosen_der), rosen_hess(x), rtol=1e-6, atol=1e-6)
    assert_allclose(numerical_hessian(rosen, x), rosen_hess(x), rtol=1e-4, atol=1e-4)


def test_constant_objective_has_zero_derivatives():
    x = np.array([0.5, -2.0, 3.0])
    assert np.all(numerical_gradient(lambda v: 4.0, x) == 0)
    assert np.all(numerical_hessian(lambda v: 4.0, x) == 0)


def test_convex_problem_is_start_invariant():
    A = np.array([[3.0, 0.5, 0.0], [0.5, 2.0, 0.3], [0.0, 0.3, 1.0]])
    b = np.array([1.0, -2.0, 0.5])
    xstar = np.linalg.solve(A, b)
    fg = lambda x: (0.5 * x @ A @ x - b @ x, A @ x - b)  # noqa: E731
    for x0 in np.random.default_rng(1).normal(scale=10, size=(6, 3)):
        out = bfgs_minimize(fg, x0, grad_tol=1e-10)
        assert out.converged
        assert_allclose(out.x, xstar, atol=1e-6)


def _ar1(rng, n, noise):
    y = np.zeros(n)
    e = noise(n)
    for t in range(1, n):
        y[t] = 0.5 + 0.6 * y[t - 1] + 0.8 * e[t]
    return Dataset(y, rng.normal(size=n))


def test_single_regime_sandwich_matches_hessian_under_correct_model(rng):
    config = ModelConfig("partial", n_regimes=1)
    start = ParamVector(mu=[0.0], phi=[[0.0]], sigma=[1.0], trans=np.zeros((1, 0, 2)))
    res = fit(_ar1(rng, 20000, rng.standard_normal), config, FitOptions(starts=[start]))
    assert res.converged
    assert_allclose(res.params, [0.5, 0.6, 0.8], atol=0.05)
    ratio = res.se_sandwich / res.se_hessian
    assert np.all((ratio > 0.8) & (ratio < 1.25))


def test_sandwich_widens_scale_error_under_heavy_tails(rng):
    config = ModelConfig("partial", n_regimes=1)
    start = ParamVector(mu=[0.0], phi=[[0.0]], sigma=[1.0], trans=np.zeros((1, 0, 2)))
    res = fit(_ar1(rng, 20000, lambda n: rng.standard_t(5, size=n)), config, FitOptions(starts=[start]))
    ratio = res.se_sandwich / res.se_hessian
    # excess kurtosis 6 inflates the variance of the scale estimate by about (2 + 6) / 2
    assert 1.4 < ratio[2] < 2.4
    assert np.all(np.abs(ratio[:2] - 1) < 0.2)


@pytest.mark.parametrize("lag", [None, 0, 1, 4])
def test_long_run_covariance_matches_statsmodels(lag, rng):
    x = rng.normal(size=(120, 3))
    expect = S_hac_simple(x, nlags=lag or 0) / x.shape[0]
    assert_allclose(long_run_covariance(x, lag), expect, rtol=1e-12, atol=1e-14)


def test_default_hac_lag():
    assert default_hac_lag(100) == 4
    assert default_hac_lag(800) == int(np.floor(4 * 8 ** (2 / 9)))


def test_sandwich_reduces_to_inverse_information_when_information_equality_holds():
    H = -np.array([[4.0, 1.0], [1.0, 3.0]]) * 50
    V = sandwich_from_parts(H, 50, middle=-H / 50)
    assert_allclose(V, np.linalg.inv(-H), rtol=1e-12)
    assert_allclose(hessian_cov(H), np.linalg.inv(-H), rtol=1e-12)


def test_sandwich_refuses_singular_hessian():
    with pytest.raises(NumericError):
        sandwich_from_parts(np.zeros((2, 2)), 10, middle=np.eye(2))
    assert hessian_cov(np.diag([-1.0, 1.0])) is None


def test_objective_is_negative_mean_loglik(design_path, joint_config):
    p = design_params(0.8)
    obj = Objective(design_path, joint_config)
    f, g = obj(pack(p, joint_config))
    assert f == pytest.approx(-loglik(design_path, p, joint_config) / 300, rel=1e-13)
    fd = numerical_gradient(obj.value, pack(p, joint_config))
    assert_allclose(g, fd, rtol=1e-5, atol=1e-8)


def test_fit_options_validation():
    with pytest.raises(DomainError):
        FitOptions(grad_tol=0)
    with pytest.raises(DomainError):
        FitOptions(hac="parzen")
    assert FitOptions(hac="bartlett").hac_lag(100) == 4


def test_perturbed_starts_count(joint_config):
    anchor = design_params(0.2)
    assert len(perturbed_starts(anchor, joint_config)) == 2 * joint_config.n_params
    assert len(perturbed_starts(anchor, joint_config, coordinatewise=False)) == 2


@pytest.fixture(scope="module")
def long_path():
    return simulate_dgp(DgpSpec(design_params(0.0), T=2000, seed=5))


def test_joint_fit_recovers_truth(long_path):
    config = ModelConfig("joint")
    truth = design_params(0.0)
    res = fit(long_path, config, FitOptions(starts=[truth]))
    assert res.converged and res.hessian_pd
    z = (res.params - truth.to_flat()) / res.se_hessian
    assert np.all(np.abs(z) < 4)
    # Hessian and sandwich standard errors agree under correct specification
    assert_allclose(res.se_sandwich, res.se_hessian, rtol=0.35)
    assert res.loglik >= loglik(long_path, truth, config)


def test_fit_from_data_driven_starts(long_path):
    config = ModelConfig("partial")
    anchor = moment_anchor(long_path, config)
    assert anchor.mu[0] > anchor.mu[1]
    res = fit(long_path, config, FitOptions(starts=[anchor] + perturbed_starts(anchor, config, coordinatewise=False)))
    truth = design_params(0.0, "partial")
    assert res.converged
    assert abs(res.theta_hat.mu[0] - 1.0) < 0.3 and abs(res.theta_hat.mu[1] + 1.0) < 0.3
    tz = t_stats(res, truth.to_flat())
    assert np.all(np.abs(tz) < 4)


def test_fit_is_deterministic_and_label_symmetric(design_path, partial_config):
    truth = design_params(0.8, "partial")
    a = fit(design_path, partial_config, FitOptions(starts=[truth]))
    b = fit(design_path, partial_config, FitOptions(starts=[truth]))
    assert np.array_equal(a.params, b.params)
    c = fit(design_path, partial_config, FitOptions(starts=[swap_regimes(truth, partial_config)]))
    assert c.loglik == pytest.approx(a.loglik, abs=1e-6)
    assert_allclose(swap_regimes(c.theta_hat, partial_config).to_flat(), a.params, atol=1e-4)


def test_t_stats_needs_standard_errors(design_path, partial_config):
    res = fit(design_path, partial_config, FitOptions(starts=[design_params(0.8, "partial")]))
    with pytest.raises(DomainError):
        t_stats(res, 0.0, "bogus")
    assert_allclose(t_stats(res, 0.0), res.params / res.se_hessian)


def test_single_regime_fit_matches_closed_form_mle(rng):
    config = ModelConfig("partial", n_regimes=1)
    data = _ar1(rng, 3000, rng.standard_normal)
    start = ParamVector(mu=[0.0], phi=[[0.0]], sigma=[1.0], trans=np.zeros((1, 0, 2)))
    res = fit(data, config, FitOptions(starts=[start], grad_tol=1e-10))
    X = np.column_stack([np.ones(data.T), data.y[:-1]])
    coef, *_ = np.linalg.lstsq(X, data.y[1:], rcond=None)
    sigma = np.sqrt(np.mean((data.y[1:] - X @ coef) ** 2))
    assert_allclose(res.params, [coef[0], coef[1], sigma], atol=1e-6)


def test_quadratic_hessian_is_exact():
    A = np.array([[4.0, 1.0, -0.5], [1.0, 3.0, 0.2], [-0.5, 0.2, 2.0]])
    x = np.array([0.7, -1.3, 2.2])
    H = numerical_hessian(lambda v: -0.5 * v @ A @ v, x)
    assert np.max(np.abs(H + A)) <= 1e-6 * np.linalg.norm(A)
    Hg = numerical_hessian(None, x, grad=lambda v: -A @ v)
    assert np.max(np.abs(Hg + A)) <= 1e-6 * np.linalg.norm(A)


def test_zero_lag_hac_equals_outer_product(rng):
    scores = rng.normal(size=(200, 4))
    H = -200 * np.eye(4) - 20 * np.ones((4, 4))
    assert np.array_equal(sandwich_from_parts(H, 200, scores, 0), sandwich_from_parts(H, 200, scores, None))


def test_t_stats_trivial_cases(design_path, partial_config):
    res = fit(design_path, partial_config, FitOptions(starts=[design_params(0.8, "partial")]))
    assert np.all(t_stats(res, res.params) == 0)
    q = partial_config.n_params
    unit = EstimationResult(design_params(0.8, "partial"), partial_config, 0.0, 0.0, -np.eye(q), np.eye(q), None,
                            True, 0, 0, 100)
    assert_allclose(t_stats(unit, unit.params - 2.0), 2.0)
    assert res.converged and res.grad_norm <= 1e-8


def test_joint_slope_recovered_across_seeds():
    config = ModelConfig("joint")
    truth = design_params(0.0)
    hits = 0
    for seed in range(10):
        data = simulate_dgp(DgpSpec(truth, T=3200, seed=400 + seed))
        res = fit(data, config, FitOptions(starts=[truth]))
        hits += abs(res.theta_hat.trans[0, 0, 1] - (-0.5)) <= 0.15
    assert hits >= 9
