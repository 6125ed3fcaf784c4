from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.special import expit
from scipy.stats import multivariate_normal, norm

from tvtp.exceptions import DomainError
from tvtp.model import (
    ModelConfig,
    ParamVector,
    destination_index,
    emission_logdensity,
    emission_terms,
    log_transition_matrices,
    pack,
    design_params,
    q_lower_bound,
    stationary_distribution,
    swap_regimes,
    transition_matrices,
    transition_matrix,
    unpack,
)

from conftest import random_params


def test_two_regime_kernel_is_logistic_in_lagged_covariate():
    p = design_params(0.0)
    z = np.linspace(-8, 8, 17)
    Q = transition_matrices(z, p)
    assert_allclose(Q[:, 0, 0], expit(2.0 - 0.5 * z), rtol=1e-14)
    assert_allclose(Q[:, 1, 1], expit(2.0 + 0.5 * z), rtol=1e-14)
    assert_allclose(Q.sum(axis=2), 1.0, atol=1e-15)


def test_kernel_log_is_finite_far_in_the_tails():
    p = design_params(0.0)
    logQ = log_transition_matrices(np.array([-5000.0, 5000.0]), p)
    assert np.all(np.isfinite(logQ))
    assert_allclose(logQ[0, 0, 1], -(2.0 + 2500.0), rtol=1e-12)


def test_design_kernel_at_zero():
    Q = transition_matrix(0.0, design_params())
    assert_allclose(np.diag(Q), expit(2.0), rtol=1e-15)
    assert q_lower_bound(0.0, design_params()) == pytest.approx(1 - expit(2.0))


def test_three_regime_kernel_uses_cyclic_reference():
    K = 3
    dest = destination_index(K)
    assert dest.tolist() == [[0, 1], [1, 2], [2, 0]]
    trans = np.zeros((K, K - 1, 2))
    trans[:, 0, 0] = 1.0  # stay logits
    trans[:, 1, 1] = 2.0  # slope on the next destination
    p = ParamVector(mu=np.zeros(3), phi=np.zeros((1, 1)), sigma=np.ones(3), trans=trans)
    z = 0.7
    Q = transition_matrix(z, p)
    for s in range(K):
        logits = np.zeros(K)
        logits[s] = 1.0
        logits[(s + 1) % K] = 2.0 * z
        assert_allclose(Q[s], np.exp(logits) / np.exp(logits).sum(), rtol=1e-14)


def test_stationary_distribution_two_state_closed_form():
    a, b = 0.2, 0.35
    P = np.array([[1 - a, a], [b, 1 - b]])
    assert_allclose(stationary_distribution(P), [b / (a + b), a / (a + b)], rtol=1e-14)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), joint=st.booleans(), K=st.integers(2, 4))
def test_pack_unpack_round_trip(seed, joint, K):
    config = ModelConfig("joint" if joint else "partial", n_regimes=K, ar_order_y=2)
    p = random_params(np.random.default_rng(seed), config)
    back = unpack(pack(p, config), config)
    assert_allclose(back.to_flat(), p.to_flat(), rtol=1e-13, atol=1e-14)


def test_flat_vector_order_and_names(joint_config):
    p = design_params(0.3)
    names = joint_config.param_names()
    assert names == ["mu0", "mu1", "phi1", "sigma0", "sigma1", "alpha0", "beta0", "alpha1", "beta1",
                     "mu_z", "psi1", "sigma_z", "rho"]
    flat = p.to_flat()
    assert_allclose(flat, [1, -1, 0.9, 1, 1, 2, -0.5, 2, 0.5, 0.2, 0.8, 1, 0.3])
    assert ParamVector.from_flat(joint_config, flat).allclose(p)


def test_partial_emission_matches_normal_density(partial_config):
    p = design_params(0.0, "partial")
    for s, mu in enumerate([1.0, -1.0]):
        ld = emission_logdensity(0.4, [1.5], s, p, partial_config)
        assert ld == pytest.approx(norm.logpdf(0.4, mu + 0.9 * 1.5, 1.0), rel=1e-14)


def test_joint_emission_matches_bivariate_normal(joint_config):
    p = ParamVector.two_regime([1, -1], [0.9], [1.3, 0.7], [2, 2], [-0.5, 0.5], 0.2, [0.8], 1.4, -0.6)
    y, z, yl, zl = 0.4, -0.3, 1.5, 0.2
    for s in range(2):
        sd = np.array([[1.3, 0.7][s], 1.4])
        cov = np.outer(sd, sd) * np.array([[1, -0.6], [-0.6, 1]])
        mean = [[1, -1][s] + 0.9 * yl, 0.2 + 0.8 * zl]
        expect = multivariate_normal(mean, cov).logpdf([y, z])
        got = emission_logdensity((y, z), ([yl], [zl]), s, p, joint_config)
        assert got == pytest.approx(expect, rel=1e-13)


def test_vectorized_emissions_agree_with_scalar(design_path, joint_config):
    p = design_params(0.8)
    terms = emission_terms(design_path.y, design_path.z, p, joint_config, derivatives=False)
    for t in (1, 50, 300):
        for s in range(2):
            one = emission_logdensity((design_path.y[t], design_path.z[t]), ([design_path.y[t - 1]], [design_path.z[t - 1]]),
                                      s, p, joint_config)
            assert terms.logdens[t - 1, s] == pytest.approx(one, rel=1e-13)


def test_swap_is_an_involution(joint_config, rng):
    p = random_params(rng, joint_config)
    once = swap_regimes(p, joint_config)
    assert once.mu[0] == p.mu[1] and once.sigma[0] == p.sigma[1]
    assert_allclose(once.trans[0], p.trans[1])
    assert swap_regimes(once, joint_config).allclose(p, rtol=0, atol=0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(sigma=[1.0, -1.0]),
        dict(rho=1.0),
        dict(mu=[np.nan, 0.0]),
    ],
)
def test_invalid_parameters_are_rejected(kwargs):
    base = dict(mu=[1.0, -1.0], phi=[0.9], sigma=[1.0, 1.0], alpha=[2, 2], beta=[0, 0],
                mu_z=0.0, psi=[0.5], sigma_z=1.0, rho=0.0)
    base.update(kwargs)
    with pytest.raises(DomainError):
        ParamVector.two_regime(**base).check(ModelConfig("joint"))


def test_nonfinite_covariate_in_kernel_raises():
    with pytest.raises(DomainError):
        transition_matrices(np.array([0.0, np.inf]), design_params())


def test_symmetric_kernel_at_zero_logits():
    p = ParamVector.two_regime([0, 0], [0.0], [1, 1], [0, 0], [0, 0])
    Q = transition_matrices(np.array([-3.0, 0.0, 7.5]), p)
    assert np.all(Q == 0.5)
    assert q_lower_bound(2.0, p) == 0.5


def test_design_kernel_values_against_high_precision():
    import mpmath

    stay = float(1 / (1 + mpmath.e ** -2))
    Q = transition_matrix(0.0, design_params())
    assert_allclose(np.diag(Q), stay, rtol=1e-15)
    assert q_lower_bound(0.0, design_params()) == pytest.approx(float(1 - 1 / (1 + mpmath.e ** -2)), rel=1e-14)
    assert stay == pytest.approx(0.8807971, abs=1e-7)


def test_lower_bound_never_exceeds_uniform(rng):
    for K in (2, 3, 4):
        config = ModelConfig("partial", n_regimes=K)
        p = random_params(rng, config)
        q = q_lower_bound(rng.normal(size=50) * 3, p)
        assert np.all((q > 0) & (q <= 1 / K))


def test_emission_at_the_mode():
    part = ModelConfig("partial")
    p = design_params(0.8)
    # y at its conditional mean for regime 0 with sigma 1
    assert emission_logdensity(1.0 + 0.9 * 2.0, [2.0], 0, p.as_partial(), part) == pytest.approx(
        np.log(1 / np.sqrt(2 * np.pi)), rel=1e-15)
    joint = ModelConfig("joint")
    ld = emission_logdensity((1.0 + 0.9 * 2.0, 0.2 + 0.8 * 0.5), ([2.0], [0.5]), 0, p, joint)
    assert ld == pytest.approx(-np.log(2 * np.pi * np.sqrt(1 - 0.64)), rel=1e-14)
    assert ld == pytest.approx(multivariate_normal([0, 0], [[1, 0.8], [0.8, 1]]).logpdf([0, 0]), rel=1e-14)
    assert ld == pytest.approx(-1.3271, abs=5e-5)


def test_joint_emission_factorizes_at_zero_correlation(rng):
    p = design_params(0.0)
    for _ in range(5):
        y, z, yl, zl = rng.normal(size=4)
        for s in range(2):
            joint = emission_logdensity((y, z), ([yl], [zl]), s, p, ModelConfig("joint"))
            part = emission_logdensity(y, [yl], s, p.as_partial(), ModelConfig("partial"))
            assert joint == pytest.approx(part + norm.logpdf(z, 0.2 + 0.8 * zl, 1.0), rel=1e-14)


def test_emission_densities_integrate_to_one():
    from scipy.integrate import dblquad, quad

    p = ParamVector.two_regime([1, -1], [0.9], [1.3, 0.7], [2, 2], [-0.5, 0.5], 0.2, [0.8], 1.4, -0.6)
    part = ModelConfig("partial")
    mass, _ = quad(lambda y: np.exp(emission_logdensity(y, [0.3], 1, p.as_partial(), part)), -np.inf, np.inf)
    assert mass == pytest.approx(1.0, abs=1e-9)
    joint = ModelConfig("joint")
    mass2, _ = dblquad(lambda z, y: np.exp(emission_logdensity((y, z), ([0.3], [0.1]), 0, p, joint)),
                       -15, 15, -15, 15, epsabs=1e-11)
    assert mass2 == pytest.approx(1.0, abs=1e-7)


def test_unit_scale_and_zero_correlation_map_to_zero(joint_config):
    raw = pack(design_params(0.0), joint_config)
    names = joint_config.param_names()
    for name in ("sigma0", "sigma1", "sigma_z", "rho"):
        assert raw[names.index(name)] == 0.0


def test_raw_round_trip_to_rounding(joint_config, rng):
    for _ in range(20):
        v = rng.normal(size=joint_config.n_params)
        assert_allclose(pack(unpack(v, joint_config), joint_config), v, rtol=1e-14, atol=1e-15)


def test_partial_vector_has_no_covariate_equation():
    p = design_params(0.5, "partial")
    assert p.mu_z is None and p.psi is None and p.sigma_z is None and p.rho is None
    assert p.to_flat().size == ModelConfig("partial").n_params


def test_near_deterministic_kernel_has_defined_stationary_law():
    p = ParamVector.two_regime([1, -1], [0.0], [1, 1], [40.0, 45.0], [0.0, 0.0])
    P = transition_matrix(0.0, p)
    assert P[0, 0] == 1.0 and P[0, 1] > 0
    pi = stationary_distribution(P)
    # pi_0 = q10 / (q01 + q10) with q = exp(-alpha)
    assert_allclose(pi[0], 1 / (1 + np.exp(5.0)), rtol=1e-12)
