from __future__ import annotations

import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tvtp.filter import InitRule
from tvtp.mixing import (
    check_instance,
    conditional_step_kernel,
    conditional_target_law,
    dobrushin_of_kernel,
    exact_conditional_tv,
    init_forgetting_curve,
    product_bound,
    random_mixing_check,
)
from tvtp.model import ModelConfig, design_params, q_lower_bound, transition_matrices
from tvtp.simulate import DgpSpec, simulate_dgp


def test_product_bound_empty_and_single():
    p = design_params()
    assert product_bound([], p) == 1.0
    assert product_bound([0.3], p) == pytest.approx(1 - q_lower_bound(0.3, p))


def test_dobrushin_of_kernel_hand_values():
    assert dobrushin_of_kernel(np.array([[0.9, 0.1], [0.1, 0.9]])) == pytest.approx(0.8)
    assert dobrushin_of_kernel(np.full((3, 3), 1 / 3)) == 0.0
    assert dobrushin_of_kernel(np.eye(3)) == 1.0


@pytest.fixture
def segment():
    d = simulate_dgp(DgpSpec(design_params(0.5), T=20, seed=6))
    return d.segment(0, 7)


def test_target_law_without_information_is_kernel_product(partial_config):
    # with flat emissions the conditional chain is the unconditional one
    from tvtp.model import ParamVector

    p = ParamVector.two_regime([0.0, 0.0], [0.0], [1.0, 1.0], [1.0, 0.5], [0.7, -0.3])
    d = simulate_dgp(DgpSpec(design_params(0.0), T=6, seed=2))
    law = conditional_target_law(d, p, partial_config)
    Q = transition_matrices(d.z, p)
    prod = np.eye(2)
    for q in Q:
        prod = prod @ q
    assert_allclose(law, prod, atol=1e-14)


def test_step_kernels_chain_to_target_law(segment, partial_config):
    p = design_params(0.5, "partial")
    law = conditional_target_law(segment, p, partial_config)
    n_steps = segment.T + 1
    prod = np.eye(2)
    for k in range(n_steps):
        K = conditional_step_kernel(segment, p, partial_config, k)
        assert_allclose(K.sum(axis=1), 1.0, atol=1e-13)
        prod = prod @ K
    assert_allclose(prod, law, atol=1e-12)


def test_single_instance_bounds(segment, joint_config):
    rec = check_instance(segment, design_params(0.5), joint_config)
    assert rec["bound_satisfied"]
    assert rec["exact_tv"] <= rec["dobrushin_product"] + 1e-12
    assert rec["exact_l1"] == pytest.approx(exact_conditional_tv(segment, design_params(0.5), joint_config))


def test_random_instances_satisfy_total_variation_bound():
    rep = random_mixing_check(n_instances=60, seed=3)
    assert rep.ok and rep.n_violations == 0
    assert rep.max_violation <= 1e-10
    lengths = {r["segment_length"] for r in rep.records}
    assert min(lengths) == 1


def test_full_l1_distance_can_exceed_the_product():
    # constant kernels with no covariate effect and uninformative emissions
    from tvtp.model import ParamVector

    p = ParamVector.two_regime([0.0, 0.0], [0.0], [1.0, 1.0], [np.log(9), np.log(9)], [0.0, 0.0])
    d = simulate_dgp(DgpSpec(design_params(0.0), T=5, seed=1)).segment(0, 1)
    rec = check_instance(d, p, ModelConfig("partial"))
    assert rec["segment_length"] == 1
    assert rec["exact_l1"] == pytest.approx(1.6)
    assert rec["product_bound"] == pytest.approx(0.9)
    assert rec["bound_satisfied"] and not rec["l1_satisfied"]


def test_initial_law_is_forgotten_geometrically():
    d = simulate_dgp(DgpSpec(design_params(0.0), T=300, seed=12))
    curve = init_forgetting_curve(d, design_params(0.0, "partial"), ModelConfig("partial"),
                                  InitRule.uniform(), InitRule.stationary())
    assert curve.log_rate < 0
    assert curve.first_below(1e-12) is not None and curve.first_below(1e-12) < 200
    assert curve.dominated


def test_product_bound_hand_values():
    from tvtp.model import ParamVector

    half = ParamVector.two_regime([0, 0], [0.0], [1, 1], [0, 0], [0, 0])
    assert product_bound([0.1, -2.0, 5.0], half) == 0.125
    single = ParamVector(mu=[0.0], phi=[[0.0]], sigma=[1.0], trans=np.zeros((1, 0, 2)))
    assert product_bound([0.3, 1.0], single) == 0.0


def test_identical_rows_give_zero_distance(partial_config):
    from tvtp.model import ParamVector

    p = ParamVector.two_regime([1, -1], [0.5], [1, 1], [0.7, -0.7], [0.0, 0.0])
    d = simulate_dgp(DgpSpec(design_params(0.0), T=8, seed=4))
    assert exact_conditional_tv(d, p, partial_config) == pytest.approx(0.0, abs=1e-15)


def test_one_observation_segment_by_hand(partial_config):
    # regime at index 0, observation at index 1, target at index 2: four paths
    from scipy.stats import norm

    p = design_params(0.0, "partial")
    d = simulate_dgp(DgpSpec(design_params(0.0), T=5, seed=9)).segment(0, 2)
    Q0 = transition_matrices(d.z[:1], p)[0]
    Q1 = transition_matrices(d.z[1:2], p)[0]
    dens = norm.pdf(d.y[1], np.array([1.0, -1.0]) + 0.9 * d.y[0], 1.0)
    law = np.empty((2, 2))
    for b in range(2):
        w = Q0[b] * dens  # over the intermediate regime
        law[b] = (w[:, None] * Q1).sum(axis=0) / w.sum()
    assert_allclose(conditional_target_law(d, p, partial_config), law, rtol=1e-13)
    assert exact_conditional_tv(d, p, partial_config) == pytest.approx(np.abs(law[0] - law[1]).sum(), rel=1e-12)


def test_identical_rules_give_zero_curve(design_path, joint_config):
    curve = init_forgetting_curve(design_path, design_params(0.8), joint_config, InitRule.uniform(), InitRule.uniform())
    assert np.all(curve.diff == 0)
