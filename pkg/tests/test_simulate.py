from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tvtp.exceptions import DomainError
from tvtp.model import design_params
from tvtp.simulate import DgpSpec, empirical_transition_check, innovations, simulate_dgp


def test_shape_and_initial_point():
    d = simulate_dgp(DgpSpec(design_params(0.0), T=50, burnin=0, seed=1))
    assert d.T == 50 and d.s_true.shape == (51,)
    assert d.y[0] == 0.5 and d.z[0] == 1.0
    assert set(np.unique(d.s_true)) <= {0, 1}


def test_same_key_same_draws_and_distinct_keys_differ():
    a = simulate_dgp(DgpSpec(design_params(0.8), T=100, seed=9, rep_index=3, cell_index=1))
    b = simulate_dgp(DgpSpec(design_params(0.8), T=100, seed=9, rep_index=3, cell_index=1))
    assert np.array_equal(a.y, b.y) and np.array_equal(a.z, b.z) and np.array_equal(a.s_true, b.s_true)
    for other in (dict(rep_index=4), dict(cell_index=0), dict(seed=10)):
        c = simulate_dgp(DgpSpec(design_params(0.8), T=100, **{**dict(seed=9, rep_index=3, cell_index=1), **other}))
        assert not np.array_equal(a.y, c.y)


def test_burnin_only_moves_the_observation_window():
    # the draws depend on burnin + T only, so the retained window is a suffix
    a = simulate_dgp(DgpSpec(design_params(0.0), T=20, burnin=10, seed=2))
    full = simulate_dgp(DgpSpec(design_params(0.0), T=30, burnin=0, seed=2))
    assert np.array_equal(a.y, full.y[10:])
    assert np.array_equal(a.s_true, full.s_true[10:])


def test_recursion_reproduces_innovations():
    p = design_params(0.8)
    d = simulate_dgp(DgpSpec(p, T=500, seed=4))
    u1, u2 = innovations(d, p)
    s = d.s_true[1:]
    mu = np.where(s == 0, 1.0, -1.0)
    assert_allclose(d.y[1:], mu + 0.9 * d.y[:-1] + u1, atol=1e-12)
    assert_allclose(d.z[1:], 0.2 + 0.8 * d.z[:-1] + u2, atol=1e-12)


@pytest.mark.parametrize("kwargs", [dict(T=0), dict(burnin=-1), dict(seed=-1)])
def test_invalid_specs(kwargs):
    with pytest.raises(DomainError):
        DgpSpec(design_params(0.0), **kwargs)


def test_partial_params_rejected():
    with pytest.raises(DomainError):
        DgpSpec(design_params(0.0, "partial"))


def test_transition_frequencies_follow_the_kernel():
    d = simulate_dgp(DgpSpec(design_params(0.0), T=20000, seed=8))
    check = empirical_transition_check(d, design_params(0.0))
    assert check.all_states_ok


def test_noise_free_recursion():
    from tvtp.model import ParamVector

    p = ParamVector.two_regime([1.5, -0.5], [0.0], [0.0, 0.0], [1.0, 1.0], [0.3, -0.3], 0.2, [0.0], 0.0, 0.0)
    d = simulate_dgp(DgpSpec(p, T=100, seed=3))
    assert_allclose(d.y, np.where(d.s_true == 0, 1.5, -0.5))
    assert np.all(d.z == 0.2)


def test_flat_kernel_without_covariate_effect():
    from scipy.special import expit

    from tvtp.model import ParamVector

    p = ParamVector.two_regime([1, -1], [0.9], [1, 1], [1.0, 1.0], [0.0, 0.0], 0.2, [0.8], 1.0, 0.0)
    d = simulate_dgp(DgpSpec(p, T=50000, seed=5))
    check = empirical_transition_check(d, p)
    freqs = np.array([r["stay_freq"] for r in check.rows])
    assert np.all(np.abs(freqs - expit(1.0)) < 0.05)
    assert check.all_states_ok


def test_saturated_kernel_never_switches():
    from tvtp.model import ParamVector

    p = ParamVector.two_regime([1, -1], [0.9], [1, 1], [40.0, 40.0], [0.0, 0.0], 0.2, [0.8], 1.0, 0.5)
    d = simulate_dgp(DgpSpec(p, T=5000, seed=6))
    assert np.all(d.s_true == d.s_true[0])


def test_decile_bands_on_long_design_path():
    d = simulate_dgp(DgpSpec(design_params(0.8), T=200000, seed=13))
    check = empirical_transition_check(d, design_params(0.8))
    assert check.fraction_within(0) >= 0.9 and check.fraction_within(1) >= 0.9
