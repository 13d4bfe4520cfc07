import numpy as np
import pytest

from crpo.cmdp import (NotErgodic, SoftmaxPolicy, TabularCmdp, deterministic, exact_q,
                       mix_uniform)
from crpo.envs import make_garnet, make_single_state, make_twostate
from crpo.tabular import estimate_constraints
from crpo.td import TdConfig, evaluation_policy, expected_td_update, td_evaluate


def test_config_validation():
    for bad in ({"k_in": 0}, {"sigma": 1.0}, {"sigma": 0.0}, {"beta0": 0.0}, {"restart": 1.5}):
        with pytest.raises(ValueError):
            TdConfig(**bad)


def test_zero_cost_channel_stays_zero():
    model = make_garnet(5, 2, 3, seed=1)
    zero = TabularCmdp(model.transition, model.reward, np.zeros_like(model.costs), model.limits,
                       model.discount, model.initial_dist)
    est = td_evaluate(zero, SoftmaxPolicy.uniform(5, 2), 1, TdConfig(k_in=5000))
    assert not est.values.any()


def test_single_state_fixed_point():
    model = make_single_state(c=1.0, gamma=0.9)
    est = td_evaluate(model, np.ones((1, 1)), 0, TdConfig(k_in=10_000))
    assert est.values[0, 0] == pytest.approx(10.0, abs=0.1)


def test_absorbing_model_refused_without_restart():
    with pytest.raises(NotErgodic):
        td_evaluate(make_twostate(), SoftmaxPolicy.uniform(2, 2), 0, TdConfig(k_in=10))


@pytest.mark.xfail(strict=True, reason="global 1/k^0.6 decay is too slow for gamma=0.9 when "
                   "(s0,a1) is visited about 0.25% of the time; error is about 7")
def test_twostate_exploration_mix():
    model = make_twostate()
    cfg = TdConfig(k_in=200_000, sigma=0.6, beta0=0.5, seed=7, epsilon=0.05, restart=0.1)
    policy = deterministic([0, 0], 2)
    est = td_evaluate(model, policy, 0, cfg)
    q = exact_q(model, mix_uniform(policy, 0.05), 0).q
    assert np.linalg.norm(est.values - q) <= 0.05 * model.c_max / (1 - model.discount)


def test_evaluation_policy_mixes_uniform():
    probs = evaluation_policy(deterministic([1], 2), TdConfig(epsilon=0.2))
    assert np.allclose(probs, [[0.1, 0.9]])


@pytest.mark.parametrize("restart", [0.0, 0.3])
def test_exact_q_has_zero_expected_update(restart):
    model = make_garnet(6, 3, 3, p_costs=2, seed=3)
    probs = SoftmaxPolicy(np.random.default_rng(0).normal(size=(6, 3))).probs
    for channel in range(3):
        q = exact_q(model, probs, channel).q
        drift = expected_td_update(model, probs, channel, q, restart=restart)
        assert np.max(np.abs(drift)) <= 1e-10


def test_expected_update_nonzero_away_from_fixed_point():
    model = make_garnet(6, 3, 3, seed=3)
    probs = SoftmaxPolicy.uniform(6, 3).probs
    assert np.max(np.abs(expected_td_update(model, probs, 0, np.zeros((6, 3))))) > 1e-3


def test_deterministic_under_seed():
    model = make_garnet(5, 2, 5, seed=11, gamma=0.7)
    pol = SoftmaxPolicy.uniform(5, 2)
    a = td_evaluate(model, pol, 0, TdConfig(k_in=20_000, seed=4)).values
    b = td_evaluate(model, pol, 0, TdConfig(k_in=20_000, seed=4)).values
    c = td_evaluate(model, pol, 0, TdConfig(k_in=20_000, seed=5)).values
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_median_error_decays_with_iterations():
    model = make_garnet(5, 2, 5, seed=3, gamma=0.7)
    pol = SoftmaxPolicy.uniform(5, 2)
    q = exact_q(model, pol, 0).q
    med = []
    for k in (10_000, 100_000):
        errs = [np.linalg.norm(td_evaluate(model, pol, 0, TdConfig(k_in=k, seed=s)).values - q)
                for s in range(20)]
        med.append(np.median(errs))
    assert med[1] < med[0]


def test_constraint_estimate_error_bounded_by_q_error():
    model = make_twostate()
    probs = SoftmaxPolicy.uniform(2, 2).probs
    est = td_evaluate(model, probs, 1, TdConfig(k_in=50_000, seed=7, restart=0.1))
    q = exact_q(model, probs, 1)
    jbar = estimate_constraints(model, probs, [est])[0]
    assert abs(jbar - q.j) <= np.linalg.norm(est.values - q.q)
