import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crpo.cmdp import SoftmaxPolicy, TabularCmdp, all_returns, exact_q, softmax
from crpo.envs import make_garnet, make_single_state, make_twostate
from crpo.neural import (FeatureEmbedding, NeuralCrpoConfig, NeuralPolicy, NeuralTdConfig,
                         TwoLayerNet, default_batch_size, estimate_constraints_sampled, forward,
                         grad, init_net, neural_npg_step, neural_td_evaluate, run_neural_crpo)

# value-net settings able to represent Q of order 10 (see the ledger)
TD_WIDE = NeuralTdConfig(k_in=5000, beta=0.05, radius=100.0, restart=0.1)


def unit_vectors(rng, n, d):
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def zero_cost(model):
    return TabularCmdp(model.transition, model.reward, np.zeros_like(model.costs), model.limits,
                       model.discount, model.initial_dist)


# -- network -----------------------------------------------------------------------

def test_init_rows_unit_norm_and_b_range():
    net = init_net(64, 8, seed=3)
    assert np.allclose(np.linalg.norm(net.w, axis=1), 1.0, atol=1e-12)
    assert np.all(np.abs(net.b) <= 1.0)
    assert np.array_equal(net.w, net.w0)


def test_init_deterministic():
    a, b = init_net(16, 4, 9), init_net(16, 4, 9)
    assert np.array_equal(a.w, b.w) and np.array_equal(a.b, b.b)


def test_init_rejects_bad_shapes():
    with pytest.raises(ValueError):
        init_net(0, 4, 0)
    with pytest.raises(ValueError):
        init_net(4, 1, 0)


def test_output_bound_at_init():
    net = init_net(64, 8, seed=3)
    psi = unit_vectors(np.random.default_rng(0), 1000, 8)
    assert np.all(np.abs(forward(net, psi)) <= math.sqrt(64))


def test_zero_input():
    net = init_net(8, 4, 0)
    assert forward(net, np.zeros(4)) == 0.0
    assert not grad(net, np.zeros(4)).any()


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(1)
    net = init_net(32, 6, seed=2)
    eps, checked = 1e-6, 0
    while checked < 100:
        w = net.w0 + 0.3 * rng.standard_normal(net.w.shape)
        psi = unit_vectors(rng, 1, 6)[0] * rng.uniform(0.2, 1.0)
        if np.min(np.abs(w @ psi)) < 1e-4:
            continue  # too close to a ReLU kink
        v = rng.standard_normal(w.size)
        fd = (forward(net, psi, w.ravel() + eps * v) - forward(net, psi, w.ravel() - eps * v))
        fd /= 2 * eps
        assert abs(fd - grad(net, psi, w) @ v) <= 1e-5
        checked += 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 1000), scale=st.floats(0.01, 100.0))
def test_positive_homogeneity(seed, scale):
    net = init_net(16, 5, seed)
    psi = unit_vectors(np.random.default_rng(seed), 10, 5)
    assert np.allclose(forward(net, psi, scale * net.w), scale * forward(net, psi),
                       rtol=1e-12, atol=1e-12)


def test_net_json_round_trip(tmp_path):
    net = init_net(8, 3, 1).with_weights(np.random.default_rng(0).normal(size=24))
    path = tmp_path / "net.json"
    net.save(path)
    doc = json.loads(path.read_text())
    assert set(doc) == {"m", "d", "b", "w", "w0"}
    back = TwoLayerNet.from_dict(doc)
    assert np.array_equal(back.w, net.w) and np.array_equal(back.w0, net.w0)
    assert np.array_equal(back.b, net.b)


def test_embedding_norm_check():
    with pytest.raises(ValueError):
        FeatureEmbedding(np.full((1, 1, 2), 1.0))
    emb = FeatureEmbedding.random(3, 2, 5, seed=0)
    assert np.all(np.linalg.norm(emb.psi, axis=-1) <= 1.0 + 1e-12)


# -- policies and NPG steps -------------------------------------------------------------

def test_zero_temperature_is_uniform():
    emb = FeatureEmbedding.random(3, 4, 6, seed=1)
    pol = NeuralPolicy(init_net(16, 6, 0), 0.0, emb)
    assert np.array_equal(pol.probs, np.full((3, 4), 0.25))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 1000), tau=st.floats(0.0, 20.0))
def test_temperature_identity(seed, tau):
    emb = FeatureEmbedding.random(3, 3, 6, seed=seed)
    net = init_net(16, 6, seed).with_weights(np.random.default_rng(seed).normal(size=96))
    pol = NeuralPolicy(net, tau, emb)
    assert np.max(np.abs(pol.probs - softmax(pol.scaled_logits()))) <= 1e-10
    assert np.allclose(pol.probs.sum(axis=1), 1.0, atol=1e-12)


def test_first_step_from_zero_temperature():
    emb = FeatureEmbedding.random(2, 2, 4, seed=0)
    net = init_net(8, 4, 0)
    theta = np.random.default_rng(2).normal(size=32)
    pol = neural_npg_step(NeuralPolicy(net, 0.0, emb), theta, 0.1, "descend")
    assert pol.tau == pytest.approx(0.1)
    assert np.allclose(pol.net.w.ravel(), -theta)
    expected = 0.1 * forward(net, emb.flat, -theta).reshape(2, 2)
    assert np.allclose(pol.logits(), expected, atol=1e-12)


def test_effective_weights_follow_the_update_rule():
    emb = FeatureEmbedding.random(2, 2, 4, seed=0)
    pol = NeuralPolicy(init_net(8, 4, 0), 0.0, emb)
    rng = np.random.default_rng(3)
    eff = np.zeros_like(pol.net.w)
    for k in range(5):
        theta = rng.normal(size=32)
        sign = 1.0 if k % 2 else -1.0
        pol = neural_npg_step(pol, theta, 0.2, "ascend" if sign > 0 else "descend")
        eff = eff + sign * 0.2 * theta.reshape(8, 4)
        assert np.allclose(pol.tau * pol.net.w, eff, atol=1e-12)


# -- projected neural TD --------------------------------------------------------------

def test_td_stepsize_default():
    assert NeuralTdConfig(k_in=100).stepsize(0.9) == pytest.approx(0.1 / 12)
    assert NeuralTdConfig(k_in=100, beta=0.3).stepsize(0.9) == 0.3


def test_zero_radius_pins_parameters():
    model = make_garnet(4, 2, 3, seed=0)
    emb = FeatureEmbedding.random(4, 2, 6, seed=0)
    pol = NeuralPolicy(init_net(16, 6, 0), 0.0, emb)
    res = neural_td_evaluate(model, pol, 0, NeuralTdConfig(k_in=500, radius=0.0))
    assert np.array_equal(res.theta_bar, pol.net.w0)
    assert res.max_deviation == 0.0


@pytest.mark.parametrize("radius", [0.05, 0.5, 3.0])
def test_projection_invariant(radius):
    model = make_garnet(4, 2, 3, seed=1)
    emb = FeatureEmbedding.random(4, 2, 6, seed=0)
    pol = NeuralPolicy(init_net(16, 6, 0), 0.0, emb)
    res = neural_td_evaluate(model, pol, 0, NeuralTdConfig(k_in=3000, radius=radius, beta=0.2))
    assert res.max_deviation <= radius
    assert np.linalg.norm(res.theta_bar - pol.net.w0) <= radius + 1e-12


def test_single_state_fixed_point():
    model = make_single_state(c=1.0, gamma=0.5)
    emb = FeatureEmbedding.random(1, 1, 16, seed=0)
    pol = NeuralPolicy(init_net(32, 16, 0), 0.0, emb)
    res = neural_td_evaluate(model, pol, 0, NeuralTdConfig(k_in=100_000, radius=10.0))
    assert abs(res.values(emb)[0, 0] - 2.0) <= 0.2


def test_neural_td_deterministic():
    model = make_garnet(4, 2, 3, seed=1)
    emb = FeatureEmbedding.random(4, 2, 6, seed=0)
    pol = NeuralPolicy(init_net(16, 6, 0), 0.0, emb)
    cfg = NeuralTdConfig(k_in=1000)
    a = neural_td_evaluate(model, pol, 0, cfg, rng=np.random.default_rng(5)).theta_bar
    b = neural_td_evaluate(model, pol, 0, cfg, rng=np.random.default_rng(5)).theta_bar
    assert np.array_equal(a, b)


# -- sampled constraint estimation --------------------------------------------------------

def test_sampled_estimate_of_constant():
    model = make_garnet(4, 2, 3, seed=0)
    probs = SoftmaxPolicy.uniform(4, 2).probs
    est = estimate_constraints_sampled(model, probs, [np.full((4, 2), -1.5)], 7,
                                       np.random.default_rng(0))
    assert est[0] == -1.5


def test_sampled_estimate_clt_envelope():
    model = make_garnet(6, 3, 3, seed=5)
    probs = SoftmaxPolicy(np.random.default_rng(0).normal(size=(6, 3))).probs
    n = 100_000
    for channel in range(2):
        ev = exact_q(model, probs, channel)
        est = estimate_constraints_sampled(model, probs, [ev.q], n, np.random.default_rng(channel))
        assert abs(est[0] - ev.j) <= 3 * model.c_max / (1 - model.discount) / math.sqrt(n)


def test_default_batch_size():
    assert default_batch_size(200, 0.1) == math.ceil(200 * math.log(4000))
    with pytest.raises(ValueError):
        estimate_constraints_sampled(make_twostate(), np.full((2, 2), 0.5), [np.zeros((2, 2))], 0,
                                     np.random.default_rng(0))


# -- neural CRPO runs ----------------------------------------------------------------------

def test_zero_cost_run_improves_on_uniform():
    model = zero_cost(make_twostate())
    rec, info = run_neural_crpo(model, NeuralCrpoConfig(t_max=200, m=64, td=TD_WIDE),
                                record_nets=True)
    baseline = all_returns(model, SoftmaxPolicy.uniform(2, 2))[0]
    assert rec.exact_j[-1][0] > baseline + 0.5
    assert len(rec.n0) == 200
    assert np.array_equal(info["b"], info["policy"].net.b)
    # τ_t W_t - τ_0 W_0 grows at most linearly in t
    alpha = 1 / math.sqrt(200)
    eff = info["effective_weights"]
    norms = info["direction_norms"]
    for t in range(1, len(eff)):
        assert np.linalg.norm(eff[t] - eff[0]) <= t * alpha * max(norms[:t]) + 1e-9


def test_policy_rows_normalised_and_run_deterministic():
    model = make_garnet(4, 2, 3, seed=2)
    cfg = NeuralCrpoConfig(t_max=15, m=16, d=6, td=NeuralTdConfig(k_in=500), seed=4)
    a, info = run_neural_crpo(model, cfg)
    b, _ = run_neural_crpo(model, cfg)
    assert a.to_json() == b.to_json()
    assert np.allclose(info["policy"].probs.sum(axis=1), 1.0, atol=1e-12)
    assert np.array_equal(info["b"], init_net(16, 6, 4).b)


def test_wider_nets_do_not_violate_more():
    model = make_twostate()

    def excess(m, seed):
        cfg = NeuralCrpoConfig(t_max=100, m=m, seed=seed, td=TD_WIDE)
        avg = run_neural_crpo(model, cfg)[0].n0_average()
        return math.inf if avg is None else max(0.0, avg[1] - model.limits[0])

    narrow = np.median([excess(16, s) for s in range(3)])
    wide = np.median([excess(256, s) for s in range(3)])
    assert wide <= narrow
