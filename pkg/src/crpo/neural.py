"""CRPO with two-layer ReLU networks: neural softmax policy, projected neural TD,
temperature-coupled NPG steps."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .cmdp import NotErgodic, TabularCmdp, all_returns, softmax, stationary_distribution
from .record import RunRecord
from .tabular import OBJECTIVE, select_target, target_index


class DegenerateTemperature(ArithmeticError):
    pass


# -- network --------------------------------------------------------------------

@dataclass(eq=False)
class TwoLayerNet:
    """f(x; W) = (1/√m) Σ_r b_r ReLU(W_r · x); only W is trained, b is fixed."""

    w: np.ndarray   # (m, d)
    b: np.ndarray   # (m,)
    w0: np.ndarray  # (m, d) initial snapshot

    @property
    def m(self) -> int:
        return self.w.shape[0]

    @property
    def d(self) -> int:
        return self.w.shape[1]

    def with_weights(self, w: np.ndarray) -> "TwoLayerNet":
        return TwoLayerNet(np.asarray(w, float).reshape(self.w.shape), self.b, self.w0)

    def to_dict(self) -> dict:
        return {"m": self.m, "d": self.d, "b": self.b.tolist(),
                "w": self.w.ravel().tolist(), "w0": self.w0.ravel().tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "TwoLayerNet":
        m, d = int(doc["m"]), int(doc["d"])
        return cls(np.asarray(doc["w"], float).reshape(m, d), np.asarray(doc["b"], float),
                   np.asarray(doc["w0"], float).reshape(m, d))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))


def init_net(m: int, d: int, seed: int) -> TwoLayerNet:
    """Rows of W_0 are unit-norm Gaussian directions; b_r ~ U[-1, 1]."""
    if m < 1 or d < 2:
        raise ValueError("need m >= 1 and d >= 2")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((m, d))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    b = rng.uniform(-1.0, 1.0, size=m)
    return TwoLayerNet(w, b, w.copy())


def forward(net: TwoLayerNet, psi: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """Network output for one input (d,) or a batch (n, d)."""
    w = net.w if w is None else np.asarray(w, float).reshape(net.w.shape)
    pre = psi @ w.T
    return (np.where(pre > 0, pre, 0.0) @ net.b) / math.sqrt(net.m)


def grad(net: TwoLayerNet, psi: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """∇_W f for one input, flattened to length m·d (rows φ^r = b_r/√m 1{W_r·ψ>0} ψ)."""
    w = net.w if w is None else np.asarray(w, float).reshape(net.w.shape)
    active = (w @ psi > 0).astype(float)
    return ((net.b * active)[:, None] * psi[None, :] / math.sqrt(net.m)).ravel()


# -- features and policies --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeatureEmbedding:
    """ψ(s,a) table, shape (S, A, d), every row with 2-norm <= 1."""

    psi: np.ndarray

    def __post_init__(self):
        if np.any(np.linalg.norm(self.psi, axis=-1) > 1.0 + 1e-12):
            raise ValueError("feature vectors must have 2-norm <= 1")

    @classmethod
    def random(cls, num_states: int, num_actions: int, d: int = 16, seed: int = 0):
        rng = np.random.default_rng(seed)
        psi = rng.standard_normal((num_states, num_actions, d))
        psi /= np.linalg.norm(psi, axis=-1, keepdims=True)
        return cls(psi)

    @property
    def flat(self) -> np.ndarray:
        return self.psi.reshape(-1, self.psi.shape[-1])


@dataclass(frozen=True, eq=False)
class NeuralPolicy:
    """π^τ_W(a|s) ∝ exp(τ f(ψ(s,a); W))."""

    net: TwoLayerNet
    tau: float
    embedding: FeatureEmbedding

    def logits(self) -> np.ndarray:
        S, A, _ = self.embedding.psi.shape
        return self.tau * forward(self.net, self.embedding.flat).reshape(S, A)

    def scaled_logits(self) -> np.ndarray:
        """Logits of π_{τW}: the network evaluated at the scaled weights τW."""
        S, A, _ = self.embedding.psi.shape
        return forward(self.net, self.embedding.flat, self.tau * self.net.w).reshape(S, A)

    @property
    def probs(self) -> np.ndarray:
        return softmax(self.logits())


def neural_npg_step(policy: NeuralPolicy, direction_params: np.ndarray, alpha: float,
                    direction: str) -> NeuralPolicy:
    """τ' = τ + α and τ'W' = τW ± α θ̄."""
    sign = {"ascend": 1.0, "descend": -1.0}[direction]
    tau = policy.tau + alpha
    if tau == 0:
        raise DegenerateTemperature("temperature reached zero")
    theta = np.asarray(direction_params, float).reshape(policy.net.w.shape)
    w = (policy.tau * policy.net.w + sign * alpha * theta) / tau
    return NeuralPolicy(policy.net.with_weights(w), tau, policy.embedding)


# -- projected neural TD ------------------------------------------------------------

@dataclass(frozen=True)
class NeuralTdConfig:
    k_in: int = 2000
    radius: float = 10.0
    beta: float | None = None  # None -> min(1/√K, (1-γ)/12)
    seed: int = 0
    restart: float = 0.0

    def __post_init__(self):
        if self.k_in < 1:
            raise ValueError("k_in must be >= 1")
        if self.radius < 0:
            raise ValueError("radius must be non-negative")

    def stepsize(self, gamma: float) -> float:
        if self.beta is not None:
            return self.beta
        return min(1.0 / math.sqrt(self.k_in), (1.0 - gamma) / 12.0)


@numba.njit(cache=True)
def _neural_td_kernel(theta0, b, psi, pair_cdf, next_cdf, action_cdf, signal, gamma, beta,
                      radius, u, max_dev):
    m, d = theta0.shape
    num_actions = action_cdf.shape[1]
    num_states = action_cdf.shape[0]
    scale = 1.0 / math.sqrt(m)
    theta = theta0.copy()
    total = np.zeros_like(theta0)
    worst = 0.0
    for k in range(u.shape[0]):
        total += theta - theta0  # averaged as deviations so R = 0 returns θ_0 exactly
        x = min(np.searchsorted(pair_cdf, u[k, 0], side="right"), pair_cdf.size - 1)
        s = x // num_actions
        a = x % num_actions
        s2 = min(np.searchsorted(next_cdf[s, a], u[k, 1], side="right"), num_states - 1)
        a2 = min(np.searchsorted(action_cdf[s2], u[k, 2], side="right"), num_actions - 1)
        x2 = s2 * num_actions + a2
        fx = 0.0
        fx2 = 0.0
        pre = np.empty(m)
        for r in range(m):
            p1 = 0.0
            p2 = 0.0
            for j in range(d):
                p1 += theta[r, j] * psi[x, j]
                p2 += theta[r, j] * psi[x2, j]
            pre[r] = p1
            if p1 > 0:
                fx += b[r] * p1
            if p2 > 0:
                fx2 += b[r] * p2
        fx *= scale
        fx2 *= scale
        step = beta * (signal[s, a, s2] + gamma * fx2 - fx) * scale
        for r in range(m):
            if pre[r] > 0:
                c = step * b[r]
                for j in range(d):
                    theta[r, j] += c * psi[x, j]
        dev = 0.0
        for r in range(m):
            for j in range(d):
                dev += (theta[r, j] - theta0[r, j]) ** 2
        dev = math.sqrt(dev)
        if dev > radius:
            shrink = radius / dev
            for r in range(m):
                for j in range(d):
                    theta[r, j] = theta0[r, j] + shrink * (theta[r, j] - theta0[r, j])
            dev = radius
        if dev > worst:
            worst = dev
    max_dev[0] = worst
    return theta0 + total / u.shape[0]


@dataclass(frozen=True, eq=False)
class NeuralTdResult:
    theta_bar: np.ndarray
    net: TwoLayerNet
    max_deviation: float  # max_k ‖θ_k - θ_0‖ over the iterates

    def values(self, embedding: FeatureEmbedding) -> np.ndarray:
        S, A, _ = embedding.psi.shape
        return forward(self.net, embedding.flat, self.theta_bar).reshape(S, A)


def neural_td_evaluate(model: TabularCmdp, policy: NeuralPolicy, channel: int,
                       cfg: NeuralTdConfig, rng: np.random.Generator | None = None) -> NeuralTdResult:
    """Projected semi-gradient TD from θ_0 = W_0, returning the averaged iterate."""
    probs = policy.probs
    pairs = stationary_distribution(model, probs, restart=cfg.restart)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    u = rng.random((cfg.k_in, 3))
    net = policy.net
    max_dev = np.zeros(1)
    theta_bar = _neural_td_kernel(
        np.ascontiguousarray(net.w0), net.b, np.ascontiguousarray(policy.embedding.flat),
        np.cumsum(pairs.ravel()), np.cumsum(model.transition, axis=2), np.cumsum(probs, axis=1),
        np.ascontiguousarray(model.signal(channel)), model.discount,
        cfg.stepsize(model.discount), cfg.radius, u, max_dev)
    return NeuralTdResult(theta_bar, net.with_weights(theta_bar), float(max_dev[0]))


def estimate_constraints_sampled(model: TabularCmdp, policy: NeuralPolicy, values, batch_n: int,
                                 rng: np.random.Generator) -> np.ndarray:
    """J̄_i = (1/N) Σ_j Q̄^i(s_j, a_j) with s_j ~ ξ, a_j ~ π(·|s_j).

    ``values`` is a sequence of (S, A) tables, one per channel.
    """
    if batch_n < 1:
        raise ValueError("batch_n must be >= 1")
    probs = policy.probs if hasattr(policy, "probs") else np.asarray(policy, float)
    states = rng.choice(model.num_states, size=batch_n, p=model.initial_dist)
    cdf = np.cumsum(probs[states], axis=1)
    actions = np.minimum((rng.random(batch_n)[:, None] >= cdf).sum(axis=1), model.num_actions - 1)
    return np.array([float(np.mean(np.asarray(v)[states, actions])) for v in values])


def default_batch_size(t_max: int, delta: float = 0.1) -> int:
    """N = T log(2T/δ)."""
    return max(1, math.ceil(t_max * math.log(2 * t_max / delta)))


# -- neural CRPO ------------------------------------------------------------------

@dataclass(frozen=True)
class NeuralCrpoConfig:
    t_max: int = 200
    alpha: float | None = None  # None -> 1/√T
    eta: float = 0.5
    m: int = 64
    d: int = 16
    td: NeuralTdConfig = field(default_factory=NeuralTdConfig)
    batch_n: int | None = None  # None -> T log(2T/δ)
    delta: float = 0.1
    tie_break: str = "first-index"
    seed: int = 0

    def step(self) -> float:
        return self.alpha if self.alpha is not None else 1.0 / math.sqrt(self.t_max)


def run_neural_crpo(model: TabularCmdp, cfg: NeuralCrpoConfig,
                    embedding: FeatureEmbedding | None = None, record_nets: bool = False):
    """CRPO with neural value/policy networks; exact J_i are recorded for audit.

    Returns (record, info) where ``info`` carries the final policy, the per-step
    direction norms, TD deviations and, optionally, the effective weights τ_t W_t.
    """
    if embedding is None:
        embedding = FeatureEmbedding.random(model.num_states, model.num_actions, cfg.d, cfg.seed)
    net = init_net(cfg.m, embedding.psi.shape[-1], cfg.seed)
    policy = NeuralPolicy(net, 0.0, embedding)
    alpha = cfg.step()
    batch_n = cfg.batch_n or default_batch_size(cfg.t_max, cfg.delta)
    select_rng = np.random.default_rng([cfg.seed, 0xC4])
    record = RunRecord(algo="neural-crpo", limits=model.limits.copy(), seed=cfg.seed)
    info = {"direction_norms": [], "max_deviation": [], "effective_weights": [], "b": net.b.copy()}
    history = []
    for t in range(cfg.t_max):
        probs = policy.probs
        results = []
        for i in range(model.num_costs + 1):
            try:
                results.append(neural_td_evaluate(model, policy, i, cfg.td,
                                                  rng=np.random.default_rng([cfg.seed, t, i])))
            except NotErgodic as exc:
                err = NotErgodic(f"iteration {t}: {exc}")
                err.iteration = t
                raise err from exc
        tables = [res.values(embedding) for res in results]
        jbar = estimate_constraints_sampled(model, probs, tables, batch_n,
                                            np.random.default_rng([cfg.seed, t, 0xBA7]))
        target = select_target(jbar[1:], model.limits, cfg.eta, cfg.tie_break, select_rng)
        record.append(target, jbar, target == OBJECTIVE, all_returns(model, probs))
        history.append((policy.tau, policy.net.w))
        if record_nets:
            info["effective_weights"].append(policy.tau * policy.net.w)
        direction = results[target_index(target)].theta_bar
        info["direction_norms"].append(float(np.linalg.norm(direction)))
        info["max_deviation"].append(max(res.max_deviation for res in results))
        policy = neural_npg_step(policy, direction, alpha,
                                 "ascend" if target == OBJECTIVE else "descend")
    info["policy"] = policy
    if record_nets:
        info["effective_weights"].append(policy.tau * policy.net.w)
    n0 = record.n0
    if n0:
        record.selected = int(n0[select_rng.integers(len(n0))])
        tau, w = history[record.selected]
        record.selected_logits = NeuralPolicy(net.with_weights(w), tau, embedding).logits()
    record.final_logits = policy.logits()
    return record, info
