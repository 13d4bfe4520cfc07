"""Finite constrained MDPs and exact (linear-algebraic) policy evaluation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

STOCHASTIC_TOL = 1e-12


class ModelError(ValueError):
    """Raised by :func:`validate`; ``problems`` lists every violated check."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class SingularSystem(ArithmeticError):
    pass


class NotErgodic(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class TabularCmdp:
    """A finite CMDP.

    ``transition[s, a, s']`` is P(s'|s,a); ``reward`` and each ``costs[i]`` are
    indexed the same way (transition-dependent signals). ``costs`` has shape
    (p, S, A, S) and ``limits`` has shape (p,).
    """

    transition: np.ndarray
    reward: np.ndarray
    costs: np.ndarray
    limits: np.ndarray
    discount: float
    initial_dist: np.ndarray
    c_max: float = 1.0

    def __post_init__(self):
        for name in ("transition", "reward", "costs", "limits", "initial_dist"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "c_max", float(self.c_max))
        if self.costs.ndim == 1 and self.costs.size == 0:
            object.__setattr__(self, "costs", np.zeros((0,) + self.transition.shape))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def num_costs(self) -> int:
        return self.costs.shape[0]

    def signal(self, channel: int) -> np.ndarray:
        """c_i(s,a,s') for channel 0 (reward) or i >= 1 (cost i)."""
        if channel == 0:
            return self.reward
        return self.costs[channel - 1]

    def expected_signal(self, channel: int) -> np.ndarray:
        """c̄_i(s,a) = Σ_s' P(s'|s,a) c_i(s,a,s')."""
        return np.einsum("sat,sat->sa", self.transition, self.signal(channel))

    def with_limits(self, limits) -> "TabularCmdp":
        return TabularCmdp(self.transition, self.reward, self.costs, np.asarray(limits, float),
                           self.discount, self.initial_dist, self.c_max)

    # -- JSON -------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "gamma": self.discount,
            "c_max": self.c_max,
            "xi": self.initial_dist.tolist(),
            "P": self.transition.tolist(),
            "c0": self.reward.tolist(),
            "costs": self.costs.tolist(),
            "limits": self.limits.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularCmdp":
        s, a = int(doc["num_states"]), int(doc["num_actions"])
        p = len(doc["costs"])
        transition = np.asarray(doc["P"], dtype=float).reshape(s, a, s)
        model = cls(
            transition=transition,
            reward=np.asarray(doc["c0"], dtype=float).reshape(s, a, s),
            costs=np.asarray(doc["costs"], dtype=float).reshape(p, s, a, s),
            limits=np.asarray(doc["limits"], dtype=float).reshape(p),
            discount=doc["gamma"],
            initial_dist=np.asarray(doc["xi"], dtype=float).reshape(s),
            c_max=doc.get("c_max", 1.0),
        )
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "TabularCmdp":
        return cls.from_dict(json.loads(Path(path).read_text()))


def validate(model: TabularCmdp) -> None:
    """Check every model invariant; raise :class:`ModelError` listing all failures."""
    problems: list[str] = []
    P = model.transition
    if P.ndim != 3 or P.shape[0] != P.shape[2] or P.shape[0] < 1 or P.shape[1] < 1:
        raise ModelError([f"BadShape: transition has shape {P.shape}"])
    shape = P.shape
    if model.reward.shape != shape:
        problems.append(f"BadShape: reward has shape {model.reward.shape}, expected {shape}")
    if model.costs.shape[1:] != shape:
        problems.append(f"BadShape: costs has shape {model.costs.shape}")
    if model.limits.shape != (model.costs.shape[0],):
        problems.append(f"BadShape: limits has shape {model.limits.shape}")
    if model.initial_dist.shape != (shape[0],):
        problems.append(f"BadShape: initial_dist has shape {model.initial_dist.shape}")
    if problems:
        raise ModelError(problems)

    if not np.all(np.isfinite(P)):
        problems.append("NonFinite: transition")
    for s, a in zip(*np.nonzero(np.any(P < 0, axis=2))):
        problems.append(f"NegativeEntry: P(.|{s},{a})")
    row_sums = P.sum(axis=2)
    for s, a in zip(*np.nonzero(np.abs(row_sums - 1.0) > STOCHASTIC_TOL)):
        problems.append(f"RowNotStochastic({s},{a}): sums to {row_sums[s, a]!r}")

    if not 0.0 < model.discount < 1.0:
        problems.append(f"BadDiscount: gamma={model.discount!r} not in (0,1)")
    if not model.c_max > 0:
        problems.append(f"BadCMax: c_max={model.c_max!r}")

    xi = model.initial_dist
    if np.any(xi < 0) or abs(xi.sum() - 1.0) > STOCHASTIC_TOL:
        problems.append(f"BadInitialDist: sums to {xi.sum()!r}, min {xi.min()!r}")

    for channel in range(model.num_costs + 1):
        sig = model.signal(channel)
        label = "reward" if channel == 0 else f"cost {channel}"
        if not np.all(np.isfinite(sig)):
            problems.append(f"NonFinite: {label}")
        elif np.any(sig < 0):
            problems.append(f"NegativeEntry: {label}")
        elif np.any(sig > model.c_max):
            problems.append(f"EntryAboveCMax: {label} exceeds c_max={model.c_max}")
    if not np.all(np.isfinite(model.limits)):
        problems.append("NonFinite: limits")

    if problems:
        raise ModelError(problems)


# -- policies ---------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the last axis (numerically stabilised)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class SoftmaxPolicy:
    """Tabular softmax policy π_w(a|s) ∝ exp(w(s,a))."""

    logits: np.ndarray

    def __post_init__(self):
        arr = np.array(self.logits, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "logits", arr)

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "SoftmaxPolicy":
        return cls(np.zeros((num_states, num_actions)))

    @property
    def probs(self) -> np.ndarray:
        return softmax(self.logits)


def as_probs(policy) -> np.ndarray:
    """Accept a SoftmaxPolicy, anything with ``.probs``, or a raw (S, A) table."""
    if hasattr(policy, "probs"):
        return np.asarray(policy.probs, dtype=float)
    return np.asarray(policy, dtype=float)


def deterministic(actions, num_actions: int) -> np.ndarray:
    actions = np.asarray(actions)
    table = np.zeros((actions.size, num_actions))
    table[np.arange(actions.size), actions] = 1.0
    return table


def mix_uniform(probs: np.ndarray, epsilon: float) -> np.ndarray:
    """ε-uniform exploration mix of a policy table."""
    probs = as_probs(probs)
    return (1.0 - epsilon) * probs + epsilon / probs.shape[-1]


# -- exact evaluation -------------------------------------------------------

@dataclass(frozen=True)
class PolicyEvaluation:
    channel: int
    v: np.ndarray
    q: np.ndarray
    advantage: np.ndarray = field(repr=False)
    j: float


def induced_chain(model: TabularCmdp, probs: np.ndarray) -> np.ndarray:
    """P_π(s'|s) = Σ_a π(a|s) P(s'|s,a)."""
    return np.einsum("sa,sat->st", probs, model.transition)


def _solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        x = np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    resid = np.max(np.abs(matrix @ x - rhs)) if x.size else 0.0
    scale = max(1.0, float(np.max(np.abs(rhs))) if rhs.size else 1.0)
    if not np.all(np.isfinite(x)) or resid > 1e-10 * scale:
        raise SingularSystem(f"linear solve residual {resid:.3e}")
    return x


def exact_q(model: TabularCmdp, policy, channel: int, initial_dist=None) -> PolicyEvaluation:
    """Solve (I - γP_π)V = c̄_π and back out Q, A and J for one channel."""
    probs = as_probs(policy)
    gamma = model.discount
    cbar = model.expected_signal(channel)
    p_pi = induced_chain(model, probs)
    c_pi = np.sum(probs * cbar, axis=1)
    v = _solve(np.eye(model.num_states) - gamma * p_pi, c_pi)
    q = cbar + gamma * model.transition @ v
    xi = model.initial_dist if initial_dist is None else np.asarray(initial_dist, float)
    return PolicyEvaluation(channel=channel, v=v, q=q, advantage=q - v[:, None], j=float(xi @ v))


def expected_return(model: TabularCmdp, policy, channel: int, initial_dist=None) -> float:
    return exact_q(model, policy, channel, initial_dist).j


def all_returns(model: TabularCmdp, policy) -> np.ndarray:
    """Exact J_i(π) for every channel i = 0..p in one shot."""
    probs = as_probs(policy)
    p_pi = induced_chain(model, probs)
    rhs = np.stack([np.sum(probs * model.expected_signal(i), axis=1)
                    for i in range(model.num_costs + 1)], axis=1)
    v = _solve(np.eye(model.num_states) - model.discount * p_pi, rhs)
    return model.initial_dist @ v


def all_q(model: TabularCmdp, policy) -> np.ndarray:
    """Exact Q^i for every channel, shape (p+1, S, A)."""
    probs = as_probs(policy)
    p_pi = induced_chain(model, probs)
    cbars = np.stack([model.expected_signal(i) for i in range(model.num_costs + 1)])
    rhs = np.einsum("sa,isa->si", probs, cbars)
    v = _solve(np.eye(model.num_states) - model.discount * p_pi, rhs)
    return cbars + model.discount * np.einsum("sat,ti->isa", model.transition, v)


def visitation_measure(model: TabularCmdp, policy, initial_dist=None) -> np.ndarray:
    """ν_π(s,a) = (1-γ) Σ_t γ^t Pr(s_t=s, a_t=a)."""
    probs = as_probs(policy)
    xi = model.initial_dist if initial_dist is None else np.asarray(initial_dist, float)
    p_pi = induced_chain(model, probs)
    gamma = model.discount
    d = _solve(np.eye(model.num_states) - gamma * p_pi.T, (1.0 - gamma) * xi)
    return d[:, None] * probs


def is_ergodic(chain: np.ndarray) -> bool:
    """Irreducible and aperiodic iff some finite power is strictly positive."""
    n = chain.shape[0]
    base = (chain > 0).astype(float)
    power = np.eye(n)
    k = 4 * n
    while k:
        if k & 1:
            power = (power @ base > 0).astype(float)
        base = (base @ base > 0).astype(float)
        k >>= 1
    return bool(np.all(power > 0))


def sampling_chain(model: TabularCmdp, probs: np.ndarray, restart: float = 0.0) -> np.ndarray:
    """Induced chain, optionally mixed with a reset to ξ with probability ``restart``."""
    chain = induced_chain(model, probs)
    if restart > 0:
        chain = (1.0 - restart) * chain + restart * model.initial_dist[None, :]
    return chain


def stationary_distribution(model: TabularCmdp, policy, restart: float = 0.0) -> np.ndarray:
    """μ(s)·π(a|s) for the stationary μ of the induced chain.

    With ``restart`` = 1-γ the chain is the reset chain whose stationary law is
    the discounted visitation measure.
    """
    probs = as_probs(policy)
    chain = sampling_chain(model, probs, restart)
    if not is_ergodic(chain):
        raise NotErgodic("induced chain is not irreducible and aperiodic")
    n = chain.shape[0]
    # μ(P - I) = 0 with Σμ = 1: replace one balance equation by normalisation.
    a = chain.T - np.eye(n)
    a[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    mu = _solve(a, rhs)
    mu = np.clip(mu, 0.0, None)
    mu /= mu.sum()
    return mu[:, None] * probs


def performance_difference(model: TabularCmdp, pi, pi_prime, channel: int, initial_dist=None):
    """Both sides of the performance-difference identity.

    lhs = J^ρ(π) - J^ρ(π');  rhs = 1/(1-γ) E_{s,a ~ ν_ρ(π)} A_{π'}(s,a).
    """
    rho = model.initial_dist if initial_dist is None else np.asarray(initial_dist, float)
    lhs = expected_return(model, pi, channel, rho) - expected_return(model, pi_prime, channel, rho)
    nu = visitation_measure(model, pi, rho)
    adv = exact_q(model, pi_prime, channel, rho).advantage
    rhs = float(np.sum(nu * adv)) / (1.0 - model.discount)
    return lhs, rhs


def value_iteration(model: TabularCmdp, channel: int = 0, maximize: bool = True,
                    tol: float = 1e-12, max_iter: int = 100_000):
    """Optimal V for one channel (unconstrained); returns (v, greedy deterministic policy table)."""
    gamma = model.discount
    cbar = model.expected_signal(channel)
    v = np.zeros(model.num_states)
    pick = np.max if maximize else np.min
    for _ in range(max_iter):
        q = cbar + gamma * model.transition @ v
        v_new = pick(q, axis=1)
        if np.max(np.abs(v_new - v)) < tol * (1.0 - gamma):
            v = v_new
            break
        v = v_new
    q = cbar + gamma * model.transition @ v
    greedy = np.argmax(q, axis=1) if maximize else np.argmin(q, axis=1)
    return v, deterministic(greedy, model.num_actions)
