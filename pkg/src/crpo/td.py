"""Tabular TD(0) evaluation of state-action values."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .cmdp import TabularCmdp, as_probs, stationary_distribution


@dataclass(frozen=True)
class TdConfig:
    """TD(0) settings.

    ``beta0/(1+k)**sigma`` is the stepsize at update k. ``restart`` > 0 samples
    from the chain that resets to ξ with that probability (1-γ gives the
    discounted visitation measure); ``epsilon`` mixes uniform exploration into
    the evaluated policy. Both default to off.
    """

    k_in: int = 10_000
    sigma: float = 0.6
    beta0: float = 0.5
    seed: int = 0
    restart: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        if self.k_in < 1:
            raise ValueError("k_in must be >= 1")
        if not 0.0 < self.sigma < 1.0:
            raise ValueError("sigma must lie in (0, 1)")
        if not self.beta0 > 0:
            raise ValueError("beta0 must be positive")
        if not 0.0 <= self.restart <= 1.0 or not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("restart and epsilon must lie in [0, 1]")

    @classmethod
    def from_dict(cls, doc: dict | None, seed: int = 0) -> "TdConfig":
        doc = dict(doc or {})
        doc.setdefault("seed", seed)
        return cls(**doc)


@dataclass(frozen=True, eq=False)
class QEstimate:
    channel: int
    values: np.ndarray
    source: str  # "td" | "exact"


@numba.njit(cache=True)
def _td_kernel(theta, pair_cdf, next_cdf, action_cdf, signal, gamma, beta0, sigma, u):
    num_actions = theta.shape[1]
    num_states = theta.shape[0]
    for k in range(u.shape[0]):
        x = min(np.searchsorted(pair_cdf, u[k, 0], side="right"), pair_cdf.size - 1)
        s = x // num_actions
        a = x % num_actions
        s2 = min(np.searchsorted(next_cdf[s, a], u[k, 1], side="right"), num_states - 1)
        a2 = min(np.searchsorted(action_cdf[s2], u[k, 2], side="right"), num_actions - 1)
        beta = beta0 / (1.0 + k) ** sigma
        theta[s, a] += beta * (signal[s, a, s2] + gamma * theta[s2, a2] - theta[s, a])


def evaluation_policy(policy, cfg: TdConfig) -> np.ndarray:
    probs = as_probs(policy)
    if cfg.epsilon > 0:
        probs = (1.0 - cfg.epsilon) * probs + cfg.epsilon / probs.shape[1]
    return probs


def td_evaluate(model: TabularCmdp, policy, channel: int, cfg: TdConfig,
                rng: np.random.Generator | None = None) -> QEstimate:
    """Run ``cfg.k_in`` TD(0) updates from θ = 0 with i.i.d. stationary samples.

    Raises :class:`~crpo.cmdp.NotErgodic` when the sampling chain is not ergodic.
    """
    probs = evaluation_policy(policy, cfg)
    pairs = stationary_distribution(model, probs, restart=cfg.restart)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    u = rng.random((cfg.k_in, 3))
    theta = np.zeros((model.num_states, model.num_actions))
    _td_kernel(theta, np.cumsum(pairs.ravel()), np.cumsum(model.transition, axis=2),
               np.cumsum(probs, axis=1), np.ascontiguousarray(model.signal(channel)),
               model.discount, cfg.beta0, cfg.sigma, u)
    return QEstimate(channel, theta, "td")


def expected_td_update(model: TabularCmdp, policy, channel: int, theta: np.ndarray,
                       restart: float = 0.0) -> np.ndarray:
    """E[c + γθ(s',a') - θ(s,a)] weighted by the sampling law, computed analytically."""
    probs = as_probs(policy)
    weights = stationary_distribution(model, probs, restart=restart)
    next_value = model.transition @ np.sum(probs * theta, axis=1)
    target = model.expected_signal(channel) + model.discount * next_value
    return weights * (target - theta)
