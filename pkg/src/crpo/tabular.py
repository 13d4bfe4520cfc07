"""CRPO with tabular softmax policies and closed-form NPG steps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cmdp import NotErgodic, SoftmaxPolicy, TabularCmdp, all_q, all_returns, as_probs, softmax
from .record import RunRecord
from .td import QEstimate, TdConfig, td_evaluate

OBJECTIVE = "objective"
TIE_BREAKS = ("first-index", "max-violation", "random")


@dataclass(frozen=True)
class CrpoConfig:
    t_max: int = 1000
    alpha: float = 0.01
    eta: float = 0.0
    td: TdConfig = field(default_factory=TdConfig)
    tie_break: str = "first-index"
    seed: int = 0
    eval_mode: str = "exact"

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.eta >= 0:
            raise ValueError("eta must be non-negative")
        if self.tie_break not in TIE_BREAKS:
            raise ValueError(f"tie_break must be one of {TIE_BREAKS}")
        if self.eval_mode not in ("td", "exact"):
            raise ValueError("eval_mode must be 'td' or 'exact'")


def constraint_target(i: int) -> str:
    return f"constraint_{i}"


def target_index(target: str) -> int:
    """0 for the objective, i for ``constraint_i``."""
    return 0 if target == OBJECTIVE else int(target.rsplit("_", 1)[1])


def estimate_constraints(model: TabularCmdp, policy, qbars) -> np.ndarray:
    """J̄_i = Σ_{s,a} ξ(s) π(a|s) Q̄^i(s,a) for every supplied channel."""
    weights = model.initial_dist[:, None] * as_probs(policy)
    return np.array([float(np.sum(weights * _values(q))) for q in qbars])


def _values(q) -> np.ndarray:
    return q.values if isinstance(q, QEstimate) else np.asarray(q, dtype=float)


def select_target(jbar, limits, eta: float, tie_break: str = "first-index",
                  rng: np.random.Generator | None = None) -> str:
    """Objective if every J̄_i <= d_i + η, else one violated constraint.

    ``jbar`` holds the p constraint estimates (channels 1..p only).
    """
    excess = np.asarray(jbar, dtype=float) - np.asarray(limits, dtype=float)
    violated = np.nonzero(excess > eta)[0]
    if violated.size == 0:
        return OBJECTIVE
    if tie_break == "first-index":
        i = violated[0]
    elif tie_break == "max-violation":
        i = violated[np.argmax(excess[violated])]
    elif tie_break == "random":
        i = rng.choice(violated)
    else:
        raise ValueError(tie_break)
    return constraint_target(int(i) + 1)


def npg_step(policy, qbar, alpha: float, direction: str, gamma: float) -> SoftmaxPolicy:
    """w' = w ± α Q̄/(1-γ)."""
    logits = policy.logits if isinstance(policy, SoftmaxPolicy) else np.asarray(policy, float)
    sign = {"ascend": 1.0, "descend": -1.0}[direction]
    return SoftmaxPolicy(logits + sign * alpha * _values(qbar) / (1.0 - gamma))


def npg_step_multiplicative(probs, qbar, alpha: float, direction: str, gamma: float) -> np.ndarray:
    """π'(a|s) = π(a|s) exp(±α Q̄(s,a)/(1-γ)) / Z(s)."""
    sign = {"ascend": 1.0, "descend": -1.0}[direction]
    probs = as_probs(probs)
    z = sign * alpha * _values(qbar) / (1.0 - gamma)
    z = z - z.max(axis=1, keepdims=True)
    unnorm = probs * np.exp(z)
    return unnorm / unnorm.sum(axis=1, keepdims=True)


def theorem_schedule(model: TabularCmdp, t_max: int, delta: float = 0.1, sigma: float = 0.6):
    """(α, η, K_in) from the tabular convergence theorem with unit constants.

    The unknown KL term E_{ν*} KL(π*‖π_{w0}) is replaced by its bound log|A|,
    valid for the uniform initial policy.
    """
    if t_max < 1 or not 0 < delta < 1:
        raise ValueError("need t_max >= 1 and delta in (0, 1)")
    sa = model.num_states * model.num_actions
    g = 1.0 - model.discount
    cmax = model.c_max
    alpha = g ** 1.5 / math.sqrt(sa * t_max)
    kl = math.log(model.num_actions)
    eta = 2.0 * math.sqrt(sa) / (g ** 1.5 * math.sqrt(t_max)) * (3.0 + kl + 3.0 * cmax + cmax ** 2)
    e = 2.0 / sigma
    log_arg = t_max ** (e + 1) / (delta * g ** e * sa ** (e - 2))
    k_in = (t_max / (g * sa)) ** (1.0 / sigma) * math.log(log_arg) ** e
    return alpha, eta, max(1, math.ceil(k_in))


def evaluate_channels(model: TabularCmdp, probs: np.ndarray, eval_mode: str, td: TdConfig,
                      seed: int, t: int) -> list[QEstimate]:
    """Q̄^i for every channel; TD streams are keyed by (seed, t, channel)."""
    channels = range(model.num_costs + 1)
    if eval_mode == "exact":
        q = all_q(model, probs)
        return [QEstimate(i, q[i], "exact") for i in channels]
    out = []
    for i in channels:
        try:
            out.append(td_evaluate(model, probs, i, td, rng=np.random.default_rng([seed, t, i])))
        except NotErgodic as exc:
            err = NotErgodic(f"iteration {t}: {exc}")
            err.iteration = t
            raise err from exc
    return out


def run_crpo(model: TabularCmdp, cfg: CrpoConfig, algo: str = "crpo") -> RunRecord:
    """Constraint-rectified policy optimisation from the uniform policy."""
    rng = np.random.default_rng([cfg.seed, 0xC4])
    gamma = model.discount
    policy = SoftmaxPolicy.uniform(model.num_states, model.num_actions)
    record = RunRecord(algo=algo, limits=model.limits.copy(), seed=cfg.seed)
    history = []
    for t in range(cfg.t_max):
        probs = policy.probs
        qbars = evaluate_channels(model, probs, cfg.eval_mode, cfg.td, cfg.seed, t)
        jbar = estimate_constraints(model, probs, qbars)
        target = select_target(jbar[1:], model.limits, cfg.eta, cfg.tie_break, rng)
        record.append(target, jbar, target == OBJECTIVE, all_returns(model, probs))
        history.append(policy.logits)
        if target == OBJECTIVE:
            policy = npg_step(policy, qbars[0], cfg.alpha, "ascend", gamma)
        else:
            policy = npg_step(policy, qbars[target_index(target)], cfg.alpha, "descend", gamma)
    record.final_logits = policy.logits
    n0 = record.n0
    if n0:
        record.selected = int(n0[rng.integers(len(n0))])
        record.selected_logits = history[record.selected]
    return record


def run_npg(model: TabularCmdp, cfg: CrpoConfig) -> RunRecord:
    """Unconstrained NPG ascent: CRPO with the gate always open."""
    return run_crpo(model, replace(cfg, eta=math.inf), algo="npg")
