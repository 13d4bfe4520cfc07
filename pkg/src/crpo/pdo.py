"""Primal-dual baseline: NPG on the Lagrangian with projected dual ascent."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cmdp import SoftmaxPolicy, TabularCmdp, all_returns
from .record import RunRecord
from .tabular import estimate_constraints, evaluate_channels
from .td import TdConfig

# dual stepsizes tried in the original experiments
DUAL_GRID = (0.0001, 0.0005, 0.001, 0.005, 0.01, 0.05)


@dataclass(frozen=True)
class PdoConfig:
    t_max: int = 1000
    alpha: float = 0.01
    beta_dual: float = 0.005
    lambda_max: float | None = None  # None -> 100/(1-γ)
    td: TdConfig = field(default_factory=TdConfig)
    seed: int = 0
    eval_mode: str = "exact"

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.beta_dual < 0:
            raise ValueError("beta_dual must be non-negative")
        if self.lambda_max is not None and not self.lambda_max > 0:
            raise ValueError("lambda_max must be positive")
        if self.eval_mode not in ("td", "exact"):
            raise ValueError("eval_mode must be 'td' or 'exact'")


def run_pdo(model: TabularCmdp, cfg: PdoConfig) -> RunRecord:
    gamma = model.discount
    lam_max = cfg.lambda_max if cfg.lambda_max is not None else 100.0 / (1.0 - gamma)
    lam = np.zeros(model.num_costs)
    policy = SoftmaxPolicy.uniform(model.num_states, model.num_actions)
    record = RunRecord(algo="pdo", limits=model.limits.copy(), seed=cfg.seed)
    for t in range(cfg.t_max):
        probs = policy.probs
        qbars = evaluate_channels(model, probs, cfg.eval_mode, cfg.td, cfg.seed, t)
        jbar = estimate_constraints(model, probs, qbars)
        feasible = bool(np.all(jbar[1:] <= model.limits))
        record.append("lagrangian", jbar, feasible, all_returns(model, probs), lam)
        q_lagrange = qbars[0].values - sum(lam[i] * qbars[i + 1].values for i in range(lam.size))
        policy = SoftmaxPolicy(policy.logits + cfg.alpha * q_lagrange / (1.0 - gamma))
        lam = np.clip(lam + cfg.beta_dual * (jbar[1:] - model.limits), 0.0, lam_max)
    record.final_logits = policy.logits
    return record


def final_gap(record: RunRecord, j_star: np.ndarray) -> float:
    """|J_0* - J_0| plus total violation of the final-window average.

    The absolute value matters: overshooting J_0* is only possible by violating
    a constraint and must not score as a negative gap.
    """
    avg = record.window_average()
    violation = np.clip(avg[1:] - record.limits, 0.0, None).sum()
    return float(abs(j_star[0] - avg[0]) + violation)


def tune_dual_stepsize(model: TabularCmdp, base: PdoConfig, j_star, grid=DUAL_GRID):
    """Best dual stepsize on the grid by final gap (ties -> smaller stepsize)."""
    from dataclasses import replace

    scores = []
    for beta in grid:
        rec = run_pdo(model, replace(base, beta_dual=beta))
        scores.append((final_gap(rec, j_star), beta))
    best = min(scores, key=lambda x: (x[0] if math.isfinite(x[0]) else math.inf, x[1]))
    return best[1], scores
