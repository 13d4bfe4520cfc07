"""Globally optimal feasible policy via the occupancy-measure linear program."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cmdp import TabularCmdp, all_returns, validate
from .simplex import PIVOT_TOL, Infeasible, NumericalFailure, solve_lp

__all__ = ["OccupancySolution", "solve_optimal", "extract_policy", "Infeasible", "NumericalFailure"]


@dataclass(frozen=True, eq=False)
class OccupancySolution:
    status: str
    nu: np.ndarray | None = None
    policy: np.ndarray | None = None
    j_star: np.ndarray | None = None

    def to_dict(self) -> dict:
        doc = {"status": self.status}
        if self.status == "optimal":
            doc.update(nu=self.nu.tolist(), policy=self.policy.tolist(), j_star=self.j_star.tolist())
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "OccupancySolution":
        if doc["status"] != "optimal":
            return cls(status=doc["status"])
        return cls(doc["status"], np.asarray(doc["nu"], float), np.asarray(doc["policy"], float),
                   np.asarray(doc["j_star"], float))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))


def extract_policy(nu: np.ndarray) -> np.ndarray:
    """π(a|s) = ν(s,a)/Σ_a' ν(s,a'); uniform rows where the state carries no mass."""
    nu = np.asarray(nu, dtype=float)
    mass = nu.sum(axis=1, keepdims=True)
    visited = mass[:, 0] > 1e-12
    policy = np.full(nu.shape, 1.0 / nu.shape[1])
    policy[visited] = nu[visited] / mass[visited]
    return policy


def solve_optimal(model: TabularCmdp, raise_infeasible: bool = False) -> OccupancySolution:
    """max (1/(1-γ)) Σ ν c̄_0 over occupancy measures satisfying the cost limits."""
    validate(model)
    S, A, gamma = model.num_states, model.num_actions, model.discount
    n = S * A
    # flow balance: Σ_a ν(s',a) - γ Σ_{s,a} P(s'|s,a) ν(s,a) = (1-γ) ξ(s')
    outflow = np.kron(np.eye(S), np.ones((1, A)))
    inflow = model.transition.reshape(n, S).T
    A_eq = outflow - gamma * inflow
    b_eq = (1.0 - gamma) * model.initial_dist
    scale = 1.0 / (1.0 - gamma)
    A_ub = np.stack([scale * model.expected_signal(i).reshape(n)
                     for i in range(1, model.num_costs + 1)]) if model.num_costs else None
    b_ub = model.limits if model.num_costs else None
    c = -scale * model.expected_signal(0).reshape(n)
    try:
        res = solve_lp(c, A_eq, b_eq, A_ub, b_ub, tol=PIVOT_TOL)
    except Infeasible:
        if raise_infeasible:
            raise
        return OccupancySolution(status="infeasible")
    nu = res.x.reshape(S, A)
    policy = extract_policy(nu)
    return OccupancySolution("optimal", nu, policy, all_returns(model, policy))
