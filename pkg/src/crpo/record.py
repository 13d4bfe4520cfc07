"""Per-iteration traces shared by CRPO, PDO and unconstrained NPG runs."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

FEASIBILITY_WINDOW = 50


@dataclass
class RunRecord:
    """Iteration trace.

    ``target[t]`` is ``"objective"``, ``"constraint_i"`` or, for the primal-dual
    baseline, ``"lagrangian"``. ``jbar`` and ``exact_j`` have shape (T, p+1).
    """

    algo: str
    limits: np.ndarray
    seed: int
    target: list[str] = field(default_factory=list)
    jbar: list[np.ndarray] = field(default_factory=list)
    in_n0: list[bool] = field(default_factory=list)
    exact_j: list[np.ndarray] = field(default_factory=list)
    lambdas: list[np.ndarray] | None = None
    selected: int | None = None
    selected_logits: np.ndarray | None = None
    final_logits: np.ndarray | None = None

    def append(self, target: str, jbar, in_n0: bool, exact_j, lam=None) -> None:
        self.target.append(target)
        self.jbar.append(np.asarray(jbar, dtype=float))
        self.in_n0.append(bool(in_n0))
        self.exact_j.append(np.asarray(exact_j, dtype=float))
        if lam is not None:
            if self.lambdas is None:
                self.lambdas = []
            self.lambdas.append(np.asarray(lam, dtype=float))

    # -- derived quantities ---------------------------------------------------
    @property
    def num_iterations(self) -> int:
        return len(self.target)

    @property
    def n0(self) -> list[int]:
        return [t for t, flag in enumerate(self.in_n0) if flag]

    @property
    def empty_n0(self) -> bool:
        return not any(self.in_n0)

    def exact_j_array(self) -> np.ndarray:
        return np.array(self.exact_j)

    def n0_average(self) -> np.ndarray | None:
        """Exact J_i averaged over N_0 (the expectation over a uniform w_out)."""
        idx = self.n0
        if not idx:
            return None
        return self.exact_j_array()[idx].mean(axis=0)

    def window_average(self, fraction: float = 0.1) -> np.ndarray:
        j = self.exact_j_array()
        width = max(1, int(round(fraction * len(j))))
        return j[-width:].mean(axis=0)

    def final_avg_j(self) -> np.ndarray | None:
        """N_0-average for CRPO/NPG; last-10% window average for the primal-dual baseline."""
        if self.algo == "pdo":
            return self.window_average()
        return self.n0_average()

    def first_feasible_iter(self, window: int = FEASIBILITY_WINDOW) -> int | None:
        """First t with all exact J_i <= d_i for iterations t .. t+window-1."""
        j = self.exact_j_array()
        if j.size == 0:
            return None
        ok = np.all(j[:, 1:] <= self.limits[None, :], axis=1)
        run = 0
        for t, flag in enumerate(ok):
            run = run + 1 if flag else 0
            if run >= window:
                return t - window + 1
        return None

    # -- serialisation ----------------------------------------------------------
    def summary(self) -> dict:
        avg = self.final_avg_j()
        return {
            "algo": self.algo,
            "final_avg_j": None if avg is None else avg.tolist(),
            "final_j": self.exact_j[-1].tolist() if self.exact_j else None,
            "n0_size": len(self.n0),
            "first_feasible_iter": self.first_feasible_iter(),
            "seed": self.seed,
        }

    def to_dict(self) -> dict:
        doc = {
            "algo": self.algo,
            "seed": self.seed,
            "limits": self.limits.tolist(),
            "iterations": [
                {
                    "t": t,
                    "target": self.target[t],
                    "jbar": self.jbar[t].tolist(),
                    "in_n0": self.in_n0[t],
                    "exact_j": self.exact_j[t].tolist(),
                    **({"lambda": self.lambdas[t].tolist()} if self.lambdas else {}),
                }
                for t in range(self.num_iterations)
            ],
            "final": {
                "n0": self.n0,
                "empty_n0": self.empty_n0,
                "selected": self.selected,
                "selected_logits": None if self.selected_logits is None
                else self.selected_logits.tolist(),
                "n0_average_j": None if self.n0_average() is None else self.n0_average().tolist(),
            },
        }
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def csv_header(self) -> list[str]:
        p1 = len(self.limits) + 1
        header = ["t", "target"] + [f"jbar_{i}" for i in range(p1)] + ["in_n0"]
        header += [f"exact_j_{i}" for i in range(p1)]
        if self.lambdas:
            header += [f"lambda_{i}" for i in range(1, p1)]
        return header

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.csv_header())
        for t in range(self.num_iterations):
            row = [t, self.target[t], *map(repr, self.jbar[t].tolist()), int(self.in_n0[t]),
                   *map(repr, self.exact_j[t].tolist())]
            if self.lambdas:
                row += list(map(repr, self.lambdas[t].tolist()))
            writer.writerow(row)
        return buf.getvalue()


def read_trace_csv(text: str) -> list[dict]:
    """Parse a trace CSV back into typed rows."""
    rows = []
    for raw in csv.DictReader(io.StringIO(text)):
        row = {"t": int(raw.pop("t")), "target": raw.pop("target"),
               "in_n0": bool(int(raw.pop("in_n0")))}
        row.update({k: float(v) for k, v in raw.items()})
        rows.append(row)
    return rows
