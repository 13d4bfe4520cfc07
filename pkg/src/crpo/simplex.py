"""Dense two-phase simplex with Bland's anti-cycling rule.

Solves   min c @ x   s.t.  A_eq @ x == b_eq,  A_ub @ x <= b_ub,  x >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-9


class Infeasible(RuntimeError):
    pass


class Unbounded(RuntimeError):
    pass


class NumericalFailure(RuntimeError):
    pass


@dataclass
class LpResult:
    x: np.ndarray
    objective: float
    phase1_objective: float
    iterations: int


def _pivot(tab: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    column = tab[:, col].copy()
    column[row] = 0.0
    tab -= np.outer(column, tab[row])


def _run(tab: np.ndarray, basis: list[int], allowed: int, max_iter: int, tol: float) -> int:
    """Minimise the objective stored in the last row (reduced costs; rhs in last column)."""
    m = tab.shape[0] - 1
    for it in range(max_iter):
        reduced = tab[-1, :allowed]
        # Bland: lowest-index column with negative reduced cost
        entering = next((j for j in range(allowed) if reduced[j] < -tol), None)
        if entering is None:
            return it
        col = tab[:m, entering]
        rows = np.nonzero(col > tol)[0]
        if rows.size == 0:
            raise Unbounded(f"column {entering} unbounded")
        ratios = tab[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol * max(1.0, abs(best))]
        # Bland: among ties leave the row whose basic variable has lowest index
        leave = min(ties, key=lambda r: basis[r])
        _pivot(tab, leave, entering)
        basis[leave] = entering
    raise NumericalFailure("simplex iteration limit reached")


def solve_lp(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, tol: float = PIVOT_TOL,
             max_iter: int = 50_000) -> LpResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, float).reshape(-1)
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, float).reshape(-1)
    m_eq, m_ub = A_eq.shape[0], A_ub.shape[0]
    m = m_eq + m_ub

    # Columns: x (n) | slacks (m_ub) | artificials (m) | rhs
    A = np.zeros((m, n + m_ub))
    A[:m_eq, :n] = A_eq
    A[m_eq:, :n] = A_ub
    A[m_eq:, n:] = np.eye(m_ub)
    b = np.concatenate([b_eq, b_ub])
    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1

    width = n + m_ub
    tab = np.zeros((m + 1, width + m + 1))
    tab[:m, :width] = A
    tab[:m, width:width + m] = np.eye(m)
    tab[:m, -1] = b
    basis = list(range(width, width + m))
    # Phase 1 objective: sum of artificials, expressed in reduced form.
    tab[-1, :width] = -A.sum(axis=0)
    tab[-1, -1] = -b.sum()
    iters = _run(tab, basis, width + m, max_iter, tol)
    phase1 = -tab[-1, -1]
    if phase1 > tol:
        raise Infeasible(f"phase-1 optimum {phase1:.3e} > {tol:g}")

    # Drive remaining (zero-level) artificials out of the basis; drop redundant rows.
    keep = []
    for r in range(m):
        if basis[r] >= width:
            cand = np.nonzero(np.abs(tab[r, :width]) > tol)[0]
            if cand.size == 0:
                continue
            _pivot(tab, r, int(cand[0]))
            basis[r] = int(cand[0])
        keep.append(r)
    tab = np.vstack([tab[keep][:, list(range(width)) + [tab.shape[1] - 1]], np.zeros(width + 1)])
    basis = [basis[r] for r in keep]

    cost = np.zeros(width)
    cost[:n] = c
    tab[-1, :width] = cost
    tab[-1, -1] = 0.0
    for r, j in enumerate(basis):
        tab[-1] -= cost[j] * tab[r]
    iters += _run(tab, basis, width, max_iter, tol)

    x = np.zeros(width)
    for r, j in enumerate(basis):
        x[j] = tab[r, -1]
    x = np.clip(x[:n], 0.0, None)
    if not np.all(np.isfinite(x)):
        raise NumericalFailure("non-finite solution")
    return LpResult(x=x, objective=float(c @ x), phase1_objective=float(phase1), iterations=iters)
