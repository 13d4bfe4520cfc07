import numpy as np
import pytest

from crpo.cmdp import TabularCmdp
from crpo.envs import make_garnet, make_twostate
from crpo.lp_oracle import solve_optimal
from crpo.pdo import DUAL_GRID, PdoConfig, final_gap, run_pdo, tune_dual_stepsize
from crpo.record import read_trace_csv
from crpo.tabular import CrpoConfig, run_npg


def test_dual_grid_is_the_published_one():
    assert DUAL_GRID == (0.0001, 0.0005, 0.001, 0.005, 0.01, 0.05)


def test_config_validation():
    with pytest.raises(ValueError):
        PdoConfig(beta_dual=-1.0)
    with pytest.raises(ValueError):
        PdoConfig(lambda_max=0.0)


def test_zero_costs_keep_duals_at_zero_and_match_npg():
    m = make_garnet(6, 3, 3, seed=2)
    zero = TabularCmdp(m.transition, m.reward, np.zeros_like(m.costs), m.limits, m.discount,
                       m.initial_dist)
    rec = run_pdo(zero, PdoConfig(t_max=80, alpha=0.05))
    assert all(np.all(lam == 0) for lam in rec.lambdas)
    npg = run_npg(zero, CrpoConfig(t_max=80, alpha=0.05))
    assert np.allclose(rec.exact_j_array(), npg.exact_j_array(), atol=1e-12)


def test_zero_dual_stepsize_ignores_constraints():
    m = make_twostate()
    rec = run_pdo(m, PdoConfig(t_max=100, alpha=0.05, beta_dual=0.0))
    assert all(np.all(lam == 0) for lam in rec.lambdas)
    npg = run_npg(m, CrpoConfig(t_max=100, alpha=0.05))
    assert np.allclose(rec.exact_j_array(), npg.exact_j_array(), atol=1e-12)


def test_duals_stay_in_box():
    m = make_twostate(limit=0.05)
    rec = run_pdo(m, PdoConfig(t_max=300, alpha=0.05, beta_dual=0.5, lambda_max=3.0))
    lam = np.array(rec.lambdas)
    assert np.all(lam >= 0) and np.all(lam <= 3.0) and lam.max() == 3.0


def test_duals_decrease_through_feasible_stretches():
    m = make_garnet(10, 4, 3, seed=0)
    rec = run_pdo(m, PdoConfig(t_max=1500, alpha=0.05, beta_dual=0.05))
    jbar = np.array(rec.jbar)
    lam = np.array(rec.lambdas)[:, 0]
    feasible = jbar[:, 1] < m.limits[0]
    windows = 0
    for t in range(len(jbar) - 50):
        if feasible[t:t + 50].all() and lam[t] > 0:
            seg = lam[t:t + 51]
            positive = seg > 0
            assert np.all(np.diff(seg)[positive[:-1]] < 0)
            windows += 1
    assert windows > 0


def test_lambda_columns_in_trace():
    rec = run_pdo(make_twostate(), PdoConfig(t_max=10, alpha=0.05))
    text = rec.to_csv()
    assert text.splitlines()[0].endswith(",lambda_1")
    rows = read_trace_csv(text)
    assert [r["lambda_1"] for r in rows] == [float(lam[0]) for lam in rec.lambdas]
    assert all(r["target"] == "lagrangian" for r in rows)


def test_twostate_best_tuned():
    m = make_twostate()
    j_star = solve_optimal(m).j_star
    base = PdoConfig(t_max=3000, alpha=0.05)
    best, scores = tune_dual_stepsize(m, base, j_star)
    assert best in DUAL_GRID and len(scores) == len(DUAL_GRID)
    avg = run_pdo(m, PdoConfig(t_max=3000, alpha=0.05, beta_dual=best)).window_average()
    assert avg[1] <= 0.5 + 0.1
    assert abs(avg[0] - 5.0) <= 0.5


def test_final_gap_penalises_overshoot():
    m = make_twostate()
    rec = run_pdo(m, PdoConfig(t_max=200, alpha=0.05, beta_dual=0.0))
    # unconstrained NPG overshoots J_0* = 5 by violating the cost limit
    assert final_gap(rec, np.array([5.0, 0.5])) > 4.0
