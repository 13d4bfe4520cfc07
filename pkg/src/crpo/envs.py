"""Seeded benchmark CMDPs."""

from __future__ import annotations

import numpy as np

from .cmdp import TabularCmdp, all_returns, validate, value_iteration
from .lp_oracle import solve_optimal


class InfeasibleGenerated(RuntimeError):
    pass


def make_twostate(gamma: float = 0.9, limit: float = 0.5) -> TabularCmdp:
    """Two states, two actions; a1 at s0 reaches the rewarding absorbing state s1.

    Reward is 1 on every transition into s1, cost 1 whenever a1 is taken.
    """
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = 1.0  # a0 self-loops
    P[1, 0, 1] = 1.0
    P[0, 1, 1] = 1.0  # a1: s0 -> s1, s1 -> s1
    P[1, 1, 1] = 1.0
    reward = np.zeros((2, 2, 2))
    reward[:, :, 1] = 1.0
    cost = np.zeros((1, 2, 2, 2))
    cost[0, :, 1, :] = 1.0
    return TabularCmdp(P, reward, cost, np.array([limit]), gamma, np.array([1.0, 0.0]), 1.0)


def make_single_state(c: float = 1.0, gamma: float = 0.9) -> TabularCmdp:
    """One state, one action, constant signal ``c``; Q = c/(1-γ)."""
    P = np.ones((1, 1, 1))
    return TabularCmdp(P, np.full((1, 1, 1), c), np.zeros((0, 1, 1, 1)), np.zeros(0),
                       gamma, np.ones(1), max(1.0, c))


def make_garnet(num_states: int, num_actions: int, branching: int, p_costs: int = 1,
                seed: int = 0, gamma: float = 0.9, limit_fraction: float = 0.75,
                max_attempts: int = 10) -> TabularCmdp:
    """Random Garnet CMDP.

    Each (s,a) moves to ``branching`` distinct successors with Dirichlet(1)
    weights; reward and costs are i.i.d. U[0,1]. Limits are ``limit_fraction``
    times the costs of the unconstrained reward-optimal policy, so that policy
    is infeasible; joint feasibility is confirmed with the LP oracle.
    """
    if not 1 <= branching <= num_states:
        raise ValueError("branching must lie in [1, num_states]")
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        P = np.zeros((num_states, num_actions, num_states))
        for s in range(num_states):
            for a in range(num_actions):
                succ = rng.choice(num_states, size=branching, replace=False)
                P[s, a, succ] = rng.dirichlet(np.ones(branching))
        P /= P.sum(axis=2, keepdims=True)
        shape = (num_states, num_actions, num_states)
        reward = rng.uniform(0.0, 1.0, size=shape)
        costs = rng.uniform(0.0, 1.0, size=(p_costs,) + shape)
        xi = np.full(num_states, 1.0 / num_states)
        model = TabularCmdp(P, reward, costs, np.zeros(p_costs), gamma, xi, 1.0)

        _, greedy = value_iteration(model, 0)
        limits = limit_fraction * all_returns(model, greedy)[1:]
        model = model.with_limits(limits)
        if solve_optimal(model).status == "optimal":
            validate(model)
            return model
    raise InfeasibleGenerated(f"no feasible Garnet after {max_attempts} attempts (seed {seed})")


# action order: up, down, left, right
_MOVES = ((0, 1), (0, -1), (-1, 0), (1, 0))


def make_gridworld(width: int, height: int, cost_cells=(), d: float = 0.3, seed: int = 0,
                   start=(0, 0), goal=None, slip: float = 0.1, gamma: float = 0.95) -> TabularCmdp:
    """Grid walk with penalised cells.

    Four actions; with probability ``slip`` the move is replaced by a uniformly
    random one. Moves off the grid leave the agent in place. Entering the goal
    pays reward 1 and the goal resets to the start on the next step. Entering
    any cell in ``cost_cells`` pays cost 1. ``seed`` is accepted for a uniform
    generator signature; the layout is fully specified by the arguments.
    """
    if width < 2 or height < 2:
        raise ValueError("grid dimensions must be >= 2")
    if goal is None:
        goal = (width - 1, height - 1)
    n = width * height

    def index(x, y):
        return y * width + x

    start_i, goal_i = index(*start), index(*goal)
    cost_set = {index(x, y) for x, y in cost_cells}

    def step(x, y, move):
        nx, ny = x + move[0], y + move[1]
        if 0 <= nx < width and 0 <= ny < height:
            return index(nx, ny)
        return index(x, y)

    P = np.zeros((n, 4, n))
    for y in range(height):
        for x in range(width):
            s = index(x, y)
            for a in range(4):
                if s == goal_i:
                    P[s, a, start_i] = 1.0
                    continue
                P[s, a, step(x, y, _MOVES[a])] += 1.0 - slip
                for move in _MOVES:
                    P[s, a, step(x, y, move)] += slip / 4
    reward = np.zeros((n, 4, n))
    cost = np.zeros((1, n, 4, n))
    for s in range(n):
        if s != goal_i:
            reward[s, :, goal_i] = 1.0
        for c in cost_set:
            cost[0, s, :, c] = 1.0
    xi = np.zeros(n)
    xi[start_i] = 1.0
    return TabularCmdp(P, reward, cost, np.array([d]), gamma, xi, 1.0)


def wall_cells(width: int = 5, height: int = 5):
    """Vertical cost wall in the middle column, open only in the top row."""
    x = width // 2
    return [(x, y) for y in range(height - 1)]


def make_wall_gridworld(d: float = 0.3) -> TabularCmdp:
    """5x5 benchmark: start bottom-left, goal bottom-right, wall between them."""
    return make_gridworld(5, 5, wall_cells(5, 5), d=d, goal=(4, 0))
