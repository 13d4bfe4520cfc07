"""Command-line front end.

Exit codes: 0 ok, 1 usage/config error, 2 infeasible model, 3 empty N_0.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .cmdp import ModelError, TabularCmdp, NotErgodic, validate
from .envs import make_garnet, make_gridworld, make_twostate, make_wall_gridworld
from .experiments import (ALGOS, ConfigError, atomic_write, compare, ranges, run_algo, sweep,
                          sweep_csv, write_run)
from .lp_oracle import solve_optimal

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_EMPTY_N0 = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _load_model(path) -> TabularCmdp:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read model {path}: {exc}") from exc
    try:
        model = TabularCmdp.from_dict(doc)
        validate(model)
    except ModelError as exc:
        lines = [f"invalid model {path}:"] + [f"  {p}" for p in exc.problems]
        raise UsageError("\n".join(lines)) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid model {path}: {exc!r}") from exc
    return model


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    return doc


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=True) + "\n"


# -- subcommands ----------------------------------------------------------------

def cmd_solve(args) -> int:
    model = _load_model(args.model)
    sol = solve_optimal(model)
    text = _dump(sol.to_dict())
    if args.out:
        atomic_write(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK if sol.status == "optimal" else EXIT_INFEASIBLE


def cmd_run(args) -> int:
    model = _load_model(args.model)
    config = _load_config(args.config)
    record = run_algo(args.algo, model, config, args.seed)
    summary = write_run(record, args.out)
    sys.stdout.write(_dump(summary))
    if args.algo == "crpo" and record.empty_n0:
        print("N_0 is empty: no iterate met the constraint gate", file=sys.stderr)
        return EXIT_EMPTY_N0
    return EXIT_OK


def cmd_compare(args) -> int:
    model = _load_model(args.model)
    first, second = _load_config(args.crpo_config), _load_config(args.pdo_config)
    report = compare(model, first, second, args.seeds, out_dir=args.out, jobs=args.jobs,
                     algos=tuple(args.algos))
    atomic_write(Path(args.out) / "compare.json", _dump(report))
    prop = report["property"]
    print(f"{prop['statement']}: {'PASS' if prop['pass'] else 'FAIL'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    model = _load_model(args.model)
    config = _load_config(args.config)
    scale = 1.0
    if args.scale_by_cost_range:
        scale = max(ranges(model, i) for i in range(1, model.num_costs + 1)) / 100.0
    result = sweep(model, args.algo, args.param, args.values, config, args.seeds,
                   jobs=args.jobs, scale=scale)
    out = Path(args.out)
    atomic_write(out / f"sweep_{args.param}.csv", sweep_csv(result))
    stats = {k: v for k, v in result.items() if k != "rows"}
    stats["medians"] = {repr(k): v for k, v in stats["medians"].items()}
    stats["scale"] = scale
    atomic_write(out / f"sweep_{args.param}.json", _dump(stats))
    if "robustness" in result:
        print(f"robustness (spread of median final J_0): {result['robustness']!r}")
    if "best" in result:
        print(f"best {args.param}: {result['best']!r}")
    return EXIT_OK


def cmd_make(args) -> int:
    if args.env == "twostate":
        model = make_twostate(limit=args.limit if args.limit is not None else 0.5)
    elif args.env == "garnet":
        model = make_garnet(args.states, args.actions, args.branching, args.costs, seed=args.seed,
                            gamma=args.gamma)
    elif args.env == "wall":
        model = make_wall_gridworld()
    else:
        model = make_gridworld(args.width, args.height, seed=args.seed)
    if args.limit is not None and args.env != "twostate":
        model = model.with_limits([args.limit] * model.num_costs)
    atomic_write(args.out, json.dumps(model.to_dict()) + "\n")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crpo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="exact optimum via the occupancy-measure LP")
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("run", help="single seeded run, writes trace CSV + summary JSON")
    p.add_argument("--algo", choices=ALGOS, default="crpo")
    p.add_argument("--model", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="two algorithms over several seeds")
    p.add_argument("--model", required=True)
    p.add_argument("--crpo-config")
    p.add_argument("--pdo-config")
    p.add_argument("--algos", nargs=2, choices=ALGOS, default=["crpo", "pdo"])
    p.add_argument("--seeds", type=int, nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="grid over eta, alpha or beta_dual")
    p.add_argument("--param", choices=("eta", "alpha", "beta_dual"), required=True)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--algo", choices=ALGOS, default="crpo")
    p.add_argument("--model", required=True)
    p.add_argument("--config")
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--scale-by-cost-range", action="store_true",
                   help="multiply each value by (largest cost range)/100")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("make", help="write a generated model as JSON")
    p.add_argument("--env", choices=("twostate", "garnet", "wall", "gridworld"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--states", type=int, default=10)
    p.add_argument("--actions", type=int, default=4)
    p.add_argument("--branching", type=int, default=3)
    p.add_argument("--costs", type=int, default=1)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--width", type=int, default=5)
    p.add_argument("--height", type=int, default=5)
    p.add_argument("--limit", type=float)
    p.set_defaults(func=cmd_make)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2, which is reserved for infeasible
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotErgodic as exc:
        print(f"error: {exc} (set td.restart > 0 or eval_mode=exact)", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
