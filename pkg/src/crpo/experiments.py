"""Config parsing and multi-run experiment drivers used by the CLI."""

from __future__ import annotations

import math
import os
import statistics
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .cmdp import TabularCmdp, value_iteration
from .lp_oracle import solve_optimal
from .neural import NeuralCrpoConfig, NeuralTdConfig, run_neural_crpo
from .pdo import PdoConfig, run_pdo
from .record import RunRecord
from .tabular import CrpoConfig, run_crpo, run_npg, theorem_schedule
from .td import TdConfig

ALGOS = ("crpo", "pdo", "npg", "neural")
CONFIG_KEYS = {"t_max", "alpha", "eta", "tie_break", "eval_mode", "td", "pdo", "neural", "seed",
               "delta"}


class ConfigError(ValueError):
    pass


def _tabular_parts(model: TabularCmdp, config: dict, seed: int):
    t_max = int(config.get("t_max", 1000))
    alpha, eta = config.get("alpha"), config.get("eta")
    if alpha is None or eta is None:
        th_alpha, th_eta, _ = theorem_schedule(model, t_max, config.get("delta", 0.1))
        alpha = th_alpha if alpha is None else alpha
        eta = th_eta if eta is None else eta
    try:
        td = TdConfig.from_dict(config.get("td"), seed=seed)
    except TypeError as exc:
        raise ConfigError(f"bad td section: {exc}") from exc
    return t_max, float(alpha), float(eta), td


def build_config(algo: str, model: TabularCmdp, config: dict, seed: int):
    """Translate a JSON config document into the algorithm's config object."""
    if algo not in ALGOS:
        raise ConfigError(f"unknown algo {algo!r}")
    try:
        unknown = set(config) - CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if algo == "neural":
            neural = dict(config.get("neural") or {})
            td = NeuralTdConfig(
                k_in=int(neural.pop("k_in", 2000)), radius=float(neural.pop("radius", 10.0)),
                beta=neural.pop("beta", None), seed=seed, restart=float(neural.pop("restart", 0.0)))
            m, d, batch_n = int(neural.pop("m", 64)), int(neural.pop("d", 16)), neural.pop("batch_n", None)
            if neural:
                _reject(neural)
            return NeuralCrpoConfig(
                t_max=int(config.get("t_max", 200)), alpha=config.get("alpha"),
                eta=float(config.get("eta", 0.5)), m=m, d=d, td=td, batch_n=batch_n,
                tie_break=config.get("tie_break", "first-index"), seed=seed)
        t_max, alpha, eta, td = _tabular_parts(model, config, seed)
        eval_mode = config.get("eval_mode", "exact")
        if algo == "pdo":
            pdo = dict(config.get("pdo") or {})
            cfg = PdoConfig(t_max=t_max, alpha=alpha, beta_dual=float(pdo.pop("beta_dual", 0.005)),
                            lambda_max=pdo.pop("lambda_max", None), td=td, seed=seed,
                            eval_mode=eval_mode)
            if pdo:
                _reject(pdo)
            return cfg
        return CrpoConfig(t_max=t_max, alpha=alpha, eta=eta, td=td,
                          tie_break=config.get("tie_break", "first-index"), seed=seed,
                          eval_mode=eval_mode)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _reject(extra: dict):
    raise ConfigError(f"unknown config keys: {sorted(extra)}")


def run_algo(algo: str, model: TabularCmdp, config: dict, seed: int) -> RunRecord:
    cfg = build_config(algo, model, config, seed)
    if algo == "crpo":
        return run_crpo(model, cfg)
    if algo == "npg":
        return run_npg(model, cfg)
    if algo == "pdo":
        return run_pdo(model, cfg)
    return run_neural_crpo(model, cfg)[0]


def summarize(record: RunRecord) -> dict:
    doc = record.summary()
    doc["empty_n0"] = record.empty_n0
    return doc


# -- files ----------------------------------------------------------------------

def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.chmod(tmp, 0o644)
    os.replace(tmp, path)


def write_run(record: RunRecord, out_dir, stem: str = "trace") -> dict:
    import json

    summary = summarize(record)
    atomic_write(Path(out_dir) / f"{stem}.csv", record.to_csv())
    atomic_write(Path(out_dir) / f"{stem}_summary.json", json.dumps(summary, indent=2) + "\n")
    return summary


# -- metrics ----------------------------------------------------------------------

def final_metrics(record: RunRecord, j_star) -> dict:
    """Optimality gap and total violation of the run's output average."""
    avg = record.final_avg_j()
    if avg is None:
        return {"final_gap": math.nan, "violation": math.nan, "final_j0": math.nan}
    return {
        "final_gap": float(j_star[0] - avg[0]),
        "violation": float(np.clip(avg[1:] - record.limits, 0.0, None).sum()),
        "final_j0": float(avg[0]),
    }


def _median(values):
    vals = [math.inf if v is None else v for v in values]
    med = statistics.median(vals)
    return None if math.isinf(med) else med


def _parallel(fn, jobs_args, jobs: int):
    if jobs <= 1 or len(jobs_args) <= 1:
        return [fn(*a) for a in jobs_args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*jobs_args)))


def compare(model: TabularCmdp, crpo_config: dict, pdo_config: dict, seeds, out_dir=None,
            jobs: int = 1, algos=("crpo", "pdo")) -> dict:
    """Run two algorithms per seed and compare sustained-feasibility speed."""
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ConfigError("compare needs at least two seeds")
    sol = solve_optimal(model)
    j_star = sol.j_star if sol.status == "optimal" else np.full(model.num_costs + 1, math.nan)
    report = {"seeds": seeds, "j_star": None if sol.status != "optimal" else j_star.tolist()}
    configs = dict(zip(("first", "second"), (crpo_config, pdo_config)))
    labels = []
    for key, algo in zip(("first", "second"), algos):
        label = algo if algo not in labels else f"{algo}_2"
        labels.append(label)
        records = _parallel(run_algo, [(algo, model, configs[key], s) for s in seeds], jobs)
        per_seed = []
        for seed, rec in zip(seeds, records):
            entry = summarize(rec) | final_metrics(rec, j_star)
            per_seed.append(entry)
            if out_dir is not None:
                write_run(rec, out_dir, f"{label}_seed{seed}")
        report[label] = {
            "algo": algo,
            "median_first_feasible": _median([e["first_feasible_iter"] for e in per_seed]),
            "median_final_gap": statistics.median([e["final_gap"] for e in per_seed]),
            "per_seed": per_seed,
        }
    a, b = (report[lbl]["median_first_feasible"] for lbl in labels)
    report["property"] = {
        "statement": f"{labels[0]}.median_first_feasible < {labels[1]}.median_first_feasible",
        "pass": a is not None and (b is None or a < b),
    }
    return report


def ranges(model: TabularCmdp, channel: int) -> float:
    """max_π J_i - min_π J_i over all policies."""
    hi = value_iteration(model, channel, True)[0] @ model.initial_dist
    lo = value_iteration(model, channel, False)[0] @ model.initial_dist
    return float(hi - lo)


def sweep(model: TabularCmdp, algo: str, param: str, values, base_config: dict, seeds,
          jobs: int = 1, scale: float = 1.0) -> dict:
    """Grid of runs over one parameter; returns CSV rows and sweep statistics."""
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    if param not in ("eta", "alpha", "beta_dual"):
        raise ConfigError(f"cannot sweep {param!r}")
    sol = solve_optimal(model)
    j_star = sol.j_star if sol.status == "optimal" else np.full(model.num_costs + 1, math.nan)
    rows, args = [], []
    for value in values:
        cfg = dict(base_config)
        if param == "beta_dual":
            cfg["pdo"] = dict(cfg.get("pdo") or {}, beta_dual=value * scale)
        else:
            cfg[param] = value * scale
        args += [(algo, model, cfg, s) for s in seeds]
    records = _parallel(run_algo, args, jobs)
    it = iter(records)
    medians = {}
    for value in values:
        finals = []
        for seed in seeds:
            rec = next(it)
            metrics = final_metrics(rec, j_star)
            finals.append(metrics)
            rows.append({"value": value, "effective_value": value * scale, "seed": seed, **metrics,
                         "first_feasible_iter": rec.first_feasible_iter()})
        medians[value] = {k: statistics.median(m[k] for m in finals)
                          for k in ("final_gap", "violation", "final_j0")}
    result = {"param": param, "algo": algo, "rows": rows, "medians": medians,
              "j_star": j_star.tolist()}
    if param == "eta":
        j0 = [m["final_j0"] for m in medians.values()]
        result["robustness"] = max(j0) - min(j0)
    if param == "beta_dual":
        score = {v: abs(medians[v]["final_gap"]) + medians[v]["violation"] for v in values}
        result["best"] = min(values, key=lambda v: (score[v], v))
    return result


def sweep_csv(result: dict) -> str:
    import csv
    import io

    buf = io.StringIO()
    fields = ["value", "effective_value", "seed", "final_gap", "violation", "final_j0",
              "first_feasible_iter"]
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in result["rows"]:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
