"""
Monte-Carlo experiment harness.

Each drop draws one scenario and runs every selected algorithm on it:

``proposed``          joint association and power control (IUAPC)
``maxsinr_pc``        max-SINR association, power control only
``maxsinr_maxpower``  max-SINR association at maximum power

Per-drop seeds are ``SeedSequence([seed, drop_id]).generate_state(1)[0]``,
so drops are independent and any single drop can be regenerated alone.
All numbers are written as decimal text with 12 significant digits and
rows are sorted by ``(drop_id, algorithm)``; output bytes depend only on
the configuration.
"""

from __future__ import annotations

import csv
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .association import AssocOptions
from .baselines import PowerGrid, brute_force_uee, max_power, max_sinr_association
from .iuapc import IUAPCOptions, iuapc_solve, sum_utility
from .netmodel import MACRO, generate_scenario, user_rates
from .powerctl import PowerOptions

ALGORITHMS = ("proposed", "maxsinr_pc", "maxsinr_maxpower")

RESULT_COLUMNS = [
    "drop_id", "algorithm", "scenario_checksum", "uee", "sum_utility", "total_power_w",
    "mbs_load_fraction", "outer_iters", "inner_iters_total", "converged", "final_varsigma_star",
    "eta_nondecreasing", "status", "per_user_rates",
]


class UsageError(ValueError):
    """Bad input to the harness (as opposed to a solver failure)."""


def fmt(v):
    return f"{float(v):.12g}"


def drop_seed(seed, drop_id):
    """Integer seed of drop ``drop_id`` derived from the master seed."""
    return int(np.random.SeedSequence([int(seed), int(drop_id)]).generate_state(1)[0])


def solver_options(config):
    return IUAPCOptions(
        varsigma=config.varsigma_per_user * config.n_users,
        max_outer=config.max_outer,
        inner_tol=config.inner_tol,
        max_inner=config.max_inner,
        assoc=AssocOptions(tol=config.assoc_tol, max_iter=config.assoc_max_iter),
        power=PowerOptions(tol=config.power_tol, max_iter=config.power_max_iter),
    )


@dataclass
class DropResult:
    drop_id: int
    algorithm: str
    scenario_checksum: str
    uee: float
    sum_utility: float
    total_power_w: float
    mbs_load_fraction: float
    per_user_rates: np.ndarray  # nats/s
    outer_iters: int
    inner_iters_total: int
    converged: bool
    final_varsigma_star: float = 0.0
    eta_nondecreasing: bool = True
    status: str = "ok"

    def to_row(self, rate_unit="nats"):
        rates = np.asarray(self.per_user_rates, dtype=float)
        if rate_unit == "bits":
            rates = rates / math.log(2.0)
        return [
            self.drop_id, self.algorithm, self.scenario_checksum, fmt(self.uee), fmt(self.sum_utility),
            fmt(self.total_power_w), fmt(self.mbs_load_fraction), self.outer_iters, self.inner_iters_total,
            int(self.converged), fmt(self.final_varsigma_star), int(self.eta_nondecreasing), self.status,
            " ".join(fmt(r) for r in rates),
        ]


def _result(drop_id, name, scenario, assoc, p, **extra):
    util = sum_utility(scenario, assoc, p)
    total = float(np.sum(p))
    macro = np.array([bs.kind == MACRO for bs in scenario.bss])
    return DropResult(
        drop_id=drop_id, algorithm=name, scenario_checksum=scenario.checksum(),
        uee=util / (total + scenario.circuit_power), sum_utility=util, total_power_w=total,
        mbs_load_fraction=float(macro[assoc.serving].mean()),
        per_user_rates=user_rates(scenario, assoc.x, p), **extra,
    )


def run_algorithm(scenario, name, opts, drop_id=0):
    """Run one algorithm on one scenario.  Returns ``(DropResult, Solution or None)``."""
    if name == "maxsinr_maxpower":
        assoc = max_sinr_association(scenario)
        return _result(drop_id, name, scenario, assoc, max_power(scenario), outer_iters=0,
                       inner_iters_total=0, converged=True), None
    if name == "proposed":
        sol = iuapc_solve(scenario, opts)
    elif name == "maxsinr_pc":
        sol = iuapc_solve(scenario, opts, fixed_assoc=max_sinr_association(scenario))
    else:
        raise UsageError(f"unknown algorithm {name!r}")
    etas = sol.eta_sequence
    res = _result(
        drop_id, name, scenario, sol.assoc, sol.power,
        outer_iters=len(sol.outer_trace),
        inner_iters_total=sum(s.inner_iterations for s in sol.outer_trace),
        converged=sol.converged,
        final_varsigma_star=sol.outer_trace[-1].varsigma_star,
        eta_nondecreasing=bool(np.all(np.diff(etas) >= 0)),
    )
    return res, sol


def _failed(drop_id, name, checksum, n_users, msg):
    nan = float("nan")
    return DropResult(drop_id, name, checksum, nan, nan, nan, nan, np.full(n_users, nan), 0, 0, False,
                      nan, False, "error: " + msg.replace("\n", " "))


def run_drop(config, drop_id, trace_dir=None):
    """All selected algorithms on drop ``drop_id``.  Solver failures are
    recorded in the ``status`` field instead of being raised."""
    scenario = generate_scenario(config, drop_seed(config.seed, drop_id))
    opts = solver_options(config)
    out = []
    for name in sorted(config.algorithms):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                res, sol = run_algorithm(scenario, name, opts, drop_id)
            except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
                out.append(_failed(drop_id, name, scenario.checksum(), scenario.n_users, str(exc)))
                continue
        if not res.converged:
            res.status = "not_converged"
        if caught:
            res.status = f"{res.status}; {len(caught)} warning(s): {caught[0].message}"
        if trace_dir is not None and sol is not None:
            sol.trace_to_csv(Path(trace_dir) / f"drop{drop_id:04d}_{name}_outer.csv")
        out.append(res)
    return out


def _run_drop_star(args):
    return run_drop(*args)


def write_results(results, path, rate_unit="nats"):
    rows = sorted(results, key=lambda r: (r.drop_id, r.algorithm))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow(r.to_row(rate_unit))


def read_results(path):
    """Parse a results.csv back into DropResults (rates in the unit written)."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(DropResult(
                drop_id=int(row["drop_id"]), algorithm=row["algorithm"],
                scenario_checksum=row["scenario_checksum"], uee=float(row["uee"]),
                sum_utility=float(row["sum_utility"]), total_power_w=float(row["total_power_w"]),
                mbs_load_fraction=float(row["mbs_load_fraction"]),
                per_user_rates=np.array([float(v) for v in row["per_user_rates"].split()]),
                outer_iters=int(row["outer_iters"]), inner_iters_total=int(row["inner_iters_total"]),
                converged=bool(int(row["converged"])), final_varsigma_star=float(row["final_varsigma_star"]),
                eta_nondecreasing=bool(int(row["eta_nondecreasing"])), status=row["status"],
            ))
    return out


def aggregate(results, out_dir, rate_unit="nats", cdf_points=200):
    """Write the four summary tables.  Failed rows (non-finite UEE) are skipped.

    ``median_inner_iters`` is the median over runs of inner iterations per
    outer step.  The CDF is sampled at ``cdf_points`` evenly spaced
    probabilities from 0 to 1 of the pooled per-user rates.
    """
    results = [r for r in results if np.isfinite(r.uee)]
    if not results:
        raise UsageError("no result rows to aggregate")
    out_dir = Path(out_dir)
    algs = sorted({r.algorithm for r in results})
    by_alg = {a: [r for r in results if r.algorithm == a] for a in algs}
    unit = "bits" if rate_unit == "bits" else "nats"
    scale = 1.0 / math.log(2.0) if unit == "bits" else 1.0

    with open(out_dir / "uee_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "mean_uee", "std_uee", "n"])
        for a in algs:
            u = np.array([r.uee for r in by_alg[a]])
            w.writerow([a, fmt(u.mean()), fmt(u.std()), u.size])

    with open(out_dir / "load_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "mean_mbs_fraction", "mean_sbs_fraction"])
        for a in algs:
            f = np.mean([r.mbs_load_fraction for r in by_alg[a]])
            w.writerow([a, fmt(f), fmt(1.0 - f)])

    probs = np.linspace(0.0, 1.0, cdf_points)
    with open(out_dir / "rate_cdf.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", f"rate_{unit}_per_s", "empirical_cdf"])
        for a in algs:
            rates = np.concatenate([r.per_user_rates for r in by_alg[a]]) * scale
            for q, v in zip(probs, np.quantile(rates, probs)):
                w.writerow([a, fmt(v), fmt(q)])

    with open(out_dir / "convergence_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "median_outer_iters", "median_inner_iters"])
        for a in algs:
            outer = np.array([r.outer_iters for r in by_alg[a]], dtype=float)
            inner = np.array([r.inner_iters_total for r in by_alg[a]], dtype=float)
            per_step = np.divide(inner, outer, out=np.zeros_like(inner), where=outer > 0)
            w.writerow([a, fmt(np.median(outer)), fmt(np.median(per_step))])

    return [out_dir / n for n in ("uee_summary.csv", "load_summary.csv", "rate_cdf.csv",
                                  "convergence_summary.csv")]


def _prepare_dir(path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise PermissionError(f"output directory {path} is not writable")
    return path


def run_experiment(config, out_dir=None, traces=False, jobs=1, progress=None):
    """Run all drops, write ``results.csv`` and the summaries.

    Returns the list of DropResults.  ``jobs > 1`` spreads drops over
    processes; the written files do not depend on it.
    """
    out = _prepare_dir(out_dir if out_dir is not None else config.output_dir)
    trace_dir = _prepare_dir(out / "traces") if traces else None
    tasks = [(config, d, trace_dir) for d in range(config.n_drops)]
    results = []
    t0 = time.perf_counter()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for rows in pool.map(_run_drop_star, tasks):
                results.extend(rows)
    else:
        for d, task in enumerate(tasks):
            results.extend(run_drop(*task))
            if progress is not None:
                progress(d + 1, config.n_drops, time.perf_counter() - t0)
    write_results(results, out / "results.csv", config.rate_unit)
    aggregate(results, out, config.rate_unit)
    return sorted(results, key=lambda r: (r.drop_id, r.algorithm))


# ---------------------------------------------------------------- oracle check

ORACLE_COLUMNS = ["instance", "seed", "iuapc_eta", "oracle_eta", "ratio"]


def oracle_instance(config, instance):
    """One small instance: returns ``(seed, iuapc eta, oracle eta)``."""
    seed = drop_seed(config.seed, instance)
    scenario = generate_scenario(config, seed)
    grid = PowerGrid.logspaced(scenario.max_power, config.oracle_levels)
    _, _, eta_oracle = brute_force_uee(scenario, grid)
    sol = iuapc_solve(scenario, solver_options(config))
    return seed, sol.eta_star, eta_oracle


def run_oracle_check(config, out_dir=None):
    """Compare IUAPC with the grid oracle on ``config.oracle_instances`` drops.

    Writes ``oracle_report.csv`` (one row per instance) and
    ``oracle_summary.csv`` (min / median / max ratio) and returns the
    ratios.
    """
    out = _prepare_dir(out_dir if out_dir is not None else config.output_dir)
    rows, ratios = [], []
    for n in range(config.oracle_instances):
        seed, eta, eta_o = oracle_instance(config, n)
        ratios.append(eta / eta_o)
        rows.append([n, seed, fmt(eta), fmt(eta_o), fmt(eta / eta_o)])
    with open(out / "oracle_report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ORACLE_COLUMNS)
        w.writerows(rows)
    r = np.array(ratios)
    with open(out / "oracle_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "min_ratio", "median_ratio", "max_ratio"])
        w.writerow([r.size, fmt(r.min()), fmt(np.median(r)), fmt(r.max())])
    return r

