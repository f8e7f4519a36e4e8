"""Protocol runners: one function per experiment kind, plus sweep orchestration.

Each runner maps one instance to a list of result rows.  The sweep fans the
instances out over a bounded process pool, sorts rows by (n, instance) and
writes ``results.csv``, ``summary.csv``, optionally ``kappa.csv``, and a
``manifest.json`` embedding the full configuration.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import QuenchError
from ..evolve import (
    Schedule,
    check_energy_redistribution,
    evolve,
    make_linear_schedule,
    make_preanneal_schedule,
    make_two_stage_schedule,
    make_walk_schedule,
    time_averaged_success,
)
from ..heuristics import gamma_dyn, heuristic_schedule
from ..io import instance_from_dict, instance_to_json, read_instances, write_csv
from ..ising import IsingProblem, biased_driver, guess_from_index, make_sk_instance, transverse_driver
from ..spectral import gap_scan
from .config import ExperimentConfig
from .fit import fit_kappa

SCHEMA_VERSION = 1

RESULT_HEADERS = {
    "two-stage": ["n", "instance", "seed", "p_stage1", "p_stage2", "p_final", "exp_prob_initial", "exp_prob_final"],
    "biased": ["n", "instance", "seed", "p_stage1", "p_stage2", "p_final", "exp_prob_initial", "exp_prob_final"],
    "preanneal-scaling": ["n", "instance", "seed", "t1", "gamma", "p_bar"],
    "gamma-dyn-scaling": ["n", "instance", "seed", "gamma_dyn", "p_short", "gamma_best", "p_short_best"],
    "heuristic-vs-linear": ["n", "instance", "seed", "p_linear", "p_heuristic", "heuristic_wins", "converged"],
    "gap-vs-dyn": ["n", "instance", "seed", "s_max_dyn", "s_min_gap", "min_gap", "max_dyn_bar", "dyn_first"],
}


def instance_seed(seed: int, n: int, i: int) -> int:
    """Per-instance seed derived from the sweep seed, the size and the index."""
    return int(np.random.SeedSequence([seed, n, i]).generate_state(1, dtype=np.uint64)[0])


def _checked_evolve(problem, driver, schedule: Schedule, grid, tol):
    traj = evolve(problem, driver, schedule, grid=grid, tol=tol)
    if schedule.monotone:
        check_energy_redistribution(traj, 10 * tol)
    return traj


def _window_average(cfg: ExperimentConfig, problem, driver, schedule, offset, window, seed):
    """Mean success probability over ``offset + window`` with the configured estimator."""
    lo, hi = window
    if cfg.estimator == "random":
        rng = np.random.Generator(np.random.PCG64(seed))
        local = np.sort(rng.uniform(lo, hi, cfg.random_times))
    else:
        local = np.linspace(lo, hi, cfg.window_points)
    grid = np.concatenate(([0.0], offset + local))
    traj = _checked_evolve(problem, driver, schedule, grid, cfg.tol)
    p = traj.p_success[1:]
    if cfg.estimator == "random":
        return float(np.mean(p))
    view = _View(traj.times[1:] - offset, p)
    return time_averaged_success(view, window, min_points=min(200, cfg.window_points))


@dataclass
class _View:
    times: np.ndarray
    p_success: np.ndarray


def _window(cfg: ExperimentConfig, n: int) -> tuple[float, float]:
    return cfg.window_lo / math.sqrt(n), cfg.window_hi / math.sqrt(n)


def _two_stage(cfg, problem, seed, biased):
    n = problem.n
    if biased:
        driver = biased_driver(guess_from_index(int(problem.ground_indices[0]), n), cfg.theta)
    else:
        driver = transverse_driver(n)
    sched = make_two_stage_schedule(cfg.gamma1, cfg.gamma2, cfg.t1, cfg.t2)
    t_f = cfg.t1 + cfg.t2
    grid = np.union1d(np.linspace(0.0, cfg.t1, cfg.stage_points), np.linspace(cfg.t1, t_f, cfg.stage_points))
    traj = _checked_evolve(problem, driver, sched, grid, cfg.tol)
    m = min(200, cfg.stage_points)
    p1 = time_averaged_success(traj, (0.0, cfg.t1), min_points=m)
    p2 = time_averaged_success(traj, (cfg.t1, t_f), min_points=m)
    return [(p1, p2, float(traj.p_success[-1]), float(traj.exp_prob[0]), float(traj.exp_prob[-1]))]


def _preanneal(cfg, problem, seed):
    n = problem.n
    driver = transverse_driver(n)
    g = gamma_dyn(problem, driver).gamma_dyn
    window = _window(cfg, n)
    rows = []
    for t1 in cfg.t1_values:
        sched = make_preanneal_schedule(g, t1, window[1])
        rows.append((float(t1), g, _window_average(cfg, problem, driver, sched, t1, window, seed)))
    return rows


def _gamma_dyn_scaling(cfg, problem, seed):
    n = problem.n
    driver = transverse_driver(n)
    window = _window(cfg, n)
    g = gamma_dyn(problem, driver).gamma_dyn

    def p_short(gamma):
        return _window_average(cfg, problem, driver, make_walk_schedule(gamma, window[1]), 0.0, window, seed)

    p = p_short(g)
    g_best, p_best = math.nan, math.nan
    if cfg.gamma_points > 0:
        grid = g * np.linspace(cfg.grid_lo, cfg.grid_hi, cfg.gamma_points)
        vals = [p_short(float(x)) for x in grid]
        k = int(np.argmax(vals))
        g_best, p_best = float(grid[k]), float(vals[k])
    return [(g, p, g_best, p_best)]


def _heuristic_vs_linear(cfg, problem, seed):
    driver = transverse_driver(problem.n)
    lin = _checked_evolve(problem, driver, make_linear_schedule(cfg.t_f), None, cfg.tol)
    h = heuristic_schedule(problem, driver, cfg.t_f, cfg.knots, cfg.dyn_floor)
    heur = _checked_evolve(problem, driver, h.to_schedule(), None, cfg.tol)
    pl, ph = float(lin.p_success[-1]), float(heur.p_success[-1])
    return [(pl, ph, int(ph > pl), int(h.converged))]


def _gap_vs_dyn(cfg, problem, seed):
    scan = gap_scan(problem, transverse_driver(problem.n), np.linspace(0.0, 1.0, cfg.s_points))
    return [(scan.s_max_dyn, scan.s_min_gap, float(np.min(scan.gaps)), float(np.max(scan.dyn_bar)),
             int(scan.s_max_dyn < scan.s_min_gap))]


RUNNERS = {
    "two-stage": lambda c, p, s: _two_stage(c, p, s, biased=False),
    "biased": lambda c, p, s: _two_stage(c, p, s, biased=True),
    "preanneal-scaling": _preanneal,
    "gamma-dyn-scaling": _gamma_dyn_scaling,
    "heuristic-vs-linear": _heuristic_vs_linear,
    "gap-vs-dyn": _gap_vs_dyn,
}


def run_instance(cfg_dict: dict, n: int, i: int, seed: int, instance: str | None):
    """Worker entry point; returns (rows, failure or None).  Picklable arguments only."""
    cfg = ExperimentConfig.from_dict(cfg_dict)
    try:
        if instance is None:
            problem = make_sk_instance(n, cfg.sigma, seed, cfg.convention)
        else:
            problem = instance_from_dict(json.loads(instance))
        rows = [(n, i, seed) + tuple(r) for r in RUNNERS[cfg.experiment](cfg, problem, seed)]
        return rows, None
    except QuenchError as exc:
        return [], {"n": n, "instance": i, "seed": seed, "code": exc.code, "message": exc.message}


def _tasks(cfg: ExperimentConfig):
    if cfg.instances_file:
        by_n: dict[int, list[IsingProblem]] = defaultdict(list)
        for p in read_instances(cfg.instances_file):
            by_n[p.n].append(p)
        for n in cfg.sizes:
            for i, p in enumerate(by_n.get(n, [])[: cfg.instances]):
                yield n, i, i if p.seed is None else p.seed, instance_to_json(p)
    else:
        for n in cfg.sizes:
            for i in range(cfg.instances):
                yield n, i, instance_seed(cfg.seed, n, i), None


@dataclass
class RunResult:
    config: ExperimentConfig
    rows: list[tuple]
    summary_header: list[str]
    summary: list[tuple]
    kappa: list[tuple] | None
    failures: list[dict]
    paths: dict[str, Path]


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    se = float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.nan
    return float(np.mean(v)), se


def summarize(experiment: str, rows: list[tuple]) -> tuple[list[str], list[tuple], list[tuple] | None]:
    """Per-size (and per-parameter) means; scaling fits where they apply."""
    head = RESULT_HEADERS[experiment]
    col = {name: k for k, name in enumerate(head)}
    groups: dict[tuple, list[tuple]] = defaultdict(list)
    key_cols = ["n", "t1"] if experiment == "preanneal-scaling" else ["n"]
    for r in rows:
        groups[tuple(r[col[c]] for c in key_cols)].append(r)

    def values(rs, name):
        return [r[col[name]] for r in rs]

    out, kappa = [], None
    if experiment in ("two-stage", "biased"):
        header = ["n", "count", "mean_p_stage1", "mean_p_stage2", "stderr_p_stage2", "mean_p_final", "mean_exp_prob_final"]
        for key, rs in sorted(groups.items()):
            m2, se2 = _mean_se(values(rs, "p_stage2"))
            out.append(key + (len(rs), float(np.mean(values(rs, "p_stage1"))), m2, se2,
                              float(np.mean(values(rs, "p_final"))), float(np.mean(values(rs, "exp_prob_final")))))
    elif experiment == "preanneal-scaling":
        header = ["n", "t1", "count", "mean_p_bar", "stderr_p_bar"]
        for key, rs in sorted(groups.items()):
            out.append(key + (len(rs),) + _mean_se(values(rs, "p_bar")))
        kappa = []
        for t1 in sorted({k[1] for k in groups}):
            pts = [(r[0], r[3]) for r in out if r[1] == t1]
            if len(pts) >= 3:
                fit = fit_kappa([p[0] for p in pts], [p[1] for p in pts])
                kappa.append((t1, fit.kappa, fit.intercept, fit.stderr))
    elif experiment == "gamma-dyn-scaling":
        header = ["n", "count", "mean_gamma_dyn", "mean_p_short", "stderr_p_short", "mean_p_short_best"]
        for key, rs in sorted(groups.items()):
            out.append(key + (len(rs), float(np.mean(values(rs, "gamma_dyn"))))
                       + _mean_se(values(rs, "p_short")) + (float(np.mean(values(rs, "p_short_best"))),))
        if len(out) >= 3:
            kappa = []
            for label, idx in (("gamma_dyn", 3), ("grid_best", 5)):
                probs = [r[idx] for r in out]
                if all(np.isfinite(probs)):
                    fit = fit_kappa([r[0] for r in out], probs)
                    kappa.append((label, fit.kappa, fit.intercept, fit.stderr))
    elif experiment == "heuristic-vs-linear":
        header = ["n", "count", "mean_p_linear", "mean_p_heuristic", "win_rate"]
        for key, rs in sorted(groups.items()):
            out.append(key + (len(rs), float(np.mean(values(rs, "p_linear"))),
                              float(np.mean(values(rs, "p_heuristic"))), float(np.mean(values(rs, "heuristic_wins")))))
    else:
        header = ["n", "count", "fraction_dyn_first", "mean_s_max_dyn", "mean_s_min_gap"]
        for key, rs in sorted(groups.items()):
            out.append(key + (len(rs), float(np.mean(values(rs, "dyn_first"))),
                              float(np.mean(values(rs, "s_max_dyn"))), float(np.mean(values(rs, "s_min_gap")))))
    return header, out, kappa


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunResult:
    """Run the configured sweep and (by default) write its output files."""
    cfg.validate()
    tasks = list(_tasks(cfg))
    d = cfg.to_dict()
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_instance, *zip(*[(d,) + t for t in tasks])))
    else:
        results = [run_instance(d, *t) for t in tasks]
    rows, failures = [], []
    for r, f in results:
        rows.extend(r)
        if f is not None:
            failures.append(f)
    # stable sort: rows of one instance keep their runner order
    rows.sort(key=lambda r: r[:2])
    failures.sort(key=lambda f: (f["n"], f["instance"]))
    header, summary, kappa = summarize(cfg.experiment, rows)

    paths: dict[str, Path] = {}
    if write:
        out = Path(cfg.output)
        try:
            out.mkdir(parents=True, exist_ok=True)
            paths["results"] = out / "results.csv"
            write_csv(paths["results"], RESULT_HEADERS[cfg.experiment], rows)
            paths["summary"] = out / "summary.csv"
            write_csv(paths["summary"], header, summary)
            if kappa is not None:
                paths["kappa"] = out / "kappa.csv"
                first = "t1" if cfg.experiment == "preanneal-scaling" else "estimator"
                write_csv(paths["kappa"], [first, "kappa", "intercept", "stderr"], kappa)
            manifest = {
                "schema_version": SCHEMA_VERSION,
                "library": "rapidquench",
                "version": __version__,
                "config": d,
                "outputs": {k: {"file": p.name, "sha256": _sha256(p)} for k, p in paths.items()},
                "instances": len(tasks),
                "failures": failures,
            }
            paths["manifest"] = out / "manifest.json"
            paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            raise QuenchError("io-error", str(exc)) from exc
    return RunResult(cfg, rows, header, summary, kappa, failures, paths)


def load_manifest(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise QuenchError("io-error", str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise QuenchError("invalid-manifest", f"{path}: {exc}") from exc
    if data.get("schema_version") != SCHEMA_VERSION:
        raise QuenchError("invalid-manifest", f"unsupported manifest schema {data.get('schema_version')!r}")
    return ExperimentConfig.from_dict(data["config"])
