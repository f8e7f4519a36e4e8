"""Command-line entry point: ``rapidquench <subcommand> ...``.

Failures exit with status 2 after printing one line
``error: {"code": ..., "message": ...}`` to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from collections import defaultdict

import numpy as np

from ..dyncoeff import DynLandscape, dyn_lower_bound
from ..errors import QuenchError
from ..io import fmt, read_csv, read_instances, write_csv, write_instances
from ..ising import Driver, IsingProblem, biased_driver, guess_from_index, make_sk_instance, transverse_driver
from ..spectral import DEFAULT_POINTS, gap_scan
from .config import EXPERIMENTS, ExperimentConfig, load_config
from .experiments import instance_seed, load_manifest, run_experiment
from .fit import fit_kappa

# config keys that can be overridden from the command line, with their parsers
_OVERRIDES = {
    "experiment": str, "sizes": str, "instances": int, "seed": int, "sigma": float, "convention": str,
    "instances_file": str, "gamma1": float, "gamma2": float, "t1": float, "t2": float, "theta": float,
    "t1_values": str, "window_lo": float, "window_hi": float, "window_points": int, "estimator": str,
    "random_times": int, "gamma_points": int, "grid_lo": float, "grid_hi": float, "t_f": float,
    "knots": int, "dyn_floor": float, "s_points": int, "tol": float, "workers": int, "output": str,
}


def _fail(exc: QuenchError) -> int:
    print("error: " + json.dumps({"code": exc.code, "message": exc.message}), file=sys.stderr)
    return 2


def _load_problem(args) -> IsingProblem:
    if args.instance:
        problems = read_instances(args.instance)
        if not 0 <= args.index < len(problems):
            raise QuenchError("invalid-index", f"{args.instance} holds {len(problems)} instances")
        return problems[args.index]
    if args.n is None:
        raise QuenchError("missing-instance", "give --instance FILE or --n N [--seed S]")
    return make_sk_instance(args.n, args.sigma, args.seed, args.convention)


def _driver(args, problem: IsingProblem) -> Driver:
    if args.theta == 0.0:
        return transverse_driver(problem.n)
    if args.guess:
        guess = tuple(1 - 2 * int(c) for c in reversed(args.guess))
        if len(guess) != problem.n:
            raise QuenchError("dimension-mismatch", "guess bitstring length differs from n")
    else:
        guess = guess_from_index(int(problem.ground_indices[0]), problem.n)
    return biased_driver(guess, args.theta)


def _write(path, header, rows):
    if path in (None, "-"):
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, float) else v for v in r])
    else:
        write_csv(path, header, rows)


def cmd_gen_instances(args) -> int:
    problems = [make_sk_instance(args.n, args.sigma, instance_seed(args.seed, args.n, i), args.convention)
                for i in range(args.count)]
    write_instances(args.out, problems)
    return 0


def cmd_run(args) -> int:
    overrides = {k: getattr(args, k) for k in _OVERRIDES if getattr(args, k, None) is not None}
    if args.manifest:
        cfg = load_manifest(args.manifest).replace(**overrides)
    elif args.config:
        cfg = load_config(args.config, **overrides)
    elif "experiment" in overrides:
        cfg = ExperimentConfig.from_dict(overrides)
    else:
        raise QuenchError("invalid-config", "give --config FILE, --manifest FILE or --experiment KIND")
    res = run_experiment(cfg)
    for name, path in res.paths.items():
        print(f"{name}: {path}")
    if res.failures:
        print(f"{len(res.failures)} instance(s) failed; see manifest", file=sys.stderr)
    return 0


def cmd_fit(args) -> int:
    rows = read_csv(args.input)
    if not rows:
        raise QuenchError("invalid-input", f"{args.input} has no rows")
    column = args.column or next((c for c in rows[0] if c.startswith("mean_p")), None)
    if column is None or column not in rows[0]:
        raise QuenchError("invalid-input", f"probability column {column!r} not found")
    groups = defaultdict(list)
    for r in rows:
        groups[r[args.group] if args.group else ""].append((int(r[args.size_column]), float(r[column])))
    out = []
    for key in sorted(groups, key=lambda k: float(k) if k else 0.0):
        pts = sorted(groups[key])
        fit = fit_kappa([p[0] for p in pts], [p[1] for p in pts])
        out.append((key or column, fit.kappa, fit.intercept, fit.stderr))
    _write(args.out, [args.group or "column", "kappa", "intercept", "stderr"], out)
    return 0


def _gammas(args) -> np.ndarray:
    if args.gammas:
        return np.array([float(x) for x in args.gammas.split(",")])
    return np.linspace(args.gamma_min, args.gamma_max, args.points)


def cmd_dyn_scan(args) -> int:
    problem = _load_problem(args)
    driver = _driver(args, problem)
    land = DynLandscape(problem, driver, args.samples, args.sample_seed)
    rows = []
    fixed = land.gap_stats(1.0) if driver.is_unbiased else None
    for g in _gammas(args):
        rep = land.report(float(g))
        st = fixed or land.gap_stats(float(g))
        bound = dyn_lower_bound(st.ratio)[0]
        rows.append((float(g), rep.dyn_bar, rep.dyn_bar_error, st.mu1, st.mu2, st.ratio, bound))
    _write(args.out, ["gamma", "dyn_bar", "dyn_bar_error", "mu1", "mu2", "ratio", "bound"], rows)
    return 0


def cmd_gap_scan(args) -> int:
    problem = _load_problem(args)
    driver = _driver(args, problem)
    scan = gap_scan(problem, driver, np.linspace(0.0, 1.0, args.points))
    _write(args.out, ["s", "gap", "dyn_bar"], zip(scan.s_grid, scan.gaps, scan.dyn_bar))
    print(f"s_max_dyn={scan.s_max_dyn!r} s_min_gap={scan.s_min_gap!r}", file=sys.stderr)
    return 0


def _instance_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", help="instance JSON file")
    p.add_argument("--index", type=int, default=0, help="instance index within the file")
    p.add_argument("--n", type=int, help="generate an SK instance of this size instead")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--convention", default="upper", choices=["upper", "ordered"])
    p.add_argument("--theta", type=float, default=0.0, help="bias angle; 0 selects the transverse driver")
    p.add_argument("--guess", help="bias bitstring, qubit 0 last; default: the ground state")
    p.add_argument("--out", help="output CSV (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rapidquench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-instances", help="write a seeded SK instance set")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--convention", default="upper", choices=["upper", "ordered"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_instances)

    p = sub.add_parser("run", help="run an experiment sweep")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--manifest", help="rerun from a manifest.json")
    for key, kind in _OVERRIDES.items():
        flag = "--" + key.replace("_", "-")
        if key == "experiment":
            p.add_argument(flag, choices=EXPERIMENTS)
        else:
            p.add_argument(flag, type=kind, dest=key)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fit", help="fit log2(p) = kappa n + b from a summary CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--column", help="probability column (default: first mean_p* column)")
    p.add_argument("--size-column", default="n")
    p.add_argument("--group", help="fit separately per value of this column, e.g. t1")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("dyn-scan", help="Dyn_bar and the moment bound over a gamma grid")
    _instance_args(p)
    p.add_argument("--gammas", help="comma-separated gamma values")
    p.add_argument("--gamma-min", type=float, default=0.05)
    p.add_argument("--gamma-max", type=float, default=5.0)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--samples", type=int, help="sample this many pairs instead of enumerating")
    p.add_argument("--sample-seed", type=int, default=0)
    p.set_defaults(func=cmd_dyn_scan)

    p = sub.add_parser("gap-scan", help="spectral gap and Dyn_bar along s")
    _instance_args(p)
    p.add_argument("--points", type=int, default=DEFAULT_POINTS)
    p.set_defaults(func=cmd_gap_scan)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except QuenchError as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
