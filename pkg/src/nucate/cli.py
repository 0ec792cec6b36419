"""Command-line entry point: ``nucate {generate,train,sweep,bounds,report}``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bounds import (LinearClassSpec, LinearCoverageProblem, generalization_gap_experiment,
                     weighted_rademacher_linear, write_bound_reports)
from .data import SchemaError, read_results, write_csv_dataset, write_results
from .experiment import DatasetSpec, ExperimentConfig, ExperimentError, hyperparam_sweep, write_grid
from .report import format_table, summarize, write_summary_csv
from .synthetic import sample_dataset

log = logging.getLogger("nucate")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seeds"] = [args.seed]
    if getattr(args, "jobs", None) is not None:
        changes["jobs"] = args.jobs
    if getattr(args, "method", None):
        changes["methods"] = [args.method]
    if getattr(args, "n", None) is not None:
        changes["n"] = args.n
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    spec = ExperimentConfig.from_json(args.config).dataset if args.config else DatasetSpec(noise=args.noise)
    if spec.kind != "synthetic":
        raise ValueError("generate only produces synthetic data")
    seed = 0 if args.seed is None else args.seed
    ds, _ = sample_dataset(spec.synthetic(seed), args.n)
    if args.no_oracle:
        ds = ds.without_oracle()
    path = _out(args) / f"{spec.tag}_n{args.n}_seed{seed}.csv"
    write_csv_dataset(ds, path)
    print(path)
    return 0


def _run_and_write(cfg: ExperimentConfig, out: Path) -> None:
    res = hyperparam_sweep(cfg)
    write_results(res.rows, out / "results.csv")
    if res.grid:
        write_grid(res.grid, out / "grid.csv")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    print(format_table(summarize(res.rows)), end="")


def cmd_train(args) -> int:
    cfg = _load_config(args)
    if len(cfg.grid_points()) > 1:
        log.warning("train runs the whole grid (%d points); use sweep for the grid table",
                    len(cfg.grid_points()))
    _run_and_write(cfg, _out(args))
    return 0


def cmd_sweep(args) -> int:
    _run_and_write(_load_config(args), _out(args))
    return 0


def cmd_bounds(args) -> int:
    seed = 0 if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    prob = LinearCoverageProblem()
    spec = LinearClassSpec(prob.B, prob.X, prob.d)
    reports = []
    for N in args.sizes:
        x, a, _ = prob.sample(N, rng)
        reports.append(weighted_rademacher_linear(spec, x, prob.weights(x, a), n_draws=args.draws, rng=rng))
    thetas = prob.theta_grid(args.grid, rng)
    cov = generalization_gap_experiment(prob, thetas, args.delta, args.trials, args.N, seed=seed)
    reports.append(cov)
    write_bound_reports(reports, _out(args) / "bounds.csv")
    for r in reports[:-1]:
        print(f"N={r.N:5d} estimate={r.estimate:.4f} bound={r.bound:.4f} se={r.se:.4f}")
    print(f"coverage: {cov.violations}/{cov.trials} violations (delta={cov.delta})")
    return 0


def cmd_report(args) -> int:
    rows = [r for p in args.results for r in read_results(p)]
    summary = summarize(rows)
    write_summary_csv(summary, _out(args) / "summary.csv")
    text = format_table(summary)
    (_out(args) / "summary.txt").write_text(text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nucate", description="Nuisance-robust CATE experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, jobs=False):
        sp.add_argument("--config", help="experiment JSON config")
        sp.add_argument("--seed", type=int, help="run a single seed")
        sp.add_argument("--out-dir", default="out")
        if jobs:
            sp.add_argument("--jobs", type=int, help="parallel seeds")

    g = sub.add_parser("generate", help="write a synthetic dataset CSV")
    common(g)
    g.add_argument("--noise", choices=("AN", "MN"), default="AN")
    g.add_argument("--n", type=int, default=10_000)
    g.add_argument("--no-oracle", action="store_true")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train and evaluate one method")
    common(t, jobs=True)
    t.add_argument("--method", required=True)
    t.add_argument("--n", type=int)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="run all configured methods over the grid")
    common(s, jobs=True)
    s.add_argument("--n", type=int)
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bounds", help="weighted complexity and coverage checks")
    common(b)
    b.add_argument("--sizes", type=int, nargs="+", default=[8, 12, 50, 200])
    b.add_argument("--draws", type=int, default=10_000)
    b.add_argument("--grid", type=int, default=200)
    b.add_argument("--trials", type=int, default=500)
    b.add_argument("--N", type=int, default=200)
    b.add_argument("--delta", type=float, default=0.05)
    b.set_defaults(func=cmd_bounds)

    r = sub.add_parser("report", help="aggregate results CSVs")
    r.add_argument("results", nargs="+")
    r.add_argument("--out-dir", default="out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, SchemaError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
