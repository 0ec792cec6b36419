"""Weighted Rademacher complexity against its closed-form bound, and bound coverage.

    python scripts/bound_checks.py --out-dir runs/bounds

Prints the complexity estimate and bound for a range of sample sizes, for
IPW weights and for unit weights, then the coverage of the generalization
bound over resampled datasets.
"""
import argparse
from pathlib import Path

import numpy as np

from nucate.bounds import (LinearClassSpec, LinearCoverageProblem, generalization_gap_experiment,
                           weighted_rademacher_linear, write_bound_reports)


def main(out_dir: Path, seed: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    prob = LinearCoverageProblem()
    spec = LinearClassSpec(prob.B, prob.X, prob.d)
    reports = []
    print(f"{'N':>5}  {'weights':>7}  {'estimate':>9}  {'bound':>9}")
    for N in (4, 8, 12, 50, 200, 1000):
        x, a, _ = prob.sample(N, rng)
        for weighted in (True, False):
            rep = weighted_rademacher_linear(spec, x, prob.weights(x, a, weighted), rng=rng)
            reports.append(rep)
            print(f"{N:>5}  {'ipw' if weighted else 'unit':>7}  {rep.estimate:>9.4f}  {rep.bound:>9.4f}")
    thetas = prob.theta_grid(200, rng)
    for weighted in (True, False):
        cov = generalization_gap_experiment(prob, thetas, 0.05, 500, 200, seed=seed, weighted=weighted)
        reports.append(cov)
        print(f"coverage ({'ipw' if weighted else 'unit'} weights): {cov.violations}/{cov.trials} "
              f"violations; mean gap {cov.mean_gap:.3f}; mean 2R {2 * cov.mean_complexity:.3f}")
    write_bound_reports(reports, out_dir / "bounds.csv")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out-dir", default="runs/bounds", type=Path)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    main(a.out_dir, a.seed)
