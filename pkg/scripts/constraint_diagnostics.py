"""Sweep the full (alpha0, gamma, beta) grid and summarize the terminal state of the adversary.

    python scripts/constraint_diagnostics.py --out-dir runs/grid

Reads grid.csv produced by the sweep and prints, per beta, the share of runs
whose terminal training evidence stays within c + 0.05 and the mean terminal
squared weight.
"""
import argparse
import csv
from collections import defaultdict
from pathlib import Path

import numpy as np

from nucate.cli import main

CONFIG = Path(__file__).parent / "configs/full_grid_n5000.json"


def summarize_grid(path: Path, slack: float = 0.05) -> str:
    by_beta = defaultdict(list)
    with open(path) as fh:
        for row in csv.DictReader(fh):
            by_beta[float(row["beta"])].append(row)
    lines = [f"{'beta':>6}  {'runs':>4}  {'within c+%.2f' % slack:>12}  {'mean w^2':>12}"]
    for beta in sorted(by_beta):
        rows = by_beta[beta]
        ok = np.mean([float(r["terminal_evidence"]) <= float(r["c"]) + slack for r in rows])
        w2 = np.mean([float(r["terminal_w2"]) for r in rows])
        lines.append(f"{beta:>6g}  {len(rows):>4}  {ok:>12.0%}  {w2:>12.4g}")
    return "\n".join(lines)


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out-dir", default="runs/grid", type=Path)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--skip-run", action="store_true", help="only summarize an existing grid.csv")
    a = p.parse_args()
    if not a.skip_run:
        args = ["sweep", "--config", str(CONFIG), "--out-dir", str(a.out_dir)]
        if a.jobs > 1:
            args += ["--jobs", str(a.jobs)]
        main(args)
    print(summarize_grid(a.out_dir / "grid.csv"))
