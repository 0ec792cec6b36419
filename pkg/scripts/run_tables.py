"""Run the additive- and multiplicative-noise comparisons and print mean +- SE tables.

    python scripts/run_tables.py --out-dir runs/tables [--jobs 2] [--only AN]

Each noise model writes results.csv, grid.csv and summary.{csv,txt} into its
own subdirectory. Expect roughly 15-25 minutes per noise model on one core.
"""
import argparse
from pathlib import Path

from nucate.cli import main

HERE = Path(__file__).parent
CONFIGS = {"AN": HERE / "configs/additive_n10000.json", "MN": HERE / "configs/multiplicative_n10000.json"}


def run(out_dir: Path, jobs: int, only: list[str]) -> None:
    for noise in only:
        sub = out_dir / noise
        args = ["sweep", "--config", str(CONFIGS[noise]), "--out-dir", str(sub)]
        if jobs > 1:
            args += ["--jobs", str(jobs)]
        if main(args) != 0:
            raise SystemExit(f"sweep failed for {noise}")
        main(["report", str(sub / "results.csv"), "--out-dir", str(sub)])


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out-dir", default="runs/tables", type=Path)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--only", nargs="+", choices=sorted(CONFIGS), default=sorted(CONFIGS))
    a = p.parse_args()
    run(a.out_dir, a.jobs, a.only)
