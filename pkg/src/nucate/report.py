"""Aggregate result rows into mean and standard-error tables."""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .data import ResultRow
from .metrics import mean_se

SUMMARY_COLUMNS = ("dataset", "n", "metric", "method", "mean", "se", "n_seeds")


@dataclass(frozen=True)
class SummaryRow:
    dataset: str
    n: int
    metric: str
    method: str
    mean: float
    se: float
    n_seeds: int


def summarize(rows: Sequence[ResultRow]) -> list[SummaryRow]:
    groups: dict[tuple, dict[int, float]] = defaultdict(dict)
    for r in rows:
        key = (r.dataset, r.n, r.metric, r.method)
        if r.seed in groups[key]:
            raise ValueError(f"duplicate result for {key} seed {r.seed}")
        groups[key][r.seed] = r.value
    out = []
    for key in sorted(groups):
        vals = [groups[key][s] for s in sorted(groups[key])]
        m, se = mean_se(vals)
        out.append(SummaryRow(*key, m, se, len(vals)))
    return out


def write_summary_csv(summary: Sequence[SummaryRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in summary:
            w.writerow([s.dataset, s.n, s.metric, s.method, repr(s.mean), repr(s.se), s.n_seeds])


PAIRED_NOTE = "seeds are paired: all methods of one seed share data, split and nuisances"


def format_table(summary: Sequence[SummaryRow], digits: int = 3) -> str:
    header = ["dataset", "n", "metric", "method", "mean +- se", "seeds"]
    body = [[s.dataset, str(s.n), s.metric, s.method,
             f"{s.mean:.{digits}f} +- {s.se:.{digits}f}", str(s.n_seeds)] for s in summary]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines + ["", PAIRED_NOTE]) + "\n"
