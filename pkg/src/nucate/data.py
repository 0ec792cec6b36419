"""Dataset container, CSV schema, train/validation split and result records.

Dataset CSV columns: ``x_0 .. x_{d-1}, a, y`` plus optional oracle columns
``tau, mu, y0, y1``. Floats are written with ``repr`` (shortest round-trip),
so a write/load cycle is bit-exact.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ORACLE_COLUMNS = ("tau", "mu", "y0", "y1")


class SchemaError(ValueError):
    pass


@dataclass
class Dataset:
    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    tau: np.ndarray | None = None
    mu: np.ndarray | None = None
    y0: np.ndarray | None = None
    y1: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.a = np.asarray(self.a).astype(np.int64).ravel()
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        n = self.x.shape[0]
        if self.a.shape[0] != n or self.y.shape[0] != n:
            raise SchemaError("x, a and y must have the same number of rows")
        if not np.isin(self.a, (0, 1)).all():
            raise SchemaError("actions must be 0 or 1")
        for name in ORACLE_COLUMNS:
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=np.float64).ravel()
                if v.shape[0] != n:
                    raise SchemaError(f"oracle column {name} has wrong length")
                setattr(self, name, v)
        for name in ("x", "y") + ORACLE_COLUMNS:
            v = getattr(self, name)
            if v is not None and not np.all(np.isfinite(v)):
                raise SchemaError(f"column {name} has non-finite values")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.n

    @property
    def has_oracle(self) -> bool:
        return any(getattr(self, c) is not None for c in ORACLE_COLUMNS)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        kw = {f.name: (None if getattr(self, f.name) is None else getattr(self, f.name)[idx])
              for f in fields(self)}
        return Dataset(**kw)

    def without_oracle(self) -> "Dataset":
        return replace(self, **{c: None for c in ORACLE_COLUMNS})

    def arm(self, a: int) -> "Dataset":
        return self.subset(np.flatnonzero(self.a == a))


# CSV ------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv_dataset(ds: Dataset, path: str | Path) -> None:
    oracle = [c for c in ORACLE_COLUMNS if getattr(ds, c) is not None]
    header = [f"x_{j}" for j in range(ds.d)] + ["a", "y"] + oracle
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n):
            row = [_fmt(v) for v in ds.x[i]] + [str(int(ds.a[i])), _fmt(ds.y[i])]
            row += [_fmt(getattr(ds, c)[i]) for c in oracle]
            w.writerow(row)


def load_csv_dataset(path: str | Path, require_oracle: bool = False,
                     drop_oracle: bool = False) -> Dataset:
    """Read a dataset CSV.

    Rows are validated one by one so errors name the offending data row
    (1-based, header excluded).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        col = {h: i for i, h in enumerate(header)}
        for req in ("a", "y"):
            if req not in col:
                raise SchemaError(f"{path}: missing column {req!r}")
        d = 0
        while f"x_{d}" in col:
            d += 1
        if d == 0:
            raise SchemaError(f"{path}: missing covariate column 'x_0'")
        stray = [h for h in header if h.startswith("x_") and h not in {f"x_{j}" for j in range(d)}]
        if stray:
            raise SchemaError(f"{path}: covariate columns are not contiguous: {stray}")
        oracle = [c for c in ORACLE_COLUMNS if c in col]
        if require_oracle and len(oracle) != len(ORACLE_COLUMNS):
            missing = sorted(set(ORACLE_COLUMNS) - set(oracle))
            raise SchemaError(f"{path}: missing oracle columns {missing}")
        xs, acts, ys = [], [], []
        orc = {c: [] for c in oracle}
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            try:
                xs.append([float(row[col[f"x_{j}"]]) for j in range(d)])
                ys.append(float(row[col["y"]]))
                for c in oracle:
                    orc[c].append(float(row[col[c]]))
                a = float(row[col["a"]])
            except ValueError as exc:
                raise SchemaError(f"{path}: row {lineno}: unparseable value ({exc})") from None
            if not (np.all(np.isfinite(xs[-1])) and np.isfinite(ys[-1])
                    and all(np.isfinite(orc[c][-1]) for c in oracle)):
                raise SchemaError(f"{path}: row {lineno}: non-finite value")
            if a not in (0.0, 1.0):
                raise SchemaError(f"{path}: row {lineno}: action must be 0 or 1, got {row[col['a']]}")
            acts.append(int(a))
    if not xs:
        raise SchemaError(f"{path}: no data rows")
    kw = {} if drop_oracle else {c: np.array(v) for c, v in orc.items()}
    return Dataset(np.array(xs), np.array(acts), np.array(ys), **kw)


# splitting --------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    ratio: float = 0.3
    seed: int = 0


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < spec.ratio < 1.0:
        raise ValueError("validation ratio must lie in (0, 1)")
    n_val = int(math.floor(spec.ratio * n + 0.5))
    if n < 2 or n_val < 1 or n_val >= n:
        raise ValueError(f"cannot split {n} rows with ratio {spec.ratio}")
    perm = np.random.default_rng(spec.seed).permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def split_train_val(ds: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset]:
    tr, va = split_indices(ds.n, spec)
    return ds.subset(tr), ds.subset(va)


# results ------------------------------------------------------------------------

RESULT_COLUMNS = ("method", "dataset", "n", "seed", "metric", "value", "params")


@dataclass(frozen=True)
class ResultRow:
    method: str
    dataset: str
    n: int
    seed: int
    metric: str
    value: float
    params: str = "{}"

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"non-finite metric value for {self.method}/{self.metric}")

    @staticmethod
    def encode_params(params: dict) -> str:
        return json.dumps(params, sort_keys=True, separators=(",", ":"))


def write_results(rows: Sequence[ResultRow], path: str | Path, append: bool = False) -> None:
    """Write result rows; with ``append`` the header is only written for a new file."""
    if not rows:
        raise ValueError("no result rows to write")
    path = Path(path)
    new = not (append and path.exists() and path.stat().st_size > 0)
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([r.method, r.dataset, r.n, r.seed, r.metric, _fmt(r.value), r.params])


def read_results(path: str | Path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise SchemaError(f"{path}: unexpected results header {reader.fieldnames}")
        return [ResultRow(r["method"], r["dataset"], int(r["n"]), int(r["seed"]), r["metric"],
                          float(r["value"]), r["params"]) for r in reader]


def concat_rows(groups: Iterable[Sequence[ResultRow]]) -> list[ResultRow]:
    return [r for g in groups for r in g]
