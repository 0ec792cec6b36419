"""Experiment orchestration: data, nuisance pretraining, method training, selection, evaluation.

Every seed is one independent job. Within a job all methods share the same
data, split and pretrained nuisances (paired comparison). Model selection
only sees the oracle-free train/validation splits.
"""
from __future__ import annotations

import dataclasses
import itertools
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .data import Dataset, ResultRow, SplitSpec, load_csv_dataset, split_indices
from .estimators import (SNetArch, SNetModel, TNetModel, train_drnet, train_snet)
from .metrics import mse_transformed_target, mse_vs_noisy_tau, pehe
from .nuisance import NuisanceTriple, SeparatedArch, evidence, pretrain_nuisances
from .robust import RobustConfig, train_nudrnet, tune_nusnet
from .synthetic import SyntheticConfig, sample_dataset
from .training import TrainerConfig

log = logging.getLogger(__name__)

METHODS = ("tnet", "drnet", "drnet_oracle", "nudrnet", "snet", "nusnet")
ROBUST_METHODS = ("nudrnet", "nusnet")
METRICS = ("pehe_mse", "pehe_rmse", "mse_vs_noisy_tau", "mse_vs_transformed")
DEFAULT_GRID = {"alpha0": [1.0, 10.0], "gamma": [1.5, 2.0, 3.0], "beta": [10.0, 100.0, 300.0]}
TEST_SEED_OFFSET = 1_000_003


class ExperimentError(RuntimeError):
    pass


@dataclass
class DatasetSpec:
    kind: str = "synthetic"
    noise: str = "AN"
    d_c: int = 5
    d_o: int = 5
    d_t: int = 5
    d: int = 25
    xi_sel: float = 3.0
    n_test: int = 10_000
    path: str | None = None
    test_path: str | None = None
    mu_test: float | None = None

    def __post_init__(self):
        if self.kind not in ("synthetic", "csv"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "csv" and not self.path:
            raise ValueError("csv datasets need a path")

    @property
    def tag(self) -> str:
        if self.kind == "synthetic":
            return f"synthetic-{self.noise}"
        return Path(self.path).stem

    def synthetic(self, seed: int) -> SyntheticConfig:
        return SyntheticConfig(self.d_c, self.d_o, self.d_t, self.d, self.xi_sel, self.noise, seed)


def _build(cls, data: dict | None):
    data = dict(data or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    methods: list[str] = field(default_factory=lambda: ["tnet", "drnet", "nudrnet"])
    n: int = 10_000
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    grid: dict[str, list[float]] = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_GRID.items()})
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    robust_min_epochs: int = 40
    lr_mu: float | None = None
    val_ratio: float = 0.3
    arch: SeparatedArch = field(default_factory=SeparatedArch)
    snet_arch: SNetArch = field(default_factory=SNetArch)
    snet_bce_weight: float = 1.0
    tolerance: str = "val"
    escalation: str = "ratio"
    step_mode: str = "simultaneous"
    metrics: list[str] | None = None
    jobs: int = 1

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        for key in ("alpha0", "gamma", "beta"):
            if not self.grid.get(key):
                raise ValueError(f"grid entry {key!r} is empty")
        if self.metrics is not None and set(self.metrics) - set(METRICS):
            raise ValueError(f"unknown metrics {sorted(set(self.metrics) - set(METRICS))}")
        if set(self.grid) - {"alpha0", "gamma", "beta"}:
            raise ValueError(f"unknown grid keys {sorted(set(self.grid) - set(DEFAULT_GRID))}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        nested = {"dataset": DatasetSpec, "trainer": TrainerConfig, "arch": SeparatedArch,
                  "snet_arch": SNetArch}
        for key, sub in nested.items():
            if key in d:
                d[key] = _build(sub, d[key])
        return _build(cls, d)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def grid_points(self) -> list[dict]:
        keys = ("alpha0", "gamma", "beta")
        return [dict(zip(keys, map(float, vals))) for vals in itertools.product(*(self.grid[k] for k in keys))]

    def robust_config(self, point: dict) -> RobustConfig:
        tc = dataclasses.replace(self.trainer, min_epochs=self.robust_min_epochs)
        return RobustConfig(alpha0=point["alpha0"], gamma=point["gamma"], beta=point["beta"],
                            escalation=self.escalation, lr_mu=self.lr_mu, step_mode=self.step_mode,
                            trainer=tc)


@dataclass
class SeedData:
    train: Dataset
    val: Dataset
    test: Dataset
    mu_train: np.ndarray | None
    mu_val: np.ndarray | None


def load_seed_data(cfg: ExperimentConfig, seed: int) -> SeedData:
    spec = cfg.dataset
    if spec.kind == "synthetic":
        full, _ = sample_dataset(spec.synthetic(seed), cfg.n)
        test, _ = sample_dataset(spec.synthetic(seed + TEST_SEED_OFFSET), spec.n_test)
    else:
        full = load_csv_dataset(spec.path)
        if cfg.n and cfg.n < full.n:
            full = full.subset(np.sort(np.random.default_rng(seed).permutation(full.n)[:cfg.n]))
        test = load_csv_dataset(spec.test_path) if spec.test_path else None
        if test is None:
            raise ExperimentError("[data] csv experiments need a test_path")
    tr_idx, va_idx = split_indices(full.n, SplitSpec(cfg.val_ratio, seed))
    train, val = full.subset(tr_idx), full.subset(va_idx)
    return SeedData(train.without_oracle(), val.without_oracle(), test, train.mu, val.mu)


def evaluate(tau_hat: np.ndarray, test: Dataset, mu_test: float | None) -> list[tuple[str, float]]:
    out = []
    if test.tau is not None:
        out += [(m.name, m.value) for m in pehe(tau_hat, test.tau)]
    if test.y0 is not None and test.y1 is not None:
        m = mse_vs_noisy_tau(tau_hat, test.y0, test.y1)
        out.append((m.name, m.value))
    mu = mu_test if mu_test is not None else test.mu
    if mu is not None:
        m = mse_transformed_target(tau_hat, test, mu)
        out.append((m.name, m.value))
    if not out:
        raise ExperimentError("[evaluate] test data carries no evaluation target")
    return out


@dataclass
class GridEntry:
    method: str
    seed: int
    point: dict
    val_criterion: float
    best_epoch: int
    epochs_run: int
    terminal_evidence: float
    c: float
    terminal_w2: float
    diverged: bool
    selected: bool = False

    def row(self) -> dict:
        return {"method": self.method, "seed": self.seed, **self.point,
                "val_criterion": self.val_criterion, "best_epoch": self.best_epoch,
                "epochs_run": self.epochs_run, "terminal_evidence": self.terminal_evidence,
                "c": self.c, "terminal_w2": self.terminal_w2, "diverged": self.diverged,
                "selected": self.selected}


GRID_COLUMNS = ("method", "seed", "alpha0", "gamma", "beta", "val_criterion", "best_epoch",
                "epochs_run", "terminal_evidence", "c", "terminal_w2", "diverged", "selected")


def sweep_robust(method: str, cfg: ExperimentConfig, train: Dataset, val: Dataset, seed: int,
                 nuisance: NuisanceTriple | None = None, snet: SNetModel | None = None):
    """Train every grid point; select by the method's own validation criterion.

    Only oracle-free train/validation data enter here.
    """
    if train.has_oracle or val.has_oracle:
        raise ExperimentError("[select] oracle columns must be stripped before model selection")
    entries, models = [], []
    for point in cfg.grid_points():
        rc = cfg.robust_config(point)
        if method == "nudrnet":
            model = train_nudrnet(train, val, nuisance, cfg.arch, rc, seed=seed)
        elif method == "nusnet":
            model = tune_nusnet(snet, train, val, rc, seed=seed)
        else:
            raise ValueError(f"{method} has no hyperparameter grid")
        info = model.fit_info
        hist = info["history"]
        entries.append(GridEntry(method, seed, point, info["fit"].best_val, info["fit"].best_epoch,
                                 info["fit"].epochs_run,
                                 hist["evidence_train"][-1] if hist["evidence_train"] else float("nan"),
                                 info["c"], hist["w2_train"][-1] if hist["w2_train"] else float("nan"),
                                 info["fit"].diverged))
        models.append(model)
    scores = [e.val_criterion if np.isfinite(e.val_criterion) else np.inf for e in entries]
    best = int(np.argmin(scores))
    entries[best].selected = True
    return models[best], entries


def _trainer_echo(cfg: ExperimentConfig) -> dict:
    return {"lr": cfg.trainer.lr, "batch_size": cfg.trainer.batch_size,
            "max_epochs": cfg.trainer.max_epochs, "patience": cfg.trainer.patience}


def run_seed(cfg: ExperimentConfig, seed: int) -> tuple[list[ResultRow], list[GridEntry]]:
    stage = "data"
    try:
        data = load_seed_data(cfg, seed)
        rows: list[ResultRow] = []
        grid_rows: list[GridEntry] = []
        nuisance = snet = None
        tag = cfg.dataset.tag
        for method in cfg.methods:
            stage = method
            t0 = time.time()
            params: dict[str, Any] = dict(_trainer_echo(cfg))
            if method in ("tnet", "drnet", "drnet_oracle", "nudrnet") and nuisance is None:
                stage = "nuisance"
                nuisance = pretrain_nuisances(data.train, data.val, cfg.arch, cfg.trainer, seed,
                                              cfg.tolerance)
                stage = method
            if method in ("snet", "nusnet") and snet is None:
                stage = "snet"
                snet = train_snet(data.train, data.val, cfg.snet_arch, cfg.trainer, seed,
                                  cfg.snet_bce_weight)
                stage = method
            if method == "tnet":
                model = TNetModel(nuisance.f0, nuisance.f1)
                model.trained = True
            elif method == "drnet":
                model = train_drnet(data.train, data.val, nuisance, cfg.arch, cfg.trainer, seed)
            elif method == "drnet_oracle":
                if data.mu_train is None:
                    raise ExperimentError("drnet_oracle needs a true propensity column")
                model = train_drnet(data.train, data.val, nuisance, cfg.arch, cfg.trainer, seed,
                                    mu_train=data.mu_train, mu_val=data.mu_val)
            elif method == "snet":
                model = snet
            else:
                model, entries = sweep_robust(method, cfg, data.train, data.val, seed, nuisance, snet)
                grid_rows += entries
                chosen = next(e for e in entries if e.selected)
                params.update(chosen.point)
                params["min_epochs"] = cfg.robust_min_epochs
            if "fit" in model.fit_info:
                params["best_epoch"] = model.fit_info["fit"].best_epoch
            stage = f"{method}/evaluate"
            tau_hat = model.predict_cate(data.test.x)
            enc = ResultRow.encode_params(params)
            for metric, value in evaluate(tau_hat, data.test, cfg.dataset.mu_test):
                if cfg.metrics is not None and metric not in cfg.metrics:
                    continue
                rows.append(ResultRow(method, tag, cfg.n, seed, metric, value, enc))
            log.info("seed %d %s done in %.1fs", seed, method, time.time() - t0)
        return rows, grid_rows
    except ExperimentError:
        raise
    except Exception as exc:
        raise ExperimentError(f"[{stage}] seed {seed}: {type(exc).__name__}: {exc}") from exc


def _run_all(cfg: ExperimentConfig):
    if cfg.jobs > 1 and len(cfg.seeds) > 1:
        from joblib import Parallel, delayed
        return Parallel(n_jobs=cfg.jobs)(delayed(run_seed)(cfg, s) for s in cfg.seeds)
    return [run_seed(cfg, s) for s in cfg.seeds]


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    return [r for rows, _ in _run_all(cfg) for r in rows]


@dataclass
class SweepResult:
    rows: list[ResultRow]
    grid: list[GridEntry]

    def best_points(self) -> dict[tuple[str, int], dict]:
        return {(e.method, e.seed): e.point for e in self.grid if e.selected}


def hyperparam_sweep(cfg: ExperimentConfig) -> SweepResult:
    if not cfg.grid_points():
        raise ValueError("empty hyperparameter grid")
    out = _run_all(cfg)
    return SweepResult([r for rows, _ in out for r in rows], [g for _, grid in out for g in grid])


def write_grid(entries: list[GridEntry], path: str | Path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=GRID_COLUMNS, lineterminator="\n")
        w.writeheader()
        for e in entries:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in e.row().items()})


__all__ = ["ExperimentConfig", "DatasetSpec", "run_experiment", "hyperparam_sweep", "run_seed",
           "sweep_robust", "evaluate", "write_grid", "SweepResult", "GridEntry", "METHODS",
           "ExperimentError", "load_seed_data", "evidence"]
