"""Outcome and propensity nuisance models (first stage) and the evidence score."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .nn import MLP
from .tensor import Node, PROB_EPS, Tape, clamp_prob, log
from .training import FitResult, TrainerConfig, fit


@dataclass(frozen=True)
class SeparatedArch:
    """Representation block followed by a hypothesis block, one net per target."""

    n_layers_r: int = 3
    n_units_r: int = 200
    n_layers_out: int = 2
    n_units_out: int = 100
    activation: str = "elu"

    def widths(self, d: int) -> list[int]:
        return [d] + [self.n_units_r] * self.n_layers_r + [self.n_units_out] * self.n_layers_out + [1]

    def build(self, d: int, out_activation: str, rng: np.random.Generator, name: str) -> MLP:
        return MLP(self.widths(d), self.activation, out_activation, rng=rng, name=name)


@dataclass
class NuisanceTriple:
    f0: MLP
    f1: MLP
    mu0: MLP
    c: float
    c_train: float = float("nan")
    fits: dict | None = None


def _col(v: np.ndarray) -> np.ndarray:
    return np.asarray(v, dtype=np.float64).reshape(-1, 1)


def mse_node(pred: Node, target: np.ndarray) -> Node:
    return ((pred - _col(target)) ** 2).mean()


def bce_node(p: Node, a: np.ndarray) -> Node:
    """Mean binary cross-entropy; ``p`` must already be clamped into (0, 1)."""
    a = _col(a)
    return -(a * log(p) + (1.0 - a) * log(1.0 - p)).mean()


def evidence_from_probs(p: np.ndarray, a: np.ndarray) -> float:
    p = clamp_prob(np.asarray(p, dtype=np.float64).ravel())
    a = np.asarray(a, dtype=np.float64).ravel()
    if p.size == 0:
        raise ValueError("evidence of an empty sample")
    return float(-np.mean(a * np.log(p) + (1.0 - a) * np.log(1.0 - p)))


def evidence(mu: MLP, ds: Dataset) -> float:
    """Empirical negative log-likelihood of the actions under ``mu``."""
    return evidence_from_probs(mu.predict(ds.x), ds.a)


def _require_both_arms(ds: Dataset, what: str):
    for arm in (0, 1):
        if not np.any(ds.a == arm):
            raise ValueError(f"{what}: no rows with action {arm}")


def fit_regressor(model: MLP, x: np.ndarray, y: np.ndarray, x_val: np.ndarray, y_val: np.ndarray,
                  cfg: TrainerConfig, rng: np.random.Generator) -> FitResult:
    y_col = _col(y)

    def batch_loss(tape: Tape, idx: np.ndarray) -> Node:
        return ((model.forward(tape, tape.constant(x[idx])) - y_col[idx]) ** 2).mean()

    def val_score() -> float:
        return float(np.mean((model.predict(x_val).ravel() - y_val) ** 2))

    return fit(model.parameters(), batch_loss, val_score, x.shape[0], cfg, rng)


def pretrain_outcome_heads(train: Dataset, val: Dataset, arch: SeparatedArch = SeparatedArch(),
                           cfg: TrainerConfig = TrainerConfig(), rng: np.random.Generator | None = None
                           ) -> tuple[MLP, MLP, dict]:
    """Fit ``f_a`` by MSE on the rows with action ``a``; early stop on arm-wise validation MSE."""
    _require_both_arms(train, "pretrain_outcome_heads (train)")
    _require_both_arms(val, "pretrain_outcome_heads (validation)")
    rng = np.random.default_rng(0) if rng is None else rng
    models, fits = {}, {}
    for arm in (0, 1):
        tr, va = train.arm(arm), val.arm(arm)
        m = arch.build(train.d, "identity", rng, f"f{arm}")
        fits[f"f{arm}"] = fit_regressor(m, tr.x, tr.y, va.x, va.y, cfg, rng)
        models[arm] = m
    return models[0], models[1], fits


def pretrain_propensity(train: Dataset, val: Dataset, arch: SeparatedArch = SeparatedArch(),
                        cfg: TrainerConfig = TrainerConfig(), rng: np.random.Generator | None = None
                        ) -> tuple[MLP, float, FitResult]:
    """Fit the propensity by BCE; the tolerance is its validation evidence at the stopped epoch."""
    _require_both_arms(train, "pretrain_propensity (train)")
    rng = np.random.default_rng(0) if rng is None else rng
    mu = arch.build(train.d, "sigmoid", rng, "mu")

    def batch_loss(tape: Tape, idx: np.ndarray) -> Node:
        return bce_node(mu.forward(tape, tape.constant(train.x[idx])), train.a[idx])

    res = fit(mu.parameters(), batch_loss, lambda: evidence(mu, val), train.n, cfg, rng)
    return mu, evidence(mu, val), res


def pretrain_nuisances(train: Dataset, val: Dataset, arch: SeparatedArch = SeparatedArch(),
                       cfg: TrainerConfig = TrainerConfig(), seed: int = 0,
                       tolerance: str = "val") -> NuisanceTriple:
    """Train ``f0, f1, mu0`` and fix the evidence tolerance.

    ``tolerance="val"`` uses the validation evidence of the early-stopped
    propensity; ``"train"`` uses its training evidence.
    """
    r_out, r_mu = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    f0, f1, fits = pretrain_outcome_heads(train, val, arch, cfg, r_out)
    mu0, c_val, mu_fit = pretrain_propensity(train, val, arch, cfg, r_mu)
    c_train = evidence(mu0, train)
    if tolerance not in ("val", "train"):
        raise ValueError(f"unknown tolerance source {tolerance!r}")
    c = c_val if tolerance == "val" else c_train
    return NuisanceTriple(f0, f1, mu0, c, c_train, {**fits, "mu": mu_fit})


__all__ = ["SeparatedArch", "NuisanceTriple", "evidence", "evidence_from_probs", "bce_node",
           "mse_node", "pretrain_outcome_heads", "pretrain_propensity", "pretrain_nuisances",
           "fit_regressor", "PROB_EPS"]
