"""Minibatch training loop with early stopping and best-so-far restore."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .nn import OptimizerState
from .tensor import NonFiniteError, Node, Parameter, Tape

log = logging.getLogger(__name__)


@dataclass
class TrainerConfig:
    lr: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 10
    min_epochs: int = 0
    optimizer: str = "adam"


@dataclass
class FitResult:
    best_epoch: int
    best_val: float
    val_history: list[float] = field(default_factory=list)
    diverged: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.val_history)


def snapshot(params: Sequence[Parameter]) -> list[np.ndarray]:
    return [p.value.copy() for p in params]


def restore(params: Sequence[Parameter], values: Sequence[np.ndarray]) -> None:
    for p, v in zip(params, values):
        p.value = v.copy()


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


class EarlyStopper:
    """Tracks the best validation score and decides when to stop."""

    def __init__(self, params: Sequence[Parameter], patience: int, min_epochs: int = 0,
                 initial_val: float | None = None):
        # initial_val scores the starting parameters (epoch -1) as a candidate
        self.params = list(params)
        self.patience = patience
        self.min_epochs = min_epochs
        self.best_val = np.inf if initial_val is None else float(initial_val)
        self.best_epoch = -1
        self.best_values = snapshot(self.params)
        self.history: list[float] = []

    def update(self, val: float) -> bool:
        """Record one epoch's score; returns True when training should stop."""
        epoch = len(self.history)
        self.history.append(float(val))
        if np.isfinite(val) and val < self.best_val:
            self.best_val, self.best_epoch = float(val), epoch
            self.best_values = snapshot(self.params)
        since_best = epoch - self.best_epoch
        return epoch + 1 >= self.min_epochs and since_best >= self.patience

    def finish(self, diverged: bool = False) -> FitResult:
        restore(self.params, self.best_values)
        return FitResult(self.best_epoch, self.best_val, self.history, diverged)


def fit(params: Sequence[Parameter], batch_loss: Callable[[Tape, np.ndarray], Node],
        val_score: Callable[[], float], n_train: int, cfg: TrainerConfig,
        rng: np.random.Generator, on_epoch: Callable[[int], None] | None = None) -> FitResult:
    """Minimize ``batch_loss`` over shuffled minibatches of ``range(n_train)``.

    Parameters are left at the best-validation snapshot.
    """
    params = list(params)
    opt = OptimizerState(params, kind=cfg.optimizer, lr=cfg.lr)
    stopper = EarlyStopper(params, cfg.patience, cfg.min_epochs)
    diverged = False
    for epoch in range(cfg.max_epochs):
        try:
            for idx in minibatches(n_train, cfg.batch_size, rng):
                tape = Tape()
                loss = batch_loss(tape, idx)
                opt.step(tape.backward(loss, params))
            val = val_score()
        except NonFiniteError as exc:
            log.warning("training diverged at epoch %d: %s", epoch, exc)
            diverged = True
            break
        if on_epoch is not None:
            on_epoch(epoch)
        if stopper.update(val):
            break
    return stopper.finish(diverged)
