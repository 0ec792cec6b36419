"""Evaluation metrics for CATE estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .estimators import ipw_target
from .tensor import clamp_prob


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    n_eval: int


def _pair(tau_hat, tau) -> tuple[np.ndarray, np.ndarray]:
    tau_hat = np.asarray(tau_hat, dtype=np.float64).ravel()
    tau = np.asarray(tau, dtype=np.float64).ravel()
    if tau_hat.shape != tau.shape:
        raise ValueError("prediction and target lengths differ")
    if tau.size == 0:
        raise ValueError("empty evaluation set")
    return tau_hat, tau


def pehe(tau_hat, tau) -> tuple[MetricValue, MetricValue]:
    """Mean squared effect error and its square root."""
    tau_hat, tau = _pair(tau_hat, tau)
    mse = float(np.mean((tau_hat - tau) ** 2))
    return MetricValue("pehe_mse", mse, tau.size), MetricValue("pehe_rmse", math.sqrt(mse), tau.size)


def mse_vs_noisy_tau(tau_hat, y0, y1) -> MetricValue:
    """Error against the realized difference of both potential outcomes."""
    y0, y1 = np.asarray(y0, dtype=np.float64), np.asarray(y1, dtype=np.float64)
    tau_hat, diff = _pair(tau_hat, y1 - y0)
    return MetricValue("mse_vs_noisy_tau", float(np.mean((tau_hat - diff) ** 2)), diff.size)


def mse_transformed_target(tau_hat, ds: Dataset, mu_true=None) -> MetricValue:
    """MSE against the IPW pseudo-outcome under a known propensity.

    Its expectation is the PEHE plus the mean conditional variance of the
    pseudo-outcome, a constant across estimators. ``mu_true`` may be a scalar
    (randomized evaluation split) or per-row values; defaults to ``ds.mu``.
    """
    if mu_true is None:
        mu_true = ds.mu
    if mu_true is None:
        raise ValueError("mse_transformed_target needs the true propensity")
    mu = clamp_prob(np.broadcast_to(np.asarray(mu_true, dtype=np.float64), (ds.n,)))
    z = ipw_target(mu, ds.a.astype(np.float64), ds.y)
    tau_hat, z = _pair(tau_hat, z)
    return MetricValue("mse_vs_transformed", float(np.mean((tau_hat - z) ** 2)), z.size)


def mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("no values")
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
    return float(v.mean()), se
