"""Weighted Rademacher complexity and Monte-Carlo checks of the weighted generalization bounds.

For the bounded linear class ``{x -> theta.x : |theta| <= B}`` the inner
supremum has the closed form ``(B/N) * |sum_n sigma_n w_n x_n|``, so the
complexity is an expectation over sign vectors only. For ``N <= 12`` all
``2**N`` sign vectors are enumerated.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .tensor import sigmoid

EXHAUSTIVE_MAX_N = 12


@dataclass(frozen=True)
class LinearClassSpec:
    B: float
    X: float
    d: int

    def __post_init__(self):
        if not (self.B > 0 and self.X > 0):
            raise ValueError("B and X must be positive")


@dataclass
class BoundReport:
    estimate: float
    bound: float
    se: float
    n_draws: int
    N: int
    exhaustive: bool
    B: float = float("nan")
    X: float = float("nan")
    population_bound: float = float("nan")


def _check_inputs(spec: LinearClassSpec, x: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    w = np.asarray(w, dtype=np.float64).ravel()
    if x.shape[0] != w.shape[0]:
        raise ValueError("x and w must have the same number of rows")
    if x.shape[1] != spec.d:
        raise ValueError(f"expected dimension {spec.d}, got {x.shape[1]}")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    if np.any(np.linalg.norm(x, axis=1) > spec.X * (1 + 1e-12)):
        raise ValueError("a covariate row exceeds the norm bound X")
    return x, w


def sign_patterns(N: int) -> np.ndarray:
    return np.array(list(itertools.product((1.0, -1.0), repeat=N)))


def weighted_rademacher_linear(spec: LinearClassSpec, x: np.ndarray, w: np.ndarray,
                               n_draws: int = 10_000, rng: np.random.Generator | None = None,
                               exhaustive: bool | None = None) -> BoundReport:
    """Empirical weighted Rademacher complexity of the bounded linear class on ``(x, w)``."""
    x, w = _check_inputs(spec, x, w)
    N = x.shape[0]
    if exhaustive is None:
        exhaustive = N <= EXHAUSTIVE_MAX_N
    wx = w[:, None] * x
    if exhaustive:
        if N > EXHAUSTIVE_MAX_N:
            raise ValueError(f"exhaustive enumeration is limited to N <= {EXHAUSTIVE_MAX_N}")
        vals = np.linalg.norm(sign_patterns(N) @ wx, axis=1)
        est, se, draws = float(vals.mean()), 0.0, vals.shape[0]
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        vals = np.empty(n_draws)
        chunk = max(1, min(n_draws, 2_000_000 // max(N, 1)))
        for start in range(0, n_draws, chunk):
            k = min(chunk, n_draws - start)
            sig = rng.choice((-1.0, 1.0), size=(k, N))
            vals[start:start + k] = np.linalg.norm(sig @ wx, axis=1)
        est, se, draws = float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_draws)), n_draws
    scale = spec.B / N
    return BoundReport(est * scale, linear_bound_thm42(spec, w), se * scale, draws, N, exhaustive,
                       spec.B, spec.X)


def linear_bound_thm42(spec: LinearClassSpec, w: np.ndarray, N: int | None = None) -> float:
    """``(B X / N) * sqrt(sum w**2)`` on the realized weights."""
    w = np.asarray(w, dtype=np.float64).ravel()
    N = w.size if N is None else N
    return float(spec.B * spec.X / N * math.sqrt(float(np.sum(w * w))))


def population_linear_bound(spec: LinearClassSpec, mean_sq_weight: float, N: int) -> float:
    """Population form ``(B X / N) sqrt(E|w|^2)`` with ``E|w|^2 = N * E[w^2]``."""
    return float(spec.B * spec.X / N * math.sqrt(N * mean_sq_weight))


# generalization-gap coverage ----------------------------------------------------

@dataclass(frozen=True)
class LinearCoverageProblem:
    """Bounded regression problem with IPW weights.

    ``x`` is uniform in the ball of radius ``X``; treatment follows
    ``clip(sigmoid(slope * x_0), mu_min, 1 - mu_min)``; outcomes are clipped
    to ``[-Y, Y]``. The loss ``(y - theta.x)**2`` with ``|theta| <= B`` is
    then bounded by ``(Y + B X)**2`` and the weight by ``1 / mu_min``.
    """

    d: int = 2
    B: float = 1.0
    X: float = 1.0
    Y: float = 2.0
    mu_min: float = 0.1
    slope: float = 2.0
    noise: float = 0.5

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        g = rng.standard_normal((n, self.d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        x = g * (self.X * rng.random((n, 1)) ** (1.0 / self.d))
        mu = self.propensity(x)
        a = (rng.random(n) < mu).astype(np.float64)
        y = x[:, -1] + a * x[:, 0] + self.noise * rng.standard_normal(n)
        return x, a, np.clip(y, -self.Y, self.Y)

    def propensity(self, x: np.ndarray) -> np.ndarray:
        return np.clip(sigmoid(self.slope * x[:, 0]), self.mu_min, 1.0 - self.mu_min)

    def weights(self, x: np.ndarray, a: np.ndarray, weighted: bool = True) -> np.ndarray:
        if not weighted:
            return np.ones(a.shape[0])
        mu = self.propensity(x)
        return a / mu + (1.0 - a) / (1.0 - mu)

    def loss_bound(self, weighted: bool = True) -> float:
        wmax = 1.0 / self.mu_min if weighted else 1.0
        return wmax * (self.Y + self.B * self.X) ** 2

    def theta_grid(self, n_points: int, rng: np.random.Generator) -> np.ndarray:
        g = rng.standard_normal((n_points, self.d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return g * (self.B * rng.random((n_points, 1)) ** (1.0 / self.d))


def weighted_losses(thetas: np.ndarray, x: np.ndarray, a: np.ndarray, y: np.ndarray,
                    w: np.ndarray) -> np.ndarray:
    """``(G, N)`` matrix of weighted instance losses ``w_n (y_n - theta_g.x_n)**2``."""
    return w[None, :] * (y[None, :] - thetas @ x.T) ** 2


def rademacher_finite_class(wl: np.ndarray, n_sigma: int, rng: np.random.Generator
                            ) -> tuple[float, float]:
    """MC estimate (and SE) of ``E_sigma max_g (1/N) sum_n sigma_n wl[g, n]``."""
    N = wl.shape[1]
    sig = rng.choice((-1.0, 1.0), size=(N, n_sigma))
    sups = (wl @ sig).max(axis=0) / N
    return float(sups.mean()), float(sups.std(ddof=1) / math.sqrt(n_sigma)) if n_sigma > 1 else 0.0


@dataclass
class CoverageReport:
    trials: int
    violations: int
    delta: float
    N: int
    n_theta: int
    c_prime: float
    confidence_term: float
    mean_gap: float
    max_gap: float
    mean_complexity: float
    weighted: bool
    gaps: list = field(default_factory=list, repr=False)

    @property
    def violation_rate(self) -> float:
        return self.violations / self.trials


def generalization_gap_experiment(problem: LinearCoverageProblem, thetas: np.ndarray, delta: float,
                                  trials: int, N: int, n_population: int = 200_000,
                                  n_sigma: int = 200, seed: int = 0, weighted: bool = True,
                                  c_prime: float | None = None) -> CoverageReport:
    """Fraction of resampled datasets on which the uniform weighted gap exceeds the bound.

    Per trial the bound is ``2 * R + (c'/2) sqrt(log(1/delta) / N)`` with ``R``
    the empirical weighted Rademacher complexity of the loss class on that
    sample. The population risk comes from one large independent sample.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    if np.any(np.linalg.norm(thetas, axis=1) > problem.B * (1 + 1e-12)):
        raise ValueError("theta grid exceeds the norm bound B")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    c_prime = problem.loss_bound(weighted) if c_prime is None else float(c_prime)
    ss = np.random.SeedSequence(seed)
    pop_rng, *trial_seeds = ss.spawn(trials + 1)
    xp, ap, yp = problem.sample(n_population, np.random.default_rng(pop_rng))
    wlp = weighted_losses(thetas, xp, ap, yp, problem.weights(xp, ap, weighted))
    if wlp.max() > c_prime:
        raise ValueError(f"instance loss {wlp.max():.4g} exceeds the bound c'={c_prime:.4g}")
    L_pop = wlp.mean(axis=1)
    conf = 0.5 * c_prime * math.sqrt(math.log(1.0 / delta) / N)
    violations, gaps, comps = 0, [], []
    for ts in trial_seeds:
        rng = np.random.default_rng(ts)
        x, a, y = problem.sample(N, rng)
        wl = weighted_losses(thetas, x, a, y, problem.weights(x, a, weighted))
        if wl.max() > c_prime:
            raise ValueError("unbounded instance loss detected")
        gap = float(np.max(L_pop - wl.mean(axis=1)))
        comp, _ = rademacher_finite_class(wl, n_sigma, rng)
        gaps.append(gap)
        comps.append(comp)
        violations += gap > 2.0 * comp + conf
    return CoverageReport(trials, violations, delta, N, thetas.shape[0], c_prime, conf,
                          float(np.mean(gaps)), float(np.max(gaps)), float(np.mean(comps)),
                          weighted, gaps)


def write_bound_reports(reports: Sequence[BoundReport | CoverageReport], path: str | Path) -> None:
    rows = []
    for r in reports:
        d = asdict(r)
        d.pop("gaps", None)
        d["kind"] = type(r).__name__
        rows.append(d)
    keys = sorted({k for d in rows for k in d})
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for d in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in d.items()})
