"""Decomposed-covariate synthetic benchmark with additive or multiplicative noise.

Covariates are standard normal; the first ``d_c`` columns are confounders,
the next ``d_o`` only drive outcomes, the next ``d_t`` only drive the effect,
and any remaining columns are inert::

    E[Y0|x] = sum(x_c**2) + sum(x_o**2)
    tau(x)  = sum(x_t**2)
    mu(x)   = sigmoid(xi_sel * (sum(x_c**2) / d_c - omega))

``omega`` is set to the sample median of ``sum(x_c**2) / d_c``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .tensor import sigmoid


@dataclass(frozen=True)
class SyntheticConfig:
    d_c: int = 5
    d_o: int = 5
    d_t: int = 5
    d: int = 25
    xi_sel: float = 3.0
    noise: str = "AN"
    seed: int = 0

    def __post_init__(self):
        if min(self.d_c, self.d_o, self.d_t) < 1:
            raise ValueError("covariate group sizes must be positive")
        if self.d < self.d_c + self.d_o + self.d_t:
            raise ValueError("d must be at least d_c + d_o + d_t")
        if not self.xi_sel > 0:
            raise ValueError("selection strength must be positive")
        if self.noise not in ("AN", "MN"):
            raise ValueError(f"noise must be 'AN' or 'MN', got {self.noise!r}")

    @property
    def tag(self) -> str:
        return f"synthetic-{self.noise}"


@dataclass
class SyntheticOracle:
    mu: np.ndarray
    ey0: np.ndarray
    ey1: np.ndarray
    tau: np.ndarray
    y0: np.ndarray | None = None
    y1: np.ndarray | None = None
    omega: float = float("nan")
    noise_scale: float = float("nan")
    extra: dict = field(default_factory=dict)


def _streams(seed: int) -> tuple[np.random.Generator, ...]:
    # separate streams so AN and MN share x and a for the same seed
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))


def sample_covariates(cfg: SyntheticConfig, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _streams(cfg.seed)[0] if rng is None else rng
    return rng.standard_normal((n, cfg.d))


def _confounder_score(cfg: SyntheticConfig, x: np.ndarray) -> np.ndarray:
    return np.sum(x[:, :cfg.d_c] ** 2, axis=1) / cfg.d_c


def calibrate_omega(cfg: SyntheticConfig, x: np.ndarray) -> float:
    x = np.atleast_2d(x)
    if x.shape[0] == 0:
        raise ValueError("cannot calibrate omega on an empty sample")
    return float(np.median(_confounder_score(cfg, x)))


def true_surfaces(cfg: SyntheticConfig, x: np.ndarray, omega: float | None) -> SyntheticOracle:
    """Noise-free surfaces and true propensity for covariate rows ``x``."""
    if omega is None or not np.isfinite(omega):
        raise ValueError("omega must be calibrated before evaluating the propensity")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != cfg.d:
        raise ValueError(f"expected {cfg.d} covariates, got {x.shape[1]}")
    c, o = cfg.d_c, cfg.d_o
    xc, xo, xt = x[:, :c], x[:, c:c + o], x[:, c + o:c + o + cfg.d_t]
    ey0 = np.sum(xc ** 2, axis=1) + np.sum(xo ** 2, axis=1)
    tau = np.sum(xt ** 2, axis=1)
    mu = sigmoid(cfg.xi_sel * (_confounder_score(cfg, x) - omega))
    return SyntheticOracle(mu=mu, ey0=ey0, ey1=ey0 + tau, tau=tau, omega=float(omega))


def mn_noise_scale(ey0: np.ndarray, ey1: np.ndarray) -> float:
    """Multiplicative-noise std that matches the additive unit-noise level."""
    s = np.sqrt(np.var(ey1)) + np.sqrt(np.var(ey0))
    if not s > 0:
        raise ValueError("degenerate outcome surfaces: zero variance")
    return float(2.0 / s)


def sample_dataset(cfg: SyntheticConfig, n: int, omega: float | None = None
                   ) -> tuple[Dataset, SyntheticOracle]:
    """Draw ``n`` rows. ``omega`` defaults to the median calibrated on this sample."""
    rx, ra, rnoise = _streams(cfg.seed)
    x = sample_covariates(cfg, n, rx)
    if omega is None:
        omega = calibrate_omega(cfg, x)
    orc = true_surfaces(cfg, x, omega)
    a = (ra.random(n) < orc.mu).astype(np.int64)
    eps = rnoise.standard_normal((n, 2))
    if cfg.noise == "AN":
        scale = 1.0
        y0 = orc.ey0 + eps[:, 0]
        y1 = orc.ey1 + eps[:, 1]
    else:
        scale = mn_noise_scale(orc.ey0, orc.ey1)
        y0 = orc.ey0 * (1.0 + scale * eps[:, 0])
        y1 = orc.ey1 * (1.0 + scale * eps[:, 1])
    y = np.where(a == 1, y1, y0)
    orc.y0, orc.y1, orc.noise_scale = y0, y1, scale
    ds = Dataset(x, a, y, tau=orc.tau, mu=orc.mu, y0=y0, y1=y1)
    return ds, orc
