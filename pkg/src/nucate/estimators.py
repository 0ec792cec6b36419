"""Instance weights, transformed outcomes and the CATE estimators TNet, DRNet, SNet."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .nn import MLP, get_flat
from .nuisance import (NuisanceTriple, SeparatedArch, bce_node, fit_regressor,
                       pretrain_outcome_heads)
from .tensor import Node, Tape, clamp_prob, concat
from .training import FitResult, TrainerConfig, fit


def col(v) -> np.ndarray:
    return np.asarray(v, dtype=np.float64).reshape(-1, 1)


# weights and transformed targets ---------------------------------------------

def ipw_weights(mu, a):
    """``a / mu + (1 - a) / (1 - mu)``; works on arrays and tape nodes alike."""
    return a / mu + (1 - a) / (1 - mu)


def dr_target(f0, f1, mu, a, y):
    return f1 - f0 + a * (y - f1) / mu - (1 - a) * (y - f0) / (1 - mu)


def ipw_target(mu, a, y):
    return a * y / mu - (1 - a) * y / (1 - mu)


@dataclass
class TransformedTarget:
    z: np.ndarray
    variant: str
    source: str = ""


def transformed_outcome(ds: Dataset, f0: MLP | np.ndarray | None, f1: MLP | np.ndarray | None,
                        mu: MLP | np.ndarray, variant: str = "DR") -> TransformedTarget:
    """Pseudo-outcome whose conditional mean is the CATE when either nuisance is right.

    Models or precomputed prediction arrays are accepted for ``f0``, ``f1``
    and ``mu``.
    """
    def values(m):
        return m.predict(ds.x) if isinstance(m, MLP) else col(m)

    m = clamp_prob(values(mu))
    a, y = col(ds.a), col(ds.y)
    if variant == "DR":
        z = dr_target(values(f0), values(f1), m, a, y)
    elif variant == "IPW":
        z = ipw_target(m, a, y)
    else:
        raise ValueError(f"unknown transformed-outcome variant {variant!r}")
    src = mu.name if isinstance(mu, MLP) else "array"
    return TransformedTarget(z.ravel(), variant, src)


def cate_mse(tau, z):
    """Mean squared error between predicted effects and targets (arrays or nodes)."""
    return ((tau - z) ** 2).mean()


# models ---------------------------------------------------------------------------

class CateModel:
    kind = "base"

    def __init__(self):
        self.trained = False
        self.fit_info: dict = {}

    def _predict(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_cate(self, x: np.ndarray, allow_untrained: bool = False) -> np.ndarray:
        if not (self.trained or allow_untrained):
            raise RuntimeError(f"{self.kind} model has not been trained")
        return self._predict(np.asarray(x, dtype=np.float64)).ravel()


class TNetModel(CateModel):
    kind = "tnet"

    def __init__(self, f0: MLP, f1: MLP):
        super().__init__()
        self.f0, self.f1 = f0, f1

    def _predict(self, x):
        return self.f1.predict(x) - self.f0.predict(x)


class DirectModel(CateModel):
    """A network regressing the effect directly."""

    kind = "direct"

    def __init__(self, tau: MLP):
        super().__init__()
        self.tau = tau

    def _predict(self, x):
        return self.tau.predict(x)


def predict_cate(model: CateModel, x: np.ndarray) -> np.ndarray:
    return model.predict_cate(x)


# TNet --------------------------------------------------------------------------------

def train_tnet(train: Dataset, val: Dataset, arch: SeparatedArch = SeparatedArch(),
               cfg: TrainerConfig = TrainerConfig(), seed: int = 0,
               nuisance: NuisanceTriple | None = None) -> TNetModel:
    """Two independent outcome networks; reuses pretrained heads when given."""
    if nuisance is not None:
        model = TNetModel(nuisance.f0, nuisance.f1)
    else:
        f0, f1, fits = pretrain_outcome_heads(train, val, arch, cfg, np.random.default_rng(seed))
        model = TNetModel(f0, f1)
        model.fit_info = fits
    model.trained = True
    return model


# DRNet -----------------------------------------------------------------------------------

@dataclass
class DRTargets:
    """Fixed-nuisance pieces of the DR target on one split, as columns."""

    f0: np.ndarray
    f1: np.ndarray
    a: np.ndarray
    y: np.ndarray

    @classmethod
    def build(cls, ds: Dataset, nuisance: NuisanceTriple) -> "DRTargets":
        return cls(nuisance.f0.predict(ds.x), nuisance.f1.predict(ds.x), col(ds.a), col(ds.y))

    def z(self, mu, idx=None):
        if idx is None:
            return dr_target(self.f0, self.f1, mu, self.a, self.y)
        return dr_target(self.f0[idx], self.f1[idx], mu, self.a[idx], self.y[idx])


def drnet_val_criterion(tau: MLP, x_val: np.ndarray, z_val: np.ndarray) -> float:
    return float(cate_mse(tau.predict(x_val), z_val))


def train_drnet(train: Dataset, val: Dataset, nuisance: NuisanceTriple,
                arch: SeparatedArch = SeparatedArch(), cfg: TrainerConfig = TrainerConfig(),
                seed: int = 0, mu_train: np.ndarray | None = None,
                mu_val: np.ndarray | None = None, record_trajectory: bool = False) -> DirectModel:
    """Second stage of the DR-learner: regress the DR pseudo-outcome on ``x``.

    ``mu_train``/``mu_val`` replace the fitted propensity with known values
    (the oracle-propensity variant).
    """
    rng = np.random.default_rng(seed)
    tau = arch.build(train.d, "identity", rng, "tau")
    tr, va = DRTargets.build(train, nuisance), DRTargets.build(val, nuisance)
    if mu_train is not None:
        mu_tr = clamp_prob(col(mu_train))
        batch_mu = lambda idx: mu_tr[idx]  # noqa: E731
    else:
        batch_mu = lambda idx: nuisance.mu0.predict(train.x[idx])  # noqa: E731
    mu_va = clamp_prob(col(mu_val)) if mu_val is not None else nuisance.mu0.predict(val.x)
    z_val = va.z(mu_va)

    def batch_loss(tape: Tape, idx: np.ndarray) -> Node:
        z = tr.z(batch_mu(idx), idx)
        return cate_mse(tau.forward(tape, tape.constant(train.x[idx])), z)

    trajectory = [] if record_trajectory else None
    on_epoch = (lambda _: trajectory.append(get_flat(tau.parameters()))) if record_trajectory else None
    res = fit(tau.parameters(), batch_loss, lambda: drnet_val_criterion(tau, val.x, z_val),
              train.n, cfg, rng, on_epoch)
    model = DirectModel(tau)
    model.fit_info = {"fit": res, "trajectory": trajectory}
    model.trained = True
    return model


# SNet ------------------------------------------------------------------------------------------

@dataclass(frozen=True)
class SNetArch:
    n_layers_r: int = 3
    n_units_r_small: int = 50
    n_units_r_big: int = 100
    n_layers_out: int = 2
    n_units_out: int = 100
    activation: str = "elu"


class SNet:
    """Five representation extractors and three heads.

    ``h1`` reads ``[phi1, phi_o, phi_c]``, ``h0`` reads ``[phi0, phi_o, phi_c]``
    and the propensity head ``h_mu`` reads ``[phi_mu, phi_c]``.
    """

    REPS = ("phi1", "phi0", "phio", "phimu", "phic")
    HEADS = ("h1", "h0", "hmu")

    def __init__(self, d: int, arch: SNetArch = SNetArch(), rng: np.random.Generator | None = None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.d, self.arch = d, arch
        act = arch.activation
        small, big = arch.n_units_r_small, arch.n_units_r_big

        def rep(units, name):
            return MLP([d] + [units] * arch.n_layers_r, act, act, rng=rng, name=name)

        def head(fan_in, out_act, name):
            return MLP([fan_in] + [arch.n_units_out] * arch.n_layers_out + [1], act, out_act,
                       rng=rng, name=name)

        self.phi1, self.phi0, self.phio = rep(small, "phi1"), rep(small, "phi0"), rep(small, "phio")
        self.phimu, self.phic = rep(big, "phimu"), rep(big, "phic")
        self.h1 = head(2 * small + big, "identity", "h1")
        self.h0 = head(2 * small + big, "identity", "h0")
        self.hmu = head(2 * big, "sigmoid", "hmu")

    def components(self) -> dict[str, MLP]:
        return {k: getattr(self, k) for k in self.REPS + self.HEADS}

    def rep_parameters(self):
        return [p for k in self.REPS for p in getattr(self, k).parameters()]

    def head_parameters(self, heads=("h1", "h0")):
        return [p for k in heads for p in getattr(self, k).parameters()]

    def parameters(self):
        return self.rep_parameters() + self.head_parameters(self.HEADS)

    def features(self, x: np.ndarray) -> dict[str, np.ndarray]:
        """Head inputs computed without a tape."""
        r = {k: getattr(self, k).predict(x) for k in self.REPS}
        return {"h1": np.concatenate([r["phi1"], r["phio"], r["phic"]], axis=1),
                "h0": np.concatenate([r["phi0"], r["phio"], r["phic"]], axis=1),
                "hmu": np.concatenate([r["phimu"], r["phic"]], axis=1)}

    def forward(self, tape: Tape, x: np.ndarray, a: np.ndarray) -> tuple[Node, Node, Node, Node]:
        """Returns ``(factual prediction, y1 head, y0 head, propensity)``."""
        xn = tape.constant(x)
        r = {k: getattr(self, k).forward(tape, xn) for k in self.REPS}
        y1 = self.h1.forward(tape, concat([r["phi1"], r["phio"], r["phic"]]))
        y0 = self.h0.forward(tape, concat([r["phi0"], r["phio"], r["phic"]]))
        mu = self.hmu.forward(tape, concat([r["phimu"], r["phic"]]))
        a = col(a)
        return a * y1 + (1 - a) * y0, y1, y0, mu

    def predict(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        f = self.features(x)
        return self.h1.predict(f["h1"]), self.h0.predict(f["h0"]), self.hmu.predict(f["hmu"])

    def copy(self) -> "SNet":
        import copy
        return copy.deepcopy(self)


def snet_forward(net: SNet, x: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Factual prediction ``a*h1 + (1-a)*h0`` and propensity, untaped."""
    y1, y0, mu = net.predict(x)
    a = col(a)
    return a * y1 + (1 - a) * y0, mu


class SNetModel(CateModel):
    kind = "snet"

    def __init__(self, net: SNet):
        super().__init__()
        self.net = net

    def _predict(self, x):
        y1, y0, _ = self.net.predict(x)
        return y1 - y0


def factual_mse(net: SNet, ds: Dataset) -> float:
    yhat, _ = snet_forward(net, ds.x, ds.a)
    return float(np.mean((yhat.ravel() - ds.y) ** 2))


def train_snet(train: Dataset, val: Dataset, arch: SNetArch = SNetArch(),
               cfg: TrainerConfig = TrainerConfig(), seed: int = 0,
               bce_weight: float = 1.0) -> SNetModel:
    """Joint factual-MSE + propensity-BCE training; early stop on validation factual MSE."""
    for ds, what in ((train, "train"), (val, "validation")):
        for arm in (0, 1):
            if not np.any(ds.a == arm):
                raise ValueError(f"train_snet ({what}): no rows with action {arm}")
    rng = np.random.default_rng(seed)
    net = SNet(train.d, arch, rng)
    y = col(train.y)

    def batch_loss(tape: Tape, idx: np.ndarray) -> Node:
        yhat, _, _, mu = net.forward(tape, train.x[idx], train.a[idx])
        loss = ((yhat - y[idx]) ** 2).mean()
        if bce_weight:
            loss = loss + bce_weight * bce_node(mu, train.a[idx])
        return loss

    res: FitResult = fit(net.parameters(), batch_loss, lambda: factual_mse(net, val), train.n, cfg, rng)
    model = SNetModel(net)
    model.fit_info = {"fit": res}
    model.trained = True
    return model


__all__ = ["ipw_weights", "dr_target", "ipw_target", "transformed_outcome", "TransformedTarget",
           "cate_mse", "CateModel", "TNetModel", "DirectModel", "SNetModel", "SNet", "SNetArch",
           "snet_forward", "train_tnet", "train_drnet", "train_snet", "predict_cate",
           "factual_mse", "DRTargets", "fit_regressor"]
