"""Adversarial min-max training against a propensity ambiguity set.

The effect model (theta) minimizes and the propensity (mu) maximizes::

    J = L(theta; mu) - beta * mean(w_mu**2)
        - alpha_k * max(0, E(mu) - c) - lambda_k * max(0, E(mu) - c)**2

where ``E`` is the binary cross-entropy of mu and ``c`` the tolerance fixed
by the pretrained propensity. ``alpha_k`` and ``lambda_k`` follow an
augmented-Lagrangian schedule updated once per epoch.

NuDRNet uses ``L = mean((z_mu - tau_theta(x))**2)`` with the DR
pseudo-outcome recomputed from the current mu. NuSNet freezes a pretrained
SNet's extractors and tunes its heads on the self-normalized weighted
factual risk.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .estimators import (DRTargets, DirectModel, SNetModel, cate_mse, col, drnet_val_criterion,
                         ipw_weights)
from .nn import MLP, OptimizerState, get_flat
from .nuisance import NuisanceTriple, SeparatedArch, bce_node, evidence_from_probs
from .tensor import NonFiniteError, Node, Tape, relu
from .training import EarlyStopper, TrainerConfig, minibatches

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LagrangianState:
    alpha: float = 1.0
    lam: float = 1.0
    gamma: float = 2.0
    rho: float = 0.9
    g: float | None = None
    escalation: str = "ratio"

    def __post_init__(self):
        if self.alpha < 0 or self.lam <= 0:
            raise ValueError("need alpha >= 0 and lambda > 0")
        if self.gamma <= 1:
            raise ValueError("escalation factor gamma must exceed 1")
        if not 0 < self.rho < 1:
            raise ValueError("improvement factor rho must lie in (0, 1)")
        if self.escalation not in ("ratio", "literal"):
            raise ValueError(f"unknown escalation rule {self.escalation!r}")


def constraint_violation(evid: float, c: float) -> float:
    return max(0.0, float(evid) - float(c))


def lagrangian_update(state: LagrangianState, evid: float, c: float) -> LagrangianState:
    """One epoch of the multiplier schedule.

    ``alpha += lambda * g``; ``lambda *= gamma`` when the violation did not
    shrink by at least the factor ``rho``. With ``escalation="literal"`` the
    test is ``g_k < c * g_{k-1}`` instead, with ``c`` the tolerance.
    """
    g = constraint_violation(evid, c)
    alpha = state.alpha + state.lam * g
    lam = state.lam
    if state.g is not None:
        if state.escalation == "ratio":
            escalate = g > state.rho * state.g
        else:
            escalate = g < c * state.g
        if escalate and g > 0:
            lam = state.gamma * lam
    return replace(state, alpha=alpha, lam=lam, g=g)


@dataclass(frozen=True)
class RobustConfig:
    alpha0: float = 10.0
    gamma: float = 1.5
    beta: float = 100.0
    lam0: float = 1.0
    rho: float = 0.9
    escalation: str = "ratio"
    lr_mu: float | None = None
    step_mode: str = "simultaneous"
    trainer: TrainerConfig = field(default_factory=lambda: TrainerConfig(min_epochs=40))

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.step_mode not in ("simultaneous", "alternating"):
            raise ValueError(f"unknown step mode {self.step_mode!r}")

    @property
    def eta_mu(self) -> float:
        return self.trainer.lr if self.lr_mu is None else self.lr_mu

    def initial_state(self) -> LagrangianState:
        return LagrangianState(self.alpha0, self.lam0, self.gamma, self.rho, None, self.escalation)

    def grid_point(self) -> dict:
        return {"alpha0": self.alpha0, "gamma": self.gamma, "beta": self.beta}


def penalty_terms(mu: Node, a: np.ndarray, state: LagrangianState, beta: float, c: float
                  ) -> tuple[Node, dict]:
    """``beta*mean(w**2) + alpha*g + lambda*g**2`` on the tape (to be subtracted from the risk)."""
    w = ipw_weights(mu, col(a))
    w2 = (w ** 2).mean()
    evid = bce_node(mu, a)
    g = relu(evid - c)
    pen = beta * w2 + state.alpha * g + state.lam * g ** 2
    return pen, {"w2": float(w2.value), "evidence": float(evid.value), "g": float(g.value)}


def adversarial_objective(tape: Tape, tau: MLP, mu: MLP, x: np.ndarray, targets: DRTargets,
                          idx: np.ndarray, state: LagrangianState, beta: float, c: float
                          ) -> tuple[Node, dict]:
    """NuDRNet objective on one minibatch; the DR target is rebuilt from the current ``mu``."""
    xn = tape.constant(x)
    mu_out = mu.forward(tape, xn)
    z = targets.z(mu_out, idx)
    risk = cate_mse(tau.forward(tape, xn), z)
    pen, parts = penalty_terms(mu_out, targets.a[idx], state, beta, c)
    parts["risk"] = float(risk.value)
    return risk - pen, parts


def weighted_factual_risk(yhat, y, w):
    """Self-normalized weighted squared error ``sum(w*(y-yhat)**2) / sum(w)``."""
    return (w * (y - yhat) ** 2).sum() / w.sum()


def _step(tape_fn, theta_params, mu_params, opt_t, opt_m, mode):
    if mode == "simultaneous":
        tape = Tape()
        loss, parts = tape_fn(tape)
        grads = tape.backward(loss, theta_params + mu_params)
        opt_t.step(grads[:len(theta_params)])
        opt_m.step(grads[len(theta_params):])
        return parts
    tape = Tape()
    loss, parts = tape_fn(tape)
    opt_t.step(tape.backward(loss, theta_params))
    tape = Tape()
    loss, _ = tape_fn(tape)
    opt_m.step(tape.backward(loss, mu_params))
    return parts


def _adversarial_loop(theta_params, mu_params, batch_fn, epoch_stats, val_score, n_train,
                      cfg: RobustConfig, c: float, rng, trajectory=None, initial_val=None):
    tc = cfg.trainer
    opt_t = OptimizerState(theta_params, kind=tc.optimizer, lr=tc.lr)
    opt_m = OptimizerState(mu_params, kind=tc.optimizer, lr=cfg.eta_mu, direction="maximize")
    stopper = EarlyStopper(theta_params, tc.patience, tc.min_epochs, initial_val)
    state = cfg.initial_state()
    hist = {k: [] for k in ("val", "evidence_train", "g", "alpha", "lam", "w2_train")}
    diverged = False
    for epoch in range(tc.max_epochs):
        try:
            for idx in minibatches(n_train, tc.batch_size, rng):
                _step(lambda tape: batch_fn(tape, idx, state), theta_params, mu_params,
                      opt_t, opt_m, cfg.step_mode)
            evid, w2 = epoch_stats()
            val = val_score()
        except NonFiniteError as exc:
            log.warning("adversarial training diverged at epoch %d: %s", epoch, exc)
            diverged = True
            break
        if not (np.isfinite(val) and np.isfinite(evid)):
            diverged = True
            break
        state = lagrangian_update(state, evid, c)
        for k, v in (("val", val), ("evidence_train", evid), ("g", state.g), ("alpha", state.alpha),
                     ("lam", state.lam), ("w2_train", w2)):
            hist[k].append(float(v))
        if trajectory is not None:
            trajectory.append(get_flat(theta_params))
        if stopper.update(val):
            break
    res = stopper.finish(diverged)
    return res, hist, state


def train_nudrnet(train: Dataset, val: Dataset, nuisance: NuisanceTriple,
                  arch: SeparatedArch = SeparatedArch(), cfg: RobustConfig = RobustConfig(),
                  seed: int = 0, c: float | None = None, record_trajectory: bool = False
                  ) -> DirectModel:
    """Nuisance-robust DR network.

    mu starts at the pretrained propensity and theta at random. Model
    selection uses the validation MSE against the DR target built from the
    *pretrained* propensity; the best-so-far theta is returned.
    """
    rng = np.random.default_rng(seed)
    tau = arch.build(train.d, "identity", rng, "tau")
    mu = nuisance.mu0.copy()
    mu.name = "mu_adv"
    c = nuisance.c if c is None else float(c)
    tr, va = DRTargets.build(train, nuisance), DRTargets.build(val, nuisance)
    z_val = va.z(nuisance.mu0.predict(val.x))
    theta_params, mu_params = tau.parameters(), mu.parameters()

    def batch_fn(tape, idx, state):
        return adversarial_objective(tape, tau, mu, train.x[idx], tr, idx, state, cfg.beta, c)

    def epoch_stats():
        p = mu.predict(train.x)
        return evidence_from_probs(p, train.a), float(np.mean(ipw_weights(p, tr.a) ** 2))

    trajectory = [] if record_trajectory else None
    res, hist, state = _adversarial_loop(
        theta_params, mu_params, batch_fn, epoch_stats,
        lambda: drnet_val_criterion(tau, val.x, z_val), train.n, cfg, c, rng, trajectory)
    model = DirectModel(tau)
    model.trained = True
    model.fit_info = {"fit": res, "history": hist, "state": state, "mu_adv": mu, "c": c,
                      "config": cfg, "trajectory": trajectory}
    return model


def tune_nusnet(pretrained: SNetModel, train: Dataset, val: Dataset,
                cfg: RobustConfig = RobustConfig(), seed: int = 0, c: float | None = None
                ) -> SNetModel:
    """Adversarially tune the heads of a pretrained SNet; extractors stay frozen.

    ``h1, h0`` minimize and ``h_mu`` maximizes the self-normalized weighted
    factual risk minus the usual penalties. Validation criterion: factual MSE,
    with the untouched pretrained heads kept as a candidate.
    """
    net = pretrained.net.copy()
    rng = np.random.default_rng(seed)
    ftr, fva = net.features(train.x), net.features(val.x)
    y_tr, a_tr = col(train.y), col(train.a)
    if c is None:
        c = evidence_from_probs(net.hmu.predict(fva["hmu"]), val.a)
    theta_params = net.head_parameters(("h1", "h0"))
    mu_params = net.head_parameters(("hmu",))

    def batch_fn(tape, idx, state):
        a = a_tr[idx]
        y1 = net.h1.forward(tape, tape.constant(ftr["h1"][idx]))
        y0 = net.h0.forward(tape, tape.constant(ftr["h0"][idx]))
        mu = net.hmu.forward(tape, tape.constant(ftr["hmu"][idx]))
        yhat = a * y1 + (1 - a) * y0
        risk = weighted_factual_risk(yhat, y_tr[idx], ipw_weights(mu, a))
        pen, parts = penalty_terms(mu, train.a[idx], state, cfg.beta, c)
        parts["risk"] = float(risk.value)
        return risk - pen, parts

    def epoch_stats():
        p = net.hmu.predict(ftr["hmu"])
        return evidence_from_probs(p, train.a), float(np.mean(ipw_weights(p, a_tr) ** 2))

    def val_score():
        a = col(val.a)
        yhat = a * net.h1.predict(fva["h1"]) + (1 - a) * net.h0.predict(fva["h0"])
        return float(np.mean((yhat.ravel() - val.y) ** 2))

    pretrained_val = val_score()
    res, hist, state = _adversarial_loop(theta_params, mu_params, batch_fn, epoch_stats, val_score,
                                         train.n, cfg, c, rng, initial_val=pretrained_val)
    model = SNetModel(net)
    model.trained = True
    model.fit_info = {"fit": res, "history": hist, "state": state, "c": c, "config": cfg,
                      "pretrained_val": pretrained_val}
    return model


__all__ = ["LagrangianState", "RobustConfig", "lagrangian_update", "constraint_violation",
           "adversarial_objective", "penalty_terms", "weighted_factual_risk", "train_nudrnet",
           "tune_nusnet"]
