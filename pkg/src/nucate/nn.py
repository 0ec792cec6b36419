"""MLPs, first-order optimizers and finite-difference gradient checks."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .tensor import ACTIVATIONS, PROB_EPS, NonFiniteError, Node, Parameter, Tape, clamp


class MLP:
    """Feed-forward net ``widths[0] -> ... -> widths[-1]``.

    Hidden layers use ``activation``; the last layer uses ``out_activation``.
    Sigmoid outputs are clamped to ``[PROB_EPS, 1 - PROB_EPS]`` so that logs
    and reciprocals downstream stay finite.
    """

    def __init__(self, widths: Sequence[int], activation: str = "elu",
                 out_activation: str = "identity", rng: np.random.Generator | None = None,
                 name: str = "mlp"):
        if len(widths) < 2 or any(int(w) < 1 for w in widths):
            raise ValueError(f"invalid layer widths {widths}")
        for act in (activation, out_activation):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        self.widths = [int(w) for w in widths]
        self.activation = activation
        self.out_activation = out_activation
        self.name = name
        rng = np.random.default_rng(0) if rng is None else rng
        self.layers: list[tuple[Parameter, Parameter]] = []
        for i, (fan_in, fan_out) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            W = Parameter(rng.uniform(-limit, limit, size=(fan_in, fan_out)), f"{name}.W{i}")
            b = Parameter(np.zeros((1, fan_out)), f"{name}.b{i}")
            self.layers.append((W, b))

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer]

    def _act(self, i: int) -> str:
        return self.out_activation if i == len(self.layers) - 1 else self.activation

    def _check_input(self, cols: int):
        if cols != self.in_dim:
            raise ValueError(f"{self.name}: expected {self.in_dim} input columns, got {cols}")

    def forward(self, tape: Tape, x: Node) -> Node:
        self._check_input(x.shape[1])
        h = x
        for i, (W, b) in enumerate(self.layers):
            h = h @ tape.param(W) + tape.param(b)
            act = self._act(i)
            h = ACTIVATIONS[act][1](h)
            if act == "sigmoid":
                h = clamp(h, PROB_EPS, 1.0 - PROB_EPS)
        return h

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Untaped forward pass, bitwise equal to :meth:`forward`."""
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x.shape[1])
        h = x
        for i, (W, b) in enumerate(self.layers):
            h = h @ W.value + b.value
            act = self._act(i)
            h = ACTIVATIONS[act][0](h)
            if act == "sigmoid":
                h = np.clip(h, PROB_EPS, 1.0 - PROB_EPS)
        if not np.all(np.isfinite(h)):
            raise NonFiniteError(f"{self.name}: non-finite output")
        return h

    def copy(self) -> "MLP":
        return copy.deepcopy(self)

    def architecture(self) -> dict:
        return {"widths": self.widths, "activation": self.activation,
                "out_activation": self.out_activation, "name": self.name}

    def __repr__(self) -> str:
        return f"MLP({self.name}, {self.widths}, {self.activation}->{self.out_activation})"


def forward_eval(model: MLP, batch: np.ndarray) -> tuple[Node, Tape]:
    tape = Tape()
    return model.forward(tape, tape.constant(batch)), tape


def get_flat(params: Iterable[Parameter]) -> np.ndarray:
    return np.concatenate([p.value.ravel() for p in params])


def set_flat(params: Sequence[Parameter], flat: np.ndarray) -> None:
    i = 0
    for p in params:
        k = p.value.size
        p.value = flat[i:i + k].reshape(p.shape).copy()
        i += k
    if i != flat.size:
        raise ValueError(f"flat vector has {flat.size} entries, parameters need {i}")


# checkpoints --------------------------------------------------------------

def save_models(models: dict[str, MLP], prefix: str | Path, meta: dict | None = None) -> None:
    """Write ``<prefix>.json`` (architectures + offsets) and ``<prefix>.npy`` (flat float64)."""
    prefix = Path(prefix)
    entries, chunks, offset = [], [], 0
    for key, m in models.items():
        flat = get_flat(m.parameters())
        entries.append({"key": key, **m.architecture(), "offset": offset, "size": int(flat.size)})
        chunks.append(flat)
        offset += flat.size
    prefix.with_suffix(".json").write_text(json.dumps({"models": entries, "meta": meta or {}}, indent=2))
    np.save(prefix.with_suffix(".npy"), np.concatenate(chunks) if chunks else np.zeros(0))


def load_models(prefix: str | Path) -> tuple[dict[str, MLP], dict]:
    prefix = Path(prefix)
    doc = json.loads(prefix.with_suffix(".json").read_text())
    flat = np.load(prefix.with_suffix(".npy"))
    out = {}
    for e in doc["models"]:
        m = MLP(e["widths"], e["activation"], e["out_activation"], name=e["name"])
        set_flat(m.parameters(), flat[e["offset"]:e["offset"] + e["size"]])
        out[e["key"]] = m
    return out, doc.get("meta", {})


# optimizers ---------------------------------------------------------------

@dataclass
class OptimizerState:
    """SGD or Adam over a fixed parameter list.

    ``direction="maximize"`` applies the negated gradient, which turns the
    optimizer into the ascent player of a min-max game.
    """

    params: list[Parameter]
    kind: str = "adam"
    lr: float = 1e-3
    direction: str = "minimize"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.direction not in ("minimize", "maximize"):
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.params = list(self.params)
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameters")
        for p, g in zip(self.params, grads):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for {p.name}")
        if self.lr == 0:
            return
        sign = -1.0 if self.direction == "maximize" else 1.0
        self.step_count += 1
        if self.kind == "sgd":
            for p, g in zip(self.params, grads):
                p.value = p.value - self.lr * (sign * g)
            return
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        b1, b2 = self.beta1, self.beta2
        for m, v, p, g in zip(self.m, self.v, self.params, grads):
            if sign < 0:
                g = -g
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            denom = np.sqrt(v / c2)
            denom += self.eps
            p.value = p.value - (self.lr / c1) * m / denom


def optimizer_step(state: OptimizerState, grads: Sequence[np.ndarray]) -> list[Parameter]:
    state.step(grads)
    return state.params


# gradient checking ---------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    max_abs_error: float
    n_checked: int
    worst: str

    def ok(self, tol: float) -> bool:
        return self.max_rel_error < tol


def grad_check(params: Sequence[Parameter], loss_fn: Callable[[Tape], Node],
               step: float = 1e-5, atol: float = 1e-6,
               max_entries: int | None = None, rng: np.random.Generator | None = None
               ) -> GradCheckReport:
    """Compare autodiff gradients of ``loss_fn`` with central differences.

    ``loss_fn`` builds the loss on the tape it is given and must be
    deterministic. Relative error is ``|ga - gn| / max(|ga|, |gn|, atol)``.
    ``max_entries`` subsamples coordinates per parameter for big nets.
    """
    tape = Tape()
    analytic = tape.backward(loss_fn(tape), params)

    def value() -> float:
        return float(loss_fn(Tape()).value)

    worst_rel, worst_abs, worst, count = 0.0, 0.0, "", 0
    for p, ga in zip(params, analytic):
        p.value = np.ascontiguousarray(p.value)
        flat = p.value.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            rng = rng or np.random.default_rng(0)
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for j in idx:
            orig = flat[j]
            flat[j] = orig + step
            up = value()
            flat[j] = orig - step
            down = value()
            flat[j] = orig
            gn = (up - down) / (2.0 * step)
            a = ga.reshape(-1)[j]
            err = abs(a - gn)
            rel = err / max(abs(a), abs(gn), atol)
            count += 1
            if rel > worst_rel:
                worst_rel, worst = rel, f"{p.name}[{j}]"
            worst_abs = max(worst_abs, err)
    return GradCheckReport(worst_rel, worst_abs, count, worst)
