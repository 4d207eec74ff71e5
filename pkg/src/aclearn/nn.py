"""Multilayer perceptrons, He initialization, Adam, and parameter checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ArgumentError, DimensionError, ParseError

ACTIVATIONS = ("relu", "tanh", "identity")
CHECKPOINT_FORMAT = "aclearn-parameters"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpConfig:
    widths: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 3:
            raise ArgumentError(f"an MLP needs at least one hidden layer, got widths {self.widths}")
        if min(self.widths) < 1:
            raise ArgumentError(f"all layer widths must be >= 1, got {self.widths}")
        for kind in (self.hidden_activation, self.output_activation):
            if kind not in ACTIVATIONS:
                raise ArgumentError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")

    @property
    def d_in(self) -> int:
        return self.widths[0]

    @property
    def d_out(self) -> int:
        return self.widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    def to_dict(self) -> dict:
        return {
            "widths": list(self.widths),
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
        }


@dataclass
class Parameters:
    """Weights ``(fan_in, fan_out)`` and biases ``(fan_out,)`` per layer."""

    config: MlpConfig
    weights: list[Tensor]
    biases: list[Tensor]

    def __post_init__(self):
        if len(self.weights) != self.config.n_layers or len(self.biases) != self.config.n_layers:
            raise DimensionError("layer count does not match the MLP config")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.config.widths[i], self.config.widths[i + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise DimensionError(
                    f"layer {i}: expected weight {shape} and bias ({shape[1]},), "
                    f"got {w.shape} and {b.shape}"
                )

    def tensors(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def arrays(self) -> list[np.ndarray]:
        return [t.data for t in self.tensors()]

    @classmethod
    def from_arrays(cls, config: MlpConfig, arrays: Sequence[np.ndarray], requires_grad: bool = True):
        arrays = list(arrays)
        if len(arrays) != 2 * config.n_layers:
            raise DimensionError(f"expected {2 * config.n_layers} arrays, got {len(arrays)}")
        return cls(
            config,
            [Tensor(a, requires_grad=requires_grad) for a in arrays[0::2]],
            [Tensor(a, requires_grad=requires_grad) for a in arrays[1::2]],
        )

    def fresh(self) -> Parameters:
        """Same values as new leaves with clean gradients, ready for a new record."""
        return Parameters.from_arrays(self.config, self.arrays(), requires_grad=True)

    def constant(self) -> Parameters:
        """Same values as constants; gradients will not flow into them."""
        return Parameters.from_arrays(self.config, self.arrays(), requires_grad=False)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.reshape(-1) for a in self.arrays()])

    def count(self) -> int:
        return sum(a.size for a in self.arrays())


def init_params(config: MlpConfig, rng: np.random.Generator) -> Parameters:
    """He-normal weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(config.widths[:-1], config.widths[1:]):
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        weights.append(Tensor(w, requires_grad=True))
        biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
    return Parameters(config, weights, biases)


def _activate(z: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return ad.relu(z)
    if kind == "tanh":
        return ad.tanh(z)
    return z


def _check_input(params: Parameters, x: Tensor) -> Tensor:
    x = ad.as_tensor(x)
    if x.ndim != 2 or x.shape[1] != params.config.d_in:
        raise DimensionError(
            f"MLP expects input of shape (batch, {params.config.d_in}), got {x.shape}"
        )
    return x


def mlp_forward(params: Parameters, x: Tensor) -> Tensor:
    h = _check_input(params, x)
    last = params.config.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = ad.add_bias(ad.matmul(h, w), b)
        h = _activate(h, params.config.output_activation if i == last else params.config.hidden_activation)
    return h


def mlp_input_gradient(params: Parameters, x: Tensor) -> Tensor:
    """Gradient of a scalar-output MLP with respect to each input row.

    The backward recursion is written out with ordinary graph operations, so
    the result is itself differentiable with respect to the parameters. For
    relu layers the activation derivative is a constant mask.
    """
    if params.config.d_out != 1:
        raise DimensionError("input gradients are defined for scalar-output networks only")
    h = _check_input(params, x).detach()
    cfg = params.config
    pre_acts = []
    for w, b in zip(params.weights, params.biases):
        z = ad.add_bias(ad.matmul(h, w), b)
        pre_acts.append(z)
        h = _activate(z, cfg.hidden_activation)

    batch = x.shape[0]
    g = Tensor(np.ones((batch, 1)))
    for i in reversed(range(cfg.n_layers)):
        kind = cfg.output_activation if i == cfg.n_layers - 1 else cfg.hidden_activation
        z = pre_acts[i]
        if kind == "relu":
            g = ad.mul(g, Tensor((z.data > 0).astype(np.float64)))
        elif kind == "tanh":
            t = ad.tanh(z)
            g = ad.mul(g, ad.sub(Tensor(np.ones(z.shape)), ad.square(t)))
        g = ad.matmul(g, ad.transpose(params.weights[i]))
    return g


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Parameters, lr: float = 1e-4, beta1: float = 0.0,
                   beta2: float = 0.9, eps: float = 1e-8) -> AdamState:
        arrays = params.arrays()
        return cls(lr, beta1, beta2, eps, 0,
                   [np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def adam_step(state: AdamState, params: Parameters, grads: Sequence[np.ndarray],
              weight_decay: float = 0.0) -> tuple[Parameters, AdamState]:
    """One bias-corrected Adam update with decoupled L2 decay.

    Inputs are left untouched; new parameter leaves and a new state are returned.
    """
    arrays = params.arrays()
    grads = list(grads)
    if len(grads) != len(arrays):
        raise DimensionError(f"expected {len(arrays)} gradient arrays, got {len(grads)}")
    for a, g in zip(arrays, grads):
        if np.shape(g) != a.shape:
            raise DimensionError(f"gradient shape {np.shape(g)} does not match parameter {a.shape}")
    if state.m and len(state.m) != len(arrays):
        raise DimensionError("optimizer state does not match the parameter list")

    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    m_prev = state.m or [np.zeros_like(a) for a in arrays]
    v_prev = state.v or [np.zeros_like(a) for a in arrays]
    new_arrays, new_m, new_v = [], [], []
    for a, g, m, v in zip(arrays, grads, m_prev, v_prev):
        g = np.asarray(g, dtype=np.float64)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        update = m_hat / (np.sqrt(v_hat) + state.eps)
        if weight_decay:
            update = update + weight_decay * a
        new_arrays.append(a - state.lr * update)
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(state.lr, b1, b2, state.eps, t, new_m, new_v)
    return Parameters.from_arrays(params.config, new_arrays), new_state


def gradients_of(params: Parameters, leaf_grads: dict) -> list[np.ndarray]:
    """Order a backward() result like ``params.tensors()``; missing leaves get zeros."""
    return [np.asarray(leaf_grads.get(t, np.zeros(t.shape))) for t in params.tensors()]


# checkpoint files ---------------------------------------------------------

def params_to_dict(params: Parameters) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": params.config.to_dict(),
        "arrays": [{"shape": list(a.shape), "data": a.reshape(-1).tolist()} for a in params.arrays()],
    }


def params_from_dict(record: dict) -> Parameters:
    if record.get("format") != CHECKPOINT_FORMAT:
        raise ParseError(f"not a parameter checkpoint (format={record.get('format')!r})")
    if record.get("version") != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {record.get('version')!r}")
    cfg = record["config"]
    config = MlpConfig(tuple(cfg["widths"]), cfg["hidden_activation"], cfg["output_activation"])
    arrays = [np.asarray(item["data"], dtype=np.float64).reshape(item["shape"]) for item in record["arrays"]]
    return Parameters.from_arrays(config, arrays)


def save_params(path, params: Parameters) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params)) + "\n")


def load_params(path) -> Parameters:
    try:
        record = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"checkpoint {path} is not valid JSON: {exc.msg}", exc.lineno) from exc
    return params_from_dict(record)
