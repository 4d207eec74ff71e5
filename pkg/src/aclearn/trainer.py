"""Alternating critic/predictor training for the four learning modes.

Which data sources each mode consumes:

======  ==============  =============  ==================
mode    labeled (x, y)  inputs (x,)    simulator (, y)
======  ==============  =============  ==================
SL      yes
ECL                     yes            (explicit constraint)
ACL                     yes            yes
SSACL   yes             yes            yes
======  ==============  =============  ==================

The predictor is applied to every frame of an input window independently and
its outputs are concatenated into one trajectory row for the critic.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ArgumentError, ConfigurationError, DimensionError
from .nn import AdamState, MlpConfig, Parameters, adam_step, gradients_of, init_params, mlp_forward
from .objectives import (
    LossValue,
    critic_objective,
    critic_scores,
    generator_objective,
    gradient_penalty,
    semi_supervised_loss,
    supervised_loss,
)

log = logging.getLogger(__name__)

MODES = ("SL", "ECL", "ACL", "SSACL")
LOSS_COLUMNS = ("loss_sup", "loss_critic", "loss_gen", "loss_gp")

Simulator = Callable[[np.random.Generator, int], np.ndarray]
Constraint = Callable[[Tensor], LossValue]


@dataclass
class TrainConfig:
    mode: str = "ACL"
    alpha: float = 10.0
    critic_steps: int = 5
    gp_weight: float = 10.0
    steps: int = 1000
    batch_size: int = 32
    weight_decay: float = 0.0
    seed: int = 0
    eval_interval: int = 100
    lr: float = 1e-4
    critic_lr: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    eps: float = 1e-8

    def __post_init__(self):
        self.mode = str(self.mode).upper()
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.alpha < 0:
            raise ConfigurationError("alpha must be >= 0")
        if self.critic_steps < 1:
            raise ConfigurationError("critic_steps must be >= 1")
        if self.gp_weight < 0:
            raise ConfigurationError("gp_weight must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.steps < 0 or self.eval_interval < 1:
            raise ConfigurationError("steps must be >= 0 and eval_interval >= 1")
        if self.weight_decay < 0 or self.lr < 0 or self.critic_lr < 0:
            raise ConfigurationError("learning rates and weight decay must be >= 0")


@dataclass(frozen=True)
class CriticHead:
    """A critic that sees ``columns`` of each trajectory row (all columns when None).

    Several heads let different label sources constrain different parts of
    the output, each with its own simulator stream.
    """

    name: str
    config: MlpConfig
    columns: tuple[int, ...] | None = None


def as_heads(critics) -> tuple[CriticHead, ...]:
    if critics is None:
        return ()
    if isinstance(critics, MlpConfig):
        return (CriticHead("critic", critics),)
    heads = tuple(critics)
    if len({h.name for h in heads}) != len(heads):
        raise ConfigurationError("critic head names must be unique")
    for h in heads:
        width = h.config.d_in if h.columns is None else len(h.columns)
        if width != h.config.d_in or h.config.d_out != 1:
            raise ConfigurationError(f"critic {h.name!r}: input width must match its columns and output 1 score")
    return heads


@dataclass
class TrainState:
    predictor: Parameters
    predictor_opt: AdamState
    critics: dict
    critic_opts: dict
    rng: np.random.Generator
    heads: tuple = ()
    step: int = 0
    losses: dict = field(default_factory=dict)
    critic_trace: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    metric_names: list = field(default_factory=list)

    @property
    def critic(self) -> Parameters | None:
        """The first (usually only) critic."""
        return self.critics[self.heads[0].name] if self.heads else None

    @property
    def critic_opt(self) -> AdamState | None:
        return self.critic_opts[self.heads[0].name] if self.heads else None


def init_state(config: TrainConfig, predictor_config: MlpConfig, critics=None) -> TrainState:
    """Seeded initial state; ``critics`` is an MlpConfig, a list of CriticHead, or None."""
    rng = np.random.default_rng(config.seed)
    heads = as_heads(critics)
    adam = dict(beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    predictor = init_params(predictor_config, rng)
    params = {h.name: init_params(h.config, rng) for h in heads}
    return TrainState(
        predictor=predictor,
        predictor_opt=AdamState.for_params(predictor, lr=config.lr, **adam),
        critics=params,
        critic_opts={name: AdamState.for_params(p, lr=config.critic_lr, **adam) for name, p in params.items()},
        rng=rng,
        heads=heads,
    )


# data sources --------------------------------------------------------------

@dataclass
class LabeledSet:
    x: np.ndarray  # (N, d_in)
    y: np.ndarray  # (N, d_out)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.ndim != 2 or self.y.ndim != 2 or len(self.x) != len(self.y):
            raise DimensionError(f"labeled inputs {self.x.shape} and targets {self.y.shape} do not pair up")

    def __len__(self) -> int:
        return len(self.x)

    def batch(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        idx = rng.integers(0, len(self), size=size)
        return self.x[idx], self.y[idx]


@dataclass
class UnlabeledPool:
    """Frames plus index windows of consecutive frames, shape (windows, n)."""

    frames: np.ndarray
    windows: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.windows = np.asarray(self.windows, dtype=np.intp)
        if self.windows.ndim == 1:
            self.windows = self.windows[:, None]
        if self.frames.ndim != 2 or self.windows.ndim != 2:
            raise DimensionError("frames must be (F, d) and windows (N, n)")
        if self.windows.size and (self.windows.min() < 0 or self.windows.max() >= len(self.frames)):
            raise DimensionError("window indices fall outside the frame array")

    def __len__(self) -> int:
        return len(self.windows)

    def batch(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.integers(0, len(self), size=size)
        return self.frames[self.windows[idx]]


@dataclass
class Datasets:
    labeled: LabeledSet | None = None
    unlabeled: UnlabeledPool | None = None


# steps ---------------------------------------------------------------------

def predict_trajectories(params: Parameters, windows) -> Tensor:
    """Apply the predictor per frame; (b, n, d_in) windows -> (b, n * d_out)."""
    arr = windows.data if isinstance(windows, Tensor) else np.asarray(windows, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, None, :]
    if arr.ndim != 3:
        raise DimensionError(f"input windows must be (batch, n, d_in), got {arr.shape}")
    b, n, d = arr.shape
    if d != params.config.d_in:
        raise DimensionError(f"predictor expects {params.config.d_in} input features, windows have {d}")
    out = mlp_forward(params, Tensor(arr.reshape(b * n, d)))
    return ad.reshape(out, (b, n * params.config.d_out))


def _require_mode(config: TrainConfig, allowed: Sequence[str], op: str) -> None:
    if config.mode not in allowed:
        raise ConfigurationError(f"{op} is not used in mode {config.mode} (allowed: {', '.join(allowed)})")


def _update_predictor(state: TrainState, config: TrainConfig, grads: list[np.ndarray]) -> None:
    state.predictor, state.predictor_opt = adam_step(
        state.predictor_opt, state.predictor, grads, weight_decay=config.weight_decay
    )


def _head_real(simulated, head: CriticHead, n_heads: int) -> np.ndarray:
    if isinstance(simulated, dict):
        if head.name not in simulated:
            raise ConfigurationError(f"simulator produced no samples for critic {head.name!r}")
        return np.asarray(simulated[head.name], dtype=np.float64)
    if n_heads > 1:
        raise ConfigurationError("several critics need a simulator that returns one batch per critic")
    return np.asarray(simulated, dtype=np.float64)


def _head_fake(fake, head: CriticHead):
    if head.columns is None:
        return fake
    if isinstance(fake, Tensor):
        return ad.take_cols(fake, head.columns)
    return fake[:, list(head.columns)]


def critic_updates(state: TrainState, config: TrainConfig, fake: np.ndarray, simulated) -> None:
    """``critic_steps`` Adam steps per critic, maximising its objective minus the penalty."""
    if not state.heads:
        raise ConfigurationError("this mode needs a critic network")
    total_obj = total_gp = 0.0
    for head in state.heads:
        real = _head_real(simulated, head, len(state.heads))
        fake_h = _head_fake(fake, head)
        if fake_h.shape[1] != head.config.d_in:
            raise DimensionError(
                f"critic {head.name!r} expects width {head.config.d_in}, predictions give {fake_h.shape[1]}"
            )
        if fake_h.shape != real.shape:
            raise DimensionError(
                f"predicted trajectories {fake_h.shape} and simulator batch {real.shape} differ"
            )
        trace = []
        for _ in range(config.critic_steps):
            critic = state.critics[head.name].fresh()
            obj = critic_objective(critic_scores(critic, real), critic_scores(critic, fake_h))
            gp = gradient_penalty(critic, real, fake_h, config.gp_weight, state.rng)
            loss = ad.add(ad.scale(obj.tensor, -1.0), gp.tensor)
            grads = gradients_of(critic, ad.backward(loss))
            state.critics[head.name], state.critic_opts[head.name] = adam_step(
                state.critic_opts[head.name], state.critics[head.name], grads
            )
            trace.append((obj.value, gp.value))
        state.critic_trace[head.name] = trace
        total_obj += trace[-1][0]
        total_gp += trace[-1][1]
    state.losses["loss_critic"], state.losses["loss_gp"] = total_obj, total_gp


def adversarial_loss(state: TrainState, traj: Tensor) -> LossValue:
    """Predictor-side adversarial term summed over critics (critics held fixed)."""
    total = None
    for head in state.heads:
        scores = critic_scores(state.critics[head.name].constant(), _head_fake(traj, head))
        gen = generator_objective(scores).tensor
        total = gen if total is None else ad.add(total, gen)
    return LossValue.of(total)


def predictor_objective(state: TrainState, config: TrainConfig, unlabeled=None, labeled=None,
                        alpha: float | None = None, constraint: Constraint | None = None):
    """Build the predictor loss on fresh leaves; returns (leaves, loss, parts).

    ``parts`` maps loss names to their scalar values for logging.
    """
    params = state.predictor.fresh()
    parts = {}
    total = None
    if unlabeled is not None:
        traj = predict_trajectories(params, unlabeled)
        if constraint is not None:
            h = constraint(traj)
            parts["loss_constraint"] = h.value
            total = h
        else:
            gen = adversarial_loss(state, traj)
            parts["loss_gen"] = gen.value
            total = gen
    if labeled is not None:
        x, y = labeled
        sup = supervised_loss(mlp_forward(params, Tensor(x)), Tensor(y))
        parts["loss_sup"] = sup.value
        if total is None:
            total = sup
        else:
            total = semi_supervised_loss(total, sup, config.alpha if alpha is None else alpha)
    if total is None:
        raise ArgumentError("predictor objective needs unlabeled or labeled data")
    return params, total, parts


def predictor_gradients(state: TrainState, config: TrainConfig, **kwargs) -> list[np.ndarray]:
    params, total, _ = predictor_objective(state, config, **kwargs)
    return gradients_of(params, ad.backward(total.tensor))


def _predictor_step(state: TrainState, config: TrainConfig, **kwargs) -> None:
    params, total, parts = predictor_objective(state, config, **kwargs)
    grads = gradients_of(params, ad.backward(total.tensor))
    _update_predictor(state, config, grads)
    state.losses.update(parts)


def _check_labeled(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size == 0 or y.size == 0 or len(x) == 0:
        raise ArgumentError("labeled batch is empty")
    if len(x) != len(y):
        raise DimensionError(f"labeled inputs ({len(x)}) and targets ({len(y)}) differ in count")
    return x, y


def supervised_step(state: TrainState, config: TrainConfig, x, y) -> TrainState:
    _require_mode(config, ("SL", "SSACL"), "supervised_step")
    _predictor_step(state, config, labeled=_check_labeled(x, y))
    state.step += 1
    return state


def acl_step(state: TrainState, config: TrainConfig, unlabeled, simulated) -> TrainState:
    _require_mode(config, ("ACL", "SSACL"), "acl_step")
    fake = predict_trajectories(state.predictor.constant(), unlabeled).data
    critic_updates(state, config, fake, simulated)
    _predictor_step(state, config, unlabeled=unlabeled)
    state.step += 1
    return state


def ssacl_step(state: TrainState, config: TrainConfig, unlabeled, simulated, labeled) -> TrainState:
    _require_mode(config, ("SSACL",), "ssacl_step")
    if labeled is None or len(labeled[0]) == 0:
        if config.alpha > 0:
            raise ConfigurationError("SSACL with alpha > 0 needs a non-empty labeled batch")
        return acl_step(state, TrainConfig(**{**config.__dict__, "mode": "ACL"}), unlabeled, simulated)
    labeled = _check_labeled(*labeled)
    fake = predict_trajectories(state.predictor.constant(), unlabeled).data
    critic_updates(state, config, fake, simulated)
    _predictor_step(state, config, unlabeled=unlabeled, labeled=labeled)
    state.step += 1
    return state


def ecl_step(state: TrainState, config: TrainConfig, unlabeled, constraint: Constraint | None) -> TrainState:
    _require_mode(config, ("ECL",), "ecl_step")
    if constraint is None:
        raise ConfigurationError("ECL mode needs an explicit constraint function")
    _predictor_step(state, config, unlabeled=unlabeled, constraint=constraint)
    state.step += 1
    return state


# full runs -----------------------------------------------------------------

_NEEDS = {
    "SL": ("labeled",),
    "ECL": ("unlabeled", "constraint"),
    "ACL": ("unlabeled", "simulator"),
    "SSACL": ("labeled", "unlabeled", "simulator"),
}


def check_sources(mode: str, datasets: Datasets, simulator, constraint) -> None:
    """Raise for missing sources and warn about supplied sources the mode ignores."""
    present = {
        "labeled": datasets.labeled is not None and len(datasets.labeled) > 0,
        "unlabeled": datasets.unlabeled is not None and len(datasets.unlabeled) > 0,
        "simulator": simulator is not None,
        "constraint": constraint is not None,
    }
    needed = _NEEDS[mode]
    missing = [name for name in needed if not present[name]]
    if missing:
        raise ConfigurationError(f"mode {mode} needs data source(s) missing here: {', '.join(missing)}")
    for name, there in present.items():
        if there and name not in needed:
            log.warning("mode %s ignores the supplied %s source", mode, name)


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    return repr(float(value))


def history_header(metric_names: Sequence[str]) -> list[str]:
    return ["step", *LOSS_COLUMNS, *metric_names]


def history_csv(state: TrainState, metric_names: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(history_header(metric_names))
    for row in state.history:
        writer.writerow([row["step"], *(_fmt(row.get(c)) for c in LOSS_COLUMNS),
                         *(_fmt(row.get(m)) for m in metric_names)])
    return buf.getvalue()


def run(config: TrainConfig, datasets: Datasets, simulator: Simulator | None = None, *,
        predictor_config: MlpConfig, critic_config=None,
        constraint: Constraint | None = None,
        evaluator: Callable[[Parameters], dict] | None = None,
        metric_names: Sequence[str] = (), history_path=None) -> TrainState:
    """Train for ``config.steps`` steps, recording losses and metrics every ``eval_interval``."""
    check_sources(config.mode, datasets, simulator, constraint)
    mode = config.mode
    needs_critic = mode in ("ACL", "SSACL")
    if needs_critic and critic_config is None:
        raise ConfigurationError(f"mode {mode} needs a critic architecture")
    state = init_state(config, predictor_config, critic_config if needs_critic else None)
    metric_names = list(metric_names)
    if mode == "ECL" and "loss_constraint" not in metric_names:
        metric_names.insert(0, "loss_constraint")
    b = config.batch_size

    for _ in range(config.steps):
        rng = state.rng
        if mode == "SL":
            supervised_step(state, config, *datasets.labeled.batch(rng, b))
        elif mode == "ECL":
            ecl_step(state, config, datasets.unlabeled.batch(rng, b), constraint)
        elif mode == "ACL":
            unlabeled = datasets.unlabeled.batch(rng, b)
            acl_step(state, config, unlabeled, simulator(rng, b))
        else:
            unlabeled = datasets.unlabeled.batch(rng, b)
            simulated = simulator(rng, b)
            ssacl_step(state, config, unlabeled, simulated, datasets.labeled.batch(rng, b))
        if state.step % config.eval_interval == 0 or state.step == config.steps:
            row = {"step": state.step, **state.losses}
            if evaluator is not None:
                row.update(evaluator(state.predictor))
            state.history.append(row)
            log.debug("step %d %s", state.step, row)

    if history_path is not None:
        Path(history_path).write_text(history_csv(state, metric_names))
    state.metric_names = metric_names
    return state
