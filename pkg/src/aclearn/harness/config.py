"""Experiment configuration and its INI file format.

A config file has up to four sections. Every key is optional; missing keys
take the experiment's defaults from :func:`default_config`.

.. code-block:: ini

    [experiment]
    name = skeleton          ; pendulum | skeleton | timeseries
    seed = 3                 ; split + training seed
    data_seed = 7            ; dataset generation seed
    out = runs/skeleton-3

    [train]                  ; any TrainConfig field
    mode = SSACL
    steps = 800

    [data]
    labeled_groups = 1
    n_test = 7

    [model]
    predictor_hidden = 128, 128
    critic_hidden = 64, 64, 64
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..errors import ConfigurationError, ParseError
from ..trainer import TrainConfig

EXPERIMENTS = ("pendulum", "skeleton", "timeseries")


@dataclass
class DataConfig:
    labeled_groups: int = 0      # i: groups whose labels the predictor may see
    n_test: int = 5              # held-out groups
    window: int = 5              # frames per trajectory (pendulum, skeleton)
    # pendulum
    clips: int = 30
    clip_length: int = 20
    max_angle: float = 0.6
    # skeleton
    groups: int = 35
    frame_min: int = 14
    frame_max: int = 17
    # timeseries
    csv: str = ""                # empty: generate the synthetic series
    train_groups: int = 48
    incomplete_fraction: float = 0.25
    t: int = 5
    k: int = 2
    steps_per_group: int = 7
    bucket_hours: float = 4.0
    days: int = 40
    test_days: float = 8.0


@dataclass
class ModelConfig:
    predictor_hidden: tuple[int, ...] = (64, 64)
    critic_hidden: tuple[int, ...] = (64, 64, 64)


@dataclass
class ExperimentConfig:
    experiment: str = "pendulum"
    seed: int = 0
    data_seed: int = 0
    out: str = "runs/out"
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def validate(self) -> ExperimentConfig:
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        d = self.data
        n_groups = {"pendulum": d.clips, "skeleton": d.groups}.get(self.experiment)
        if n_groups is not None:
            if not 0 < d.n_test < n_groups:
                raise ConfigurationError(f"n_test must be between 1 and {n_groups - 1}, got {d.n_test}")
            if not 0 <= d.labeled_groups <= n_groups - d.n_test:
                raise ConfigurationError(
                    f"labeled_groups = {d.labeled_groups} exceeds the {n_groups - d.n_test} training groups"
                )
            shortest = d.clip_length if self.experiment == "pendulum" else d.frame_min
            if not 1 <= d.window <= shortest:
                raise ConfigurationError(f"window {d.window} does not fit groups of {shortest} frames")
        else:
            if d.t + d.k > d.steps_per_group:
                raise ConfigurationError(f"t + k = {d.t + d.k} exceeds the group length {d.steps_per_group}")
            if not 0.0 <= d.incomplete_fraction < 1.0:
                raise ConfigurationError("incomplete_fraction must be in [0, 1)")
            if d.labeled_groups > d.train_groups:
                raise ConfigurationError("labeled_groups exceeds train_groups")
        if self.train.mode in ("SL", "SSACL") and self.experiment != "timeseries" and d.labeled_groups == 0:
            raise ConfigurationError(f"mode {self.train.mode} needs labeled_groups >= 1")
        return self


def default_config(experiment: str) -> ExperimentConfig:
    """Desk-scale defaults for each experiment."""
    if experiment == "pendulum":
        return ExperimentConfig(
            experiment, out="runs/pendulum",
            train=TrainConfig(mode="ACL", steps=600, eval_interval=100),
            data=DataConfig(labeled_groups=0, n_test=5),
            model=ModelConfig((64, 64), (64, 64, 64)),
        )
    if experiment == "skeleton":
        return ExperimentConfig(
            experiment, data_seed=7, out="runs/skeleton",
            train=TrainConfig(mode="SSACL", steps=800, eval_interval=200),
            data=DataConfig(labeled_groups=1, n_test=7),
            model=ModelConfig((128, 128), (64, 64, 64)),
        )
    if experiment == "timeseries":
        return ExperimentConfig(
            experiment, out="runs/timeseries",
            train=TrainConfig(mode="SSACL", steps=2000, eval_interval=500),
            data=DataConfig(labeled_groups=0, n_test=120),
            model=ModelConfig((64, 64, 64), (64, 64, 64)),
        )
    raise ConfigurationError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")


# INI reading and writing -----------------------------------------------------

def _convert(raw: str, current, key: str, section: str):
    try:
        if isinstance(current, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(int(part) for part in raw.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigurationError(f"[{section}] {key}: cannot read {raw!r} ({exc})") from exc
    return raw.strip()


def _apply(obj, section: str, items: dict[str, str]):
    known = {f.name: getattr(obj, f.name) for f in fields(obj)}
    updates = {}
    for key, raw in items.items():
        if key not in known:
            raise ConfigurationError(f"[{section}] unknown key {key!r}")
        updates[key] = _convert(raw, known[key], key, section)
    return replace(obj, **updates)


_EXPERIMENT_KEYS = {"name": "experiment", "seed": "seed", "data_seed": "data_seed", "out": "out"}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ParseError(f"{source}: {exc.message.strip()}", getattr(exc, "lineno", None)) from exc
    extra = set(parser.sections()) - {"experiment", "train", "data", "model"}
    if extra:
        raise ConfigurationError(f"unknown section(s): {', '.join(sorted(extra))}")
    exp = dict(parser["experiment"]) if parser.has_section("experiment") else {}
    unknown = set(exp) - set(_EXPERIMENT_KEYS)
    if unknown:
        raise ConfigurationError(f"[experiment] unknown key(s): {', '.join(sorted(unknown))}")
    cfg = default_config(exp.get("name", "pendulum").strip())
    for key in ("seed", "data_seed"):
        if key in exp:
            setattr(cfg, key, _convert(exp[key], 0, key, "experiment"))
    if "out" in exp:
        cfg.out = exp["out"].strip()
    for name in ("train", "data", "model"):
        if parser.has_section(name):
            setattr(cfg, name, _apply(getattr(cfg, name), name, dict(parser[name])))
    cfg.train.seed = cfg.seed
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} does not exist")
    return parse_config(path.read_text(), str(path))


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_ini(cfg: ExperimentConfig) -> str:
    lines = ["[experiment]", f"name = {cfg.experiment}", f"seed = {cfg.seed}",
             f"data_seed = {cfg.data_seed}", f"out = {cfg.out}"]
    for name in ("train", "data", "model"):
        lines += ["", f"[{name}]"]
        obj = getattr(cfg, name)
        for f in fields(obj):
            if name == "train" and f.name == "seed":
                continue
            lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def with_overrides(cfg: ExperimentConfig, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    """Apply command-line ``--seed`` / ``--out``."""
    cfg = replace(cfg, train=replace(cfg.train), data=replace(cfg.data), model=replace(cfg.model))
    if seed is not None:
        cfg.seed = seed
        cfg.train.seed = seed
    if out is not None:
        cfg.out = out
    return cfg.validate()


def apply_settings(text: str, settings) -> str:
    """Apply ``section.key=value`` overrides to config text; returns new text."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ParseError(exc.message.strip(), getattr(exc, "lineno", None)) from exc
    for item in settings:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigurationError(f"expected section.key=value, got {item!r}")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, name, value.strip())
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
