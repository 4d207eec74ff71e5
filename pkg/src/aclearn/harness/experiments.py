"""Build datasets for each experiment, train, evaluate, and write result files.

Output directory layout::

    config.ini         resolved configuration
    history.csv        losses and test metrics every eval_interval steps
    report.csv         experiment,split,mode,labeled,metric,target,value
    predictor.json     predictor checkpoint
    critic-<name>.json one checkpoint per critic (adversarial modes)
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..autodiff import Tensor
from ..errors import AclError, ConfigurationError
from ..metrics import bounding_box, mae, pck_hits, pearson_correlation
from ..nn import MlpConfig, Parameters, mlp_forward, save_params
from ..objectives import handcrafted_pendulum_constraint
from ..simulators import (
    CANVAS,
    HUMIDITY_CHANNELS,
    JOINT_NAMES,
    TEMPERATURE_CHANNELS,
    HarmonicOscillatorSpec,
    TimeSeriesGroup,
    TrapezoidSkeletonSpec,
    sample_pendulum_batch,
    sample_skeleton_batch,
    sample_timeseries_heads,
    temperature_columns,
)
from ..trainer import CriticHead, Datasets, LabeledSet, TrainState, UnlabeledPool, history_csv, run
from .config import ExperimentConfig, config_to_ini
from .data import (
    frame_windows,
    group_spans,
    make_windows,
    pendulum_dataset,
    read_timeseries_csv,
    skeleton_dataset,
    split_groups,
    synthetic_timeseries,
)

log = logging.getLogger(__name__)

REPORT_HEADER = ("experiment", "split", "mode", "labeled", "metric", "target", "value")

# skeleton labels are trained in a centred, roughly unit-scale frame
SKELETON_OFFSET = (CANVAS - 1) / 2.0
SKELETON_SCALE = 8.0


@dataclass
class Prepared:
    """Everything the trainer and the evaluator need for one run."""

    datasets: Datasets
    predictor: MlpConfig
    critics: object = None
    simulator: Callable | None = None
    constraint: Callable | None = None
    evaluate: Callable[[Parameters], list] = None  # -> [(metric, target, value)]
    history_metrics: tuple[str, ...] = ()
    labeled: int = 0
    extras: list = field(default_factory=list)  # fixed (metric, target, value) rows


def _only_needed(mode: str, labeled, unlabeled) -> Datasets:
    return Datasets(
        labeled=labeled if mode in ("SL", "SSACL") else None,
        unlabeled=unlabeled if mode != "SL" else None,
    )


def _labeled_from_groups(groups, scale=lambda y: y) -> LabeledSet | None:
    if not groups:
        return None
    return LabeledSet(np.concatenate([g.inputs for g in groups]),
                      scale(np.concatenate([g.labels for g in groups])))


def prepare_pendulum(cfg: ExperimentConfig) -> Prepared:
    d, mode = cfg.data, cfg.train.mode
    dataset = pendulum_dataset(d.clips, d.clip_length, d.max_angle, cfg.data_seed)
    train, test = split_groups(dataset, d.n_test, cfg.seed)
    frames, windows = frame_windows(train.groups, d.window)
    labeled = _labeled_from_groups(train.groups[:d.labeled_groups])
    test_x = np.concatenate([g.inputs for g in test.groups])
    test_y = np.concatenate([g.labels for g in test.groups])[:, 0]
    sim_spec = HarmonicOscillatorSpec(length=d.window)

    def evaluate(params):
        pred = mlp_forward(params, Tensor(test_x)).data[:, 0]
        rho = pearson_correlation(pred, test_y)
        # the label prior is symmetric under y -> -y, so an unsupervised fit
        # may recover the angle up to sign
        return [("pearson", "angle", rho), ("pearson_abs", "angle", abs(rho))]

    return Prepared(
        datasets=_only_needed(mode, labeled, UnlabeledPool(frames, windows)),
        predictor=MlpConfig((test_x.shape[1], *cfg.model.predictor_hidden, 1)),
        critics=MlpConfig((d.window, *cfg.model.critic_hidden, 1)),
        simulator=lambda rng, n: sample_pendulum_batch(sim_spec, rng, n),
        constraint=handcrafted_pendulum_constraint,
        evaluate=evaluate,
        history_metrics=("pearson_angle", "pearson_abs_angle"),
        labeled=d.labeled_groups if mode in ("SL", "SSACL") else 0,
        extras=[("frames", "train", float(len(frames))), ("frames", "test", float(len(test_x)))],
    )


def skeleton_to_pixels(y: np.ndarray) -> np.ndarray:
    return y * SKELETON_SCALE + SKELETON_OFFSET


def skeleton_to_labels(px: np.ndarray) -> np.ndarray:
    return (px - SKELETON_OFFSET) / SKELETON_SCALE


def prepare_skeleton(cfg: ExperimentConfig) -> Prepared:
    d, mode = cfg.data, cfg.train.mode
    if mode == "ECL":
        raise ConfigurationError("the skeleton experiment has no hand-crafted constraint; use ACL or SSACL")
    dataset = skeleton_dataset(d.groups, (d.frame_min, d.frame_max), cfg.data_seed)
    train, test = split_groups(dataset, d.n_test, cfg.seed)
    frames, windows = frame_windows(train.groups, d.window)
    labeled = _labeled_from_groups(train.groups[:d.labeled_groups], skeleton_to_labels)
    test_x = np.concatenate([g.inputs for g in test.groups])
    test_y = np.concatenate([g.labels for g in test.groups])
    # threshold: 0.1 * the larger side of the group's joint bounding box
    thresholds = np.concatenate([np.full(len(g), 0.1 * max(bounding_box(g.labels))) for g in test.groups])
    sim_spec = TrapezoidSkeletonSpec(n_frames=d.window)

    def evaluate(params):
        pred = skeleton_to_pixels(mlp_forward(params, Tensor(test_x)).data)
        per_joint = 100.0 * pck_hits(pred, test_y, thresholds).mean(axis=0)
        rows = [("pck", name, v) for name, v in zip(JOINT_NAMES, per_joint)]
        rows.append(("pck", "mean", float(per_joint.mean())))
        return rows

    return Prepared(
        datasets=_only_needed(mode, labeled, UnlabeledPool(frames, windows)),
        predictor=MlpConfig((test_x.shape[1], *cfg.model.predictor_hidden, 2 * len(JOINT_NAMES))),
        critics=MlpConfig((d.window * 2 * len(JOINT_NAMES), *cfg.model.critic_hidden, 1)),
        simulator=lambda rng, n: skeleton_to_labels(sample_skeleton_batch(sim_spec, rng, n)),
        evaluate=evaluate,
        history_metrics=("pck_mean",),
        labeled=d.labeled_groups if mode in ("SL", "SSACL") else 0,
        extras=[("threshold_px", "mean", float(thresholds.mean()))],
    )


def timeseries_groups(cfg: ExperimentConfig) -> tuple[list[TimeSeriesGroup], list[TimeSeriesGroup]]:
    """Random 28-hour spans: training spans before the test period, test spans inside it.

    A seeded ``incomplete_fraction`` of the training groups loses its humidity.
    """
    d = cfg.data
    if d.csv:
        times, values = read_timeseries_csv(d.csv)
    else:
        times, values = synthetic_timeseries(days=d.days, seed=cfg.data_seed)
    span = d.steps_per_group * d.bucket_hours * 3600.0
    split = times[-1] - d.test_days * 86400.0
    if split - span <= times[0] or times[-1] - span <= split:
        raise ConfigurationError("series too short for the requested test period and group span")
    rng = np.random.default_rng(cfg.seed)
    train_starts = rng.uniform(times[0], split - span, size=d.train_groups)
    test_starts = rng.uniform(split, times[-1] - span, size=d.n_test)
    train = group_spans(times, values, train_starts, d.steps_per_group, d.bucket_hours)
    test = group_spans(times, values, test_starts, d.steps_per_group, d.bucket_hours)
    drop = rng.permutation(len(train))[:int(round(d.incomplete_fraction * len(train)))]
    for i in drop:
        v = train[i].values.copy()
        v[:, HUMIDITY_CHANNELS] = np.nan
        train[i] = TimeSeriesGroup(v, complete=False)
    return train, test


def _windows(groups, t, k):
    pairs = [w for g in groups for w in make_windows(g.values, t, k)]
    return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])


def prepare_timeseries(cfg: ExperimentConfig) -> Prepared:
    d, mode = cfg.data, cfg.train.mode
    if mode == "ECL":
        raise ConfigurationError("the time-series experiment has no hand-crafted constraint; use ACL or SSACL")
    train, test = timeseries_groups(cfg)
    complete = [g for g in train if g.complete]
    if not complete:
        raise ConfigurationError("no complete training groups")
    test = [g for g in test if g.complete]
    if not test:
        raise ConfigurationError("no complete test groups")
    stacked = np.concatenate([g.values for g in complete])
    mu, sd = stacked.mean(axis=0), stacked.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    norm = [TimeSeriesGroup((g.values - mu) / sd, g.complete) for g in train]
    # the predictor needs all four channels as input, so only complete groups
    # give windows; incomplete groups reach training through the simulator
    x, y = _windows([g for g in norm if g.complete], d.t, d.k)
    test_x, test_y = _windows([TimeSeriesGroup((g.values - mu) / sd) for g in test], d.t, d.k)
    m = len(mu)
    t_cols = list(TEMPERATURE_CHANNELS)
    h_cols = list(HUMIDITY_CHANNELS)

    def evaluate(params):
        pred = mlp_forward(params, Tensor(test_x)).data.reshape(-1, d.k, m) * sd + mu
        true = test_y.reshape(-1, d.k, m) * sd + mu
        return [("mae", "temperature", mae(pred[..., t_cols], true[..., t_cols])),
                ("mae", "humidity", mae(pred[..., h_cols], true[..., h_cols]))]

    heads = [
        CriticHead("temperature", MlpConfig((2 * d.k, *cfg.model.critic_hidden, 1)), temperature_columns(d.k)),
        CriticHead("joint", MlpConfig((m * d.k, *cfg.model.critic_hidden, 1))),
    ]
    labeled = LabeledSet(x, y)
    n_labeled = len(complete) if mode in ("SL", "SSACL") else 0
    return Prepared(
        datasets=_only_needed(mode, labeled, UnlabeledPool(x, np.arange(len(x)))),
        predictor=MlpConfig((d.t * m, *cfg.model.predictor_hidden, d.k * m)),
        critics=heads,
        simulator=lambda rng, n: sample_timeseries_heads(norm, rng, n, d.k),
        evaluate=evaluate,
        history_metrics=("mae_temperature", "mae_humidity"),
        labeled=n_labeled,
        extras=[
            ("groups", "complete", float(len(complete))),
            ("groups", "incomplete", float(len(train) - len(complete))),
            ("windows", "supervised", float(len(x) if n_labeled else 0)),
            ("windows", "complete", float(len(x))),
            ("windows", "test", float(len(test_x))),
        ],
    )


PREPARERS = {"pendulum": prepare_pendulum, "skeleton": prepare_skeleton, "timeseries": prepare_timeseries}


def prepare(cfg: ExperimentConfig) -> Prepared:
    cfg.validate()
    try:
        return PREPARERS[cfg.experiment](cfg)
    except AclError as exc:
        raise type(exc)(f"{cfg.experiment}: {exc}") from exc


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    state: TrainState
    rows: list  # report rows as tuples matching REPORT_HEADER


def report_rows(cfg: ExperimentConfig, prepared: Prepared, params: Parameters) -> list[tuple]:
    base = (cfg.experiment, cfg.seed, cfg.train.mode, prepared.labeled)
    return [(*base, metric, target, float(value))
            for metric, target, value in [*prepared.evaluate(params), *prepared.extras]]


def report_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for row in rows:
        writer.writerow([*row[:-1], repr(float(row[-1]))])
    return buf.getvalue()


def _history_evaluator(prepared: Prepared):
    def evaluator(params):
        return {f"{metric}_{target}": value for metric, target, value in prepared.evaluate(params)}
    return evaluator


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Train one configuration, evaluate on its test groups, and write the output files."""
    prepared = prepare(cfg)
    try:
        state = run(
            cfg.train, prepared.datasets, prepared.simulator if cfg.train.mode in ("ACL", "SSACL") else None,
            predictor_config=prepared.predictor,
            critic_config=prepared.critics,
            constraint=prepared.constraint if cfg.train.mode == "ECL" else None,
            evaluator=_history_evaluator(prepared),
            metric_names=prepared.history_metrics,
        )
    except AclError as exc:
        raise type(exc)(f"{cfg.experiment} ({cfg.train.mode}): {exc}") from exc
    rows = report_rows(cfg, prepared, state.predictor)
    if write:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(config_to_ini(cfg))
        (out / "history.csv").write_text(history_csv(state, state.metric_names))
        (out / "report.csv").write_text(report_csv(rows))
        save_params(out / "predictor.json", state.predictor)
        for name, params in state.critics.items():
            save_params(out / f"critic-{name}.json", params)
    return ExperimentResult(cfg, state, rows)


def evaluate_checkpoint(cfg: ExperimentConfig, params: Parameters) -> list[tuple]:
    prepared = prepare(cfg)
    if params.config != prepared.predictor:
        raise ConfigurationError(
            f"checkpoint architecture {params.config.widths} does not match the config {prepared.predictor.widths}"
        )
    return report_rows(cfg, prepared, params)
