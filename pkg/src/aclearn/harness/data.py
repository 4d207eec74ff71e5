"""Grouped datasets, windowing, CSV ingestion, splits, and synthetic sources."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ArgumentError, ParseError
from ..simulators import (
    CHANNELS,
    HUMIDITY_CHANNELS,
    HarmonicOscillatorSpec,
    TimeSeriesGroup,
    TrapezoidSkeletonSpec,
    render_pendulum_frame,
    render_skeleton_frame,
    sample_pendulum_trajectory,
    skeleton_motion,
)

log = logging.getLogger(__name__)

TIMESERIES_HEADER = ("timestamp", *CHANNELS)


@dataclass
class Group:
    """One contiguous sequence: per-step inputs and optional per-step labels."""

    inputs: np.ndarray
    labels: np.ndarray | None = None
    complete: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim != 2:
            raise ArgumentError(f"group inputs must be (steps, d), got {self.inputs.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.float64)
            if self.labels.ndim != 2 or len(self.labels) != len(self.inputs):
                raise ArgumentError("labels must have one row per input step")

    def __len__(self) -> int:
        return len(self.inputs)


@dataclass
class GroupedDataset:
    groups: list[Group]

    def __len__(self) -> int:
        return len(self.groups)

    def __getitem__(self, i) -> Group:
        return self.groups[i]

    def subset(self, indices: Sequence[int]) -> GroupedDataset:
        return GroupedDataset([self.groups[i] for i in indices])


def make_windows(series, t: int = 5, k: int = 2) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stride-1 windows: flattened ``t`` input steps and the following ``k`` target steps."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    if t < 1 or k < 1:
        raise ArgumentError("t and k must be positive")
    if len(series) < t + k:
        raise ArgumentError(f"series of length {len(series)} is shorter than t + k = {t + k}")
    return [
        (series[s:s + t].reshape(-1).copy(), series[s + t:s + t + k].reshape(-1).copy())
        for s in range(len(series) - t - k + 1)
    ]


def split_groups(dataset: GroupedDataset, n_test: int, seed: int) -> tuple[GroupedDataset, GroupedDataset]:
    """Seeded permutation split at group granularity; returns (train, test)."""
    if not 0 <= n_test < len(dataset):
        raise ArgumentError(f"cannot hold out {n_test} of {len(dataset)} groups")
    perm = np.random.default_rng(seed).permutation(len(dataset))
    test_idx = sorted(perm[:n_test])
    train_idx = [int(i) for i in perm[n_test:]]
    return dataset.subset(train_idx), dataset.subset(test_idx)


def split_indices(n_groups: int, n_test: int, seed: int) -> tuple[list[int], list[int]]:
    if not 0 <= n_test < n_groups:
        raise ArgumentError(f"cannot hold out {n_test} of {n_groups} groups")
    perm = np.random.default_rng(seed).permutation(n_groups)
    return [int(i) for i in perm[n_test:]], sorted(int(i) for i in perm[:n_test])


# time-series CSV -------------------------------------------------------------

def _parse_time(text: str, line: int) -> float:
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    try:
        stamp = datetime.fromisoformat(text)
    except ValueError:
        raise ParseError(f"unreadable timestamp {text!r}", line) from None
    if stamp.tzinfo is None:  # naive stamps are read as UTC
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.timestamp()


def _parse_value(text: str, line: int, column: str, optional: bool) -> float:
    text = text.strip()
    if text == "":
        if optional:
            return math.nan
        raise ParseError(f"missing value in required column {column}", line)
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"non-numeric value {text!r} in column {column}", line) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value in column {column}", line)
    return value


def read_timeseries_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Timestamps in seconds and an (N, 4) value array; empty humidity cells become NaN."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or all(not r for r in rows):
        raise ArgumentError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if tuple(header) != TIMESERIES_HEADER:
        raise ParseError(f"expected header {','.join(TIMESERIES_HEADER)}, got {','.join(header)}", 1)
    times, values = [], []
    for line, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(TIMESERIES_HEADER):
            raise ParseError(f"expected {len(TIMESERIES_HEADER)} fields, got {len(row)}", line)
        times.append(_parse_time(row[0], line))
        values.append([
            _parse_value(cell, line, name, optional=j in HUMIDITY_CHANNELS)
            for j, (cell, name) in enumerate(zip(row[1:], CHANNELS))
        ])
    if not times:
        raise ArgumentError(f"{path} has a header but no data rows")
    times = np.asarray(times)
    if np.any(np.diff(times) <= 0):
        raise ParseError("timestamps must be strictly increasing")
    return times, np.asarray(values)


def smooth_group(times: np.ndarray, values: np.ndarray, start: float, steps: int = 7,
                 bucket_seconds: float = 4 * 3600.0) -> TimeSeriesGroup | None:
    """Average each bucket ``[start + i*b, start + (i+1)*b)``; None if a bucket is empty.

    The group is incomplete when any humidity reading inside the span is missing.
    """
    edges = start + bucket_seconds * np.arange(steps + 1)
    idx = np.searchsorted(times, edges, side="left")
    out = np.empty((steps, values.shape[1]))
    complete = True
    for i in range(steps):
        chunk = values[idx[i]:idx[i + 1]]
        if len(chunk) == 0:
            return None
        if np.isnan(chunk).any():
            complete = False
        with np.errstate(invalid="ignore"):
            out[i] = chunk.sum(axis=0) / len(chunk)
    if not complete:
        out[:, HUMIDITY_CHANNELS] = np.nan
    return TimeSeriesGroup(out, complete)


def group_spans(times, values, starts, steps: int = 7, bucket_hours: float = 4.0) -> list[TimeSeriesGroup]:
    groups = []
    for s in starts:
        g = smooth_group(times, values, float(s), steps, bucket_hours * 3600.0)
        if g is None:
            log.warning("skipping span starting at %s: a bucket has no readings", s)
            continue
        groups.append(g)
    return groups


def load_timeseries_csv(path, steps: int = 7, bucket_hours: float = 4.0,
                        stride_hours: float | None = None) -> GroupedDataset:
    """Consecutive spans of ``steps * bucket_hours`` hours, each smoothed to ``steps`` points."""
    times, values = read_timeseries_csv(path)
    span = steps * bucket_hours * 3600.0
    stride = span if stride_hours is None else stride_hours * 3600.0
    # a reading stands for the interval up to the next one, so the series
    # covers one sampling step past its last timestamp
    cadence = float(np.median(np.diff(times))) if len(times) > 1 else 0.0
    starts = np.arange(times[0], times[-1] + cadence - span + 1e-9, stride)
    return timeseries_dataset(group_spans(times, values, starts, steps, bucket_hours))


def timeseries_dataset(groups: Sequence[TimeSeriesGroup]) -> GroupedDataset:
    return GroupedDataset([Group(g.values, None, g.complete) for g in groups])


def write_timeseries_csv(path, times: np.ndarray, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TIMESERIES_HEADER)
        for t, row in zip(times, values):
            stamp = datetime.fromtimestamp(float(t), timezone.utc).replace(tzinfo=None).isoformat(sep=" ")
            writer.writerow([stamp, *("" if math.isnan(v) else repr(float(v)) for v in row)])


def synthetic_timeseries(days: int = 40, cadence_minutes: int = 15, seed: int = 0,
                         start: float = 1_331_596_800.0) -> tuple[np.ndarray, np.ndarray]:
    """Four coupled channels: daily temperature cycles, slow drifts, humidity tied to temperature."""
    rng = np.random.default_rng(seed)
    n = days * 24 * 60 // cadence_minutes
    hours = np.arange(n) * cadence_minutes / 60.0
    day = 2.0 * np.pi * hours / 24.0

    def drift(scale, smooth):
        out = np.empty(n)
        acc = 0.0
        for i, s in enumerate(rng.normal(0.0, scale, size=n)):
            acc = smooth * acc + s
            out[i] = acc
        return out

    weather = drift(0.05, 0.999)
    moisture = drift(0.05, 0.999)
    temp_out = 14.0 + 5.0 * np.sin(day - 2.0) + 3.0 * weather + rng.normal(0, 0.3, n)
    temp_in = 21.0 + 0.35 * (temp_out - 14.0) + 1.2 * np.sin(day - 2.6) + rng.normal(0, 0.2, n)
    hum_out = 65.0 - 2.5 * (temp_out - 14.0) + 3.0 * moisture + rng.normal(0, 0.5, n)
    hum_in = 45.0 + 0.3 * (hum_out - 65.0) - 0.8 * (temp_in - 21.0) + rng.normal(0, 0.3, n)
    values = np.stack([temp_in, temp_out, hum_in, hum_out], axis=1)
    return start + hours * 3600.0, values


# pendulum and skeleton renderings ---------------------------------------------

def pendulum_dataset(n_clips: int, clip_length: int, max_angle: float, seed: int,
                     spec: HarmonicOscillatorSpec | None = None) -> GroupedDataset:
    """Clips of rendered frames; labels are the normalized simulator values."""
    base = spec or HarmonicOscillatorSpec()
    clip_spec = HarmonicOscillatorSpec(base.amplitude, base.period_min, base.period_max, clip_length)
    rng = np.random.default_rng(seed)
    groups = []
    for _ in range(n_clips):
        y = sample_pendulum_trajectory(clip_spec, rng)
        angles = max_angle * y[:, 0] / clip_spec.amplitude
        frames = np.stack([render_pendulum_frame(a).reshape(-1) for a in angles])
        groups.append(Group(frames, y, meta={"angles": angles}))
    return GroupedDataset(groups)


def skeleton_dataset(n_groups: int, frame_range: tuple[int, int], seed: int,
                     spec: TrapezoidSkeletonSpec | None = None,
                     center_jitter: tuple[float, float] = (1.5, 1.0),
                     rate_range: tuple[float, float] = (0.07, 0.11),
                     start_max: float = 0.15) -> GroupedDataset:
    """Rendered jump-and-kick groups; labels are joint pixel coordinates (12 per frame).

    Each group has its own subject position offset, so the simulator's fixed
    centre is only approximately right for any one group.
    """
    spec = spec or TrapezoidSkeletonSpec()
    rng = np.random.default_rng(seed)
    groups = []
    for _ in range(n_groups):
        n = int(rng.integers(frame_range[0], frame_range[1] + 1))
        kick = rng.uniform(*spec.kick_angle_range)
        rate = rng.uniform(*rate_range)
        start = rng.uniform(0.0, start_max)
        center = (spec.center[0] + rng.uniform(-center_jitter[0], center_jitter[0]),
                  spec.center[1] + rng.uniform(-center_jitter[1], center_jitter[1]))
        joints = skeleton_motion(spec, n, start, rate, kick, center)
        frames = np.stack([render_skeleton_frame(j)[0].reshape(-1) for j in joints])
        groups.append(Group(frames, joints))
    return GroupedDataset(groups)


def frame_windows(groups: Sequence[Group], n: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack group frames and index every run of ``n`` consecutive frames within a group."""
    frames, windows, offset = [], [], 0
    for g in groups:
        frames.append(g.inputs)
        windows.extend([offset + s + j for j in range(n)] for s in range(len(g) - n + 1))
        offset += len(g)
    if not frames:
        raise ArgumentError("no groups to build windows from")
    return np.concatenate(frames), np.asarray(windows, dtype=np.intp).reshape(-1, n)
