"""Label simulators and synthetic frame renderers.

Simulators draw label trajectories from a prior and never look at inputs.
Renderers turn ground-truth labels into 32x32 grayscale frames so that
paired data can be manufactured for evaluation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArgumentError, ConfigurationError

CANVAS = 32
JOINT_NAMES = ("left_hip", "left_knee", "left_foot", "right_hip", "right_knee", "right_foot")
CHANNELS = ("temp_in", "temp_out", "hum_in", "hum_out")
TEMPERATURE_CHANNELS = (0, 1)
HUMIDITY_CHANNELS = (2, 3)

_rows, _cols = np.mgrid[0:CANVAS, 0:CANVAS].astype(np.float64)


# pendulum -----------------------------------------------------------------

@dataclass(frozen=True)
class HarmonicOscillatorSpec:
    amplitude: float = 1.0
    period_min: float = 10.0
    period_max: float = 14.0
    length: int = 5

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ArgumentError("amplitude must be positive")
        if self.period_min > self.period_max or self.period_min <= 0:
            raise ArgumentError(f"invalid period range [{self.period_min}, {self.period_max}]")
        if self.length < 2:
            raise ArgumentError("trajectory length must be at least 2")


def oscillator(amplitude: float, period: float, phase: float, n: int) -> np.ndarray:
    t = np.arange(n, dtype=np.float64)
    return amplitude * np.sin(2.0 * np.pi * t / period + phase)


def sample_pendulum_trajectory(spec: HarmonicOscillatorSpec, rng: np.random.Generator) -> np.ndarray:
    """One (n, 1) trajectory with random period and phase."""
    period = rng.uniform(spec.period_min, spec.period_max)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    return oscillator(spec.amplitude, period, phase, spec.length)[:, None]


def sample_pendulum_batch(spec: HarmonicOscillatorSpec, rng: np.random.Generator, size: int,
                          return_params: bool = False):
    """``size`` trajectories as rows of a (size, n) array."""
    periods = rng.uniform(spec.period_min, spec.period_max, size=size)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=size)
    t = np.arange(spec.length, dtype=np.float64)
    out = spec.amplitude * np.sin(2.0 * np.pi * t[None, :] / periods[:, None] + phases[:, None])
    if return_params:
        return out, periods, phases
    return out


PIVOT = (2.0, (CANVAS - 1) / 2.0)  # (row, col)
ROD_LENGTH = 20.0
BALL_RADIUS = 3.0


def _disk(cy: float, cx: float, radius: float) -> np.ndarray:
    dist = np.sqrt((_rows - cy) ** 2 + (_cols - cx) ** 2)
    return np.clip(radius + 0.5 - dist, 0.0, 1.0)


def pendulum_ball_position(angle: float) -> tuple[float, float]:
    """(row, col) of the ball centre; positive angles swing to the right."""
    return PIVOT[0] + ROD_LENGTH * math.cos(angle), PIVOT[1] + ROD_LENGTH * math.sin(angle)


def render_pendulum_frame(angle: float) -> np.ndarray:
    """Anti-aliased ball at the rod end plus a one-pixel pivot at the top."""
    if not math.isfinite(angle):
        raise ArgumentError("angle must be finite")
    cy, cx = pendulum_ball_position(angle)
    img = _disk(cy, cx, BALL_RADIUS)
    r, c = int(PIVOT[0]), int(PIVOT[1])
    img[r, c] = img[r, c + 1] = 1.0
    return img


# skeleton -----------------------------------------------------------------

@dataclass(frozen=True)
class TrapezoidSkeletonSpec:
    hip_width: float = 6.0
    leg_length: float = 16.0
    kick_angle_range: tuple[float, float] = (math.radians(25.0), math.radians(45.0))
    expansion_rate_range: tuple[float, float] = (0.06, 0.14)
    n_frames: int = 5
    center: tuple[float, float] = ((CANVAS - 1) / 2.0, 7.0)  # (x, hip y)
    noise: float = 0.5
    joints: int = 6

    def __post_init__(self):
        if self.joints != 6:
            raise ArgumentError("the trapezoid skeleton has exactly 6 joints")
        if self.hip_width <= 0 or self.leg_length <= 0:
            raise ArgumentError("hip width and leg length must be positive")
        lo, hi = self.kick_angle_range
        if not 0 <= lo <= hi < math.pi / 2:
            raise ArgumentError("kick angles must satisfy 0 <= lo <= hi < pi/2")
        lo, hi = self.expansion_rate_range
        if not 0 <= lo <= hi:
            raise ArgumentError("expansion rates must satisfy 0 <= lo <= hi")
        if self.n_frames < 1 or self.noise < 0:
            raise ArgumentError("need n_frames >= 1 and noise >= 0")


def skeleton_pose(spec: TrapezoidSkeletonSpec, phase: float, kick_angle: float,
                  center: tuple[float, float] | None = None) -> np.ndarray:
    """Noise-free joints (12 reals, x/y per joint) for one expansion phase in [0, 1]."""
    cx, hip_y = spec.center if center is None else center
    a = float(np.clip(phase, 0.0, 1.0)) * kick_angle
    half = spec.hip_width / 2.0
    dx, dy = math.sin(a), math.cos(a)
    out = np.empty(12)
    for side, sign in ((0, -1.0), (1, 1.0)):
        hip_x = cx + sign * half
        joints = (
            (hip_x, hip_y),
            (hip_x + sign * 0.5 * spec.leg_length * dx, hip_y + 0.5 * spec.leg_length * dy),
            (hip_x + sign * spec.leg_length * dx, hip_y + spec.leg_length * dy),
        )
        for j, (x, y) in enumerate(joints):
            out[6 * side + 2 * j] = x
            out[6 * side + 2 * j + 1] = y
    return out


def skeleton_motion(spec: TrapezoidSkeletonSpec, n: int, start: float, rate: float, kick_angle: float,
                    center: tuple[float, float] | None = None) -> np.ndarray:
    """(n, 12) noise-free poses with phase ``start + rate * t`` clipped to [0, 1]."""
    phases = np.clip(start + rate * np.arange(n), 0.0, 1.0)
    return np.stack([skeleton_pose(spec, p, kick_angle, center) for p in phases])


def sample_skeleton_trajectory(spec: TrapezoidSkeletonSpec, rng: np.random.Generator,
                               noise: bool = True) -> np.ndarray:
    """(n, 12) trajectory of an expanding isosceles trapezoid."""
    kick = rng.uniform(*spec.kick_angle_range)
    rate = rng.uniform(*spec.expansion_rate_range)
    start = rng.uniform(0.0, 1.0)
    traj = skeleton_motion(spec, spec.n_frames, start, rate, kick)
    if noise and spec.noise > 0:
        traj = traj + rng.normal(0.0, spec.noise, size=traj.shape)
    return traj


def sample_skeleton_batch(spec: TrapezoidSkeletonSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` flattened trajectories as rows of a (size, n * 12) array."""
    kicks = rng.uniform(*spec.kick_angle_range, size=size)
    rates = rng.uniform(*spec.expansion_rate_range, size=size)
    starts = rng.uniform(0.0, 1.0, size=size)
    a = np.clip(starts[:, None] + rates[:, None] * np.arange(spec.n_frames), 0.0, 1.0) * kicks[:, None]
    cx, hip_y = spec.center
    half, leg = spec.hip_width / 2.0, spec.leg_length
    dx, dy = np.sin(a), np.cos(a)
    out = np.empty((size, spec.n_frames, 12))
    for side, sign in ((0, -1.0), (1, 1.0)):
        hip_x = cx + sign * half
        base = 6 * side
        out[:, :, base + 0] = hip_x
        out[:, :, base + 1] = hip_y
        out[:, :, base + 2] = hip_x + sign * 0.5 * leg * dx
        out[:, :, base + 3] = hip_y + 0.5 * leg * dy
        out[:, :, base + 4] = hip_x + sign * leg * dx
        out[:, :, base + 5] = hip_y + leg * dy
    if spec.noise > 0:
        out = out + rng.normal(0.0, spec.noise, size=out.shape)
    return out.reshape(size, -1)


def _segment(y0: float, x0: float, y1: float, x1: float, width: float) -> np.ndarray:
    vy, vx = y1 - y0, x1 - x0
    length2 = vy * vy + vx * vx
    if length2 == 0:
        s = np.zeros_like(_rows)
    else:
        s = np.clip(((_rows - y0) * vy + (_cols - x0) * vx) / length2, 0.0, 1.0)
    dist = np.sqrt((_rows - (y0 + s * vy)) ** 2 + (_cols - (x0 + s * vx)) ** 2)
    return np.clip(width + 0.5 - dist, 0.0, 1.0)


JOINT_RADIUS = 1.5
LIMB_INTENSITY = 0.35


def render_skeleton_frame(joints: Sequence[float]) -> tuple[np.ndarray, bool]:
    """Joint disks joined by hip-knee-foot segments.

    Returns the image and a flag that is True when any joint had to be
    clamped onto the canvas.
    """
    pts = np.asarray(joints, dtype=np.float64).reshape(6, 2)
    clamped_pts = np.clip(pts, 0.0, CANVAS - 1.0)
    clamped = bool(np.any(clamped_pts != pts))
    img = np.zeros((CANVAS, CANVAS))
    for leg in (0, 1):
        for a, b in ((0, 1), (1, 2)):
            (xa, ya), (xb, yb) = clamped_pts[3 * leg + a], clamped_pts[3 * leg + b]
            img = np.maximum(img, LIMB_INTENSITY * _segment(ya, xa, yb, xb, 0.5))
    for x, y in clamped_pts:
        img = np.maximum(img, _disk(y, x, JOINT_RADIUS))
    return img, clamped


def mirror_joints(joints: np.ndarray, center_x: float = (CANVAS - 1) / 2.0) -> np.ndarray:
    """Reflect a pose about a vertical axis, swapping left and right joints."""
    pts = np.asarray(joints, dtype=np.float64).reshape(-1, 2, 3, 2).copy()
    pts[..., 0] = 2.0 * center_x - pts[..., 0]
    pts = pts[:, ::-1]
    return pts.reshape(np.shape(joints))


# time series --------------------------------------------------------------

@dataclass
class TimeSeriesGroup:
    """Seven smoothed steps of the four channels; humidity may be missing."""

    values: np.ndarray  # (steps, 4), NaN where missing
    complete: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(CHANNELS):
            raise ArgumentError(f"group values must be (steps, 4), got {self.values.shape}")
        if np.isnan(self.values[:, TEMPERATURE_CHANNELS]).any():
            raise ArgumentError("temperature channels must be present in every group")
        if self.complete and np.isnan(self.values).any():
            raise ArgumentError("a complete group cannot contain missing humidity")


@dataclass
class TimeSeriesLabels:
    labels: np.ndarray  # (size, k * 4), row-major over (step, channel)
    temperature_source: np.ndarray
    humidity_source: np.ndarray


def sample_timeseries_labels(groups: Sequence[TimeSeriesGroup], rng: np.random.Generator,
                             size: int, k: int = 2) -> TimeSeriesLabels:
    """Draw target windows (last ``k`` steps) without looking at any inputs.

    Temperature comes from a group drawn uniformly from all groups. Humidity
    is taken from the same group when that group is complete, otherwise from
    a uniformly drawn complete group; the humidity marginal is therefore
    uniform over complete groups.
    """
    if not groups:
        raise ConfigurationError("no time-series groups given to the label simulator")
    complete = np.flatnonzero([g.complete for g in groups])
    if complete.size == 0:
        raise ConfigurationError("the label simulator needs at least one complete group")
    temp_src = rng.integers(0, len(groups), size=size)
    fallback = complete[rng.integers(0, complete.size, size=size)]
    is_complete = np.array([groups[i].complete for i in temp_src])
    hum_src = np.where(is_complete, temp_src, fallback)
    out = np.empty((size, k, len(CHANNELS)))
    for row, (ti, hi) in enumerate(zip(temp_src, hum_src)):
        out[row, :, TEMPERATURE_CHANNELS] = groups[ti].values[-k:, TEMPERATURE_CHANNELS].T
        out[row, :, HUMIDITY_CHANNELS] = groups[hi].values[-k:, HUMIDITY_CHANNELS].T
    return TimeSeriesLabels(out.reshape(size, -1), temp_src, hum_src)


def sample_timeseries_heads(groups: Sequence[TimeSeriesGroup], rng: np.random.Generator,
                            size: int, k: int = 2) -> dict[str, np.ndarray]:
    """Label batches for a two-critic setup.

    ``temperature`` holds the temperature columns of the last ``k`` steps of
    groups drawn from all groups, shape (size, 2k). ``joint`` holds all four
    channels of groups drawn from complete groups only, shape (size, 4k), so
    the temperature-humidity coupling is never broken by mixing sources.
    """
    if not groups:
        raise ConfigurationError("no time-series groups given to the label simulator")
    complete = np.flatnonzero([g.complete for g in groups])
    if complete.size == 0:
        raise ConfigurationError("the label simulator needs at least one complete group")
    temp_src = rng.integers(0, len(groups), size=size)
    joint_src = complete[rng.integers(0, complete.size, size=size)]
    temperature = np.stack([groups[i].values[-k:][:, TEMPERATURE_CHANNELS].reshape(-1) for i in temp_src])
    joint = np.stack([groups[i].values[-k:].reshape(-1) for i in joint_src])
    return {"temperature": temperature, "joint": joint}


def temperature_columns(k: int = 2) -> tuple[int, ...]:
    """Flat indices of the temperature entries in a (k * 4) target row."""
    return tuple(step * len(CHANNELS) + c for step in range(k) for c in TEMPERATURE_CHANNELS)


# dataset dumps ------------------------------------------------------------

def write_dump_csv(path, trajectories: np.ndarray, label_names: Sequence[str],
                   images: np.ndarray | None = None) -> None:
    """One row per frame: trajectory id, frame index, labels, then optional pixels.

    ``trajectories`` is (count, frames, labels); ``images`` (count, frames, pixels).
    """
    trajectories = np.asarray(trajectories, dtype=np.float64)
    count, frames, n_labels = trajectories.shape
    if n_labels != len(label_names):
        raise ArgumentError(f"{n_labels} label columns but {len(label_names)} names")
    header = ["trajectory", "frame", *label_names]
    if images is not None:
        images = np.asarray(images, dtype=np.float64).reshape(count, frames, -1)
        header += [f"px{i}" for i in range(images.shape[2])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(count):
            for t in range(frames):
                row = [i, t, *(repr(float(v)) for v in trajectories[i, t])]
                if images is not None:
                    row += [repr(float(v)) for v in images[i, t]]
                writer.writerow(row)
