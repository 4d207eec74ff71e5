"""Evaluation metrics: Pearson correlation, PCK at a distance threshold, MAE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DimensionError, UndefinedCorrelationError


def pearson_correlation(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if pred.shape != truth.shape:
        raise DimensionError(f"series lengths differ: {pred.size} vs {truth.size}")
    if pred.size < 2:
        raise ArgumentError("correlation needs at least two points")
    dp = pred - pred.mean()
    dt = truth - truth.mean()
    sp, st = np.sqrt(dp @ dp), np.sqrt(dt @ dt)
    if sp == 0 or st == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant series")
    return float(np.clip((dp @ dt) / (sp * st), -1.0, 1.0))


@dataclass(frozen=True)
class PckSpec:
    beta: float = 0.1
    height: float = 1.0
    width: float = 1.0

    def __post_init__(self):
        if not self.beta > 0 or not self.height > 0 or not self.width > 0:
            raise ArgumentError("beta, height and width must all be positive")

    @property
    def threshold(self) -> float:
        return self.beta * max(self.height, self.width)


def _joints(arr) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        if arr.shape[1] % 2:
            raise DimensionError(f"flattened joints need an even column count, got {arr.shape}")
        arr = arr.reshape(arr.shape[0], -1, 2)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise DimensionError(f"joints must be (frames, joints, 2), got {arr.shape}")
    return arr


def pck_hits(pred_joints, true_joints, threshold) -> np.ndarray:
    """Boolean (frames, joints) array; a joint within the threshold (inclusive) is a hit.

    ``threshold`` may be a scalar or one value per frame.
    """
    pred, true = _joints(pred_joints), _joints(true_joints)
    if pred.shape != true.shape:
        raise DimensionError(f"prediction {pred.shape} and truth {true.shape} differ")
    dist = np.sqrt(((pred - true) ** 2).sum(axis=2))
    thr = np.asarray(threshold, dtype=np.float64)
    if thr.ndim == 1:
        if thr.size != dist.shape[0]:
            raise DimensionError("need one threshold per frame")
        thr = thr[:, None]
    return dist <= thr


def pck_at(pred_joints, true_joints, spec: PckSpec) -> np.ndarray:
    """Per-joint fraction of frames whose prediction lies within beta * max(h, w)."""
    return pck_hits(pred_joints, true_joints, spec.threshold).mean(axis=0)


def bounding_box(joints) -> tuple[float, float]:
    """(height, width) of the box around all given joints."""
    pts = _joints(joints).reshape(-1, 2)
    width = float(pts[:, 0].max() - pts[:, 0].min())
    height = float(pts[:, 1].max() - pts[:, 1].min())
    return height, width


def mae(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DimensionError(f"prediction {pred.shape} and truth {truth.shape} differ")
    if pred.size == 0:
        raise ArgumentError("mae of an empty array")
    return float(np.abs(pred - truth).mean())
