"""Training objectives.

The critic scores label trajectories. It is trained to maximise
``mean(D(real)) - mean(D(fake))`` minus a gradient penalty, and the predictor
minimises ``-mean(D(fake))``, optionally plus an alpha-weighted supervised
term. The explicit baseline constraint scores how far a trajectory is from
the closest sinusoid with a period in the simulator's range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ArgumentError, DimensionError, NonFiniteError
from .nn import Parameters, mlp_forward, mlp_input_gradient


@dataclass(frozen=True)
class LossValue:
    tensor: Tensor
    value: float

    @classmethod
    def of(cls, tensor: Tensor) -> LossValue:
        if tensor.size != 1:
            raise DimensionError(f"a loss must be a scalar, got shape {tensor.shape}")
        value = tensor.item()
        if not np.isfinite(value):
            raise NonFiniteError("loss value is not finite")
        return cls(tensor, value)

    def __float__(self) -> float:
        return self.value


def supervised_loss(pred: Tensor, target) -> LossValue:
    """Mean squared error over every entry."""
    pred, target = ad.as_tensor(pred), ad.as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} and target {target.shape} differ in shape")
    return LossValue.of(ad.mean(ad.square(ad.sub(pred, target))))


def _scores(scores, name: str) -> Tensor:
    if isinstance(scores, Tensor):
        if scores.size == 0:
            raise ArgumentError(f"{name} is empty")
        return scores
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise ArgumentError(f"{name} is empty")
    return Tensor(arr)


def critic_objective(real_scores, fake_scores) -> LossValue:
    """``mean(real) - mean(fake)``; the critic maximises this."""
    real = _scores(real_scores, "real scores")
    fake = _scores(fake_scores, "fake scores")
    return LossValue.of(ad.sub(ad.mean(real), ad.mean(fake)))


def generator_objective(fake_scores) -> LossValue:
    return LossValue.of(ad.scale(ad.mean(_scores(fake_scores, "fake scores")), -1.0))


def interpolates(real: np.ndarray, fake: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    eps = rng.uniform(0.0, 1.0, size=(real.shape[0], 1))
    return eps * real + (1.0 - eps) * fake


def gradient_penalty(critic: Parameters, real, fake, lam: float, rng: np.random.Generator) -> LossValue:
    """``lam * mean((|grad_y D(y)| - 1)^2)`` at random real/fake interpolates.

    The input gradient is built from graph operations, so the penalty is
    differentiable with respect to the critic parameters with an ordinary
    backward pass.
    """
    if lam < 0:
        raise ArgumentError("gradient-penalty weight must be non-negative")
    real = real.data if isinstance(real, Tensor) else np.asarray(real, dtype=np.float64)
    fake = fake.data if isinstance(fake, Tensor) else np.asarray(fake, dtype=np.float64)
    if real.shape != fake.shape or real.ndim != 2:
        raise DimensionError(f"real {real.shape} and fake {fake.shape} batches must be equal matrices")
    mixed = interpolates(real, fake, rng)
    grad = mlp_input_gradient(critic, Tensor(mixed))
    gap = ad.add_scalar(ad.row_norm(grad), -1.0)
    return LossValue.of(ad.scale(ad.mean(ad.square(gap)), float(lam)))


def semi_supervised_loss(adv: LossValue, sup: LossValue, alpha: float) -> LossValue:
    if alpha < 0:
        raise ArgumentError("alpha must be non-negative")
    return LossValue.of(ad.add(adv.tensor, ad.scale(sup.tensor, float(alpha))))


def critic_scores(critic: Parameters, trajectories) -> Tensor:
    """Critic output per trajectory row, shape (batch,)."""
    out = mlp_forward(critic, trajectories)
    return ad.reshape(out, (out.shape[0],))


# explicit pendulum constraint ---------------------------------------------

DEFAULT_PERIOD_GRID = np.linspace(10.0, 14.0, 81)


def best_sinusoid_fit(traj: np.ndarray, periods: np.ndarray = DEFAULT_PERIOD_GRID) -> np.ndarray:
    """Closest ``a sin(wt) + b cos(wt)`` to each row, searching the period grid.

    Amplitude and phase come from a closed-form least-squares solve per
    period; the period with the smallest residual wins. Returns the fitted
    curves, shape like ``traj`` (batch, n).
    """
    traj = np.atleast_2d(np.asarray(traj, dtype=np.float64))
    n = traj.shape[1]
    t = np.arange(n, dtype=np.float64)
    best = np.full(traj.shape[0], np.inf)
    fitted = np.zeros_like(traj)
    for period in np.asarray(periods, dtype=np.float64):
        w = 2.0 * np.pi * t / period
        basis = np.stack([np.sin(w), np.cos(w)], axis=1)  # (n, 2)
        coef, *_ = np.linalg.lstsq(basis, traj.T, rcond=None)
        curves = (basis @ coef).T
        resid = ((traj - curves) ** 2).mean(axis=1)
        better = resid < best - 1e-15
        best = np.where(better, resid, best)
        fitted[better] = curves[better]
    return fitted


def handcrafted_pendulum_constraint(traj, period_range: tuple[float, float] = (10.0, 14.0),
                                    grid_size: int = 81) -> LossValue:
    """Mean squared residual of each trajectory row against its best sinusoid.

    ``traj`` is (batch, n); a single trajectory may be given as (n, 1) or (1, n).
    The fitted curve is held constant, so the gradient pushes each trajectory
    toward its current best fit.
    """
    traj = ad.as_tensor(traj)
    if traj.ndim == 2 and traj.shape[1] == 1 and traj.shape[0] > 1:
        traj = ad.reshape(traj, (1, traj.shape[0]))
    if traj.ndim != 2:
        raise DimensionError(f"trajectories must be a (batch, n) matrix, got {traj.shape}")
    if traj.shape[1] < 4:
        raise ArgumentError(f"constraint needs at least 4 steps, got {traj.shape[1]}")
    periods = np.linspace(period_range[0], period_range[1], grid_size)
    fitted = best_sinusoid_fit(traj.data, periods)
    return LossValue.of(ad.mean(ad.square(ad.sub(traj, Tensor(fitted)))))
