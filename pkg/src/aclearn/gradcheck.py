"""Finite-difference check of the training losses through 4-layer MLPs.

The reference values come from plain numpy forward passes written
independently of the autodiff graph; gradients from ``backward`` are compared
against central differences of those functions entry by entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import MlpConfig, Parameters, gradients_of, init_params, mlp_forward
from .objectives import critic_objective, critic_scores, generator_objective, gradient_penalty, supervised_loss

HIDDEN = (64, 64, 64)
LOSSES = ("supervised", "critic_gp", "generator")


def _np_forward(arrays, x):
    """ReLU MLP forward on raw arrays; returns output and pre-activations.

    Arrays may carry a leading axis of stacked parameter copies, in which case
    every result gains that axis too.
    """
    h, pre = x, []
    n = len(arrays) // 2
    for i in range(n):
        b = arrays[2 * i + 1]
        z = h @ arrays[2 * i] + b[..., None, :]
        pre.append(z)
        h = np.maximum(z, 0.0) if i < n - 1 else z
    return h, pre


def _np_input_grad(arrays, x):
    _, pre = _np_forward(arrays, x)
    n = len(arrays) // 2
    g = np.ones(pre[-1].shape)
    for i in reversed(range(n)):
        if i < n - 1:
            g = g * (pre[i] > 0)
        g = g @ np.swapaxes(arrays[2 * i], -1, -2)
    return g


def reference_supervised(arrays, x, y):
    out, _ = _np_forward(arrays, x)
    return ((out - y) ** 2).mean(axis=(-2, -1))


def reference_critic_gp(arrays, real, fake, mix, lam):
    d_real = _np_forward(arrays, real)[0][..., 0]
    d_fake = _np_forward(arrays, fake)[0][..., 0]
    mixed = mix * real + (1.0 - mix) * fake
    norms = np.sqrt((_np_input_grad(arrays, mixed) ** 2).sum(axis=-1))
    return -(d_real.mean(axis=-1) - d_fake.mean(axis=-1)) + lam * ((norms - 1.0) ** 2).mean(axis=-1)


def reference_generator(pred_arrays, critic_arrays, x):
    traj, _ = _np_forward(pred_arrays, x)
    return -_np_forward(critic_arrays, traj)[0].mean(axis=(-2, -1))


def _central(f, arrays, eps, chunk=64):
    """Central differences for every entry, evaluating ``chunk`` perturbed copies at once."""
    out = []
    for k, a in enumerate(arrays):
        flat = a.reshape(-1)
        g = np.empty(flat.size)
        trial = list(arrays)
        for start in range(0, flat.size, chunk):
            idx = np.arange(start, min(start + chunk, flat.size))
            rows = np.arange(len(idx))
            stack = np.repeat(flat[None, :], len(idx), axis=0)
            trial[k] = stack.reshape(len(idx), *a.shape)
            stack[rows, idx] += eps
            upper = f(trial)
            stack[rows, idx] = flat[idx] - eps
            g[idx] = (upper - f(trial)) / (2.0 * eps)
        out.append(g.reshape(a.shape))
    return out


def relative_error(analytic, numeric, floor: float = 1e-4) -> float:
    """Largest ``|a - n| / max(|a|, |n|, floor)`` over all entries.

    The floor keeps entries that are essentially zero from turning
    finite-difference round-off (about 1e-10 here) into a large ratio.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


@dataclass
class GradcheckResult:
    seed: int
    errors: dict  # loss name -> worst relative error

    @property
    def worst(self) -> float:
        return max(self.errors.values())


def check_seed(seed: int, batch: int = 4, d_in: int = 6, d_traj: int = 5, gp_weight: float = 10.0,
               eps: float = 1e-5) -> GradcheckResult:
    rng = np.random.default_rng(seed)
    pred_cfg = MlpConfig((d_in, *HIDDEN, d_traj))
    critic_cfg = MlpConfig((d_traj, *HIDDEN, 1))
    predictor = init_params(pred_cfg, rng)
    critic = init_params(critic_cfg, rng)
    x = rng.normal(size=(batch, d_in))
    y = rng.normal(size=(batch, d_traj))
    real = rng.normal(size=(batch, d_traj))
    fake = rng.normal(size=(batch, d_traj))
    errors = {}

    # supervised loss w.r.t. predictor parameters
    p = predictor.fresh()
    grads = gradients_of(p, ad.backward(supervised_loss(mlp_forward(p, Tensor(x)), Tensor(y)).tensor))
    numeric = _central(lambda arr: reference_supervised(arr, x, y), predictor.arrays(), eps)
    errors["supervised"] = relative_error(grads, numeric)

    # critic objective with gradient penalty, as minimised by the critic
    gp_seed = int(rng.integers(2**31))
    mix = np.random.default_rng(gp_seed).uniform(0.0, 1.0, size=(batch, 1))
    c = critic.fresh()
    obj = critic_objective(critic_scores(c, Tensor(real)), critic_scores(c, Tensor(fake)))
    gp = gradient_penalty(c, real, fake, gp_weight, np.random.default_rng(gp_seed))
    grads = gradients_of(c, ad.backward(ad.add(ad.scale(obj.tensor, -1.0), gp.tensor)))
    numeric = _central(lambda arr: reference_critic_gp(arr, real, fake, mix, gp_weight), critic.arrays(), eps)
    errors["critic_gp"] = relative_error(grads, numeric)

    # generator objective w.r.t. predictor and critic parameters
    p, c = predictor.fresh(), critic.fresh()
    loss = generator_objective(critic_scores(c, mlp_forward(p, Tensor(x))))
    leaf = ad.backward(loss.tensor)
    grads = gradients_of(p, leaf) + gradients_of(c, leaf)
    n_pred = len(predictor.arrays())
    numeric = _central(lambda arr: reference_generator(arr[:n_pred], arr[n_pred:], x),
                       predictor.arrays() + critic.arrays(), eps)
    errors["generator"] = relative_error(grads, numeric)
    return GradcheckResult(seed, errors)


def run_gradcheck(seeds=range(20), **kwargs) -> list[GradcheckResult]:
    return [check_seed(int(s), **kwargs) for s in seeds]
