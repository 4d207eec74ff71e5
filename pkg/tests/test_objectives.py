import numpy as np
import pytest

from aclearn import autodiff as ad
from aclearn.autodiff import Tensor
from aclearn.errors import ArgumentError, DimensionError
from aclearn.nn import MlpConfig, Parameters, gradients_of, init_params
from aclearn.objectives import (
    LossValue,
    best_sinusoid_fit,
    critic_objective,
    critic_scores,
    generator_objective,
    gradient_penalty,
    handcrafted_pendulum_constraint,
    semi_supervised_loss,
    supervised_loss,
)
from aclearn.simulators import oscillator

from conftest import central_difference, max_relative_error


def linear_critic(slope, d=3):
    """D(y) = slope * y_0 built as a relu-free MLP: hidden = identity-ish via two units."""
    cfg = MlpConfig((d, 2, 1), hidden_activation="identity")
    w1 = np.zeros((d, 2))
    w1[0, 0] = 1.0
    w2 = np.array([[slope], [0.0]])
    return Parameters.from_arrays(cfg, [w1, np.zeros(2), w2, np.zeros(1)])


def test_supervised_zero_residual():
    assert supervised_loss(Tensor([[1.0, 2.0]]), Tensor([[1.0, 2.0]])).value == 0.0


def test_supervised_arithmetic():
    assert supervised_loss(Tensor([1.0, 2.0]), Tensor([2.0, 4.0])).value == 2.5


def test_supervised_matches_two_pass_oracle(rng):
    p, t = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    total = 0.0
    for i in range(6):
        for j in range(3):
            total += (p[i, j] - t[i, j]) ** 2
    assert abs(supervised_loss(Tensor(p), Tensor(t)).value - total / 18) < 1e-12


def test_supervised_shape_error():
    with pytest.raises(DimensionError):
        supervised_loss(Tensor(np.ones((2, 2))), Tensor(np.ones((2, 3))))


def test_critic_objective_values(rng):
    assert critic_objective([1.0, 1.0], [0.0, 0.0]).value == 1.0
    assert critic_objective([0.3, -2.0], [0.3, -2.0]).value == 0.0
    r, f = rng.normal(size=9), rng.normal(size=5)
    assert abs(critic_objective(r, f).value - (sum(r) / 9 - sum(f) / 5)) < 1e-12


def test_critic_objective_antisymmetric(rng):
    r, f = rng.normal(size=7), rng.normal(size=7)
    assert critic_objective(r, f).value == pytest.approx(-critic_objective(f, r).value, abs=1e-15)


def test_empty_scores_rejected():
    with pytest.raises(ArgumentError):
        critic_objective([], [1.0])
    with pytest.raises(ArgumentError):
        generator_objective([])


def test_generator_objective():
    assert generator_objective([0.5, 1.5]).value == -1.0
    assert generator_objective([0.0, 0.0]).value == 0.0
    base = generator_objective([0.2, 0.4, 0.6]).value
    for i in range(3):
        scores = [0.2, 0.4, 0.6]
        scores[i] += 0.1
        assert generator_objective(scores).value < base


def test_generator_matches_fake_term_of_critic(rng):
    r, f = rng.normal(size=6), rng.normal(size=6)
    gen = generator_objective(f).value
    crit = critic_objective(r, f).value
    assert crit == pytest.approx(np.mean(r) + gen, abs=1e-14)


@pytest.mark.parametrize("slope, expected", [(1.0, 0.0), (2.0, 10.0), (0.0, 10.0)])
def test_gradient_penalty_analytic(rng, slope, expected):
    real, fake = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    gp = gradient_penalty(linear_critic(slope), real, fake, 10.0, rng)
    assert gp.value == pytest.approx(expected, abs=1e-12)


def test_gradient_penalty_constant_critic(rng):
    cfg = MlpConfig((3, 4, 1))
    critic = Parameters.from_arrays(cfg, [np.zeros((3, 4)), np.ones(4), np.zeros((4, 1)), np.ones(1)])
    assert gradient_penalty(critic, rng.normal(size=(4, 3)), rng.normal(size=(4, 3)), 10.0, rng).value == 10.0


def test_gradient_penalty_shape_and_weight_checks(rng):
    critic = init_params(MlpConfig((3, 4, 1)), rng)
    with pytest.raises(DimensionError):
        gradient_penalty(critic, np.ones((2, 3)), np.ones((3, 3)), 10.0, rng)
    with pytest.raises(ArgumentError):
        gradient_penalty(critic, np.ones((2, 3)), np.ones((2, 3)), -1.0, rng)


def test_gradient_penalty_non_negative(rng):
    for _ in range(20):
        critic = init_params(MlpConfig((4, 8, 8, 1)), rng)
        assert gradient_penalty(critic, rng.normal(size=(6, 4)), rng.normal(size=(6, 4)), 10.0, rng).value >= 0


@pytest.mark.parametrize("act", ["relu", "tanh"])
def test_gradient_penalty_parameter_gradients(rng, act):
    cfg = MlpConfig((4, 6, 5, 1), hidden_activation=act)
    critic = init_params(cfg, rng)
    real, fake = rng.normal(size=(5, 4)), rng.normal(size=(5, 4))

    def value(arrs):
        return gradient_penalty(Parameters.from_arrays(cfg, arrs, False), real, fake, 10.0,
                                np.random.default_rng(9)).value

    leaves = critic.fresh()
    loss = gradient_penalty(leaves, real, fake, 10.0, np.random.default_rng(9))
    grads = gradients_of(leaves, ad.backward(loss.tensor))
    numeric = central_difference(value, critic.arrays(), eps=1e-6)
    assert max_relative_error(grads, numeric) < 1e-5
    # the output bias shifts every score equally, so the penalty ignores it
    assert np.all(grads[-1] == 0.0)


def test_semi_supervised_combination():
    adv = LossValue.of(Tensor(0.2))
    sup = LossValue.of(Tensor(0.05))
    assert semi_supervised_loss(adv, sup, 0.0).value == 0.2
    assert semi_supervised_loss(adv, sup, 10.0).value == pytest.approx(0.7, abs=1e-15)
    for alpha in (0.0, 1.0, 37.5):
        assert semi_supervised_loss(adv, LossValue.of(Tensor(0.0)), alpha).value == 0.2
    with pytest.raises(ArgumentError):
        semi_supervised_loss(adv, sup, -1.0)


def test_semi_supervised_linear(rng):
    a1, a2, s1, s2 = rng.normal(size=4)
    lv = lambda v: LossValue.of(Tensor(v))
    left = semi_supervised_loss(lv(a1 + 2 * a2), lv(s1 + 2 * s2), 3.0).value
    right = semi_supervised_loss(lv(a1), lv(s1), 3.0).value + 2 * semi_supervised_loss(lv(a2), lv(s2), 3.0).value
    assert left == pytest.approx(right, abs=1e-12)


def test_constraint_zero_for_in_family_signal():
    traj = oscillator(1.0, 12.0, 0.0, 5)[:, None]
    assert handcrafted_pendulum_constraint(traj).value < 1e-20


def test_constraint_for_constant_trajectory():
    # short windows: the sinusoid family can absorb part of a constant, so the
    # residual is at most c^2; over many periods the fit vanishes and it tends to c^2
    c = 0.7
    assert handcrafted_pendulum_constraint(np.full((1, 5), c)).value <= c * c + 1e-15
    long = handcrafted_pendulum_constraint(np.full((1, 240), c)).value
    assert long == pytest.approx(c * c, rel=0.01)


def test_constraint_noise_level():
    rng = np.random.default_rng(0)
    sigma = 0.1
    n = 60
    vals = []
    for _ in range(100):
        clean = oscillator(1.0, rng.uniform(10, 14), rng.uniform(0, 2 * np.pi), n)
        vals.append(handcrafted_pendulum_constraint((clean + rng.normal(0, sigma, n))[None, :]).value)
    assert abs(np.mean(vals) - sigma**2) <= 0.2 * sigma**2


def test_constraint_requires_four_steps():
    with pytest.raises(ArgumentError):
        handcrafted_pendulum_constraint(np.ones((2, 3)))


def test_constraint_gradient_holds_fit_fixed(rng):
    traj0 = rng.normal(size=(3, 5))
    fitted = best_sinusoid_fit(traj0)
    t = Tensor(traj0, requires_grad=True)
    ad.backward(handcrafted_pendulum_constraint(t).tensor)
    np.testing.assert_allclose(t.grad, 2 * (traj0 - fitted) / traj0.size, atol=1e-14)


def test_critic_scores_shape(rng):
    critic = init_params(MlpConfig((5, 8, 1)), rng)
    assert critic_scores(critic, Tensor(rng.normal(size=(7, 5)))).shape == (7,)
