import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aclearn import autodiff as ad
from aclearn.autodiff import Tensor
from aclearn.errors import DimensionError, NonFiniteError, RankError, StateError

from conftest import central_difference, max_relative_error


def naive_matmul(a, b):
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for p in range(k):
                s += a[i, p] * b[p, j]
            out[i, j] = s
    return out


def test_matmul_identity():
    b = [[5.0, 6.0], [7.0, 8.0]]
    assert np.array_equal(ad.matmul(Tensor(np.eye(2)), Tensor(b)).data, b)


def test_matmul_by_hand():
    out = ad.matmul(Tensor([[1, 2], [3, 4]]), Tensor([[5, 6], [7, 8]]))
    assert np.array_equal(out.data, [[19, 22], [43, 50]])


def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(3, 5))
    np.testing.assert_allclose(ad.matmul(Tensor(a), Tensor(b)).data, naive_matmul(a, b), rtol=0, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_backward_rules(rng):
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    upstream = rng.normal(size=(3, 2))
    ad.backward(ad.sum_(ad.mul(ad.matmul(a, b), Tensor(upstream))))
    np.testing.assert_allclose(a.grad, upstream @ b.data.T, atol=1e-12)
    np.testing.assert_allclose(b.grad, a.data.T @ upstream, atol=1e-12)


def test_relu_values():
    assert np.array_equal(ad.relu(Tensor([-1.0, 0.0, 2.0])).data, [0, 0, 2])


def test_relu_subgradient_at_zero_is_zero():
    x = Tensor([0.0, 1.0], requires_grad=True)
    ad.backward(ad.sum_(ad.relu(x)))
    assert np.array_equal(x.grad, [0.0, 1.0])


def test_mean_value():
    assert ad.mean(Tensor([1.0, 2.0, 3.0, 6.0])).item() == 3.0


def test_tanh_backward_matches_finite_differences(rng):
    x0 = rng.normal(size=(3, 4))
    w = rng.normal(size=(3, 4))
    x = Tensor(x0, requires_grad=True)
    ad.backward(ad.sum_(ad.mul(ad.tanh(x), Tensor(w))))
    numeric = central_difference(lambda arrs: float((np.tanh(arrs[0]) * w).sum()), [x0], eps=1e-5)[0]
    rel = np.abs(x.grad - numeric) / np.maximum(np.abs(numeric), 1e-12)
    assert rel.max() < 1e-6


@pytest.mark.parametrize("kind", ["add", "sub", "mul"])
def test_binary_shape_mismatch(kind):
    with pytest.raises(DimensionError):
        getattr(ad, kind)(Tensor(np.ones((2, 2))), Tensor(np.ones((2, 3))))


def test_scalar_times_tensor_is_the_only_broadcast():
    s = Tensor(2.0, requires_grad=True)
    t = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
    out = ad.mul(s, t)
    ad.backward(ad.sum_(out))
    assert s.grad == pytest.approx(10.0)
    assert np.array_equal(t.grad, np.full((2, 2), 2.0))
    with pytest.raises(DimensionError):
        ad.add(Tensor(np.ones(3)), Tensor(np.ones((3, 3))))


def test_square_backward():
    x = Tensor(3.0, requires_grad=True)
    grads = ad.backward(ad.mul(x, x))
    assert grads[x] == pytest.approx(6.0)
    assert x.grad == pytest.approx(6.0)


def test_dead_relu_gradient():
    x = Tensor(-1.0, requires_grad=True)
    ad.backward(ad.relu(x))
    assert x.grad == 0.0


def test_non_scalar_loss_is_a_rank_error():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(RankError):
        ad.backward(ad.scale(x, 2.0))


def test_record_is_consumed():
    x = Tensor(2.0, requires_grad=True)
    loss = ad.square(x)
    ad.backward(loss)
    with pytest.raises(StateError):
        ad.backward(loss)


def test_gradients_sum_over_paths():
    x = Tensor(1.5, requires_grad=True)
    y = ad.add(ad.square(x), ad.scale(x, 3.0))  # d/dx = 2x + 3
    ad.backward(y)
    assert x.grad == pytest.approx(6.0)


def test_node_ids_are_topologically_ordered():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    y = ad.relu(ad.matmul(x, x))
    z = ad.mean(y)
    assert x.id < y.id < z.id


def test_non_finite_detection_in_debug_mode():
    with np.errstate(over="ignore"), pytest.raises(NonFiniteError):
        ad.scale(Tensor([1e308]), 1e10)


def test_structural_ops_gradients(rng):
    a0, b0 = rng.normal(size=(3, 4)), rng.normal(size=(3, 2))
    bias0 = rng.normal(size=6)

    def build(arrs, record=True):
        a, b, bias = (Tensor(x, requires_grad=record) for x in arrs)
        c = ad.concat([a, b], axis=1)
        c = ad.add_bias(c, bias)
        c = ad.take_cols(c, [5, 0, 2, 2])
        r = ad.row_norm(ad.reshape(ad.transpose(c), (3, 4)))
        return (a, b, bias), ad.sum_(ad.mul(r, Tensor([1.0, -2.0, 0.5])))

    leaves, loss = build([a0, b0, bias0])
    ad.backward(loss)
    numeric = central_difference(lambda arrs: build(arrs, False)[1].item(), [a0, b0, bias0])
    assert max_relative_error([t.grad for t in leaves], numeric) < 1e-7


def test_row_norm_of_zero_row_has_zero_gradient():
    x = Tensor(np.zeros((1, 3)), requires_grad=True)
    ad.backward(ad.sum_(ad.row_norm(x)))
    assert np.array_equal(x.grad, np.zeros((1, 3)))


def _three_layer(arrs, x, record=True):
    ts = [Tensor(a, requires_grad=record) for a in arrs]
    w1, b1, w2, b2, w3, b3 = ts
    h = ad.tanh(ad.add_bias(ad.matmul(Tensor(x), w1), b1))
    h = ad.relu(ad.add_bias(ad.matmul(h, w2), b2))
    out = ad.add_bias(ad.matmul(h, w3), b3)
    return ts, ad.mean(ad.square(out))


def test_three_layer_mlp_matches_finite_differences(rng):
    shapes = [(4, 6), (6,), (6, 5), (5,), (5, 1), (1,)]
    arrs = [rng.normal(size=s) for s in shapes]
    x = rng.normal(size=(7, 4))
    leaves, loss = _three_layer(arrs, x)
    ad.backward(loss)
    numeric = central_difference(lambda a: _three_layer(a, x, False)[1].item(), arrs, eps=1e-4)
    assert max_relative_error([t.grad for t in leaves], numeric) < 1e-4


def test_linearity_of_backward(rng):
    x0 = rng.normal(size=(3, 3))

    def grads(coef_f, coef_g):
        x = Tensor(x0, requires_grad=True)
        f = ad.mean(ad.tanh(x))
        g = ad.sum_(ad.square(ad.matmul(x, x)))
        ad.backward(ad.add(ad.scale(f, coef_f), ad.scale(g, coef_g)))
        return x.grad

    combined = grads(2.0, -0.5)
    np.testing.assert_allclose(combined, 2.0 * grads(1.0, 0.0) - 0.5 * grads(0.0, 1.0), atol=1e-10)


def test_determinism(rng):
    arrs = [rng.normal(size=s) for s in [(4, 6), (6,), (6, 5), (5,), (5, 1), (1,)]]
    x = rng.normal(size=(7, 4))
    runs = []
    for _ in range(2):
        leaves, loss = _three_layer(arrs, x)
        ad.backward(loss)
        runs.append((loss.data.tobytes(), [t.grad.tobytes() for t in leaves]))
    assert runs[0] == runs[1]


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), rows=st.integers(1, 4), cols=st.integers(1, 4))
def test_gradient_check_property(seed, rows, cols):
    rng = np.random.default_rng(seed)
    a0, b0 = rng.normal(size=(rows, cols)), rng.normal(size=(cols, rows))

    def build(arrs, record=True):
        a, b = (Tensor(x, requires_grad=record) for x in arrs)
        p = ad.matmul(a, b)
        q = ad.sub(ad.tanh(p), ad.scale(ad.square(p), 0.3))
        return (a, b), ad.mean(ad.mul(q, ad.relu(ad.add_scalar(p, 0.1))))

    leaves, loss = build([a0, b0])
    ad.backward(loss)
    numeric = central_difference(lambda arrs: build(arrs, False)[1].item(), [a0, b0], eps=1e-6)
    assert max_relative_error([t.grad for t in leaves], numeric) < 1e-4
