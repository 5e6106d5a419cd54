# tests/test_autodiff.py

import math

import numpy as np
import pytest

from src.autodiff import tensor as ad
from src.autodiff.tensor import DiffTensor, ShapeError, backward, get_tape, init_parameters, no_grad


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2.0 * h)
    return g


def check_gradient(build, tensors, rtol=1e-4, atol=1e-6):
    """
    build() returns a scalar DiffTensor from `tensors`; compares backward
    against central differences for each tensor.
    """
    for t in tensors:
        t.zero_grad()
    backward(build())
    analytic = [t.grad.copy() for t in tensors]

    def value():
        with no_grad():
            return build().item()

    for t, a in zip(tensors, analytic):
        np.testing.assert_allclose(a, numeric_grad(value, t.values), rtol=rtol, atol=atol)


# --------- Forward values --------- #

def test_scalar_activations():
    assert ad.sigmoid(0.0).item() == 0.5
    assert ad.softplus(0.0).item() == pytest.approx(math.log(2.0), abs=1e-12)
    assert ad.relu(np.array([-1.0, 2.0])).values.tolist() == [0.0, 2.0]


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expected[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(ad.matmul(a, b).values, expected, rtol=0, atol=1e-12)


def test_shape_errors_name_op_and_shapes():
    with pytest.raises(ShapeError, match=r"matmul.*\(3, 4\).*\(3, 2\)"):
        ad.matmul(np.ones((3, 4)), np.ones((3, 2)))
    with pytest.raises(ShapeError, match="add"):
        ad.add(np.ones((2, 3)), np.ones((3, 2)))
    with pytest.raises(ShapeError, match="concat"):
        ad.concat([np.ones((2, 3)), np.ones((3, 3))])
    with pytest.raises(ShapeError, match="squared_error"):
        ad.squared_error(np.ones(3), np.ones(4))


def test_broadcast_only_into_an_operand_shape():
    # bias add is fine, mutual broadcasting is not
    out = ad.add(np.ones((4, 3)), np.arange(3.0))
    assert out.shape == (4, 3)
    with pytest.raises(ShapeError):
        ad.mul(np.ones((4, 1)), np.ones((1, 3)))


def test_concat_last_axis_and_reductions():
    x = ad.concat([np.ones((2, 1)), np.zeros((2, 2))])
    assert x.values.tolist() == [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
    assert ad.sum(x).item() == 2.0
    assert ad.mean(x).item() == pytest.approx(1.0 / 3.0)
    assert ad.sum(x, axis=1).values.tolist() == [1.0, 1.0]


# --------- Backward --------- #

def test_sum_gives_all_ones():
    x = DiffTensor(np.random.default_rng(1).normal(size=(2, 3, 4)), requires_grad=True)
    backward(ad.sum(x))
    np.testing.assert_array_equal(x.grad, np.ones((2, 3, 4)))


def test_sigmoid_gradient_at_zero():
    w = DiffTensor(0.0, requires_grad=True)
    backward(ad.mul(ad.sigmoid(w), 1.0))
    assert float(w.grad) == pytest.approx(0.25, abs=1e-15)


def test_backward_rejects_non_scalar_and_clears_tape():
    x = DiffTensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        backward(ad.mul(x, 2.0))

    get_tape().clear()
    backward(ad.sum(ad.mul(x, 2.0)))
    assert len(get_tape()) == 0


def test_backward_on_empty_tape():
    with pytest.raises(RuntimeError):
        backward(DiffTensor(1.0))


def test_reused_tensor_accumulates_both_paths():
    x = DiffTensor(np.array([0.3, -1.2, 2.0]), requires_grad=True)
    check_gradient(lambda: ad.sum(ad.add(ad.mul(x, x), x)), [x])
    np.testing.assert_allclose(x.grad, 2.0 * x.values + 1.0, rtol=1e-12)


@pytest.mark.parametrize("op", [ad.relu, ad.sigmoid, ad.softplus, ad.sin, ad.cos, ad.exp, ad.neg])
def test_unary_ops_match_finite_differences(op):
    rng = np.random.default_rng(2)
    values = rng.uniform(-2.0, 2.0, size=20)
    # keep relu away from its kink
    values[np.abs(values) < 1e-3] = 0.5
    x = DiffTensor(values, requires_grad=True)
    weights = rng.normal(size=20)
    check_gradient(lambda: ad.sum(ad.mul(op(x), weights)), [x])


def test_binary_and_structural_ops_match_finite_differences():
    rng = np.random.default_rng(3)
    a = DiffTensor(rng.normal(size=(4, 5)), requires_grad=True)
    b = DiffTensor(rng.normal(size=(5, 3)), requires_grad=True)
    bias = DiffTensor(rng.normal(size=3), requires_grad=True)
    c = DiffTensor(rng.normal(size=(4, 2)), requires_grad=True)
    target = rng.normal(size=(4, 5))

    def build():
        h = ad.add(ad.matmul(a, b), bias)
        h = ad.concat([h, ad.mul(c, c)])
        h = ad.reshape(h, (4, 5))
        return ad.add(ad.squared_error(h, target), ad.mean(ad.sum(h, axis=0)))

    check_gradient(build, [a, b, bias, c])


def test_two_layer_mlp_matches_finite_differences():
    rng = np.random.default_rng(4)
    w0, b0, w1, b1 = init_parameters([3, 8, 2], seed=5)
    b0.values[:] = rng.normal(size=8) * 0.1
    x = rng.normal(size=(6, 3))
    y = rng.normal(size=(6, 2))

    def build():
        h = ad.relu(ad.add(ad.matmul(x, w0), b0))
        return ad.squared_error(ad.add(ad.matmul(h, w1), b1), y)

    check_gradient(build, [w0, b0, w1, b1])


def test_no_grad_forward_records_nothing():
    x = DiffTensor(np.ones((2, 2)))
    ad.sum(ad.sigmoid(ad.matmul(x, x)))
    assert len(get_tape()) == 0
    assert x.grad is None

    w = DiffTensor(np.ones((2, 2)), requires_grad=True)
    with no_grad():
        out = ad.matmul(w, w)
    assert len(get_tape()) == 0
    assert not out.requires_grad


# --------- Initialisation --------- #

def test_init_is_deterministic_with_zero_biases():
    first = init_parameters([4, 6, 2], seed=11)
    second = init_parameters([4, 6, 2], seed=11)
    assert [p.shape for p in first] == [(4, 6), (6,), (6, 2), (2,)]
    for p, q in zip(first, second):
        assert p.values.tobytes() == q.values.tobytes()
    assert not first[1].values.any() and not first[3].values.any()


def test_init_distribution_bounds():
    w = init_parameters([100, 100], seed=0)[0].values
    limit = math.sqrt(6.0 / 200.0)
    assert np.abs(w).max() <= limit
    standard_error = (limit / math.sqrt(3.0)) / math.sqrt(w.size)
    assert abs(w.mean()) < 3.0 * standard_error


def test_init_rejects_bad_dims():
    with pytest.raises(ValueError):
        init_parameters([3, 0], seed=0)
