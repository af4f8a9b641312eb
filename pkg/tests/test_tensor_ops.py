import math

import numpy as np
import pytest

from trisleep.numcore import (
    LabelError,
    NonFiniteError,
    Parameter,
    ShapeError,
    Tensor,
    concat,
    conv1d,
    cross_entropy_logits,
    dropout,
    gradcheck,
    layer_norm,
    matmul,
    softmax_rows,
    take_rows,
    time_interp,
)


def fd_check(closure, params, rel_tol=1e-3):
    report = gradcheck(closure, params, rel_tol=rel_tol)
    assert report.passed, report.format_table()


# ---- matmul ---------------------------------------------------------------


def test_matmul_identity():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    out = matmul(Tensor(np.eye(2)), a)
    np.testing.assert_allclose(out.data, [[1.0, 2.0], [3.0, 4.0]])


def test_matmul_1x2_2x1():
    out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
    np.testing.assert_allclose(out.data, [[11.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError) as exc:
        matmul(Tensor(np.zeros((3, 4))), Tensor(np.zeros((3, 2))))
    assert "(3, 4)" in str(exc.value) and "(3, 2)" in str(exc.value)


def test_matmul_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    a = Parameter(rng.normal(size=(3, 4)), "a")
    b = Parameter(rng.normal(size=(4, 2)), "b")
    fd_check(lambda: (matmul(a, b) * matmul(a, b)).mean(), [a, b])


def test_matmul_batched_matches_loop():
    rng = np.random.default_rng(1)
    a = Tensor(rng.normal(size=(5, 3, 4)))
    b = Tensor(rng.normal(size=(5, 4, 2)))
    out = matmul(a, b)
    for i in range(5):
        np.testing.assert_allclose(out.data[i], a.data[i] @ b.data[i], rtol=1e-6)


# ---- softmax ----------------------------------------------------------------


def test_softmax_symmetric():
    np.testing.assert_allclose(softmax_rows(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])


def test_softmax_shift_invariant_no_overflow():
    out = softmax_rows(Tensor([[1000.0, 1000.0]]))
    np.testing.assert_allclose(out.data, [[0.5, 0.5]])


def test_softmax_closed_form():
    out = softmax_rows(Tensor([[0.0, math.log(3.0)]]))
    np.testing.assert_allclose(out.data, [[0.25, 0.75]], rtol=1e-6)


def test_softmax_rows_sum_to_one_property():
    rng = np.random.default_rng(7)
    for _ in range(50):
        m, n = rng.integers(1, 8, size=2)
        x = rng.normal(scale=rng.uniform(0.1, 50.0), size=(m, n))
        p = softmax_rows(Tensor(x)).data
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=-1), np.ones(m), atol=1e-6)


def test_softmax_gradient():
    rng = np.random.default_rng(2)
    x = Parameter(rng.normal(size=(3, 5)), "x")
    w = Tensor(rng.normal(size=(3, 5)))
    fd_check(lambda: (softmax_rows(x) * w).sum(), [x])


# ---- layer norm -------------------------------------------------------------


def test_layer_norm_constant_vector_is_zero():
    gamma = Parameter(np.ones(4), "g")
    beta = Parameter(np.zeros(4), "b")
    out = layer_norm(Tensor(np.full((2, 4), 3.0)), gamma, beta)
    np.testing.assert_allclose(out.data, np.zeros((2, 4)), atol=1e-5)


def test_layer_norm_closed_form():
    gamma = Parameter(np.ones(2), "g")
    beta = Parameter(np.zeros(2), "b")
    out = layer_norm(Tensor([[1.0, 3.0]]), gamma, beta, eps=1e-12)
    np.testing.assert_allclose(out.data, [[-1.0, 1.0]], rtol=1e-5)


def test_layer_norm_gradient():
    rng = np.random.default_rng(3)
    x = Parameter(rng.normal(size=(4, 6)), "x")
    gamma = Parameter(rng.normal(size=6), "gamma")
    beta = Parameter(rng.normal(size=6), "beta")
    w = Tensor(rng.normal(size=(4, 6)))
    fd_check(lambda: (layer_norm(x, gamma, beta) * w).sum(), [x, gamma, beta])


# ---- conv1d -----------------------------------------------------------------


def test_conv1d_sum_pooling():
    x = Tensor([[1.0, 1.0, 1.0, 1.0]])
    k = Tensor([[[1.0, 1.0]]])
    out = conv1d(x, k, stride=2)
    np.testing.assert_allclose(out.data, [[2.0, 2.0]])


def test_conv1d_identity_kernel():
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(size=(1, 10)))
    out = conv1d(x, Tensor([[[1.0]]]), stride=1)
    np.testing.assert_allclose(out.data, x.data)


def test_conv1d_length_recurrence_paper_stack():
    kernels = [10, 3, 3, 3, 3, 2, 2]
    strides = [5, 2, 2, 2, 2, 2, 2]
    t = 480000
    for k, s in zip(kernels, strides):
        t = (t - k) // s + 1
    assert t == 1499


def test_conv1d_length_property():
    rng = np.random.default_rng(5)
    for _ in range(40):
        t = int(rng.integers(2, 60))
        k = int(rng.integers(1, t + 1))
        s = int(rng.integers(1, 5))
        x = Tensor(rng.normal(size=(2, t)))
        w = Tensor(rng.normal(size=(3, 2, k)))
        assert conv1d(x, w, stride=s).data.shape == (3, (t - k) // s + 1)


def test_conv1d_input_too_short():
    with pytest.raises(ShapeError):
        conv1d(Tensor(np.zeros((1, 3))), Tensor(np.zeros((1, 1, 5))))


def test_conv1d_gradient():
    rng = np.random.default_rng(6)
    x = Parameter(rng.normal(size=(2, 11)), "x")
    w = Parameter(rng.normal(size=(3, 2, 3)), "w")
    out_weight = Tensor(rng.normal(size=(3, 5)))
    fd_check(lambda: (conv1d(x, w, stride=2) * out_weight).sum(), [x, w])


# ---- cross entropy ----------------------------------------------------------


def test_cross_entropy_uniform():
    loss = cross_entropy_logits(Tensor([[0.0, 0.0]]), [0])
    assert abs(float(loss.data) - math.log(2.0)) < 1e-6


def test_cross_entropy_saturated_correct():
    loss = cross_entropy_logits(Tensor([[20.0, -20.0]]), [0])
    assert float(loss.data) < 1e-6


def test_cross_entropy_label_error():
    with pytest.raises(LabelError):
        cross_entropy_logits(Tensor([[0.0, 0.0]]), [2])


def test_cross_entropy_gradient():
    rng = np.random.default_rng(8)
    logits = Parameter(rng.normal(size=(5, 2)), "logits")
    labels = rng.integers(0, 2, size=5)
    fd_check(lambda: cross_entropy_logits(logits, labels), [logits])


def test_cross_entropy_gradient_is_softmax_minus_onehot():
    rng = np.random.default_rng(9)
    logits = Parameter(rng.normal(size=(4, 2)), "logits")
    labels = np.array([0, 1, 1, 0])
    loss = cross_entropy_logits(logits, labels)
    loss.backward()
    e = np.exp(logits.data - logits.data.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    onehot = np.eye(2)[labels]
    np.testing.assert_allclose(logits.grad, (p - onehot) / 4, rtol=1e-5, atol=1e-7)


# ---- misc ops ---------------------------------------------------------------


def test_non_finite_forward_raises():
    x = Tensor([[1e30]])
    with np.errstate(over="ignore"):
        with pytest.raises(NonFiniteError):
            _ = x * 1e30  # overflows float32


def test_concat_and_take_rows_gradients():
    rng = np.random.default_rng(10)
    a = Parameter(rng.normal(size=(2, 3)), "a")
    b = Parameter(rng.normal(size=(4, 3)), "b")
    idx = [0, 2, 2, 5]
    w = Tensor(rng.normal(size=(4, 3)))
    fd_check(lambda: (take_rows(concat([a, b], axis=0), idx) * w).sum(), [a, b])


def test_time_interp_endpoints_and_gradient():
    rng = np.random.default_rng(11)
    x = Parameter(rng.normal(size=(5, 3)), "x")
    out = time_interp(x, 9)
    np.testing.assert_allclose(out.data[0], x.data[0], rtol=1e-6)
    np.testing.assert_allclose(out.data[-1], x.data[-1], rtol=1e-6)
    w = Tensor(rng.normal(size=(9, 3)))
    fd_check(lambda: (time_interp(x, 9) * w).sum(), [x])


def test_time_interp_constant_preserved():
    out = time_interp(Tensor(np.full((4, 2), 5.0)), 11)
    np.testing.assert_allclose(out.data, np.full((11, 2), 5.0), rtol=1e-6)


def test_dropout_inverted_scaling_and_determinism():
    from trisleep.numcore import generator

    x = Tensor(np.ones((100, 100)))
    out1 = dropout(x, 0.3, generator(5, "drop"))
    out2 = dropout(x, 0.3, generator(5, "drop"))
    np.testing.assert_array_equal(out1.data, out2.data)
    kept = out1.data != 0
    np.testing.assert_allclose(out1.data[kept], 1.0 / 0.7, rtol=1e-6)
    assert abs(kept.mean() - 0.7) < 0.02


def test_forward_bit_reproducible():
    from trisleep.numcore import generator

    def run():
        rng = generator(123, "repro")
        x = Tensor(rng.normal(size=(8, 8)))
        w = Tensor(rng.normal(size=(8, 8)))
        return matmul(softmax_rows(matmul(x, w)), w).data

    assert np.array_equal(run(), run())


def test_mean_and_sum_gradients():
    rng = np.random.default_rng(12)
    x = Parameter(rng.normal(size=(3, 4)), "x")
    fd_check(lambda: (x.mean(axis=0) * Tensor([1.0, 2.0, 3.0, 4.0])).sum(), [x])
    fd_check(lambda: x.gelu().sum(), [x])
    fd_check(lambda: x.relu().mean() + (x * x).mean(), [x])
