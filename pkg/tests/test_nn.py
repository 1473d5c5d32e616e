import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gradcheck
from oracles import loop_conv1d
from perfnet import nn

SEEDS = st.integers(0, 2**32 - 1)


def test_glorot_limit_examples():
    assert nn.glorot_limit(24, 512) == pytest.approx(np.sqrt(6 / 536))
    assert nn.glorot_limit(3, 3) == 1.0
    w = nn.glorot_uniform_init(24, 512, np.random.default_rng(0))
    assert w.shape == (512, 24)
    assert np.abs(w).max() <= np.sqrt(6 / 536)


def test_glorot_same_seed_is_bitwise_identical():
    a = nn.glorot_uniform_init(7, 5, np.random.default_rng(3))
    b = nn.glorot_uniform_init(7, 5, np.random.default_rng(3))
    assert np.array_equal(a, b)


def test_glorot_moments():
    w = nn.glorot_uniform_init(300, 300, np.random.default_rng(11))
    limit = nn.glorot_limit(300, 300)
    assert abs(w.mean()) < 0.05 * limit
    assert w.var() == pytest.approx(limit**2 / 3, rel=0.05)


def test_init_biases_are_zero():
    rng = np.random.default_rng(0)
    assert not nn.init_dense(4, 3, rng).bias.any()
    assert not nn.init_conv1d(2, 3, 3, rng).bias.any()


def test_dense_examples():
    W = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert nn.dense_forward([1, 0], nn.DenseParams(W, np.zeros(2))).tolist() == [1, 3]
    assert nn.dense_forward([0, 0], nn.DenseParams(W, np.array([5.0, -5.0]))).tolist() == [5, -5]
    p = nn.DenseParams(np.array([[0.5, 0.5], [1.0, -1.0]]), np.array([1.0, 0.0]))
    assert nn.dense_forward([1, 1], p).tolist() == [2, 0]


def test_dense_backward_example():
    p = nn.DenseParams(np.array([[1.0, 2.0], [3.0, 4.0]]), np.zeros(2))
    gx, gw, gb = nn.dense_backward(np.array([1.0, 0.0]), p, np.array([1.0, 1.0]))
    assert gx.tolist() == [4, 6]
    assert gw.tolist() == [[1, 0], [1, 0]]
    assert gb.tolist() == [1, 1]
    gx, gw, gb = nn.dense_backward(np.array([1.0, 0.0]), p, np.zeros(2))
    assert not gx.any() and not gw.any() and not gb.any()


def test_dense_shape_error_names_layer():
    p = nn.DenseParams(np.zeros((2, 3)), np.zeros(2))
    with pytest.raises(nn.ShapeError, match="fc3"):
        nn.dense_forward(np.zeros(4), p, name="fc3")


def test_conv_examples():
    x = np.array([[1.0, 2.0, 3.0, 4.0]])
    p = nn.Conv1dParams(np.array([[[1.0, 0.0, -1.0]]]), np.zeros(1))
    assert nn.conv1d_forward(x, p).tolist() == [[-2, -2]]
    p.stride = 2
    assert nn.conv1d_forward(x, p).tolist() == [[-2]]
    zero = nn.Conv1dParams(np.zeros((1, 1, 3)), np.array([7.0]))
    assert nn.conv1d_forward(x, zero).tolist() == [[7, 7]]


def test_conv_too_short_input_is_rejected():
    p = nn.Conv1dParams(np.zeros((1, 1, 5)), np.zeros(1))
    with pytest.raises(nn.ShapeError, match="shorter than kernel"):
        nn.conv1d_forward(np.zeros((1, 4)), p)


def test_conv_same_padding_requires_stride_one():
    p = nn.Conv1dParams(np.zeros((1, 1, 3)), np.zeros(1), stride=2, padding="same")
    with pytest.raises(nn.ShapeError, match="stride 1"):
        nn.conv1d_forward(np.zeros((1, 6)), p)


def test_conv_full_width_kernel_gradient_is_outer_product():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(3, 6))
    p = nn.Conv1dParams(rng.normal(size=(1, 3, 6)), np.zeros(1))
    g = np.array([[2.5]])
    _, gk, _ = nn.conv1d_backward(x, p, g)
    assert np.allclose(gk[0], 2.5 * x, rtol=0, atol=1e-15)


@settings(max_examples=30, deadline=None, derandomize=True)
@given(seed=SEEDS, stride=st.sampled_from([1, 2, 3]), padding=st.sampled_from(["valid", "same"]))
def test_conv_matches_loop_oracle(seed, stride, padding):
    if padding == "same":
        stride = 1
    rng = np.random.default_rng(seed)
    c, f, k = rng.integers(1, 4, size=3)
    length = rng.integers(k, 14)
    x = rng.normal(size=(c, length))
    p = nn.Conv1dParams(rng.normal(size=(f, c, k)), rng.normal(size=f), int(stride), padding)
    out = nn.conv1d_forward(x, p)
    assert np.allclose(out, loop_conv1d(x, p.kernels, p.bias, int(stride), padding), rtol=0, atol=1e-12)
    assert out.shape[1] == nn.conv_output_length(length, k, int(stride), padding)


@settings(max_examples=25, deadline=None, derandomize=True)
@given(seed=SEEDS)
def test_conv_full_width_equals_dense(seed):
    rng = np.random.default_rng(seed)
    length = int(rng.integers(1, 16))
    x = rng.normal(size=(1, length))
    kernel = rng.normal(size=length)
    b = rng.normal()
    conv = nn.conv1d_forward(x, nn.Conv1dParams(kernel.reshape(1, 1, -1), np.array([b])))
    dense = nn.dense_forward(x[0], nn.DenseParams(kernel.reshape(1, -1), np.array([b])))
    assert conv[0, 0] == dense[0]


@settings(max_examples=25, deadline=None, derandomize=True)
@given(seed=SEEDS)
def test_forward_passes_are_pure(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 3, 9))
    p = nn.Conv1dParams(rng.normal(size=(4, 3, 3)), rng.normal(size=4))
    assert np.array_equal(nn.conv1d_forward(x, p), nn.conv1d_forward(x.copy(), p))


@settings(max_examples=25, deadline=None, derandomize=True)
@given(seed=SEEDS, op=st.sampled_from(sorted(gradcheck.OPS)))
def test_gradients_match_finite_differences(seed, op):
    assert gradcheck.OPS[op](np.random.default_rng(seed)) <= 1e-4


def test_activation_examples():
    assert nn.activation_apply("relu", [-1, 0, 2]).tolist() == [0, 0, 2]
    assert nn.activation_apply("sigmoid", [0]).tolist() == [0.5]
    assert nn.activation_backward("tanh", [0.0], [3.0]).tolist() == [3]
    assert nn.activation_backward("relu", [0.0], [1.0]).tolist() == [0]


def test_sigmoid_saturates_without_overflow():
    with np.errstate(all="raise"):
        out = nn.activation_apply("sigmoid", np.array([-1000.0, 1000.0]))
    assert out.tolist() == [0.0, 1.0]


def test_residual_add():
    assert nn.residual_add([1, 2], [3, 4]).tolist() == [4, 6]
    x = np.random.default_rng(0).normal(size=(2, 3))
    assert np.array_equal(nn.residual_add(x, np.zeros_like(x)), x)
    with pytest.raises(nn.ShapeError, match=r"\(2, 3\).*\(2, 4\)"):
        nn.residual_add(np.zeros((2, 3)), np.zeros((2, 4)))


def test_flatten():
    assert nn.flatten([[1, 2], [3, 4]]).tolist() == [1, 2, 3, 4]
    assert nn.flatten(np.zeros((1, 24))).shape == (24,)
    x = np.arange(24.0).reshape(2, 3, 4)
    assert np.array_equal(nn.flatten_backward(nn.flatten(x), x.shape), x)


def test_loss_examples():
    assert nn.loss_value_and_grad("mse", [1.0, 2.0], [0.0, 0.0])[0] == 2.5
    assert nn.loss_value_and_grad("mae", [1.0, 2.0], [0.0, 0.0])[0] == 1.5
    for kind in nn.LOSSES:
        value, grad = nn.loss_value_and_grad(kind, [1.0, 2.0], [1.0, 2.0])
        assert value == 0 and not grad.any()
    with pytest.raises(ValueError, match="empty"):
        nn.loss_value_and_grad("mse", [], [])
