"""Numeric core: initialisation, layer passes, activations and losses.

Arrays are ``float64`` numpy arrays.  Every layer function accepts either a
single sample or a batch with a leading batch axis:

* dense:  ``(in_units,)`` or ``(batch, in_units)``
* conv1d: ``(channels, length)`` or ``(batch, channels, length)``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

ACTIVATIONS = ("sigmoid", "tanh", "relu", "identity")
LOSSES = ("mse", "mae")


class ShapeError(ValueError):
    """Raised when array shapes do not line up for an operation."""


@dataclass
class DenseParams:
    weights: np.ndarray  # (out_units, in_units)
    bias: np.ndarray  # (out_units,)

    @property
    def in_units(self) -> int:
        return self.weights.shape[1]

    @property
    def out_units(self) -> int:
        return self.weights.shape[0]


@dataclass
class Conv1dParams:
    kernels: np.ndarray  # (filters, in_channels, kernel_size)
    bias: np.ndarray  # (filters,)
    stride: int = 1
    padding: str = "valid"

    @property
    def filters(self) -> int:
        return self.kernels.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernels.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.kernels.shape[2]


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def glorot_uniform_init(fan_in, fan_out, rng, shape=None):
    """Draw weights uniformly from ``[-L, L]`` with ``L = sqrt(6 / (fan_in + fan_out))``.

    ``shape`` defaults to ``(fan_out, fan_in)``.  Convolution kernels pass their
    own shape together with receptive-field-scaled fans.
    """
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fan_in and fan_out must be >= 1, got {fan_in}, {fan_out}")
    limit = glorot_limit(fan_in, fan_out)
    if shape is None:
        shape = (fan_out, fan_in)
    return rng.uniform(-limit, limit, size=shape)


def init_dense(in_units: int, out_units: int, rng) -> DenseParams:
    return DenseParams(
        weights=glorot_uniform_init(in_units, out_units, rng),
        bias=np.zeros(out_units),
    )


def init_conv1d(in_channels, filters, kernel_size, rng, stride=1, padding="valid"):
    kernels = glorot_uniform_init(
        in_channels * kernel_size,
        filters * kernel_size,
        rng,
        shape=(filters, in_channels, kernel_size),
    )
    return Conv1dParams(kernels, np.zeros(filters), stride=stride, padding=padding)


# --------------------------------------------------------------------------
# dense


def dense_forward(x, params: DenseParams, name="dense"):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.in_units or x.ndim not in (1, 2):
        raise ShapeError(
            f"{name}: expected input with last axis {params.in_units}, got shape {x.shape}"
        )
    return x @ params.weights.T + params.bias


def dense_backward(x, params: DenseParams, grad_out, name="dense", input_grad=True):
    """Return ``(grad_x, grad_w, grad_b)``; parameter grads are summed over the batch.

    ``grad_x`` is ``None`` when ``input_grad`` is false.
    """
    x = np.asarray(x, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if x.shape[:-1] != grad_out.shape[:-1] or grad_out.shape[-1] != params.out_units:
        raise ShapeError(f"{name}: grad_out shape {grad_out.shape} does not match input {x.shape}")
    grad_x = grad_out @ params.weights if input_grad else None
    if x.ndim == 1:
        grad_w = np.outer(grad_out, x)
        grad_b = grad_out.copy()
    else:
        grad_w = grad_out.T @ x
        grad_b = grad_out.sum(axis=0)
    return grad_x, grad_w, grad_b


# --------------------------------------------------------------------------
# conv1d


def conv_output_length(length: int, kernel_size: int, stride: int = 1, padding="valid") -> int:
    """Output length of a 1D convolution; returns 0 when the window does not fit."""
    if padding == "same":
        return length
    if length < kernel_size:
        return 0
    return (length - kernel_size) // stride + 1


def _pad_widths(kernel_size: int, padding: str):
    if padding == "valid":
        return 0, 0
    left = (kernel_size - 1) // 2
    return left, kernel_size - 1 - left


def _check_conv_input(x, params: Conv1dParams, name):
    if params.padding == "same" and params.stride != 1:
        raise ShapeError(f"{name}: same padding requires stride 1, got stride {params.stride}")
    if x.ndim != 3 or x.shape[1] != params.in_channels:
        raise ShapeError(
            f"{name}: expected ({params.in_channels}, length) input, got shape {x.shape[1:]}"
        )
    if params.padding == "valid" and x.shape[2] < params.kernel_size:
        raise ShapeError(
            f"{name}: input length {x.shape[2]} is shorter than kernel size {params.kernel_size}"
        )


def _columns(x, params: Conv1dParams):
    """Unfold ``(B, C, L)`` into ``(B * T, C * k)`` sliding windows."""
    left, right = _pad_widths(params.kernel_size, params.padding)
    if left or right:
        x = np.pad(x, ((0, 0), (0, 0), (left, right)))
    windows = sliding_window_view(x, params.kernel_size, axis=2)[:, :, :: params.stride, :]
    batch, channels, steps, k = windows.shape
    cols = windows.transpose(0, 2, 1, 3).reshape(batch * steps, channels * k)
    return cols, steps


def conv1d_forward(x, params: Conv1dParams, name="conv1d", return_columns=False):
    """Cross-correlate ``x`` with every filter.

    With ``return_columns`` the unfolded input is returned as well so that
    :func:`conv1d_backward` can reuse it.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    _check_conv_input(x, params, name)
    cols, steps = _columns(x, params)
    out = cols @ params.kernels.reshape(params.filters, -1).T + params.bias
    out = out.reshape(x.shape[0], steps, params.filters).transpose(0, 2, 1)
    if single:
        out = out[0]
    return (out, cols) if return_columns else out


def conv1d_backward(x, params: Conv1dParams, grad_out, name="conv1d", input_grad=True, columns=None):
    """Return ``(grad_x, grad_kernels, grad_bias)`` for :func:`conv1d_forward`."""
    x = np.asarray(x, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x, grad_out = x[None], grad_out[None]
    _check_conv_input(x, params, name)
    batch, channels, length = x.shape
    k, stride, filters = params.kernel_size, params.stride, params.filters
    steps = conv_output_length(length, k, stride, params.padding)
    if grad_out.shape != (batch, filters, steps):
        raise ShapeError(f"{name}: grad_out shape {grad_out.shape} != {(batch, filters, steps)}")
    if columns is None:
        columns, _ = _columns(x, params)
    g = grad_out.transpose(1, 0, 2).reshape(filters, batch * steps)
    # columns rows are ordered (batch, step); g columns are (batch, step) too
    grad_kernels = (g @ columns).reshape(params.kernels.shape)
    grad_bias = g.sum(axis=1)
    if not input_grad:
        return None, grad_kernels, grad_bias
    # (B, C*k, T) -> (B, C, k, T)
    grad_cols = (params.kernels.reshape(filters, -1).T @ grad_out).reshape(batch, channels, k, steps)
    left, right = _pad_widths(k, params.padding)
    grad_padded = np.zeros((batch, channels, length + left + right))
    span = stride * (steps - 1) + 1
    for j in range(k):
        grad_padded[:, :, j : j + span : stride] += grad_cols[:, :, j, :]
    grad_x = grad_padded[:, :, left : left + length]
    if single:
        grad_x = grad_x[0]
    return grad_x, grad_kernels, grad_bias


# --------------------------------------------------------------------------
# activations


def activation_apply(kind: str, x):
    x = np.asarray(x, dtype=np.float64)
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "sigmoid":
        # tanh form avoids overflow in exp for large |x|
        return 0.5 * (1.0 + np.tanh(0.5 * x))
    if kind == "tanh":
        return np.tanh(x)
    if kind == "identity":
        return x.copy()
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_backward(kind: str, x, grad_out):
    """Gradient w.r.t. the pre-activation ``x``.  relu'(0) is taken as 0."""
    x = np.asarray(x, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if kind == "relu":
        return grad_out * (x > 0)
    if kind == "sigmoid":
        s = 0.5 * (1.0 + np.tanh(0.5 * x))
        return grad_out * s * (1.0 - s)
    if kind == "tanh":
        return grad_out * (1.0 - np.tanh(x) ** 2)
    if kind == "identity":
        return grad_out.copy()
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


# --------------------------------------------------------------------------
# structural ops


def residual_add(main, bypass):
    main = np.asarray(main, dtype=np.float64)
    bypass = np.asarray(bypass, dtype=np.float64)
    if main.shape != bypass.shape:
        raise ShapeError(
            f"residual merge needs equal shapes: main path {main.shape} vs bypass {bypass.shape}"
        )
    return main + bypass


def residual_add_backward(grad_out):
    """Both branches receive the incoming gradient unchanged."""
    return grad_out, grad_out


def flatten(x):
    """Row-major flatten of ``(channels, length)`` or batched ``(B, channels, length)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x.reshape(-1)
    if x.ndim == 3:
        return x.reshape(x.shape[0], -1)
    raise ShapeError(f"flatten expects a rank-2 or batched rank-3 input, got shape {x.shape}")


def flatten_backward(grad_out, input_shape):
    return np.asarray(grad_out).reshape(input_shape)


# --------------------------------------------------------------------------
# losses


def loss_value_and_grad(kind: str, pred, truth):
    """Mean loss over the batch and its gradient w.r.t. ``pred``.

    The MAE subgradient at a zero residual is 0.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"loss: pred shape {pred.shape} != truth shape {truth.shape}")
    n = pred.size
    if n == 0:
        raise ValueError("loss: empty batch")
    diff = pred - truth
    if kind == "mse":
        return float(np.mean(diff**2)), 2.0 * diff / n
    if kind == "mae":
        return float(np.mean(np.abs(diff))), np.sign(diff) / n
    raise ValueError(f"unknown loss {kind!r}; expected one of {LOSSES}")
