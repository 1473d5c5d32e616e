"""Finite-difference checks for every differentiable op.

Each ``check_*`` draws one random small instance from ``rng`` and returns the
largest relative error between the analytic and the central-difference
gradient over all of the op's inputs.  Inputs are kept away from the kinks of
relu and of the absolute loss.
"""

import numpy as np

from oracles import central_difference, relative_error
from perfnet import nn

H = 1e-5


def _away_from_zero(rng, shape, margin=1e-2):
    x = rng.normal(size=shape)
    return np.where(x >= 0, 1.0, -1.0) * (np.abs(x) + margin)


def check_dense(rng):
    batch, fan_in, fan_out = rng.integers(1, 5), rng.integers(1, 9), rng.integers(1, 9)
    x = rng.normal(size=(batch, fan_in))
    p = nn.DenseParams(rng.normal(size=(fan_out, fan_in)), rng.normal(size=fan_out))
    proj = rng.normal(size=(batch, fan_out))

    def f():
        return float(np.sum(nn.dense_forward(x, p) * proj))

    gx, gw, gb = nn.dense_backward(x, p, proj)
    return max(
        relative_error(gx, central_difference(f, x, H)),
        relative_error(gw, central_difference(f, p.weights, H)),
        relative_error(gb, central_difference(f, p.bias, H)),
    )


def check_conv1d(rng, stride=1, padding="valid"):
    batch = rng.integers(1, 3)
    channels, filters, k = rng.integers(1, 4), rng.integers(1, 4), rng.integers(1, 5)
    length = rng.integers(k, 13)
    x = rng.normal(size=(batch, channels, length))
    p = nn.Conv1dParams(rng.normal(size=(filters, channels, k)), rng.normal(size=filters), stride, padding)
    out = nn.conv1d_forward(x, p)
    proj = rng.normal(size=out.shape)

    def f():
        return float(np.sum(nn.conv1d_forward(x, p) * proj))

    gx, gk, gb = nn.conv1d_backward(x, p, proj)
    return max(
        relative_error(gx, central_difference(f, x, H)),
        relative_error(gk, central_difference(f, p.kernels, H)),
        relative_error(gb, central_difference(f, p.bias, H)),
    )


def check_activation(rng, kind):
    shape = (rng.integers(1, 5), rng.integers(1, 9))
    x = _away_from_zero(rng, shape) * 2
    proj = rng.normal(size=shape)

    def f():
        return float(np.sum(nn.activation_apply(kind, x) * proj))

    return relative_error(nn.activation_backward(kind, x, proj), central_difference(f, x, H))


def check_residual_add(rng):
    shape = (rng.integers(1, 4), rng.integers(1, 5), rng.integers(1, 9))
    main, bypass = rng.normal(size=shape), rng.normal(size=shape)
    proj = rng.normal(size=shape)

    def f():
        return float(np.sum(nn.residual_add(main, bypass) * proj))

    g_main, g_bypass = nn.residual_add_backward(proj)
    return max(
        relative_error(g_main, central_difference(f, main, H)),
        relative_error(g_bypass, central_difference(f, bypass, H)),
    )


def check_flatten(rng):
    shape = (rng.integers(1, 4), rng.integers(1, 5), rng.integers(1, 9))
    x = rng.normal(size=shape)
    proj = rng.normal(size=(shape[0], shape[1] * shape[2]))

    def f():
        return float(np.sum(nn.flatten(x) * proj))

    return relative_error(nn.flatten_backward(proj, x.shape), central_difference(f, x, H))


def check_loss(rng, kind):
    n = rng.integers(1, 17)
    truth = rng.normal(size=n)
    pred = truth + _away_from_zero(rng, n)

    def f():
        return nn.loss_value_and_grad(kind, pred, truth)[0]

    return relative_error(nn.loss_value_and_grad(kind, pred, truth)[1], central_difference(f, pred, H))


OPS = {
    "dense": check_dense,
    "conv1d stride 1 valid": lambda rng: check_conv1d(rng, 1, "valid"),
    "conv1d stride 2 valid": lambda rng: check_conv1d(rng, 2, "valid"),
    "conv1d stride 1 same": lambda rng: check_conv1d(rng, 1, "same"),
    "sigmoid": lambda rng: check_activation(rng, "sigmoid"),
    "tanh": lambda rng: check_activation(rng, "tanh"),
    "relu": lambda rng: check_activation(rng, "relu"),
    "identity": lambda rng: check_activation(rng, "identity"),
    "residual add": check_residual_add,
    "flatten": check_flatten,
    "mse": lambda rng: check_loss(rng, "mse"),
    "mae": lambda rng: check_loss(rng, "mae"),
}
