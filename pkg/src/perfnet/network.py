"""Trainable networks instantiated from a :class:`~perfnet.arch.LayerStack`."""

from __future__ import annotations

import numpy as np

from . import nn
from .arch import (
    ActivationLayer,
    Conv1dLayer,
    DenseLayer,
    FlattenLayer,
    LayerStack,
    ResidualBlockLayer,
    enumerate_layer_shapes,
)


class Dense:
    input_grad = True

    def __init__(self, in_units, units, rng, name="dense"):
        self.p = nn.init_dense(in_units, units, rng)
        self.name = name

    def params(self):
        return [self.p.weights, self.p.bias]

    def forward(self, x):
        self._x = x
        return nn.dense_forward(x, self.p, self.name)

    def backward(self, grad):
        gx, gw, gb = nn.dense_backward(self._x, self.p, grad, self.name, self.input_grad)
        self.grads = [gw, gb]
        return gx


class Conv1d:
    input_grad = True

    def __init__(self, in_channels, layer: Conv1dLayer, rng, name="conv1d"):
        self.p = nn.init_conv1d(
            in_channels, layer.filters, layer.kernel_size, rng, layer.stride, layer.padding
        )
        self.name = name

    def params(self):
        return [self.p.kernels, self.p.bias]

    def forward(self, x):
        self._x = x
        out, self._cols = nn.conv1d_forward(x, self.p, self.name, return_columns=True)
        return out

    def backward(self, grad):
        gx, gk, gb = nn.conv1d_backward(
            self._x, self.p, grad, self.name, self.input_grad, columns=self._cols
        )
        self.grads = [gk, gb]
        return gx


class Activation:
    def __init__(self, kind):
        self.kind = kind
        self.grads = []

    def params(self):
        return []

    def forward(self, x):
        self._x = x
        return nn.activation_apply(self.kind, x)

    def backward(self, grad):
        return nn.activation_backward(self.kind, self._x, grad)


class Flatten:
    grads = []

    def params(self):
        return []

    def forward(self, x):
        self._shape = x.shape
        return nn.flatten(x)

    def backward(self, grad):
        return nn.flatten_backward(grad, self._shape)


class ResidualBlock:
    """conv -> act -> conv -> act -> conv, merged with the bypass, then act."""

    def __init__(self, in_channels, layer: ResidualBlockLayer, rng, name="block"):
        self.main = []
        channels = in_channels
        for i, conv in enumerate(layer.convs):
            self.main.append(Conv1d(channels, conv, rng, f"{name}.conv{i + 1}"))
            if i < len(layer.convs) - 1:
                self.main.append(Activation(layer.activation))
            channels = conv.filters
        self.shortcut = (
            None if layer.shortcut is None else Conv1d(in_channels, layer.shortcut, rng, f"{name}.bypass")
        )
        self.out_act = Activation(layer.activation)

    def _parts(self):
        parts = list(self.main)
        if self.shortcut is not None:
            parts.append(self.shortcut)
        return parts

    def params(self):
        return [p for part in self._parts() for p in part.params()]

    @property
    def grads(self):
        return [g for part in self._parts() for g in part.grads]

    def forward(self, x):
        h = x
        for layer in self.main:
            h = layer.forward(h)
        bypass = x if self.shortcut is None else self.shortcut.forward(x)
        return self.out_act.forward(nn.residual_add(h, bypass))

    def backward(self, grad):
        grad = self.out_act.backward(grad)
        g_main, g_bypass = nn.residual_add_backward(grad)
        for layer in reversed(self.main):
            g_main = layer.backward(g_main)
        if self.shortcut is not None:
            g_bypass = self.shortcut.backward(g_bypass)
        return g_main + g_bypass


class Network:
    """Sequential model whose final layer emits one value per sample."""

    def __init__(self, stack: LayerStack, rng):
        self.stack = stack
        self.input_shape = tuple(stack.input_shape)
        shapes = enumerate_layer_shapes(stack)
        self.layers = []
        for i, (layer, shape) in enumerate(zip(stack.layers, shapes)):
            name = f"layer{i}"
            if isinstance(layer, DenseLayer):
                self.layers.append(Dense(shape[0], layer.units, rng, name))
            elif isinstance(layer, Conv1dLayer):
                self.layers.append(Conv1d(shape[0], layer, rng, name))
            elif isinstance(layer, ActivationLayer):
                self.layers.append(Activation(layer.kind))
            elif isinstance(layer, FlattenLayer):
                self.layers.append(Flatten())
            elif isinstance(layer, ResidualBlockLayer):
                self.layers.append(ResidualBlock(shape[0], layer, rng, name))
            else:
                raise TypeError(f"unknown layer {layer!r}")
        if self.layers and isinstance(self.layers[0], (Dense, Conv1d)):
            # nothing upstream of the input needs a gradient
            self.layers[0].input_grad = False

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def grads(self):
        return [g for layer in self.layers for g in layer.grads]

    def get_weights(self):
        return [p.copy() for p in self.params()]

    def set_weights(self, weights):
        for p, w in zip(self.params(), weights):
            p[...] = w

    def _reshape(self, X):
        X = np.asarray(X, dtype=np.float64)
        return X.reshape((X.shape[0],) + self.input_shape)

    def forward(self, X):
        """``X`` is ``(batch, n_features)``; returns ``(batch,)`` predictions."""
        h = self._reshape(X)
        for layer in self.layers:
            h = layer.forward(h)
        return h[:, 0]

    def backward(self, grad_pred):
        g = np.asarray(grad_pred, dtype=np.float64)[:, None]
        for layer in reversed(self.layers):
            g = layer.backward(g)
            if g is None:
                break
        return g

    def predict(self, X, chunk=512):
        X = np.asarray(X, dtype=np.float64)
        if len(X) == 0:
            return np.zeros(0)
        return np.concatenate([self.forward(X[i : i + chunk]) for i in range(0, len(X), chunk)])
