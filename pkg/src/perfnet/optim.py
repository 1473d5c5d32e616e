"""Mini-batch parameter update rules.

Each optimizer updates a list of parameter arrays in place.  Accumulators are
created lazily (zero-filled, shaped like the parameter) on the first step.
"""

from __future__ import annotations

import numpy as np

OPTIMIZERS = ("sgd", "rmsprop", "adam")


class Optimizer:
    def __init__(self, lr=0.001, epsilon=1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.epsilon = epsilon
        self.t = 0
        self._slots = None

    def _new_slots(self, param):
        return {}

    def step(self, params, grads):
        if len(params) != len(grads):
            raise ValueError(f"{len(params)} params but {len(grads)} grads")
        for p, g in zip(params, grads):
            if p.shape != g.shape:
                raise ValueError(f"param shape {p.shape} != grad shape {g.shape}")
        if self._slots is None:
            self._slots = [self._new_slots(p) for p in params]
        self.t += 1
        for p, g, slots in zip(params, grads, self._slots):
            p -= self._update(g, slots)

    def _update(self, grad, slots):
        raise NotImplementedError


class SGD(Optimizer):
    """Plain batched SGD, no momentum."""

    def _update(self, grad, slots):
        return self.lr * grad


class RMSprop(Optimizer):
    def __init__(self, lr=0.001, rho=0.9, epsilon=1e-8):
        super().__init__(lr, epsilon)
        self.rho = rho

    def _new_slots(self, param):
        return {"v": np.zeros_like(param)}

    def _update(self, grad, slots):
        v = slots["v"]
        v *= self.rho
        v += (1.0 - self.rho) * grad**2
        return self.lr * grad / (np.sqrt(v) + self.epsilon)


class Adam(Optimizer):
    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8):
        super().__init__(lr, epsilon)
        self.beta1 = beta1
        self.beta2 = beta2

    def _new_slots(self, param):
        return {"m": np.zeros_like(param), "v": np.zeros_like(param)}

    def _update(self, grad, slots):
        m, v = slots["m"], slots["v"]
        m *= self.beta1
        m += (1.0 - self.beta1) * grad
        v *= self.beta2
        v += (1.0 - self.beta2) * grad * grad
        # lr * m_hat / (sqrt(v_hat) + eps) with the bias corrections folded into scalars
        c1 = 1.0 - self.beta1**self.t
        root_c2 = np.sqrt(1.0 - self.beta2**self.t)
        denom = np.sqrt(v)
        denom += self.epsilon * root_c2
        step = m * (self.lr * root_c2 / c1)
        step /= denom
        return step


def make_optimizer(kind: str, lr=0.001, **hyper) -> Optimizer:
    kind = kind.lower()
    if kind == "sgd":
        return SGD(lr, **hyper)
    if kind == "rmsprop":
        return RMSprop(lr, **hyper)
    if kind == "adam":
        return Adam(lr, **hyper)
    raise ValueError(f"unknown optimizer {kind!r}; expected one of {OPTIMIZERS}")
