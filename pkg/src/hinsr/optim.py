"""Parameter initialization and the Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .tensor import Tensor


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float64, name=None) -> Tensor:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    w = rng.uniform(-a, a, size=(fan_in, fan_out)).astype(dtype)
    return Tensor(w, requires_grad=True, name=name)


def zeros(shape, dtype=np.float64, name=None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True, name=name)


def ones(shape, dtype=np.float64, name=None) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True, name=name)


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params: dict, grads: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8,
              state: AdamState | None = None) -> AdamState:
    """Apply one bias-corrected Adam update in place and return the state.

    Parameters whose gradient is missing are left alone.
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if state is None:
        state = AdamState()
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        p.data = (p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.data.dtype, copy=False)
    return state


class Adam:
    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        grads = {n: p.grad for n, p in self.params.items()}
        adam_step(self.params, grads, self.lr, self.beta1, self.beta2, self.eps, self.state)
