"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, grads, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Update ``params`` (numpy arrays) in place; returns the state."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if len(state.m) != len(params) or any(m.shape != p.shape for m, p in zip(state.m, params)):
        raise ValueError("optimizer state does not match parameter shapes")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype, copy=False)
    return state


class Adam:
    """Optimizer over a list of trainable :class:`Tensor` objects."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState.zeros_like([p.data for p in self.params])

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        adam_step(
            [p.data for p in self.params],
            [p.grad for p in self.params],
            self.state,
            self.lr,
            self.beta1,
            self.beta2,
            self.eps,
        )
