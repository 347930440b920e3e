"""Finite-difference gradient checking (run in float64)."""
from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor


def numeric_grad(fn, inputs, wrt, h=1e-5):
    """Central differences of scalar ``fn(*inputs)`` with respect to ``inputs[wrt]``."""
    x = inputs[wrt].data
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        plus = float(fn(*inputs).data)
        flat[i] = orig - h
        minus = float(fn(*inputs).data)
        flat[i] = orig
        gflat[i] = (plus - minus) / (2 * h)
    return grad


def analytic_grads(fn, inputs):
    for t in inputs:
        t.grad = None
    with Tape() as tape:
        out = fn(*inputs)
    tape.backward(out)
    return [t.grad for t in inputs]


def relative_error(a, b):
    a = np.zeros(1) if a is None else np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def check_gradients(fn, inputs, h=1e-5):
    """Return the worst relative error over all inputs that require grad.

    ``fn`` must map the input tensors to a scalar tensor. A random projection
    of vector outputs is the caller's job (``weighted_sum`` helps).
    """
    inputs = [t if isinstance(t, Tensor) else Tensor(t) for t in inputs]
    analytic = analytic_grads(fn, inputs)
    worst = 0.0
    for i, t in enumerate(inputs):
        if not t.requires_grad:
            continue
        worst = max(worst, relative_error(analytic[i], numeric_grad(fn, inputs, i, h)))
    return worst


def weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    from . import ops

    return ops.sum(ops.mul(out, Tensor(weights)))
