"""Tensors and the reverse-mode tape.

A :class:`Tape` records every differentiable op executed while it is active
(``with Tape() as tape: ...``). Ops run outside any tape, or on inputs that
do not require gradients, are not recorded, so inference pays nothing.
"""
from __future__ import annotations

import threading

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # arithmetic sugar, routed through the recorded ops
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops

        return ops.mul(self, -1.0)

    def sum(self):
        from . import ops

        return ops.sum(self)


class Node:
    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op, inputs, output, backward):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward


_local = threading.local()


def _stack():
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def current_tape():
    stack = _stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of executed ops; confined to the creating thread."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, op, inputs, output, backward):
        self.nodes.append(Node(op, inputs, output, backward))

    def backward(self, loss: Tensor):
        backward(self, loss)

    def first_nonfinite(self):
        """Name the first recorded op whose output contains NaN/Inf."""
        for i, node in enumerate(self.nodes):
            if not np.all(np.isfinite(node.output.data)):
                return f"#{i} {node.op} output {node.output.shape}"
        return None


def backward(tape: Tape, loss: Tensor):
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every leaf on the tape."""
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {loss.shape}")
    produced = {id(n.output) for n in tape.nodes}
    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not isinstance(inp, Tensor) or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
            if key not in produced:
                leaves[key] = inp
    if id(loss) not in produced and loss.requires_grad:
        leaves[id(loss)] = loss
    for key, leaf in leaves.items():
        g = grads[key]
        leaf.grad = g if leaf.grad is None else leaf.grad + g


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def make_output(op, data, inputs, backward_fn) -> Tensor:
    """Wrap an op result, recording it when a tape is active and any input needs grad."""
    out = Tensor(data)
    tape = current_tape()
    if tape is not None and any(isinstance(t, Tensor) and t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(op, inputs, out, backward_fn)
    return out
