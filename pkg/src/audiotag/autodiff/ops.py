"""Differentiable kernels.

Every op computes in the dtype of its inputs (float32 for training, float64
for gradient checks) and returns a :class:`Tensor`. Convolutions follow the
cross-correlation convention (no kernel flip).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, make_output

BCE_EPS = 1e-7


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --------------------------------------------------------------------------
# elementwise and structural


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make_output(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make_output(
        "sub",
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make_output(
        "mul",
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def sum(x):  # noqa: A001 - mirrors numpy naming
    return make_output(
        "sum",
        x.data.sum(),
        (x,),
        lambda g: (np.broadcast_to(g, x.shape).astype(x.dtype),),
    )


def mean(x):
    n = x.size
    return make_output(
        "mean",
        x.data.mean(),
        (x,),
        lambda g: (np.full(x.shape, g / n, dtype=x.dtype),),
    )


def reshape(x, shape):
    return make_output(
        "reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),)
    )


def transpose(x, axes):
    inverse = np.argsort(axes)
    return make_output(
        "transpose",
        np.ascontiguousarray(x.data.transpose(axes)),
        (x,),
        lambda g: (g.transpose(inverse),),
    )


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:])
        )

    return make_output(
        "concat", np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward
    )


def slice_axis(x, axis, start, stop):
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def backward(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return make_output("slice", x.data[index].copy(), (x,), backward)


def relu(x):
    mask = x.data > 0
    return make_output("relu", x.data * mask, (x,), lambda g: (g * mask,))


def sigmoid(x):
    # split by sign so neither branch overflows
    z = x.data
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(z.dtype)
    return make_output("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def softmax(x):
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return make_output("softmax", out, (x,), backward)


def dropout(x, p, rng=None, training=True):
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    rng = rng if rng is not None else np.random.default_rng()
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return make_output("dropout", x.data * mask, (x,), lambda g: (g * mask,))


# --------------------------------------------------------------------------
# dense and convolution


def linear(x, weight, bias=None):
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input dim {x.shape[-1]} != weight dim {weight.shape[1]}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        gx = g @ weight.data
        gw = g.reshape(-1, g.shape[-1]).T @ x.data.reshape(-1, x.shape[-1])
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0) if bias is not None else None
        return gx, gw, gb

    return make_output("linear", out, (x, weight, bias), backward)


def conv_output_length(length, kernel, stride=1, dilation=1, padding=0):
    return (length + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def _conv1d_raw(x, w, stride, dilation, padding):
    """Returns output [B, O, Lo] and the column matrix [B, C*K, Lo]."""
    B, C, L = x.shape
    O, _, K = w.shape
    Lo = conv_output_length(L, K, stride, dilation, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding))) if padding else np.ascontiguousarray(x)
    s0, s1, s2 = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp, (B, C, K, Lo), (s0, s1, dilation * s2, stride * s2), writeable=False
    )
    cols = win.reshape(B, C * K, Lo)
    return np.matmul(w.reshape(O, C * K), cols), cols, xp.shape


def conv1d(x, weight, bias=None, stride=1, dilation=1, padding=0):
    """x [B, C_in, L] * weight [C_out, C_in, K] -> [B, C_out, L_out]."""
    B, C, L = x.shape
    O, Cw, K = weight.shape
    if C != Cw:
        raise ShapeError(f"conv1d: input has {C} channels, weight expects {Cw}")
    span = dilation * (K - 1) + 1
    if L + 2 * padding < span:
        raise ShapeError(f"conv1d: kernel span {span} exceeds padded length {L + 2 * padding}")
    out, cols, padded_shape = _conv1d_raw(x.data, weight.data, stride, dilation, padding)
    Lo = out.shape[2]
    if bias is not None:
        out = out + bias.data[None, :, None]

    def backward(g):
        gw = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(O, C, K)
        gb = g.sum(axis=(0, 2)) if bias is not None else None
        if stride == 1 and span - 1 - padding >= 0:
            # transposed convolution: correlate with the flipped, channel-swapped kernel
            wt = np.ascontiguousarray(weight.data[:, :, ::-1].transpose(1, 0, 2))
            gx, _, _ = _conv1d_raw(g, wt, 1, dilation, span - 1 - padding)
            return gx, gw, gb
        gcols = np.matmul(weight.data.reshape(O, C * K).T, g).reshape(B, C, K, Lo)
        gxp = np.zeros(padded_shape, dtype=g.dtype)
        for k in range(K):
            start = k * dilation
            gxp[:, :, start : start + stride * (Lo - 1) + 1 : stride] += gcols[:, :, k]
        gx = gxp[:, :, padding : padding + L] if padding else gxp
        return gx, gw, gb

    return make_output("conv1d", out, (x, weight, bias), backward)


def _conv2d_raw(x, w, padding):
    """Returns output [B, O, Ho, Wo] and the column matrix [B, C*kh*kw, Ho*Wo]."""
    B, C, H, W = x.shape
    O, _, kh, kw = w.shape
    Ho = H + 2 * padding - kh + 1
    Wo = W + 2 * padding - kw + 1
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(B, C * kh * kw, Ho * Wo)
    out = np.matmul(w.reshape(O, -1), cols).reshape(B, O, Ho, Wo)
    return out, cols


def conv2d(x, weight, bias=None, stride=1, padding=1):
    """x [B, C_in, H, W] * weight [C_out, C_in, kh, kw] -> [B, C_out, H_out, W_out].

    Only stride 1 is needed by the models; other strides are rejected.
    """
    B, C, H, W = x.shape
    O, Cw, kh, kw = weight.shape
    if C != Cw:
        raise ShapeError(f"conv2d: input has {C} channels, weight expects {Cw}")
    if stride != 1:
        raise ShapeError("conv2d: only stride 1 is supported")
    if H + 2 * padding < kh or W + 2 * padding < kw:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} does not fit padded input {H}x{W}")
    if padding > min(kh, kw) - 1:
        raise ShapeError(f"conv2d: padding {padding} exceeds kernel size - 1")
    out, cols = _conv2d_raw(x.data, weight.data, padding)
    Ho, Wo = out.shape[2:]
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward(g):
        g2 = g.reshape(B, O, Ho * Wo)
        gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        wt = np.ascontiguousarray(weight.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        if kh == kw:
            gx, _ = _conv2d_raw(g, wt, kh - 1 - padding)
        else:
            gp = np.pad(g, ((0, 0), (0, 0), (kh - 1 - padding,) * 2, (kw - 1 - padding,) * 2))
            gx, _ = _conv2d_raw(gp, wt, 0)
        return gx, gw, gb

    return make_output("conv2d", out, (x, weight, bias), backward)


# --------------------------------------------------------------------------
# normalization


@dataclass
class BatchNormState:
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5
    training: bool = True

    @classmethod
    def create(cls, n_channels, dtype=np.float32, name="bn", **kw):
        return cls(
            gamma=Tensor(np.ones(n_channels, dtype=dtype), requires_grad=True, name=f"{name}.gamma"),
            beta=Tensor(np.zeros(n_channels, dtype=dtype), requires_grad=True, name=f"{name}.beta"),
            running_mean=np.zeros(n_channels, dtype=dtype),
            running_var=np.ones(n_channels, dtype=dtype),
            **kw,
        )

    @property
    def mode(self):
        return "train" if self.training else "eval"


def batchnorm(x, state: BatchNormState, training=None):
    """Per-channel normalization over every axis except axis 1."""
    training = state.training if training is None else training
    C = x.shape[1]
    if state.gamma.shape != (C,):
        raise ShapeError(f"batchnorm: {C} channels but state has {state.gamma.shape[0]}")
    axes = (0,) + tuple(range(2, x.data.ndim))
    bshape = (1, C) + (1,) * (x.data.ndim - 2)
    gamma, beta = state.gamma, state.beta
    if training:
        n = x.size // C
        if n < 2:
            raise ValueError("degenerate batch: batchnorm needs more than one value per channel")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        m = state.momentum
        state.running_mean[...] = (1 - m) * state.running_mean + m * mu
        # running variance tracks the unbiased estimate
        state.running_var[...] = (1 - m) * state.running_var + m * var * (n / (n - 1))
    else:
        n = None
        mu = state.running_mean
        var = state.running_var
    invstd = (1.0 / np.sqrt(var + state.eps)).astype(x.dtype)
    xhat = (x.data - mu.reshape(bshape)) * invstd.reshape(bshape)
    out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)

    def backward(g):
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(bshape)
        if training:
            gx = (invstd.reshape(bshape) / n) * (
                n * dxhat
                - dxhat.sum(axis=axes).reshape(bshape)
                - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape)
            )
        else:
            gx = dxhat * invstd.reshape(bshape)
        return gx, ggamma, gbeta

    return make_output("batchnorm", out.astype(x.dtype, copy=False), (x, gamma, beta), backward)


# --------------------------------------------------------------------------
# pooling


def avgpool2d(x, size=2):
    """Non-overlapping average pooling; trailing rows/columns that do not fill
    a window are dropped."""
    B, C, H, W = x.shape
    Ho, Wo = H // size, W // size
    if Ho == 0 or Wo == 0:
        raise ShapeError(f"avgpool2d: input {H}x{W} smaller than window {size}")
    crop = x.data[:, :, : Ho * size, : Wo * size]
    out = crop.reshape(B, C, Ho, size, Wo, size).mean(axis=(3, 5))

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[:, :, : Ho * size, : Wo * size] = np.repeat(
            np.repeat(g / (size * size), size, axis=2), size, axis=3
        )
        return (gx,)

    return make_output("avgpool2d", out, (x,), backward)


def maxpool1d(x, size=4):
    """Non-overlapping max pooling along the last axis (stride == size)."""
    B, C, L = x.shape
    Lo = L // size
    if Lo == 0:
        raise ShapeError(f"maxpool1d: length {L} smaller than window {size}")
    blocks = x.data[:, :, : Lo * size].reshape(B, C, Lo, size)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gx = np.zeros_like(x.data)
        gx[:, :, : Lo * size] = gb.reshape(B, C, Lo * size)
        return (gx,)

    return make_output("maxpool1d", out, (x,), backward)


def global_pool(x):
    """[B, C, T, F] -> [B, C]: mean over (T, F) plus max over (T, F)."""
    B, C = x.shape[:2]
    flat = x.data.reshape(B, C, -1)
    n = flat.shape[-1]
    arg = flat.argmax(axis=-1)
    out = flat.mean(axis=-1) + np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gf = np.repeat((g / n)[..., None], n, axis=-1).astype(g.dtype)
        np.put_along_axis(
            gf, arg[..., None], np.take_along_axis(gf, arg[..., None], axis=-1) + g[..., None], axis=-1
        )
        return (gf.reshape(x.shape),)

    return make_output("global_pool", out, (x,), backward)


# --------------------------------------------------------------------------
# losses


def bce_loss(pred, target, eps=BCE_EPS):
    """Binary cross-entropy summed over classes and averaged over the batch."""
    y = target.data if isinstance(target, Tensor) else np.asarray(target)
    if y.shape != pred.shape:
        raise ShapeError(f"bce_loss: target {y.shape} vs prediction {pred.shape}")
    if np.any(y < 0) or np.any(y > 1):
        raise ValueError("bce_loss: targets must lie in [0, 1]")
    y = y.astype(pred.dtype, copy=False)
    p = np.clip(pred.data, eps, 1.0 - eps)
    batch = pred.shape[0] if pred.data.ndim > 1 else 1
    loss = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).sum() / batch
    inside = (pred.data >= eps) & (pred.data <= 1.0 - eps)

    def backward(g):
        return (g * inside * (-(y / p) + (1.0 - y) / (1.0 - p)) / batch,)

    return make_output("bce_loss", np.asarray(loss, dtype=pred.dtype), (pred,), backward)


def softmax_cross_entropy(logits, target):
    """Cross-entropy of softmax(logits) against target distributions, batch mean."""
    y = target.data if isinstance(target, Tensor) else np.asarray(target)
    y = y.astype(logits.dtype, copy=False)
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    batch = logits.shape[0]
    loss = -(y * logp).sum() / batch

    def backward(g):
        p = np.exp(logp)
        return (g * (p * y.sum(axis=-1, keepdims=True) - y) / batch,)

    return make_output("softmax_cross_entropy", np.asarray(loss, dtype=logits.dtype), (logits,), backward)
