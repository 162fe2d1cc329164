"""Differentiable primitives over channels-last ``(..., T, C)`` tensors."""

from __future__ import annotations

import math
from typing import Optional, Sequence, Union

import numpy as np

from .tensor import ShapeError, Tensor, make_result


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(g, b.shape) if b.requires_grad else None,
        )

    return make_result(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        )

    return make_result(out, (a, b), backward)


def scale(a: Tensor, factor: float) -> Tensor:
    out = a.data * a.data.dtype.type(factor)
    return make_result(out, (a,), lambda g: (g * factor,))


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)
    return make_result(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    out = np.swapaxes(a.data, -1, -2)
    return make_result(out, (a,), lambda g: (np.swapaxes(g, -1, -2),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes."""
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return make_result(out, (a, b), backward)


def dense(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``y = W x + b`` applied along the last extent, batched over the rest.

    ``weight`` is ``(m, n)``; ``x`` is ``(..., n)``.
    """
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"dense: input extent {x.shape[-1]} vs weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"dense: bias {bias.shape} vs weight {weight.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, weight.shape[1])
    y = x2 @ weight.data.T
    if bias is not None:
        y += bias.data
    out = y.reshape(lead + (weight.shape[0],))
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(-1, weight.shape[0])
        gx = (g2 @ weight.data).reshape(x.shape) if x.requires_grad else None
        gw = g2.T @ x2 if weight.requires_grad else None
        grads = [gx, gw]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return make_result(out, inputs, backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(x.data * mask, (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    # tanh form never overflows
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return make_result(s, (x,), lambda g: (g * s * (1.0 - s),))


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last extent, stabilised by max subtraction."""
    p = _softmax(x.data)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return make_result(p, (x,), backward)


def activation(x: Tensor, kind: str) -> Tensor:
    try:
        fn = {"relu": relu, "sigmoid": sigmoid, "softmax": softmax}[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(x)


def conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, dilation: int = 1) -> Tensor:
    """Stride-1 cross-correlation with zero "same" padding.

    x: ``(T, Cin)`` or ``(B, T, Cin)``; weight: ``(Cout, Cin, k)``.
    Output keeps length T for every kernel size and dilation; taps that
    fall outside the signal read zeros.
    """
    if dilation < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    if weight.ndim != 3:
        raise ShapeError(f"conv1d weight must be (Cout, Cin, k), got {weight.shape}")
    cout, cin, k = weight.shape
    if x.shape[-1] != cin:
        raise ShapeError(f"conv1d: input has {x.shape[-1]} channels, weight expects {cin}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv1d: bias {bias.shape} vs {cout} output channels")
    unbatched = x.ndim == 2
    xd = x.data[None] if unbatched else x.data
    b, t, _ = xd.shape
    span = dilation * (k - 1)
    left = span // 2
    xp = np.pad(xd, ((0, 0), (left, span - left), (0, 0)))
    # tap-major columns (B, T, k, Cin); each tap is one contiguous shifted copy
    cols = np.empty((b, t, k, cin), dtype=xd.dtype)
    for j in range(k):
        cols[:, :, j, :] = xp[:, j * dilation : j * dilation + t, :]
    cols = cols.reshape(b * t, k * cin)
    wmat = weight.data.transpose(0, 2, 1).reshape(cout, k * cin)
    y = cols @ wmat.T
    if bias is not None:
        y += bias.data
    out = y.reshape((t, cout) if unbatched else (b, t, cout))
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(b * t, cout)
        gx = None
        if x.requires_grad:
            gcols = (g2 @ wmat).reshape(b, t, k, cin)
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, j * dilation : j * dilation + t, :] += gcols[:, :, j, :]
            gx = gxp[:, left : left + t, :]
            gx = gx[0] if unbatched else gx
        gw = None
        if weight.requires_grad:
            gw = (g2.T @ cols).reshape(cout, k, cin).transpose(0, 2, 1)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return make_result(out, inputs, backward)


def max_pool1d(x: Tensor, width: int = 2, stride: int = 2) -> Tensor:
    """Non-overlapping max over time; a trailing remainder is dropped."""
    if width != stride:
        raise ValueError("only non-overlapping pooling (width == stride) is supported")
    t = x.shape[-2]
    if t < width:
        raise ShapeError(f"max_pool1d needs at least {width} time steps, got {t}")
    n = t // width
    lead, c = x.shape[:-2], x.shape[-1]
    windows = x.data[..., : n * width, :].reshape(lead + (n, width, c))
    idx = windows.argmax(axis=-2)
    out = np.take_along_axis(windows, idx[..., None, :], axis=-2)[..., 0, :]

    def backward(g):
        gw = np.zeros_like(windows)
        np.put_along_axis(gw, idx[..., None, :], g[..., None, :], axis=-2)
        gx = np.zeros_like(x.data)
        gx[..., : n * width, :] = gw.reshape(lead + (n * width, c))
        return (gx,)

    return make_result(out, (x,), backward)


def mean_time(x: Tensor, keepdims: bool = False) -> Tensor:
    """Average over the time axis (second to last)."""
    t = x.shape[-2]
    out = x.data.mean(axis=-2, keepdims=keepdims)

    def backward(g):
        g = g if keepdims else np.expand_dims(g, -2)
        return (np.broadcast_to(g / t, x.shape).copy(),)

    return make_result(out, (x,), backward)


def mean_var_pool(x: Tensor) -> Tensor:
    """Per-channel mean and population variance over time, concatenated.

    ``(..., T, C) -> (..., 2C)`` laid out as ``[mu_1..mu_C, v_1..v_C]``.
    """
    t = x.shape[-2]
    mu = x.data.mean(axis=-2, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-2)
    out = np.concatenate([mu[..., 0, :], var], axis=-1)
    c = x.shape[-1]

    def backward(g):
        gmu = g[..., None, :c]
        gvar = g[..., None, c:]
        return ((gmu + 2.0 * gvar * centered) / t,)

    return make_result(out, (x,), backward)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """``softmax(Q K^T / sqrt(d)) V`` with a row-wise softmax."""
    if not (q.shape == k.shape == v.shape):
        raise ShapeError(f"attention operands differ: {q.shape}, {k.shape}, {v.shape}")
    d = q.shape[-1]
    scores = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(d))
    return matmul(softmax(scores), v)


def softmax_cross_entropy(logits: Tensor, labels: Union[int, Sequence[int], np.ndarray]) -> Tensor:
    """Mean of ``-log softmax(logits)[label]`` over the batch.

    Accepts ``(n,)`` logits with one label or ``(B, n)`` with B labels.
    The gradient is the fused ``softmax - onehot`` form.
    """
    z = logits.data[None] if logits.ndim == 1 else logits.data
    lab = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    bsz, n = z.shape
    if lab.shape != (bsz,):
        raise ValueError(f"expected {bsz} labels, got {lab.shape}")
    if lab.min() < 0 or lab.max() >= n:
        raise ValueError(f"label out of range for {n} classes: {lab.min()}..{lab.max()}")
    shifted = z - z.max(axis=-1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=-1))
    rows = np.arange(bsz)
    loss = (logsum - shifted[rows, lab]).mean()
    out = np.asarray(loss, dtype=z.dtype)

    def backward(g):
        p = np.exp(shifted - logsum[:, None])
        p[rows, lab] -= 1.0
        grad = p * (g / bsz)
        return (grad.reshape(logits.shape),)

    return make_result(out, (logits,), backward)


def reduce_sum(x: Tensor) -> Tensor:
    """Sum of all elements as a scalar tensor."""
    out = np.asarray(x.data.sum(), dtype=x.dtype)
    return make_result(out, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))
