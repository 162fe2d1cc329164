"""Composite layers: squeeze-and-excitation, self-attention, residual unit, X-Vector head.

Every block is a plain function of an input tensor and a mapping of named
parameter tensors, so models stay declarative and the same code path is
used for training, inference and gradient checks.
"""

from __future__ import annotations

from typing import Dict, List, Mapping, Tuple

from .autodiff import ops
from .autodiff.tensor import ShapeError, Tensor

Shapes = List[Tuple[str, Tuple[int, ...]]]

SE_REDUCTION = 2
ATTN_DIM = 108
RESNET_CHANNELS = 32
HEAD_WIDTH = 128


def se_shapes(channels: int, reduction: int = SE_REDUCTION) -> Shapes:
    if channels % reduction:
        raise ValueError(f"SE block needs channels divisible by {reduction}, got {channels}")
    hidden = channels // reduction
    return [("w1", (hidden, channels)), ("w2", (channels, hidden))]


def se_block(x: Tensor, p: Mapping[str, Tensor]) -> Tensor:
    """Recalibrate channels by a sigmoid gate computed from their time averages.

    Bias-free bottleneck: ``s = sigmoid(W2 relu(W1 z))`` with ``z`` the
    temporal mean of each channel, output ``s_c * x_c``.
    """
    w1, w2 = p["w1"], p["w2"]
    if x.shape[-1] != w1.shape[1]:
        raise ShapeError(f"SE block expects {w1.shape[1]} channels, got {x.shape[-1]}")
    z = ops.mean_time(x, keepdims=True)
    s = ops.sigmoid(ops.dense(ops.relu(ops.dense(z, w1)), w2))
    return ops.mul(x, s)


def attention_shapes(dim: int = ATTN_DIM) -> Shapes:
    shapes: Shapes = []
    for proj in ("query", "key", "value", "output"):
        shapes += [(f"{proj}/weight", (dim, dim)), (f"{proj}/bias", (dim,))]
    return shapes


def self_attention_block(x: Tensor, p: Mapping[str, Tensor], dim: int = ATTN_DIM) -> Tensor:
    """Single-head self-attention with learned query/key/value/output projections."""
    if x.shape[-1] != dim:
        raise ShapeError(f"attention block expects {dim} channels, got {x.shape[-1]}")
    q = ops.dense(x, p["query/weight"], p["query/bias"])
    k = ops.dense(x, p["key/weight"], p["key/bias"])
    v = ops.dense(x, p["value/weight"], p["value/bias"])
    y = ops.scaled_dot_attention(q, k, v)
    return ops.dense(y, p["output/weight"], p["output/bias"])


def residual_unit_shapes(channels: int = RESNET_CHANNELS, kernel: int = 3) -> Shapes:
    return [
        ("conv1/weight", (channels, channels, kernel)),
        ("conv1/bias", (channels,)),
        ("conv2/weight", (channels, channels, kernel)),
        ("conv2/bias", (channels,)),
    ]


def residual_unit(x: Tensor, p: Mapping[str, Tensor]) -> Tensor:
    """conv -> relu -> conv, add the skip path, then relu."""
    h = ops.relu(ops.conv1d(x, p["conv1/weight"], p["conv1/bias"]))
    h = ops.conv1d(h, p["conv2/weight"], p["conv2/bias"])
    return ops.relu(ops.add(x, h))


def xvector_head_shapes(in_dim: int, n_classes: int = 24, width: int = HEAD_WIDTH) -> Shapes:
    return [
        ("dense1/weight", (width, in_dim)),
        ("dense1/bias", (width,)),
        ("dense2/weight", (width, width)),
        ("dense2/bias", (width,)),
        ("dense3/weight", (n_classes, width)),
        ("dense3/bias", (n_classes,)),
    ]


def xvector_head(pooled: Tensor, p: Mapping[str, Tensor]) -> Tensor:
    """Two ReLU dense layers then the class logits (no softmax)."""
    h = ops.relu(ops.dense(pooled, p["dense1/weight"], p["dense1/bias"]))
    h = ops.relu(ops.dense(h, p["dense2/weight"], p["dense2/bias"]))
    return ops.dense(h, p["dense3/weight"], p["dense3/bias"])


def count(shapes: Shapes) -> int:
    total = 0
    for _, shape in shapes:
        n = 1
        for extent in shape:
            n *= extent
        total += n
    return total


def scoped(params: Mapping[str, Tensor], prefix: str) -> Dict[str, Tensor]:
    """View of ``params`` under ``prefix/`` with the prefix stripped."""
    head = prefix + "/"
    return {name[len(head):]: t for name, t in params.items() if name.startswith(head)}
