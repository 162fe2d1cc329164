"""Tensor, Parameter and the recording tape used for reverse-mode gradients."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_local = threading.local()


class ShapeError(ValueError):
    """Raised when operand extents are incompatible."""


class Tensor:
    """Dense N-dimensional array with an optional gradient slot.

    Data is kept as a numpy array. Integer or boolean input is promoted to
    float32; float64 input stays float64 so gradient checks can run the
    whole graph in double precision.
    """

    __slots__ = ("data", "requires_grad", "grad", "_recorded")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        if any(extent < 1 for extent in arr.shape):
            raise ShapeError(f"tensor extents must be >= 1, got {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._recorded = False

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return not self._recorded

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # operator sugar; the implementations live in ops
    def __add__(self, other):
        from . import ops

        return ops.add(self, _wrap(other, self))

    __radd__ = __add__

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, _wrap(other, self))

    __rmul__ = __mul__

    def __sub__(self, other):
        from . import ops

        return ops.add(self, ops.scale(_wrap(other, self), -1.0))

    def __neg__(self):
        from . import ops

        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)


def _wrap(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def _not_scalar(t: Tensor) -> float:
    raise ValueError(f"item() needs a single-element tensor, got shape {t.shape}")


@dataclass
class Parameter:
    """Named trainable tensor. ``grad`` always has the shape of ``value``."""

    name: str
    value: Tensor

    def __post_init__(self):
        self.value.requires_grad = True

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return int(self.value.data.size)

    @property
    def grad(self) -> np.ndarray:
        g = self.value.grad
        return np.zeros_like(self.value.data) if g is None else g

    def zero_grad(self) -> None:
        self.value.grad = None


@dataclass
class _Node:
    out: Tensor
    inputs: Tuple[Tensor, ...]
    backward: BackwardFn


class Tape:
    """Ordered record of the operations executed while the tape is active.

    Use as a context manager; every op whose inputs require gradients is
    appended in execution order, which is already a topological order.
    """

    def __init__(self):
        self.nodes: List[_Node] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: Tensor, inputs: Tuple[Tensor, ...], backward: BackwardFn) -> None:
        out._recorded = True
        self.nodes.append(_Node(out, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        """Propagate d(loss)/d(.) to every leaf that requires a gradient.

        Leaf gradients accumulate (sum) into ``Tensor.grad`` so a parameter
        used in several places collects all of its contributions.
        """
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        if self._consumed:
            raise RuntimeError("tape has already been used for a backward pass")
        self._consumed = True
        if not loss.requires_grad:
            return
        pending = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = pending.pop(id(node.out), None)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if inp.is_leaf:
                    inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
                else:
                    key = id(inp)
                    pending[key] = gi if key not in pending else pending[key] + gi
        self.nodes.clear()


def _stack() -> list:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def active_tape() -> Optional[Tape]:
    stack = _stack()
    return stack[-1] if stack else None


def backward(tape: Tape, loss: Tensor) -> None:
    tape.backward(loss)


def make_result(data: np.ndarray, inputs: Tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    """Wrap an op's output, recording it on the active tape when needed."""
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = needs
    out.grad = None
    out._recorded = False
    if needs:
        tape.record(out, inputs, backward_fn)
    return out
