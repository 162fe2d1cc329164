"""Adam, plateau learning-rate decay and early stopping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray], **kwargs) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kwargs)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    step = lr * math.sqrt(c2) / c1
    eps_hat = state.eps * math.sqrt(c2)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        # algebraically equal to lr * m_hat / (sqrt(v_hat) + eps)
        p -= step * m / (np.sqrt(v) + eps_hat)


@dataclass
class PlateauState:
    lr: float = 1e-4
    factor: float = 0.1
    patience: int = 12
    min_lr: float = 1e-7
    best: float = math.inf
    since_improvement: int = 0

    def __post_init__(self):
        if not 0.0 < self.factor < 1.0:
            raise ValueError("plateau factor must lie in (0, 1)")
        if self.min_lr <= 0 or self.patience < 1:
            raise ValueError("min_lr must be positive and patience >= 1")
        self.lr = max(self.lr, self.min_lr)


def plateau_update(state: PlateauState, val_loss: float) -> float:
    """Advance the plateau counter with this epoch's validation loss; return the new lr.

    Only a strict decrease of the best value counts as improvement.
    """
    if val_loss < state.best:
        state.best = val_loss
        state.since_improvement = 0
        return state.lr
    state.since_improvement += 1
    if state.since_improvement >= state.patience:
        state.lr = max(state.lr * state.factor, state.min_lr)
        state.since_improvement = 0
    return state.lr


def early_stop_check(epochs_since_best: int, patience: int = 20) -> bool:
    return epochs_since_best >= patience
