"""Central finite-difference oracle for checking tape gradients."""

from __future__ import annotations

from typing import Callable, List, Sequence

import numpy as np


def finite_diff_grad(f: Callable[..., float], params: Sequence[np.ndarray], eps: float = 1e-6) -> List[np.ndarray]:
    """Estimate d f / d params by central differences in float64.

    ``f`` is called as ``f(*params)`` and must return a scalar. Each array in
    ``params`` is perturbed in place one coordinate at a time and restored.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    arrays = [np.asarray(p, dtype=np.float64) for p in params]
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f(*arrays))
            flat[i] = orig - eps
            lo = float(f(*arrays))
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """Norm-wise relative error ``|a - b| / max(|a|, |b|, floor)``.

    ``floor`` keeps exactly-zero gradients (where finite differences only
    return round-off) from producing a spurious error of 1.
    """
    num = float(np.linalg.norm(np.asarray(a) - np.asarray(b)))
    den = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), floor)
    return num / den
