"""Parameter updates: plain SGD (the reproducibility reference) and Adam."""

from __future__ import annotations

import numpy as np

ASCEND = "ascend"
DESCEND = "descend"


def optimizer_step(params: np.ndarray, gradients: np.ndarray,
                   learning_rate: float, direction: str = DESCEND) -> np.ndarray:
    """params +- learning_rate * gradients; returns a new vector."""
    if params.shape != gradients.shape:
        raise ValueError(
            f"parameter/gradient layout mismatch: {params.shape} vs {gradients.shape}")
    if direction not in (ASCEND, DESCEND):
        raise ValueError(f"direction must be ascend or descend, got {direction!r}")
    sign = 1.0 if direction == ASCEND else -1.0
    return (params + (sign * learning_rate) * gradients).astype(params.dtype)


class Adam:
    """Adam with bias correction. One instance per parameter vector; the
    moment buffers share the params' dtype."""

    def __init__(self, n_params: int, learning_rate: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, dtype=np.float32):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(n_params, dtype=dtype)
        self.v = np.zeros(n_params, dtype=dtype)

    def step(self, params: np.ndarray, gradients: np.ndarray,
             direction: str = DESCEND) -> np.ndarray:
        if params.shape != gradients.shape or params.shape != self.m.shape:
            raise ValueError("parameter/gradient layout mismatch")
        if direction not in (ASCEND, DESCEND):
            raise ValueError(f"direction must be ascend or descend, got {direction!r}")
        g = gradients if direction == DESCEND else -gradients
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * (g * g)
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        return (params - self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(params.dtype)
