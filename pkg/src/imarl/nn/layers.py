"""Activation, dropout and masked softmax primitives with explicit grads."""

from __future__ import annotations

import numpy as np


def elu(x: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))


def elu_grad(x: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    """d elu / dx evaluated at the pre-activation x."""
    return np.where(x > 0, 1.0, alpha * np.exp(np.minimum(x, 0.0)))


def dropout_forward(x: np.ndarray, rate: float, rng: np.random.Generator,
                    train: bool = True) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout: kept units are scaled by 1/(1-rate) so eval mode
    is the identity. Returns (output, mask); mask is None when inactive."""
    if not train or rate <= 0.0:
        return x, None
    if not 0.0 < rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(g: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return g if mask is None else g * mask


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax over the entries where mask is True; masked entries get
    probability exactly 0 and do not influence the normalization."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("masked_softmax needs at least one legal entry")
    z = np.where(mask, logits, -np.inf)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Log of masked_softmax; -inf at masked entries."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("masked_log_softmax needs at least one legal entry")
    z = np.where(mask, logits, -np.inf)
    m = z.max()
    lse = m + np.log(np.exp(z - m).sum())
    return z - lse
