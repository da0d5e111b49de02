"""Pure numpy conv / pool kernels (fallback backend).

Layouts: activations are (channels, height, width), conv weights are
(out_channels, in_channels, k, k) with odd k, stride 1, zero "same"
padding. These are also the reference implementations the compiled
kernels are tested against.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    c_out, c_in, k, _ = w.shape
    assert k % 2 == 1, "kernel size must be odd"
    assert x.shape[0] == c_in
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # (c_in, H, W, k, k)
    return np.einsum("ihwkl,oikl->ohw", win, w, optimize=True) + b[:, None, None]


def conv2d_backward(x: np.ndarray, w: np.ndarray,
                    g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dw, db) for same-padded stride-1 conv. ``g`` is the
    loss gradient w.r.t. the un-activated output."""
    c_out, c_in, k, _ = w.shape
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))
    db = g.sum(axis=(1, 2))
    dw = np.einsum("ihwkl,ohw->oikl", win, g, optimize=True)
    # dx is the correlation of the padded output gradient with the
    # spatially flipped weights, summed over output channels.
    gp = np.pad(g, ((0, 0), (pad, pad), (pad, pad)))
    gwin = sliding_window_view(gp, (k, k), axis=(1, 2))  # (c_out, H, W, k, k)
    wflip = w[:, :, ::-1, ::-1]
    dx = np.einsum("ohwkl,oikl->ihw", gwin, wflip, optimize=True)
    return dx, dw, db


def maxpool2x2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max pool, stride 2. Returns (pooled, argmax) where argmax holds
    the within-window winner index (0..3, first occurrence on ties)."""
    c, h, w = x.shape
    assert h % 2 == 0 and w % 2 == 0, "pool input dims must be even"
    h2, w2 = h // 2, w // 2
    tiles = x.reshape(c, h2, 2, w2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h2, w2, 4)
    idx = tiles.argmax(axis=3)
    out = np.take_along_axis(tiles, idx[..., None], axis=3)[..., 0]
    return out, idx


def maxpool2x2_backward(g: np.ndarray, idx: np.ndarray,
                        in_shape: tuple[int, int, int]) -> np.ndarray:
    c, h, w = in_shape
    h2, w2 = h // 2, w // 2
    tiles = np.zeros((c, h2, w2, 4), dtype=g.dtype)
    np.put_along_axis(tiles, idx[..., None], g[..., None], axis=3)
    return tiles.reshape(c, h2, w2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h, w)
