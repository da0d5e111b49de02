# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled conv / pool kernels. Same contracts as ``kernels_numpy``."""

import numpy as np

cimport numpy as cnp
from cython cimport floating

cnp.import_array()


def conv2d_forward(floating[:, :, ::1] x, floating[:, :, :, ::1] w,
                   floating[::1] b):
    # plane-sweep formulation: for each tap the inner loops are
    # contiguous branch-free saxpys over the output plane
    cdef Py_ssize_t co = w.shape[0], ci = w.shape[1], k = w.shape[2]
    cdef Py_ssize_t H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t pad = (k - 1) // 2
    cdef Py_ssize_t o, y, xc, i, ky, kx, y0, y1, x0, x1, dy, dxo
    cdef floating wv
    if floating is float:
        out_np = np.empty((co, H, W), dtype=np.float32)
    else:
        out_np = np.empty((co, H, W), dtype=np.float64)
    cdef floating[:, :, ::1] out = out_np
    with nogil:
        for o in range(co):
            for y in range(H):
                for xc in range(W):
                    out[o, y, xc] = b[o]
            for i in range(ci):
                for ky in range(k):
                    dy = ky - pad
                    y0 = -dy if dy < 0 else 0
                    y1 = H - dy if dy > 0 else H
                    for kx in range(k):
                        dxo = kx - pad
                        x0 = -dxo if dxo < 0 else 0
                        x1 = W - dxo if dxo > 0 else W
                        wv = w[o, i, ky, kx]
                        for y in range(y0, y1):
                            for xc in range(x0, x1):
                                out[o, y, xc] = out[o, y, xc] + wv * x[i, y + dy, xc + dxo]
    return out_np


def conv2d_backward(floating[:, :, ::1] x, floating[:, :, :, ::1] w,
                    floating[:, :, ::1] g):
    cdef Py_ssize_t co = w.shape[0], ci = w.shape[1], k = w.shape[2]
    cdef Py_ssize_t H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t pad = (k - 1) // 2
    cdef Py_ssize_t o, y, xc, i, ky, kx, y0, y1, x0, x1, dy, dxo
    cdef floating wv, acc
    if floating is float:
        dt = np.float32
    else:
        dt = np.float64
    dx_np = np.zeros((ci, H, W), dtype=dt)
    dw_np = np.zeros((co, ci, k, k), dtype=dt)
    db_np = np.zeros(co, dtype=dt)
    cdef floating[:, :, ::1] dx = dx_np
    cdef floating[:, :, :, ::1] dw = dw_np
    cdef floating[::1] db = db_np
    with nogil:
        for o in range(co):
            acc = 0
            for y in range(H):
                for xc in range(W):
                    acc = acc + g[o, y, xc]
            db[o] = acc
            for i in range(ci):
                for ky in range(k):
                    dy = ky - pad
                    y0 = -dy if dy < 0 else 0
                    y1 = H - dy if dy > 0 else H
                    for kx in range(k):
                        dxo = kx - pad
                        x0 = -dxo if dxo < 0 else 0
                        x1 = W - dxo if dxo > 0 else W
                        # dw tap: dot of g with the shifted input plane
                        acc = 0
                        for y in range(y0, y1):
                            for xc in range(x0, x1):
                                acc = acc + g[o, y, xc] * x[i, y + dy, xc + dxo]
                        dw[o, i, ky, kx] = acc
                        # dx: scatter g back through the same shift
                        wv = w[o, i, ky, kx]
                        for y in range(y0, y1):
                            for xc in range(x0, x1):
                                dx[i, y + dy, xc + dxo] = dx[i, y + dy, xc + dxo] + wv * g[o, y, xc]
    return dx_np, dw_np, db_np


def maxpool2x2_forward(floating[:, :, ::1] x):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t h2 = h // 2, w2 = w // 2
    cdef Py_ssize_t ch, y2, x2, j, yy, xx
    cdef floating best, v
    cdef Py_ssize_t besti
    if floating is float:
        out_np = np.empty((c, h2, w2), dtype=np.float32)
    else:
        out_np = np.empty((c, h2, w2), dtype=np.float64)
    idx_np = np.empty((c, h2, w2), dtype=np.int64)
    cdef floating[:, :, ::1] out = out_np
    cdef cnp.int64_t[:, :, ::1] idx = idx_np
    with nogil:
        for ch in range(c):
            for y2 in range(h2):
                for x2 in range(w2):
                    best = x[ch, 2 * y2, 2 * x2]
                    besti = 0
                    for j in range(1, 4):
                        yy = 2 * y2 + (j >> 1)
                        xx = 2 * x2 + (j & 1)
                        v = x[ch, yy, xx]
                        if v > best:  # strict > keeps the first index on ties
                            best = v
                            besti = j
                    out[ch, y2, x2] = best
                    idx[ch, y2, x2] = besti
    return out_np, idx_np


def maxpool2x2_backward(floating[:, :, ::1] g, cnp.int64_t[:, :, ::1] idx,
                        in_shape):
    cdef Py_ssize_t c = in_shape[0], h = in_shape[1], w = in_shape[2]
    cdef Py_ssize_t h2 = h // 2, w2 = w // 2
    cdef Py_ssize_t ch, y2, x2, j
    if floating is float:
        dx_np = np.zeros((c, h, w), dtype=np.float32)
    else:
        dx_np = np.zeros((c, h, w), dtype=np.float64)
    cdef floating[:, :, ::1] dx = dx_np
    with nogil:
        for ch in range(c):
            for y2 in range(h2):
                for x2 in range(w2):
                    j = idx[ch, y2, x2]
                    dx[ch, 2 * y2 + (j >> 1), 2 * x2 + (j & 1)] = g[ch, y2, x2]
    return dx_np
