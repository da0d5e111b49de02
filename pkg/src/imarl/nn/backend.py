"""Kernel backend selection.

Three modes via the ``IMARL_KERNELS`` environment variable:

* ``auto`` (default): per-kernel routing measured by
  benchmarks/bench_kernels.py. The compiled extension wins big on
  pooling and on single-input-channel convolutions (the first conv
  layer always sees a 1-channel grid), while numpy's einsum path is
  faster for multi-channel convolutions. Falls back to numpy entirely
  when the extension is not built.
* ``compiled``: compiled extension for everything; fail hard if it is
  missing.
* ``numpy``: pure numpy for everything.
"""

from __future__ import annotations

import os

import numpy as np

from . import kernels_numpy

_choice = os.environ.get("IMARL_KERNELS", "auto").lower()
if _choice not in ("auto", "compiled", "numpy"):
    raise RuntimeError(f"IMARL_KERNELS must be auto, compiled or numpy, got {_choice!r}")

_compiled = None
if _choice in ("auto", "compiled"):
    try:
        from . import _kernels
        _compiled = _kernels
    except ImportError:
        if _choice == "compiled":
            raise RuntimeError(
                "IMARL_KERNELS=compiled but the imarl.nn._kernels extension "
                "is not built; reinstall the package or use IMARL_KERNELS=numpy"
            ) from None

_mode = _choice if _compiled is not None else "numpy"


def active_backend() -> str:
    """One of "auto" (mixed routing), "compiled" or "numpy"."""
    return _mode


def _ascontig(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a)


def conv2d_forward(x, w, b):
    x = _ascontig(x)
    impl = kernels_numpy
    if _mode == "compiled" or (_mode == "auto" and x.shape[0] == 1):
        impl = _compiled
    return impl.conv2d_forward(x, _ascontig(w), _ascontig(b))


def conv2d_backward(x, w, g):
    x = _ascontig(x)
    impl = kernels_numpy
    if _mode == "compiled" or (_mode == "auto" and x.shape[0] == 1):
        impl = _compiled
    return impl.conv2d_backward(x, _ascontig(w), _ascontig(g))


def maxpool2x2_forward(x):
    impl = kernels_numpy if _mode == "numpy" else _compiled
    return impl.maxpool2x2_forward(_ascontig(x))


def maxpool2x2_backward(g, idx, in_shape):
    impl = kernels_numpy if _mode == "numpy" else _compiled
    return impl.maxpool2x2_backward(_ascontig(g), _ascontig(idx), tuple(in_shape))
