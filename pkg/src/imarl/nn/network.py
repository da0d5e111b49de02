"""Actor/critic network: spec, flat parameter vector, forward, backward.

Architecture (dense_cnn): the encoded influence grid runs through a conv
stack (conv 3x3 stride 1, elu, 2x2 max-pool, twice by default), is
flattened and linearly projected to a small feature vector f. The dense
block then applies DenseNet-style concatenation: layer 1 reads
concat(obs, f), layer k reads concat(obs, f, h_1, ..., h_{k-1}), so the
grid features are re-injected at every layer. The head (policy logits or
scalar value) reads only the last dense output. dense_only drops the
conv stack entirely and feeds the flattened grid straight into the
concatenations.

Parameters live in one flat vector with a name -> (offset, shape) layout
table. Gradients come back in an identically laid-out flat vector. All
backward passes are hand-derived; ``gradcheck`` verifies them.

With conv_stacks=3 each dense layer owns a private conv stack and reads
its own feature vector; the default (1) shares a single stack across all
three injection points.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .layers import dropout_backward, dropout_forward, elu, elu_grad

DENSE_CNN = "dense_cnn"
DENSE_ONLY = "dense_only"
POLICY_HEAD = "policy"
VALUE_HEAD = "value"

_DEBUG = os.environ.get("IMARL_DEBUG", "") == "1"


def _check_finite(name: str, arr: np.ndarray) -> None:
    if _DEBUG and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values after {name}")


@dataclass(frozen=True)
class NetworkSpec:
    """Shape-level description of one network (actor or critic)."""

    obs_dim: int
    n_actions: int
    maim_shape: tuple[int, int, int] = (1, 64, 64)
    head: str = POLICY_HEAD
    arch: str = DENSE_CNN
    conv_filters: int = 32
    kernel_size: int = 3
    conv_layers: int = 2
    conv_stacks: int = 1
    maim_feature_dim: int = 64
    dense_widths: tuple[int, ...] = (256, 256, 256)
    dropout_rate: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "maim_shape", tuple(self.maim_shape))
        object.__setattr__(self, "dense_widths", tuple(self.dense_widths))
        if self.obs_dim < 1:
            raise ValueError("obs_dim must be positive")
        if self.head not in (POLICY_HEAD, VALUE_HEAD):
            raise ValueError(f"unknown head {self.head!r}")
        if self.head == POLICY_HEAD and self.n_actions < 1:
            raise ValueError("policy head needs n_actions >= 1")
        if self.arch not in (DENSE_CNN, DENSE_ONLY):
            raise ValueError(f"unknown architecture {self.arch!r}")
        if len(self.maim_shape) != 3 or self.maim_shape[0] != 1:
            raise ValueError("maim_shape must be (1, H, W)")
        if not 0.1 <= self.dropout_rate <= 0.5:
            raise ValueError("dropout_rate must lie in [0.1, 0.5]")
        if any(w < 1 for w in self.dense_widths):
            raise ValueError("dense widths must be positive")
        if self.arch == DENSE_CNN:
            if self.kernel_size % 2 != 1 or self.kernel_size < 1:
                raise ValueError("kernel_size must be odd and positive")
            if self.conv_layers < 1 or self.conv_filters < 1:
                raise ValueError("need at least one conv layer and filter")
            if self.conv_stacks not in (1, max(len(self.dense_widths), 1)):
                raise ValueError("conv_stacks must be 1 (shared) or one per dense layer")
            _, h, w = self.maim_shape
            div = 2 ** self.conv_layers
            if h % div or w % div or h < div or w < div:
                raise ValueError(
                    f"maim grid {h}x{w} not pool-divisible by 2^{self.conv_layers}")
            if self.maim_feature_dim < 1:
                raise ValueError("maim_feature_dim must be positive")

    @property
    def head_dim(self) -> int:
        return self.n_actions if self.head == POLICY_HEAD else 1

    @property
    def pooled_shape(self) -> tuple[int, int, int]:
        _, h, w = self.maim_shape
        div = 2 ** self.conv_layers
        return (self.conv_filters, h // div, w // div)

    @property
    def conv_flat_dim(self) -> int:
        c, h, w = self.pooled_shape
        return c * h * w

    @property
    def feature_dim(self) -> int:
        """Width of the maim feature vector injected into each dense layer."""
        if self.arch == DENSE_CNN:
            return self.maim_feature_dim
        _, h, w = self.maim_shape
        return h * w

    @property
    def n_stacks(self) -> int:
        return self.conv_stacks if self.arch == DENSE_CNN else 1

    def dense_input_width(self, layer: int) -> int:
        return self.obs_dim + self.feature_dim + sum(self.dense_widths[:layer])

    @property
    def head_input_width(self) -> int:
        if self.dense_widths:
            return self.dense_widths[-1]
        return self.obs_dim + self.feature_dim

    def to_dict(self) -> dict:
        return {
            "obs_dim": self.obs_dim,
            "n_actions": self.n_actions,
            "maim_shape": list(self.maim_shape),
            "head": self.head,
            "arch": self.arch,
            "conv_filters": self.conv_filters,
            "kernel_size": self.kernel_size,
            "conv_layers": self.conv_layers,
            "conv_stacks": self.conv_stacks,
            "maim_feature_dim": self.maim_feature_dim,
            "dense_widths": list(self.dense_widths),
            "dropout_rate": self.dropout_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        d = dict(d)
        d["maim_shape"] = tuple(d["maim_shape"])
        d["dense_widths"] = tuple(d["dense_widths"])
        return cls(**d)


def param_layout(spec: NetworkSpec) -> tuple[dict[str, tuple[int, tuple[int, ...]]], int]:
    """Name -> (offset, shape) table plus total parameter count."""
    layout: dict[str, tuple[int, tuple[int, ...]]] = {}
    off = 0

    def add(name, *shape):
        nonlocal off
        layout[name] = (off, shape)
        off += math.prod(shape)

    k = spec.kernel_size
    if spec.arch == DENSE_CNN:
        for s in range(spec.conv_stacks):
            c_in = 1
            for l in range(spec.conv_layers):
                add(f"conv{s}_{l}_w", spec.conv_filters, c_in, k, k)
                add(f"conv{s}_{l}_b", spec.conv_filters)
                c_in = spec.conv_filters
            add(f"proj{s}_w", spec.maim_feature_dim, spec.conv_flat_dim)
            add(f"proj{s}_b", spec.maim_feature_dim)
    for i, width in enumerate(spec.dense_widths):
        add(f"dense{i}_w", width, spec.dense_input_width(i))
        add(f"dense{i}_b", width)
    add("head_w", spec.head_dim, spec.head_input_width)
    add("head_b", spec.head_dim)
    return layout, off


def param_count(spec: NetworkSpec) -> int:
    return param_layout(spec)[1]


def view(params: np.ndarray, layout, name: str) -> np.ndarray:
    off, shape = layout[name]
    return params[off:off + math.prod(shape)].reshape(shape)


def init_params(spec: NetworkSpec, rng: np.random.Generator,
                dtype=np.float32) -> np.ndarray:
    """He-style uniform init: weights ~ U(+-sqrt(6/fan_in)), biases 0."""
    layout, n = param_layout(spec)
    params = np.zeros(n, dtype=dtype)
    for name, (off, shape) in layout.items():
        if name.endswith("_b"):
            continue
        fan_in = math.prod(shape[1:])
        limit = math.sqrt(6.0 / fan_in)
        w = view(params, layout, name)
        w[...] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return params


def _stack_index(spec: NetworkSpec, layer: int) -> int:
    return layer if spec.n_stacks > 1 else 0


def trunk_forward(spec: NetworkSpec, params: np.ndarray,
                  encoded_maim: np.ndarray, layout=None):
    """Grid -> per-stack feature vectors. Deterministic (no dropout), so
    one call per environment step serves every agent."""
    if layout is None:
        layout = param_layout(spec)[0]
    maim = np.asarray(encoded_maim, dtype=params.dtype)
    if maim.shape != spec.maim_shape:
        raise ValueError(f"encoded maim shape {maim.shape}, expected {spec.maim_shape}")
    if spec.arch == DENSE_ONLY:
        return [maim.reshape(-1)], {"maim": maim}
    features = []
    stacks = []
    for s in range(spec.conv_stacks):
        xs = [maim]
        zs, idxs = [], []
        a = maim
        for l in range(spec.conv_layers):
            w = view(params, layout, f"conv{s}_{l}_w")
            b = view(params, layout, f"conv{s}_{l}_b")
            z = backend.conv2d_forward(a, w, b)
            _check_finite("conv2d_forward", z)
            act = elu(z)
            a, idx = backend.maxpool2x2_forward(act)
            zs.append(z)
            idxs.append(idx)
            xs.append(a)
        flat = a.reshape(-1)
        zp = view(params, layout, f"proj{s}_w") @ flat + view(params, layout, f"proj{s}_b")
        _check_finite("projection", zp)
        f = elu(zp)
        features.append(f)
        stacks.append({"x": xs, "z": zs, "idx": idxs, "flat": flat, "zp": zp})
    return features, {"maim": maim, "stacks": stacks}


def trunk_backward(spec: NetworkSpec, params: np.ndarray, grad: np.ndarray,
                   trunk_cache, g_features, layout=None) -> None:
    """Accumulate conv/projection gradients into ``grad`` given the loss
    gradient w.r.t. each stack's feature vector."""
    if spec.arch == DENSE_ONLY:
        return
    if layout is None:
        layout = param_layout(spec)[0]
    for s, st in enumerate(trunk_cache["stacks"]):
        g_f = np.asarray(g_features[s], dtype=params.dtype)
        g_zp = g_f * elu_grad(st["zp"])
        view(grad, layout, f"proj{s}_b")[...] += g_zp
        view(grad, layout, f"proj{s}_w")[...] += np.outer(g_zp, st["flat"])
        g = (view(params, layout, f"proj{s}_w").T @ g_zp).reshape(spec.pooled_shape)
        for l in reversed(range(spec.conv_layers)):
            z = st["z"][l]
            g_act = backend.maxpool2x2_backward(g, st["idx"][l], z.shape)
            g_z = g_act * elu_grad(z)
            dx, dw, db = backend.conv2d_backward(
                st["x"][l], view(params, layout, f"conv{s}_{l}_w"), g_z)
            view(grad, layout, f"conv{s}_{l}_w")[...] += dw
            view(grad, layout, f"conv{s}_{l}_b")[...] += db
            g = dx


def head_forward(spec: NetworkSpec, params: np.ndarray, observation: np.ndarray,
                 features, train_mode: bool = False,
                 rng: np.random.Generator | None = None,
                 dropout_masks=None, layout=None):
    """Dense block + head on top of precomputed maim features.

    ``dropout_masks`` replays previously recorded masks (exact gradient
    replay at update time); otherwise masks are drawn from ``rng`` in
    train mode.
    """
    if layout is None:
        layout = param_layout(spec)[0]
    obs = np.asarray(observation, dtype=params.dtype)
    if obs.shape != (spec.obs_dim,):
        raise ValueError(f"observation shape {obs.shape}, expected ({spec.obs_dim},)")
    if train_mode and rng is None and dropout_masks is None and spec.dense_widths:
        raise ValueError("train mode needs an rng or recorded dropout masks")
    cache = {"obs": obs, "features": features, "inputs": [], "z": [],
             "masks": [], "dropped": []}
    dropped = []
    for i in range(len(spec.dense_widths)):
        f_i = features[_stack_index(spec, i)]
        x = np.concatenate([obs, f_i, *dropped])
        z = view(params, layout, f"dense{i}_w") @ x + view(params, layout, f"dense{i}_b")
        _check_finite(f"dense{i}", z)
        a = elu(z)
        if dropout_masks is not None:
            mask = dropout_masks[i]
            d = a if mask is None else a * mask
        else:
            d, mask = dropout_forward(a, spec.dropout_rate, rng, train_mode)
        cache["inputs"].append(x)
        cache["z"].append(z)
        cache["masks"].append(mask)
        dropped.append(d)
    cache["dropped"] = dropped
    head_in = dropped[-1] if dropped else np.concatenate([obs, features[0]])
    out = view(params, layout, "head_w") @ head_in + view(params, layout, "head_b")
    _check_finite("head", out)
    cache["head_in"] = head_in
    return out, cache


def head_backward(spec: NetworkSpec, params: np.ndarray, grad: np.ndarray,
                  cache, g_out, layout=None):
    """Accumulate dense/head gradients into ``grad``; returns the loss
    gradient w.r.t. (observation, per-stack features) for the trunk."""
    if layout is None:
        layout = param_layout(spec)[0]
    g_out = np.asarray(g_out, dtype=params.dtype)
    view(grad, layout, "head_b")[...] += g_out
    view(grad, layout, "head_w")[...] += np.outer(g_out, cache["head_in"])
    g_head_in = view(params, layout, "head_w").T @ g_out
    n_layers = len(spec.dense_widths)
    g_obs = np.zeros(spec.obs_dim, dtype=params.dtype)
    g_features = [np.zeros(spec.feature_dim, dtype=params.dtype)
                  for _ in range(spec.n_stacks)]
    if n_layers == 0:
        g_obs += g_head_in[:spec.obs_dim]
        g_features[0] += g_head_in[spec.obs_dim:]
        return g_obs, g_features
    g_dropped = [np.zeros(w, dtype=params.dtype) for w in spec.dense_widths]
    g_dropped[-1] += g_head_in
    for i in reversed(range(n_layers)):
        g_a = dropout_backward(g_dropped[i], cache["masks"][i])
        g_z = g_a * elu_grad(cache["z"][i])
        view(grad, layout, f"dense{i}_b")[...] += g_z
        view(grad, layout, f"dense{i}_w")[...] += np.outer(g_z, cache["inputs"][i])
        g_x = view(params, layout, f"dense{i}_w").T @ g_z
        g_obs += g_x[:spec.obs_dim]
        hi = spec.obs_dim + spec.feature_dim
        g_features[_stack_index(spec, i)] += g_x[spec.obs_dim:hi]
        for j in range(i):
            w_j = spec.dense_widths[j]
            g_dropped[j] += g_x[hi:hi + w_j]
            hi += w_j
    return g_obs, g_features


def network_forward(spec: NetworkSpec, params: np.ndarray, observation,
                    encoded_maim, train_mode: bool = False,
                    rng: np.random.Generator | None = None,
                    dropout_masks=None):
    """Full forward pass. Returns (output vector, cache); the output is
    logits of length n_actions for a policy head, length-1 for value."""
    layout = param_layout(spec)[0]
    features, trunk_cache = trunk_forward(spec, params, encoded_maim, layout)
    out, head_cache = head_forward(spec, params, observation, features,
                                   train_mode, rng, dropout_masks, layout)
    return out, {"trunk": trunk_cache, "head": head_cache, "layout": layout}


def network_backward(spec: NetworkSpec, params: np.ndarray, cache,
                     g_out) -> np.ndarray:
    """Exact gradient of <g_out, output> w.r.t. every parameter."""
    if not isinstance(cache, dict) or "head" not in cache:
        raise ValueError("network_backward needs the cache from network_forward")
    layout = cache["layout"]
    grad = np.zeros_like(params)
    _, g_features = head_backward(spec, params, grad, cache["head"], g_out, layout)
    trunk_backward(spec, params, grad, cache["trunk"], g_features, layout)
    _check_finite("network_backward", grad)
    return grad
