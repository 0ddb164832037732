"""Selective state-space layers: discretization, scan, Mamba and Bi-Mamba blocks."""
from __future__ import annotations

import math

import numpy as np

from .autodiff import ops
from .autodiff.node import as_node
from .layers import Linear, Module, param, uniform_fan_in


def zoh_discretize(A, B, delta):
    """Zero-order-hold discretization with input-dependent step sizes.

    A: (D, N) with negative entries, B: (..., T, N), delta: (..., T, D), delta > 0.
    Returns ``(a_bar, b_bar)`` of shape (..., T, D, N) where
    ``a_bar = exp(delta * A)`` and ``b_bar = (delta*A)^-1 (exp(delta*A) - 1) * delta * B``.
    """
    A, B, delta = as_node(A), as_node(B), as_node(delta)
    if np.any(delta.value <= 0):
        raise ValueError("delta must be strictly positive")
    d_exp = ops.reshape(delta, delta.shape + (1,))
    dA = ops.mul(d_exp, A)
    a_bar = ops.exp(dA)
    b_exp = ops.reshape(B, B.shape[:-1] + (1, B.shape[-1]))
    b_bar = ops.mul(ops.mul(ops.expm1_ratio(dA), d_exp), b_exp)
    return a_bar, b_bar


def selective_scan(u, a_bar, b_bar, C, d_skip):
    """Run the discretized recurrence; unbatched (T, D) inputs are accepted too."""
    u = as_node(u)
    if u.ndim == 2:
        out = ops.selective_scan(ops.reshape(u, (1,) + u.shape),
                                 ops.reshape(a_bar, (1,) + tuple(as_node(a_bar).shape)),
                                 ops.reshape(b_bar, (1,) + tuple(as_node(b_bar).shape)),
                                 ops.reshape(C, (1,) + tuple(as_node(C).shape)), d_skip)
        return ops.reshape(out, u.shape)
    return ops.selective_scan(u, a_bar, b_bar, C, d_skip)


def scan_reference(u, a_bar, b_bar, C, d_skip):
    """Literal step-by-step recurrence on plain arrays (single sequence)."""
    u, a_bar, b_bar, C = map(np.asarray, (u, a_bar, b_bar, C))
    T, D = u.shape
    N = a_bar.shape[-1]
    h = np.zeros((D, N))
    y = np.zeros((T, D))
    for t in range(T):
        for d in range(D):
            for n in range(N):
                h[d, n] = a_bar[t, d, n] * h[d, n] + b_bar[t, d, n] * u[t, d]
            y[t, d] = sum(C[t, n] * h[d, n] for n in range(N)) + d_skip[d] * u[t, d]
    return y


class MambaLayer(Module):
    """Gated selective-SSM layer; maps (B, T, d) -> (B, T, d), causal in T."""

    def __init__(self, d_model, rng, dtype=np.float32, d_state=16, d_conv=4, expand=2,
                 dt_min=1e-3, dt_max=1e-1):
        d_inner = expand * d_model
        self.d_inner, self.d_state = d_inner, d_state
        self.dt_rank = math.ceil(d_model / 16)
        self.in_proj = Linear(d_model, 2 * d_inner, rng, dtype, bias=False)
        self.conv_weight = param(uniform_fan_in(rng, (d_inner, d_conv), d_conv, dtype))
        self.conv_bias = param(np.zeros(d_inner, dtype=dtype))
        self.x_proj = Linear(d_inner, self.dt_rank + 2 * d_state, rng, dtype, bias=False)
        self.dt_proj = Linear(self.dt_rank, d_inner, rng, dtype)
        dt = np.exp(rng.uniform(np.log(dt_min), np.log(dt_max), size=d_inner))
        self.dt_proj.bias.value = (dt + np.log(-np.expm1(-dt))).astype(dtype)  # softplus^-1
        a_init = np.tile(np.arange(1, d_state + 1, dtype=np.float64), (d_inner, 1))
        self.A_log = param(np.log(a_init).astype(dtype))
        self.D = param(np.ones(d_inner, dtype=dtype))
        self.out_proj = Linear(d_inner, d_model, rng, dtype, bias=False)

    def ssm_params(self, x):
        """Input-dependent (delta, B, C) from the post-conv activations."""
        r, n = self.dt_rank, self.d_state
        proj = self.x_proj(x)
        dt = proj[..., :r]
        B = proj[..., r:r + n]
        C = proj[..., r + n:]
        delta = ops.softplus(self.dt_proj(dt))
        return delta, B, C

    def forward(self, x):
        e = self.d_inner
        xz = self.in_proj(x)
        main = xz[..., :e]
        gate = xz[..., e:]
        main = ops.silu(ops.conv1d_depthwise(main, self.conv_weight, self.conv_bias))
        delta, B, C = self.ssm_params(main)
        A = ops.neg(ops.exp(self.A_log))
        a_bar, b_bar = zoh_discretize(A, B, delta)
        y = ops.selective_scan(main, a_bar, b_bar, C, self.D)
        y = ops.mul(y, ops.silu(gate))
        return self.out_proj(y)


class BiMambaBlock(Module):
    """Forward and time-reversed Mamba layers, concatenated, mixed and added back.

    The mixer is a kernel-1 transposed convolution along the feature axis,
    i.e. a learned (2d -> d) linear map.
    """

    def __init__(self, d_model, rng, dtype=np.float32, flip=True, **mamba_kw):
        self.fwd = MambaLayer(d_model, rng, dtype, **mamba_kw)
        self.bwd = MambaLayer(d_model, rng, dtype, **mamba_kw)
        self.mix = Linear(2 * d_model, d_model, rng, dtype)
        self.flip = flip

    def forward(self, x):
        x = as_node(x)
        yf = self.fwd(x)
        if self.flip:
            yb = ops.flip(self.bwd(ops.flip(x, 1)), 1)
        else:
            yb = self.bwd(x)
        return ops.add(self.mix(ops.concat([yf, yb], axis=-1)), x)


class TFBiMamba(Module):
    """Time-axis Bi-Mamba followed by frequency-axis Bi-Mamba on (B, C, T, F) maps."""

    def __init__(self, d_model, rng, dtype=np.float32, **mamba_kw):
        self.time_block = BiMambaBlock(d_model, rng, dtype, **mamba_kw)
        self.freq_block = BiMambaBlock(d_model, rng, dtype, **mamba_kw)

    def forward(self, x, time_only=False):
        return tf_bi_mamba(x, self.time_block, None if time_only else self.freq_block)


def tf_bi_mamba(x, time_block, freq_block=None):
    """Apply ``time_block`` along T for every frequency row, then ``freq_block`` along F.

    ``freq_block=None`` skips the second stage.
    """
    x = as_node(x)
    b, c, t, f = x.shape
    h = ops.reshape(ops.transpose(x, (0, 3, 2, 1)), (b * f, t, c))
    h = time_block(h)
    h = ops.transpose(ops.reshape(h, (b, f, t, c)), (0, 2, 1, 3))  # (B, T, F, C)
    if freq_block is not None:
        h = ops.reshape(freq_block(ops.reshape(h, (b * t, f, c))), (b, t, f, c))
    return ops.transpose(h, (0, 3, 1, 2))


__all__ = ["BiMambaBlock", "MambaLayer", "TFBiMamba", "scan_reference",
           "selective_scan", "tf_bi_mamba", "zoh_discretize"]
