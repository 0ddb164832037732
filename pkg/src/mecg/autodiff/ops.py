"""Differentiable primitives over dense numpy arrays.

Every op takes ``Node`` or array-like inputs and returns a ``Node``.  Each
backward closure returns the gradient for one parent, already reduced to
that parent's shape.
"""
from __future__ import annotations

import numpy as np

from .node import Node, as_node, make

_FLOPS = [0]


def flop_count() -> int:
    return _FLOPS[0]


def reset_flops() -> None:
    _FLOPS[0] = 0


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    ndiff = g.ndim - len(shape)
    if ndiff > 0:
        g = g.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _pair(v):
    return (v, v) if np.isscalar(v) else tuple(v)


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return make(a.value + b.value, [
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: _unbroadcast(g, b.shape)),
    ])


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    return make(a.value - b.value, [
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: -_unbroadcast(g, b.shape)),
    ])


def neg(a) -> Node:
    a = as_node(a)
    return make(-a.value, [(a, lambda g: -g)])


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    av, bv = a.value, b.value
    return make(av * bv, [
        (a, lambda g: _unbroadcast(g * bv, a.shape)),
        (b, lambda g: _unbroadcast(g * av, b.shape)),
    ])


def div(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    av, bv = a.value, b.value
    out = av / bv
    return make(out, [
        (a, lambda g: _unbroadcast(g / bv, a.shape)),
        (b, lambda g: _unbroadcast(-g * out / bv, b.shape)),
    ])


def exp(a) -> Node:
    a = as_node(a)
    out = np.exp(a.value)
    return make(out, [(a, lambda g: g * out)])


def log(a) -> Node:
    a = as_node(a)
    av = a.value
    return make(np.log(av), [(a, lambda g: g / av)])


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def sigmoid(a) -> Node:
    a = as_node(a)
    s = _sigmoid(a.value)
    return make(s, [(a, lambda g: g * s * (1.0 - s))])


def silu(a) -> Node:
    a = as_node(a)
    v = a.value
    s = _sigmoid(v)
    return make(v * s, [(a, lambda g: g * s * (1.0 + v * (1.0 - s)))])


def softplus(a) -> Node:
    a = as_node(a)
    v = a.value
    return make(np.logaddexp(0.0, v).astype(v.dtype, copy=False),
                [(a, lambda g: g * _sigmoid(v))])


def abs(a) -> Node:  # noqa: A001 - mirrors numpy naming
    a = as_node(a)
    v = a.value
    return make(np.abs(v), [(a, lambda g: g * np.sign(v))])


def power(a, p: float) -> Node:
    """``a ** p`` for a scalar exponent; for non-integer p, a must be >= 0."""
    a = as_node(a)
    v = a.value
    out = v ** p

    def back(g):
        if p == 1:
            return g
        with np.errstate(divide="ignore", invalid="ignore"):
            d = p * v ** (p - 1)
        d = np.where(v == 0, 0.0 if p > 1 else d, d)
        return g * d

    return make(out, [(a, back)])


def cos(a) -> Node:
    a = as_node(a)
    v = a.value
    return make(np.cos(v), [(a, lambda g: -g * np.sin(v))])


def sin(a) -> Node:
    a = as_node(a)
    v = a.value
    return make(np.sin(v), [(a, lambda g: g * np.cos(v))])


def prelu(x, slope, axis: int = 1) -> Node:
    """Parametric rectifier with one slope per entry along ``axis``."""
    x, slope = as_node(x), as_node(slope)
    xv = x.value
    shape = [1] * xv.ndim
    if slope.value.size > 1:
        shape[axis] = slope.value.size
    sv = slope.value.reshape(shape)
    pos = xv >= 0
    out = np.where(pos, xv, sv * xv)
    return make(out, [
        (x, lambda g: np.where(pos, g, g * sv)),
        (slope, lambda g: np.where(pos, 0.0, g * xv).sum(
            axis=tuple(i for i in range(xv.ndim) if shape[i] == 1)).reshape(slope.shape)),
    ])


def expm1_ratio(a, tol: float = 1e-6) -> Node:
    """(exp(z) - 1) / z with the series limit near z == 0."""
    a = as_node(a)
    z = a.value
    small = np.abs(z) < tol
    if small.any():
        zs = np.where(small, 1.0, z).astype(z.dtype, copy=False)
    else:
        zs = z
    em1 = np.expm1(zs)
    out = em1 / zs
    dout = (em1 + 1.0 - out) / zs
    if small.any():
        out = np.where(small, 1.0 + z / 2 + z * z / 6, out)
        dout = np.where(small, 0.5 + z / 3, dout)
    return make(out, [(a, lambda g: g * dout)])


def phase_atan2(imag, real) -> Node:
    """Wrapped phase of (real, imag) via the sign-corrected arctangent.

    ``arctan(i / r) - (pi / 2) * sgn(i) * (sgn(r) - 1)`` with ``sgn(t) = 1`` for
    ``t >= 0`` else ``-1``; ``r == 0`` takes the limit of ``arctan``.
    """
    i, r = as_node(imag), as_node(real)
    out = wrapped_phase(i.value, r.value)
    den = r.value * r.value + i.value * i.value
    den = np.where(den == 0, 1.0, den)
    rv, iv = r.value, i.value
    return make(out, [
        (i, lambda g: g * rv / den),
        (r, lambda g: -g * iv / den),
    ])


def wrapped_phase(imag: np.ndarray, real: np.ndarray) -> np.ndarray:
    imag = np.asarray(imag)
    real = np.asarray(real)
    sgn_i = np.where(imag >= 0, 1.0, -1.0)
    sgn_r = np.where(real >= 0, 1.0, -1.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        base = np.arctan(imag / real)
    base = np.where(real == 0, np.where(imag == 0, 0.0, sgn_i * np.pi / 2), base)
    out = base - (np.pi / 2) * sgn_i * (sgn_r - 1.0)
    # arctan(-0.0) gives -0.0; map to +pi so the range stays (-pi, pi]
    return np.where(out <= -np.pi, out + 2 * np.pi, out)


def squared_error(a, b) -> Node:
    d = sub(a, b)
    return mul(d, d)


# ---------------------------------------------------------------- reductions

def sum(a, axis=None, keepdims=False) -> Node:  # noqa: A001
    a = as_node(a)
    shape = a.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return make(a.value.sum(axis=axis, keepdims=keepdims), [(a, back)])


def mean(a, axis=None, keepdims=False) -> Node:
    a = as_node(a)
    if axis is None:
        n = a.value.size
    else:
        axes = (axis,) if np.isscalar(axis) else axis
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------- shape ops

def reshape(a, shape) -> Node:
    a = as_node(a)
    old = a.shape
    return make(a.value.reshape(shape), [(a, lambda g: g.reshape(old))])


def transpose(a, axes=None) -> Node:
    a = as_node(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return make(np.transpose(a.value, axes), [(a, lambda g: np.transpose(g, inv))])


def flip(a, axis: int) -> Node:
    a = as_node(a)
    return make(np.flip(a.value, axis).copy(), [(a, lambda g: np.flip(g, axis).copy())])


def _is_basic(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, type(np.s_[:]), type(Ellipsis))) or i is None
               for i in items)


def getitem(a, idx) -> Node:
    a = as_node(a)
    shape, dtype = a.shape, a.dtype

    basic = _is_basic(idx)

    def back(g):
        out = np.zeros(shape, dtype=g.dtype if g.dtype.kind == "f" else dtype)
        if basic:
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return out

    return make(a.value[idx], [(a, back)])


slice = getitem  # noqa: A001


def concat(items, axis: int = 0) -> Node:
    nodes = [as_node(x) for x in items]
    sizes = [n.shape[axis] for n in nodes]
    bounds = np.cumsum([0] + sizes)
    parents = []
    for k, n in enumerate(nodes):
        lo, hi = int(bounds[k]), int(bounds[k + 1])

        def back(g, lo=lo, hi=hi):
            sl = [np.s_[:]] * g.ndim
            sl[axis] = np.s_[lo:hi]
            return g[tuple(sl)]

        parents.append((n, back))
    return make(np.concatenate([n.value for n in nodes], axis=axis), parents)


def pad(a, widths) -> Node:
    """Zero padding; ``widths`` as for ``np.pad``."""
    a = as_node(a)
    widths = [tuple(w) for w in widths]
    sl = tuple(np.s_[lo:lo + n] for (lo, _), n in zip(widths, a.shape))
    return make(np.pad(a.value, widths), [(a, lambda g: g[sl])])


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    av, bv = a.value, b.value
    out = av @ bv
    _FLOPS[0] += int(out.size) * int(av.shape[-1])
    return make(out, [
        (a, lambda g: _unbroadcast(g @ np.swapaxes(bv, -1, -2), a.shape)),
        (b, lambda g: _unbroadcast(np.swapaxes(av, -1, -2) @ g, b.shape)),
    ])


def linear(x, weight, bias=None) -> Node:
    """``x @ weight.T + bias`` with weight stored (out, in)."""
    y = matmul(x, transpose(weight, (1, 0)))
    return y if bias is None else add(y, bias)


# ---------------------------------------------------------------- convolutions

def _gather(xp, kh, kw, stride, dil, ho, wo):
    sh, sw = stride
    dh, dw = dil
    b, c = xp.shape[:2]
    cols = np.empty((b, c, kh, kw, ho, wo), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i * dh:i * dh + sh * (ho - 1) + 1:sh,
                                  j * dw:j * dw + sw * (wo - 1) + 1:sw]
    return cols


def _scatter(cols, hp, wp, stride, dil):
    sh, sw = stride
    dh, dw = dil
    b, c, kh, kw, ho, wo = cols.shape
    out = np.zeros((b, c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i * dh:i * dh + sh * (ho - 1) + 1:sh,
                j * dw:j * dw + sw * (wo - 1) + 1:sw] += cols[:, :, i, j]
    return out


def _check_conv_args(stride, dilation):
    if min(stride) < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if min(dilation) < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")


def conv2d(x, weight, bias=None, stride=1, dilation=1, padding=0) -> Node:
    """2-D cross-correlation. x: (B, C, H, W), weight: (O, C, kh, kw)."""
    x, weight = as_node(x), as_node(weight)
    stride, dilation, padding = _pair(stride), _pair(dilation), _pair(padding)
    _check_conv_args(stride, dilation)
    xv, wv = x.value, weight.value
    if xv.ndim != 4 or wv.ndim != 4 or xv.shape[1] != wv.shape[1]:
        raise ValueError(f"conv2d shape mismatch: input {xv.shape}, weight {wv.shape}")
    o, c, kh, kw = wv.shape
    ph, pw = padding
    xp = np.pad(xv, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else xv
    hp, wp = xp.shape[2:]
    ho = (hp - dilation[0] * (kh - 1) - 1) // stride[0] + 1
    wo = (wp - dilation[1] * (kw - 1) - 1) // stride[1] + 1
    if ho < 1 or wo < 1:
        raise ValueError("conv2d output would be empty")
    cols = _gather(xp, kh, kw, stride, dilation, ho, wo)
    out = np.tensordot(cols, wv, axes=([1, 2, 3], [1, 2, 3])).transpose(0, 3, 1, 2)
    _FLOPS[0] += int(out.size) * c * kh * kw
    h, w = xv.shape[2:]

    def back_x(g):
        gcols = np.tensordot(g, wv, axes=([1], [0])).transpose(0, 3, 4, 5, 1, 2)
        gxp = _scatter(gcols, hp, wp, stride, dilation)
        return gxp[:, :, ph:ph + h, pw:pw + w]

    def back_w(g):
        return np.tensordot(g, cols, axes=([0, 2, 3], [0, 4, 5]))

    node = make(np.ascontiguousarray(out), [(x, back_x), (weight, back_w)])
    if bias is not None:
        node = add(node, reshape(bias, (1, -1, 1, 1)))
    return node


def conv_transpose2d(x, weight, bias=None, stride=1, dilation=1, padding=0,
                     output_padding=0) -> Node:
    """Adjoint of conv2d w.r.t. its input. x: (B, Cin, H, W), weight: (Cin, Cout, kh, kw)."""
    x, weight = as_node(x), as_node(weight)
    stride, dilation = _pair(stride), _pair(dilation)
    padding, output_padding = _pair(padding), _pair(output_padding)
    _check_conv_args(stride, dilation)
    xv, wv = x.value, weight.value
    if xv.ndim != 4 or wv.ndim != 4 or xv.shape[1] != wv.shape[0]:
        raise ValueError(f"conv_transpose2d shape mismatch: input {xv.shape}, weight {wv.shape}")
    cin, cout, kh, kw = wv.shape
    h, w = xv.shape[2:]
    hf = (h - 1) * stride[0] + dilation[0] * (kh - 1) + 1 + output_padding[0]
    wf = (w - 1) * stride[1] + dilation[1] * (kw - 1) + 1 + output_padding[1]
    ph, pw = padding
    ho, wo = hf - 2 * ph, wf - 2 * pw
    if ho < 1 or wo < 1:
        raise ValueError("conv_transpose2d output would be empty")
    cols = np.tensordot(xv, wv, axes=([1], [0])).transpose(0, 3, 4, 5, 1, 2)
    full = _scatter(cols, hf, wf, stride, dilation)
    out = full[:, :, ph:ph + ho, pw:pw + wo]
    _FLOPS[0] += int(xv.size) * cout * kh * kw

    def _gcols(g):
        gfull = np.zeros((g.shape[0], cout, hf, wf), dtype=g.dtype)
        gfull[:, :, ph:ph + ho, pw:pw + wo] = g
        return _gather(gfull, kh, kw, stride, dilation, h, w)

    def back_x(g):
        gc = _gcols(g)
        return np.tensordot(gc, wv, axes=([1, 2, 3], [1, 2, 3])).transpose(0, 3, 1, 2)

    def back_w(g):
        gc = _gcols(g)
        return np.tensordot(xv, gc, axes=([0, 2, 3], [0, 4, 5]))

    node = make(np.ascontiguousarray(out), [(x, back_x), (weight, back_w)])
    if bias is not None:
        node = add(node, reshape(bias, (1, -1, 1, 1)))
    return node


def conv1d_depthwise(x, weight, bias=None) -> Node:
    """Causal depthwise conv along time. x: (B, T, C), weight: (C, K)."""
    x, weight = as_node(x), as_node(weight)
    xv, wv = x.value, weight.value
    b, t, c = xv.shape
    if wv.shape[0] != c:
        raise ValueError(f"depthwise weight {wv.shape} does not match {c} channels")
    k = wv.shape[1]
    xp = np.pad(xv, ((0, 0), (k - 1, 0), (0, 0)))
    out = np.zeros_like(xv)
    for j in range(k):
        out += xp[:, j:j + t, :] * wv[:, j]
    _FLOPS[0] += int(xv.size) * k

    def back_x(g):
        gxp = np.zeros_like(xp, dtype=g.dtype)
        for j in range(k):
            gxp[:, j:j + t, :] += g * wv[:, j]
        return gxp[:, k - 1:, :]

    def back_w(g):
        gw = np.empty_like(wv, dtype=g.dtype)
        for j in range(k):
            gw[:, j] = (g * xp[:, j:j + t, :]).sum(axis=(0, 1))
        return gw

    node = make(out, [(x, back_x), (weight, back_w)])
    if bias is not None:
        node = add(node, bias)
    return node


def instance_norm(x, eps: float = 1e-5, axes=(2, 3)) -> Node:
    """Per-instance, per-channel normalization with biased variance."""
    x = as_node(x)
    xv = x.value
    mu = xv.mean(axis=axes, keepdims=True)
    xc = xv - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def back(g):
        gm = g.mean(axis=axes, keepdims=True)
        gx = (g * xhat).mean(axis=axes, keepdims=True)
        return inv * (g - gm - xhat * gx)

    return make(xhat, [(x, back)])


# ---------------------------------------------------------------- state space scan

def selective_scan(u, a_bar, b_bar, c, d_skip) -> Node:
    """Linear recurrence h[t] = a_bar[t] * h[t-1] + b_bar[t] * u[t], y = C h + D u.

    u: (B, T, D); a_bar, b_bar: (B, T, D, N); c: (B, T, N); d_skip: (D,).
    """
    u, a_bar, b_bar = as_node(u), as_node(a_bar), as_node(b_bar)
    c, d_skip = as_node(c), as_node(d_skip)
    uv, av, bv, cv, dv = u.value, a_bar.value, b_bar.value, c.value, d_skip.value
    if av.shape != bv.shape or av.shape[:3] != uv.shape or cv.shape != av.shape[:2] + av.shape[3:]:
        raise ValueError(
            f"selective_scan shape mismatch: u {uv.shape}, a_bar {av.shape}, "
            f"b_bar {bv.shape}, c {cv.shape}")
    nb, nt, nd, nn = av.shape
    bu = bv * uv[..., None]
    hs = np.empty_like(av)
    h = np.zeros((nb, nd, nn), dtype=av.dtype)
    for t in range(nt):
        h = av[:, t] * h + bu[:, t]
        hs[:, t] = h
    y = np.einsum("btdn,btn->btd", hs, cv) + uv * dv
    _FLOPS[0] += 4 * int(av.size)
    cache = {}

    def _dh(g):
        if "dh" in cache:
            return cache["dh"]
        dhs = np.empty_like(hs, dtype=g.dtype)
        gh = np.einsum("btd,btn->btdn", g, cv)
        carry = np.zeros((nb, nd, nn), dtype=g.dtype)
        for t in range(nt - 1, -1, -1):
            carry = gh[:, t] + carry
            dhs[:, t] = carry
            carry = carry * av[:, t]
        cache["dh"] = dhs
        return dhs

    def back_u(g):
        return (_dh(g) * bv).sum(axis=-1) + g * dv

    def back_a(g):
        h_prev = np.concatenate([np.zeros_like(hs[:, :1]), hs[:, :-1]], axis=1)
        return _dh(g) * h_prev

    def back_b(g):
        return _dh(g) * uv[..., None]

    def back_c(g):
        return np.einsum("btd,btdn->btn", g, hs)

    def back_d(g):
        return (g * uv).sum(axis=(0, 1))

    return make(y, [(u, back_u), (a_bar, back_a), (b_bar, back_b), (c, back_c), (d_skip, back_d)])
