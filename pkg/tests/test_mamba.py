import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mecg.autodiff import Node, finite_diff_check, no_grad, ops
from mecg.mamba import (BiMambaBlock, MambaLayer, TFBiMamba, scan_reference, selective_scan,
                        tf_bi_mamba, zoh_discretize)

F64 = np.float64


def zoh(delta, a, b):
    out = zoh_discretize(np.array([[a]]), np.array([[b]]), np.array([[delta]]))
    return float(out[0].value.ravel()[0]), float(out[1].value.ravel()[0])


def test_zoh_scalar_example():
    a_bar, b_bar = zoh(0.1, -1.0, 2.0)
    # independent closed form
    assert a_bar == pytest.approx(math.exp(-0.1), abs=1e-12)
    assert b_bar == pytest.approx((math.exp(-0.1) - 1) / -1.0 * 2.0, abs=1e-12)
    assert a_bar == pytest.approx(0.904837, abs=1e-6)
    assert b_bar == pytest.approx(0.190325, abs=1e-6)


def test_zoh_a_zero_series_branch():
    a_bar, b_bar = zoh(0.3, 0.0, 2.0)
    assert a_bar == 1.0 and b_bar == pytest.approx(0.6, abs=1e-15)


def test_zoh_small_delta_limit():
    a_bar, b_bar = zoh(1e-9, -3.0, 2.0)
    assert a_bar == pytest.approx(1.0, abs=1e-8)
    assert b_bar == pytest.approx(2e-9, rel=1e-6)


def test_zoh_rejects_nonpositive_delta():
    with pytest.raises(ValueError):
        zoh(0.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        zoh(-0.1, -1.0, 1.0)


def test_zoh_shapes(rng):
    a_bar, b_bar = zoh_discretize(-np.abs(rng.standard_normal((3, 4))),
                                  rng.standard_normal((7, 4)),
                                  np.abs(rng.standard_normal((7, 3))) + 0.01)
    assert a_bar.shape == b_bar.shape == (7, 3, 4)
    assert np.all(a_bar.value < 1)


# ------------------------------------------------------------ scan

def _instance(r):
    T, D, N = r.integers(1, 65), r.integers(1, 9), r.integers(1, 17)
    A = -np.exp(r.standard_normal((D, N)))
    delta = np.exp(r.uniform(-4, 0, (T, D)))
    a_bar, b_bar = zoh_discretize(A, r.standard_normal((T, N)), delta)
    return (r.standard_normal((T, D)), a_bar.value, b_bar.value,
            r.standard_normal((T, N)), r.standard_normal(D))


def test_scan_matches_literal_recurrence():
    r = np.random.default_rng(7)
    for _ in range(50):
        args = _instance(r)
        y = selective_scan(*args).value
        ref = scan_reference(*args)
        assert np.linalg.norm(y - ref) <= 1e-6 * max(np.linalg.norm(ref), 1e-300)


def test_scan_example_geometric():
    y = selective_scan(np.array([[1.0], [0], [0]]), np.full((3, 1, 1), 0.5),
                       np.ones((3, 1, 1)), np.ones((3, 1)), np.zeros(1)).value
    np.testing.assert_allclose(y.ravel(), [1, 0.5, 0.25])


def test_scan_memoryless(rng):
    T, D, N = 6, 3, 4
    u, b, c, d = (rng.standard_normal((T, D)), rng.standard_normal((T, D, N)),
                  rng.standard_normal((T, N)), rng.standard_normal(D))
    y = selective_scan(u, np.zeros((T, D, N)), b, c, d).value
    expect = np.einsum("tn,tdn->td", c, b * u[..., None]) + d * u
    np.testing.assert_allclose(y, expect, atol=1e-12)


def test_scan_zero_input(rng):
    T, D, N = 5, 2, 3
    y = selective_scan(np.zeros((T, D)), rng.uniform(0, 1, (T, D, N)),
                       rng.standard_normal((T, D, N)), rng.standard_normal((T, N)),
                       rng.standard_normal(D)).value
    assert np.all(y == 0)


def test_scan_stability_long_run():
    r = np.random.default_rng(0)
    T, D, N = 10_000, 2, 4
    A = -np.exp(r.standard_normal((D, N)))
    delta = r.uniform(1e-3, 1.0, (T, D))
    a_bar, b_bar = zoh_discretize(A, r.standard_normal((T, N)), delta)
    u = r.uniform(-1, 1, (T, D))
    y = selective_scan(u, a_bar, b_bar, r.standard_normal((T, N)), np.ones(D)).value
    assert np.all(np.isfinite(y))
    assert np.abs(y).max() < 1e4


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_scan_gradient_property(seed):
    r = np.random.default_rng(seed)
    T, D, N = 4, 2, 3
    u = r.standard_normal((1, T, D))
    a = r.uniform(0.1, 0.9, (1, T, D, N))
    b = r.standard_normal((1, T, D, N))
    c = r.standard_normal((1, T, N))
    d = r.standard_normal(D)
    err = finite_diff_check(lambda n: ops.sum(ops.sin(ops.selective_scan(*n))), [u, a, b, c, d])
    assert err <= 1e-6


# ------------------------------------------------------------ layers

def _layer(d, seed=0, **kw):
    return MambaLayer(d, np.random.default_rng(seed), F64, **kw)


@pytest.mark.parametrize("T,d", [(5, 8), (57, 32)])
def test_mamba_shape(T, d, rng):
    with no_grad():
        y = _layer(d)(rng.standard_normal((1, T, d)))
    assert y.shape == (1, T, d)


def test_mamba_zero_in_zero_out():
    with no_grad():
        y = _layer(8)(np.zeros((2, 9, 8)))
    assert np.all(y.value == 0)


def test_mamba_causal(rng):
    layer = _layer(8)
    x = rng.standard_normal((1, 20, 8))
    with no_grad():
        base = layer(x).value
        for t0 in (5, 13):
            xp = x.copy()
            xp[0, t0] += 1.0
            out = layer(xp).value
            np.testing.assert_array_equal(out[0, :t0], base[0, :t0])
            assert np.abs(out[0, t0:] - base[0, t0:]).max() > 1e-6


def test_mamba_dt_rank_and_init():
    layer = _layer(32)
    assert layer.dt_rank == 2 and layer.d_inner == 64
    delta = np.log1p(np.exp(layer.dt_proj.bias.value))
    assert delta.min() >= 1e-3 - 1e-12 and delta.max() <= 1e-1 + 1e-12
    assert np.all(-np.exp(layer.A_log.value) < 0)


def _tied_block(d, flip=True):
    blk = BiMambaBlock(d, np.random.default_rng(3), F64, flip=flip)
    blk.bwd.load_state_dict(blk.fwd.state_dict())
    blk.mix.weight.value[:, d:] = blk.mix.weight.value[:, :d]
    return blk


def test_bimamba_palindrome_symmetry(rng):
    half = rng.standard_normal((1, 6, 8))
    x = np.concatenate([half, half[:, ::-1]], axis=1)
    with no_grad():
        y = _tied_block(8)(x).value
        y_noflip = _tied_block(8, flip=False)(x).value
    np.testing.assert_allclose(y, y[:, ::-1], atol=1e-12)
    assert np.abs(y_noflip - y_noflip[:, ::-1]).max() > 1e-3


def test_bimamba_zero_and_noncausal(rng):
    blk = BiMambaBlock(8, np.random.default_rng(0), F64)
    with no_grad():
        assert np.all(blk(np.zeros((1, 5, 8))).value == 0)
        x = rng.standard_normal((1, 10, 8))
        xp = x.copy()
        xp[0, 7] += 1.0
        diff = blk(xp).value - blk(x).value
    assert np.abs(diff[0, :7]).max() > 1e-6


def test_tf_bimamba_shape():
    tf = TFBiMamba(32, np.random.default_rng(0), np.float32)
    with no_grad():
        y = tf(np.random.default_rng(1).standard_normal((1, 32, 57, 17)).astype(np.float32))
    assert y.shape == (1, 32, 57, 17)


def test_tf_time_only_rowwise(rng):
    tf = TFBiMamba(8, np.random.default_rng(0), F64)
    x = rng.standard_normal((1, 8, 6, 5))
    with no_grad():
        y = tf(x, time_only=True).value
        for f in range(5):
            row = tf.time_block(x[0, :, :, f].T[None]).value[0]
            np.testing.assert_allclose(y[0, :, :, f], row.T, atol=1e-12)


def test_tf_receptive_field_spans_grid(rng):
    tf = TFBiMamba(8, np.random.default_rng(0), F64)
    x = rng.standard_normal((1, 8, 6, 5))
    xp = x.copy()
    xp[0, :, 2, 3] += 1.0
    with no_grad():
        diff = np.abs(tf(xp).value - tf(x).value).max(axis=1)[0]
    assert np.all(diff > 0)


def test_tf_stack_gradient(rng):
    tf = TFBiMamba(8, np.random.default_rng(0), F64)
    x = Node(rng.standard_normal((1, 8, 4, 4)))
    params = list(tf.parameters().values())
    err = finite_diff_check(lambda n: ops.sum(ops.sin(tf(n[0]))), [x] + params,
                            n_coords=6, seed=1)
    assert err <= 1e-4


def test_tf_function_matches_module(rng):
    tf = TFBiMamba(8, np.random.default_rng(0), F64)
    x = rng.standard_normal((2, 8, 3, 4))
    with no_grad():
        np.testing.assert_array_equal(tf(x).value,
                                      tf_bi_mamba(x, tf.time_block, tf.freq_block).value)
