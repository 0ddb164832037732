import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mecg.autodiff import Node, OptimState, adamw_step, backward, finite_diff_check, no_grad, ops
from mecg.net import (DilatedDenseNet, EnhancedOutput, Encoder, MECGNet, ModelConfig, loss_all,
                      magnitude_from_mask, phase_from_components, reconstruct)
from mecg.spectral import StftConfig, istft, stft, stft_node

F64 = np.float64
TINY = dict(dim=8, n_blocks=1)


def tiny(mode="mag_phase", **kw):
    return ModelConfig(mode=mode, **{**TINY, **kw})


def test_config_validation():
    for bad in (dict(c=0.0), dict(c=1.5), dict(n_blocks=0), dict(mode="polar"),
                dict(densenet_dilations=(1, 4, 2))):
        with pytest.raises(ValueError):
            ModelConfig(**bad)
    cfg = tiny(c=0.5)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


# ------------------------------------------------------------ encoder

def test_encoder_shape(rng):
    enc = Encoder(32, rng, np.float32)
    with no_grad():
        out = enc(rng.standard_normal((1, 2, 57, 33)).astype(np.float32))
    assert out.shape == (1, 32, 57, 17)


def test_encoder_zero_in_zero_out(rng):
    enc = Encoder(8, rng, F64)
    with no_grad():
        assert np.all(enc(np.zeros((1, 2, 10, 33))).value == 0)


def test_densenet_time_receptive_field(rng):
    # instance norm mixes statistics over the whole map, so the probe runs without it
    net = DilatedDenseNet(4, rng, F64, use_norm=False)
    x = rng.standard_normal((1, 4, 40, 5))
    t0 = 10
    xp = x.copy()
    xp[0, :, t0, :] += 1.0
    with no_grad():
        diff = np.abs(net(xp).value - net(x).value).max(axis=(0, 1, 3))
    touched = np.nonzero(diff > 0)[0]
    assert touched.min() >= t0
    assert touched.max() - t0 <= (2 - 1) * (1 + 2 + 4 + 8)


# ------------------------------------------------------------ mask and phase

def test_mask_examples(rng):
    x = np.abs(rng.standard_normal((3, 4))) + 0.1
    c = 0.3
    np.testing.assert_allclose(magnitude_from_mask(x ** c, np.ones_like(x), c).value, x,
                               rtol=1e-12)
    assert np.all(magnitude_from_mask(x ** c, np.zeros_like(x), c).value == 0)
    out = magnitude_from_mask(np.array([9.0 ** 0.5]), np.array([0.5]), 0.5).value
    assert out[0] == pytest.approx(2.25, abs=1e-12)
    with pytest.raises(ValueError):
        magnitude_from_mask(x, x, 1.2)


@pytest.mark.parametrize("r,i,expect", [(1, 1, math.pi / 4), (-1, 0, math.pi),
                                        (-1, -1, -3 * math.pi / 4), (0, 1, math.pi / 2),
                                        (0, -1, -math.pi / 2)])
def test_phase_examples(r, i, expect):
    out = phase_from_components(np.array([float(r)]), np.array([float(i)])).value[0]
    assert out == pytest.approx(expect, abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
def test_phase_range_and_reference(r, i):
    if r == 0 and i == 0:
        return
    out = phase_from_components(np.array([r]), np.array([i])).value[0]
    assert -math.pi < out <= math.pi
    ref = math.atan2(i, r)
    if ref == -math.pi:
        ref = math.pi
    assert abs(out - ref) <= 1e-12


def test_reconstruct_complex_zero_residual(rng):
    mag = np.abs(rng.standard_normal((2, 3)))
    ph = rng.uniform(-np.pi, np.pi, (2, 3))
    real, imag, _ = reconstruct("complex", Node(mag), noisy_phase=ph,
                                pseudo_real=np.zeros((2, 3)), pseudo_imag=np.zeros((2, 3)))
    np.testing.assert_allclose(real.value + 1j * imag.value, mag * np.exp(1j * ph), atol=1e-15)
    with pytest.raises(ValueError):
        reconstruct("polar", Node(mag))


def test_reconstruct_mag_phase_identity(rng):
    x = rng.standard_normal((1, 128))
    spec = stft(x)
    real, imag, _ = reconstruct("mag_phase", Node(spec.magnitude), phase_hat=Node(spec.phase))
    spec.real, spec.imag = real.value, imag.value
    np.testing.assert_allclose(istft(spec), x, atol=1e-6)


# ------------------------------------------------------------ forward

@pytest.mark.parametrize("mode", ["complex", "mag_phase"])
def test_forward_shapes_determinism(mode, rng):
    net = MECGNet(tiny(mode), seed=0)
    x = rng.standard_normal((2, 512))
    with no_grad():
        a = net(x)
        b = net(x)
    assert a.signal.shape == (2, 512)
    assert a.mag.shape == a.phase.shape == (2, 65, 33)
    np.testing.assert_array_equal(a.signal.value, b.signal.value)
    assert np.all(np.isfinite(a.signal.value))
    assert np.abs(a.signal.value - x).max() > 1e-3
    assert np.all(a.mag.value >= 0)
    m = a.mask.value
    assert np.all((m > 0) & (m < 2))


@pytest.mark.parametrize("mode", ["complex", "mag_phase"])
def test_identity_path(mode, rng):
    net = MECGNet(tiny(mode), seed=1, dtype=F64)
    x = rng.standard_normal((1, 512))
    with no_grad():
        y = net(x, unit_mask=True, noisy_phase=True).signal.value
    np.testing.assert_allclose(y, x, atol=1e-6)


# ------------------------------------------------------------ loss

def _out_from(signal, cfg=StftConfig()):
    s = Node(np.atleast_2d(signal))
    r, i = stft_node(s, cfg)
    return EnhancedOutput(s, None, None, r, i)


def test_loss_zero_when_equal(rng):
    x = rng.standard_normal((2, 128))
    parts = loss_all(_out_from(x), x, 0.3, StftConfig())
    assert parts.total.value == pytest.approx(0.0, abs=1e-10)


def test_loss_time_offset(rng):
    x = rng.standard_normal((1, 128))
    parts = loss_all(_out_from(x + 1.0), x, 0.3, StftConfig(), weights=(1, 0, 0))
    assert parts.time == pytest.approx(1.0, abs=1e-12)
    assert parts.total.value == pytest.approx(1.0, abs=1e-12)


def test_loss_consistency_fixed_point(rng):
    x = rng.standard_normal((3, 128))
    assert loss_all(_out_from(x), x, 0.3, StftConfig()).con <= 1e-10


def test_loss_length_mismatch(rng):
    with pytest.raises(ValueError):
        loss_all(_out_from(rng.standard_normal(128)), np.zeros(64), 0.3, StftConfig())


def test_loss_nonnegative(rng):
    net = MECGNet(tiny(), seed=2, dtype=F64)
    x = rng.standard_normal((2, 128))
    with no_grad():
        parts = loss_all(net(x), rng.standard_normal((2, 128)), 0.3, StftConfig())
    assert parts.total.value > 0 and min(parts.time, parts.cpx, parts.con) >= 0


@pytest.mark.parametrize("mode", ["complex", "mag_phase"])
def test_end_to_end_gradient(mode):
    r = np.random.default_rng(5)
    cfg = tiny(mode)
    net = MECGNet(cfg, seed=3, dtype=F64)
    noisy, clean = r.standard_normal((1, 128)), r.standard_normal((1, 128))
    params = list(net.parameters().values())

    def fn(_):
        return loss_all(net(noisy), clean, cfg.c, cfg.stft).total

    err = finite_diff_check(fn, params, h=1e-5, n_coords=2, seed=0)
    assert err <= 1e-3


@pytest.mark.parametrize("seed", range(5))
def test_small_step_decreases_loss(seed):
    r = np.random.default_rng(seed)
    cfg = tiny()
    net = MECGNet(cfg, seed=seed, dtype=F64)
    noisy = r.standard_normal((4, 128))
    clean = noisy - 0.5 * np.sin(np.linspace(0, 2, 128))
    params = net.parameters()
    loss = loss_all(net(noisy), clean, cfg.c, cfg.stft).total
    backward(loss)
    before = float(loss.value)
    adamw_step(params, OptimState(lr=1e-6))
    with no_grad():
        after = float(loss_all(net(noisy), clean, cfg.c, cfg.stft).total.value)
    assert after < before
