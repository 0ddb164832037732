"""STFT analysis/synthesis, power-law compression and network input features."""
from __future__ import annotations

import functools
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ops
from .autodiff.ops import wrapped_phase

MODES = ("complex", "mag_phase")


def hamming(n: int) -> np.ndarray:
    """Periodic Hamming window (strictly positive)."""
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2 * np.pi * k / n)


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 64
    hop: int = 8
    window: str = "hamming"
    onesided: bool = True

    def __post_init__(self):
        if self.window != "hamming":
            raise ValueError(f"only the Hamming window is supported, got {self.window!r}")
        if not self.onesided:
            raise ValueError("only onesided spectra are supported")
        if self.window_len < 2 or self.window_len % 2:
            raise ValueError(f"window_len must be even and >= 2, got {self.window_len}")
        if not 1 <= self.hop <= self.window_len:
            raise ValueError(f"hop must be in [1, window_len], got {self.hop}")

    @property
    def fft_len(self) -> int:
        return self.window_len

    @property
    def n_freq(self) -> int:
        return self.window_len // 2 + 1

    @property
    def coefficients(self) -> np.ndarray:
        return hamming(self.window_len)

    def n_frames(self, signal_len: int) -> int:
        return 1 + signal_len // self.hop


@dataclass
class ComplexSpectrogram:
    """Real/imag planes of shape (..., T, F)."""

    real: np.ndarray
    imag: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    signal_len: int = 0
    exponent: float = 1.0

    @property
    def shape(self):
        return self.real.shape

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.real, self.imag)

    @property
    def phase(self) -> np.ndarray:
        return wrapped_phase(self.imag, self.real)

    def to_complex(self) -> np.ndarray:
        return self.real + 1j * self.imag


@dataclass
class FeatureTensor:
    planes: np.ndarray  # (..., T, F, 2)
    mode: str
    exponent: float


def stft(signal, config: StftConfig | None = None) -> ComplexSpectrogram:
    """Centered (reflect-padded) Hamming STFT; accepts (..., L) input."""
    config = config or StftConfig()
    x = np.asarray(signal, dtype=np.float64)
    if x.shape[-1] < 1:
        raise ValueError("signal must contain at least one sample")
    n = x.shape[-1]
    half = config.window_len // 2
    widths = [(0, 0)] * (x.ndim - 1) + [(half, half)]
    xp = np.pad(x, widths, mode="reflect") if n > 1 else np.pad(x, widths, mode="edge")
    frames = np.lib.stride_tricks.sliding_window_view(xp, config.window_len, axis=-1)
    frames = frames[..., ::config.hop, :]
    spec = np.fft.rfft(frames * config.coefficients, n=config.fft_len, axis=-1)
    return ComplexSpectrogram(spec.real.copy(), spec.imag.copy(), config, n)


def istft(spec: ComplexSpectrogram) -> np.ndarray:
    """Least-squares overlap-add inverse, trimmed to ``spec.signal_len``."""
    cfg = spec.config
    w = cfg.coefficients
    n_frames = spec.real.shape[-2]
    if spec.real.shape[-1] != cfg.n_freq:
        raise ValueError(f"expected {cfg.n_freq} frequency bins, got {spec.real.shape[-1]}")
    frames = np.fft.irfft(spec.real + 1j * spec.imag, n=cfg.fft_len, axis=-1) * w
    total = (n_frames - 1) * cfg.hop + cfg.window_len
    lead = spec.real.shape[:-2]
    out = np.zeros(lead + (total,))
    norm = np.zeros(total)
    for t in range(n_frames):
        s = t * cfg.hop
        out[..., s:s + cfg.window_len] += frames[..., t, :]
        norm[s:s + cfg.window_len] += w * w
    half = cfg.window_len // 2
    length = spec.signal_len or (total - 2 * half)
    keep = np.s_[half:half + length]
    if norm[keep].size < length or np.min(norm[keep]) < 1e-12:
        raise ValueError("overlap-add normalization vanishes; STFT config cannot be inverted")
    return out[..., keep] / norm[keep]


def compress(spec: ComplexSpectrogram, c: float) -> ComplexSpectrogram:
    """Replace |X| by |X|**c, keeping the phase (zero bins stay zero)."""
    _check_exponent(c)
    mag = spec.magnitude
    phase = spec.phase
    mag_c = mag ** c
    return ComplexSpectrogram(mag_c * np.cos(phase), mag_c * np.sin(phase), spec.config,
                              spec.signal_len, spec.exponent * c)


def assemble_features(spec_c: ComplexSpectrogram, mode: str) -> FeatureTensor:
    if mode == "complex":
        planes = np.stack([spec_c.real, spec_c.imag], axis=-1)
    elif mode == "mag_phase":
        planes = np.stack([spec_c.magnitude, spec_c.phase], axis=-1)
    else:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return FeatureTensor(planes, mode, spec_c.exponent)


def _check_exponent(c):
    if not 0.0 < c <= 1.0:
        raise ValueError(f"compression exponent must lie in (0, 1], got {c}")


# ---------------------------------------------------------------- differentiable path

@functools.lru_cache(maxsize=16)
def _analysis_mats(signal_len: int, config: StftConfig):
    eye = np.eye(signal_len)
    spec = stft(eye, config)  # (L, T, F)
    t, f = spec.real.shape[1:]
    return spec.real.reshape(signal_len, t * f), spec.imag.reshape(signal_len, t * f), (t, f)


@functools.lru_cache(maxsize=16)
def _synthesis_mats(signal_len: int, config: StftConfig):
    t, f = config.n_frames(signal_len), config.n_freq
    eye = np.eye(t * f).reshape(t * f, t, f)
    zeros = np.zeros_like(eye)
    from_real = istft(ComplexSpectrogram(eye, zeros, config, signal_len))
    from_imag = istft(ComplexSpectrogram(zeros, eye, config, signal_len))
    return from_real, from_imag


def stft_node(x, config: StftConfig):
    """Differentiable STFT of a (B, L) node; returns (real, imag) of shape (B, T, F)."""
    x = ops.as_node(x)
    b, n = x.shape
    mr, mi, (t, f) = _analysis_mats(n, config)
    dt = x.dtype
    re = ops.reshape(ops.matmul(x, mr.astype(dt)), (b, t, f))
    im = ops.reshape(ops.matmul(x, mi.astype(dt)), (b, t, f))
    return re, im


def istft_node(real, imag, config: StftConfig, signal_len: int):
    """Differentiable inverse of :func:`stft_node`."""
    real, imag = ops.as_node(real), ops.as_node(imag)
    b, t, f = real.shape
    pr, pi = _synthesis_mats(signal_len, config)
    dt = real.dtype
    return ops.add(ops.matmul(ops.reshape(real, (b, t * f)), pr.astype(dt)),
                   ops.matmul(ops.reshape(imag, (b, t * f)), pi.astype(dt)))


def compress_node(real, imag, c: float, eps: float = 1e-10):
    """Power-law compression of a complex node pair, smoothed at the origin."""
    _check_exponent(c)
    if c == 1.0:
        return ops.as_node(real), ops.as_node(imag)
    mag2 = ops.add(ops.add(ops.mul(real, real), ops.mul(imag, imag)), eps)
    scale = ops.power(mag2, (c - 1.0) / 2.0)
    return ops.mul(real, scale), ops.mul(imag, scale)


# ---------------------------------------------------------------- debug dumps

_HEADER = struct.Struct("<IIIf")


def dump_features(path, feats: FeatureTensor) -> None:
    planes = np.asarray(feats.planes, dtype="<f4")
    if planes.ndim != 3 or planes.shape[-1] != 2:
        raise ValueError(f"expected (T, F, 2) planes, got {planes.shape}")
    t, f, _ = planes.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(t, f, MODES.index(feats.mode), float(feats.exponent)))
        fh.write(np.ascontiguousarray(planes).tobytes())


def load_features(path) -> FeatureTensor:
    with open(path, "rb") as fh:
        t, f, mode, c = _HEADER.unpack(fh.read(_HEADER.size))
        body = fh.read()
    if len(body) != 4 * t * f * 2:
        raise ValueError("spectrogram dump is truncated")
    planes = np.frombuffer(body, dtype="<f4").reshape(t, f, 2).copy()
    return FeatureTensor(planes, MODES[mode], float(c))
