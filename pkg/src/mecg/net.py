"""The end-to-end denoiser: encoder, TF-Bi-Mamba stack, mask/phase decoders, losses."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Node, ops
from .autodiff.node import as_node
from .layers import Conv2d, ConvTranspose2d, InstanceNorm2d, Module, PReLU
from .mamba import TFBiMamba
from .spectral import (MODES, StftConfig, assemble_features, compress, compress_node,
                       istft_node, stft, stft_node)


@dataclass
class ModelConfig:
    mode: str = "mag_phase"
    c: float = 0.3
    n_blocks: int = 4
    dim: int = 32
    densenet_dilations: tuple = (1, 2, 4, 8)
    stft: StftConfig = field(default_factory=StftConfig)
    d_state: int = 16
    d_conv: int = 4
    expand: int = 2

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 < self.c <= 1.0:
            raise ValueError(f"c must lie in (0, 1], got {self.c}")
        if self.n_blocks < 1 or self.dim < 1:
            raise ValueError("n_blocks and dim must be >= 1")
        dil = tuple(int(d) for d in self.densenet_dilations)
        if not dil or any(b <= a for a, b in zip(dil, dil[1:])) or dil[0] < 1:
            raise ValueError(f"dilations must be positive and strictly increasing, got {dil}")
        self.densenet_dilations = dil

    def to_dict(self) -> dict:
        d = asdict(self)
        d["densenet_dilations"] = list(self.densenet_dilations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        s = d.pop("stft", None) or {}
        d["densenet_dilations"] = tuple(d.get("densenet_dilations", (1, 2, 4, 8)))
        return cls(stft=StftConfig(**s), **d)


@dataclass
class EnhancedOutput:
    signal: Node  # (B, L)
    mag: Node  # (B, T, F), uncompressed
    phase: Node | np.ndarray  # (B, T, F)
    real: Node
    imag: Node
    mask: Node | None = None


class ConvBlock(Module):
    def __init__(self, c_in, c_out, kernel, rng, dtype, stride=1, padding=0):
        self.conv = Conv2d(c_in, c_out, kernel, rng, dtype, stride=stride, padding=padding)
        self.norm = InstanceNorm2d(c_out, dtype)
        self.act = PReLU(c_out, dtype)

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


class DilatedDenseNet(Module):
    """Densely connected convs with growing time dilation (causal time padding)."""

    def __init__(self, dim, rng, dtype, dilations=(1, 2, 4, 8), use_norm=True):
        self.dilations = tuple(dilations)
        self.use_norm = use_norm
        self.convs = [Conv2d(dim * (i + 1), dim, (2, 3), rng, dtype, dilation=(d, 1))
                      for i, d in enumerate(self.dilations)]
        self.norms = [InstanceNorm2d(dim, dtype) for _ in self.dilations]
        self.acts = [PReLU(dim, dtype) for _ in self.dilations]

    def forward(self, x):
        skip = x
        out = x
        for d, conv, norm, act in zip(self.dilations, self.convs, self.norms, self.acts):
            h = ops.pad(skip, ((0, 0), (0, 0), (d, 0), (1, 1)))
            h = conv(h)
            if self.use_norm:
                h = norm(h)
            out = act(h)
            skip = ops.concat([out, skip], axis=1)
        return out


class Encoder(Module):
    def __init__(self, dim, rng, dtype, dilations=(1, 2, 4, 8)):
        self.lift = ConvBlock(2, dim, (1, 1), rng, dtype)
        self.dense = DilatedDenseNet(dim, rng, dtype, dilations)
        self.down = ConvBlock(dim, dim, (1, 3), rng, dtype, stride=(1, 2), padding=(0, 1))

    def forward(self, feats):
        return self.down(self.dense(self.lift(feats)))


class _Upsample(Module):
    def __init__(self, dim, rng, dtype):
        self.deconv = ConvTranspose2d(dim, dim, (1, 3), rng, dtype, stride=(1, 2), padding=(0, 1))
        self.norm = InstanceNorm2d(dim, dtype)
        self.act = PReLU(dim, dtype)

    def forward(self, h, n_freq):
        extra = n_freq - (2 * h.shape[3] - 1)
        y = ops.conv_transpose2d(h, self.deconv.weight, self.deconv.bias, stride=(1, 2),
                                 padding=(0, 1), output_padding=(0, extra))
        return self.act(self.norm(y))


class MaskDecoder(Module):
    def __init__(self, dim, rng, dtype, dilations=(1, 2, 4, 8), gain=2.0):
        self.dense = DilatedDenseNet(dim, rng, dtype, dilations)
        self.up = _Upsample(dim, rng, dtype)
        self.head = Conv2d(dim, 1, (1, 1), rng, dtype)
        self.gain = gain

    def forward(self, h, n_freq):
        y = self.head(self.up(self.dense(h), n_freq))
        return ops.mul(ops.sigmoid(y[:, 0]), self.gain)  # (B, T, F) in (0, gain)


class PhaseDecoder(Module):
    def __init__(self, dim, rng, dtype, dilations=(1, 2, 4, 8)):
        self.dense = DilatedDenseNet(dim, rng, dtype, dilations)
        self.up = _Upsample(dim, rng, dtype)
        self.conv_r = Conv2d(dim, 1, (1, 1), rng, dtype)
        self.conv_i = Conv2d(dim, 1, (1, 1), rng, dtype)

    def forward(self, h, n_freq):
        y = self.up(self.dense(h), n_freq)
        return self.conv_r(y)[:, 0], self.conv_i(y)[:, 0]


def magnitude_from_mask(noisy_mag_c, mask, c: float):
    """Apply the mask to the compressed noisy magnitude, then undo the compression."""
    if not 0.0 < c <= 1.0:
        raise ValueError(f"c must lie in (0, 1], got {c}")
    return ops.power(ops.mul(noisy_mag_c, mask), 1.0 / c)


def phase_from_components(pseudo_real, pseudo_imag):
    """Wrapped phase estimate in (-pi, pi] from pseudo-real/imag maps."""
    return ops.phase_atan2(pseudo_imag, pseudo_real)


def reconstruct(mode, mag_hat, noisy_phase=None, pseudo_real=None, pseudo_imag=None,
                phase_hat=None):
    """Combine the enhanced magnitude with a phase into (real, imag, phase) nodes.

    complex: noisy phase plus additive pseudo-real/imag residuals.
    mag_phase: ``phase_hat`` (or the arctangent of the pseudo components).
    """
    if mode == "complex":
        cos_p, sin_p = np.cos(noisy_phase), np.sin(noisy_phase)
        real = ops.mul(mag_hat, cos_p)
        imag = ops.mul(mag_hat, sin_p)
        if pseudo_real is not None:
            real = ops.add(real, pseudo_real)
            imag = ops.add(imag, pseudo_imag)
        phase = ops.phase_atan2(imag, real)
        return real, imag, phase
    if mode == "mag_phase":
        if phase_hat is None:
            phase_hat = phase_from_components(pseudo_real, pseudo_imag)
        return ops.mul(mag_hat, ops.cos(phase_hat)), ops.mul(mag_hat, ops.sin(phase_hat)), phase_hat
    raise ValueError(f"unknown mode {mode!r}")


class MECGNet(Module):
    def __init__(self, config: ModelConfig | None = None, seed: int = 0, dtype=np.float32):
        config = config or ModelConfig()
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        dil = config.densenet_dilations
        mk = dict(d_state=config.d_state, d_conv=config.d_conv, expand=config.expand)
        self.encoder = Encoder(config.dim, rng, dtype, dil)
        self.blocks = [TFBiMamba(config.dim, rng, dtype, **mk) for _ in range(config.n_blocks)]
        self.mask_decoder = MaskDecoder(config.dim, rng, dtype, dil)
        self.phase_decoder = PhaseDecoder(config.dim, rng, dtype, dil)

    def features(self, noisy: np.ndarray):
        cfg = self.config
        spec = stft(noisy, cfg.stft)
        spec_c = compress(spec, cfg.c)
        feats = assemble_features(spec_c, cfg.mode)
        planes = np.moveaxis(feats.planes, -1, -3).astype(self.dtype)  # (B, 2, T, F)
        return spec, spec_c, planes

    def forward(self, noisy, unit_mask: bool = False, noisy_phase: bool = False) -> EnhancedOutput:
        """Denoise a (B, L) batch.

        ``unit_mask`` forces the mask to one; ``noisy_phase`` replaces the
        decoded phase with the input phase (and drops the complex residuals).
        """
        cfg = self.config
        noisy = np.atleast_2d(np.asarray(noisy, dtype=np.float64))
        spec, spec_c, planes = self.features(noisy)
        n_freq = cfg.stft.n_freq
        h = self.encoder(Node(planes))
        for block in self.blocks:
            h = block(h)
        if unit_mask:
            mask = Node(np.ones(spec.real.shape, dtype=self.dtype))
        else:
            mask = self.mask_decoder(h, n_freq)
        mag_c = spec_c.magnitude.astype(self.dtype)
        phase_in = spec.phase.astype(self.dtype)
        mag_hat = magnitude_from_mask(mag_c, mask, cfg.c)
        if noisy_phase:
            if cfg.mode == "complex":
                real, imag, phase = reconstruct("complex", mag_hat, noisy_phase=phase_in)
            else:
                real, imag, phase = reconstruct("mag_phase", mag_hat, phase_hat=Node(phase_in))
        else:
            pr, pi = self.phase_decoder(h, n_freq)
            real, imag, phase = reconstruct(cfg.mode, mag_hat, noisy_phase=phase_in,
                                            pseudo_real=pr, pseudo_imag=pi)
        signal = istft_node(real, imag, cfg.stft, noisy.shape[-1])
        return EnhancedOutput(signal, mag_hat, phase, real, imag, mask)


@dataclass
class LossParts:
    total: Node
    time: float
    cpx: float
    con: float


def loss_all(enhanced: EnhancedOutput, clean, c: float, stft_config: StftConfig,
             weights=(0.5, 1.0, 0.5)) -> LossParts:
    """Weighted time-domain L1 + compressed-complex MSE + consistency MSE."""
    clean = np.atleast_2d(np.asarray(clean))
    x_hat = enhanced.signal
    if x_hat.shape != clean.shape:
        raise ValueError(f"length mismatch: enhanced {x_hat.shape} vs clean {clean.shape}")
    clean = clean.astype(x_hat.dtype)
    g_time, g_cpx, g_con = weights
    l_time = ops.mean(ops.abs(ops.sub(x_hat, clean)))

    yr, yi = stft_node(Node(clean), stft_config)
    ycr, yci = compress_node(yr, yi, c)
    xcr, xci = compress_node(enhanced.real, enhanced.imag, c)
    l_cpx = ops.mul(ops.add(ops.mean(ops.squared_error(ycr, xcr)),
                            ops.mean(ops.squared_error(yci, xci))), 0.5)
    rr, ri = stft_node(x_hat, stft_config)
    rcr, rci = compress_node(rr, ri, c)
    l_con = ops.mul(ops.add(ops.mean(ops.squared_error(xcr, rcr)),
                            ops.mean(ops.squared_error(xci, rci))), 0.5)
    total = ops.add(ops.add(ops.mul(l_time, g_time), ops.mul(l_cpx, g_cpx)),
                    ops.mul(l_con, g_con))
    return LossParts(total, float(l_time.value), float(l_cpx.value), float(l_con.value))


def spectrum_features(noisy, config: ModelConfig):
    """Noisy compressed magnitude and phase as plain arrays (B, T, F)."""
    spec = stft(np.atleast_2d(noisy), config.stft)
    return compress(spec, config.c).magnitude, spec.phase


__all__ = ["ConvBlock", "DilatedDenseNet", "EnhancedOutput", "Encoder", "LossParts",
           "MECGNet", "MaskDecoder", "ModelConfig", "PhaseDecoder", "loss_all",
           "magnitude_from_mask", "phase_from_components", "reconstruct", "spectrum_features"]
