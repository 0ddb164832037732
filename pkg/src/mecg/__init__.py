"""Mamba-based spectrogram-domain ECG baseline-wander removal."""
from .baselines import FIRBaseline, IIRBaseline, fir_baseline, iir_baseline
from .data import (EcgRecord, EcgSegment, NoisyPair, mix_noise, normalize_noise,
                   parse_wfdb_record, segment_record)
from .estimator import MECGDenoiser, __version__
from .metrics import MetricReport, compute_metrics
from .net import MECGNet, ModelConfig, loss_all
from .spectral import StftConfig, assemble_features, compress, istft, stft

__all__ = [
    "EcgRecord", "EcgSegment", "FIRBaseline", "IIRBaseline", "MECGDenoiser", "MECGNet",
    "MetricReport", "ModelConfig", "NoisyPair", "StftConfig", "__version__", "assemble_features",
    "compress", "compute_metrics", "fir_baseline", "iir_baseline", "istft", "loss_all",
    "mix_noise", "normalize_noise", "parse_wfdb_record", "segment_record", "stft",
]
