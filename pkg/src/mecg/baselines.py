"""Classical filter baselines as stateless scikit-learn transformers."""
from __future__ import annotations

import numpy as np
from scipy import signal
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array


def design_fir(fs: float, low: float = 0.67, high: float = 150.0, numtaps: int | None = None):
    """Hamming windowed-sinc band-pass kernel (odd length, linear phase)."""
    if not 0 < low < high or not fs > 2 * high:
        raise ValueError(f"invalid cutoffs low={low}, high={high} for fs={fs}")
    if numtaps is None:
        numtaps = 2 * int(round(2.0 * fs / low)) + 1
    numtaps |= 1
    return signal.firwin(numtaps, [low, high], pass_zero=False, fs=fs, window="hamming")


def fir_baseline(noisy, fs: float, low: float = 0.67, high: float = 150.0, numtaps=None):
    kernel = design_fir(fs, low, high, numtaps)
    return _apply_fir(np.asarray(noisy, dtype=np.float64), kernel)


def _apply_fir(x, kernel):
    delay = (len(kernel) - 1) // 2
    n = x.shape[-1]
    full = signal.fftconvolve(x, kernel.reshape((1,) * (x.ndim - 1) + (-1,)), mode="full", axes=-1)
    return full[..., delay:delay + n]


def design_iir(fs: float, cutoff: float = 0.67, order: int = 4):
    """Butterworth high-pass as second-order sections; refuses unstable designs."""
    if not 0 < cutoff < fs / 2:
        raise ValueError(f"invalid cutoff {cutoff} for fs={fs}")
    sos = signal.butter(order, cutoff, btype="highpass", fs=fs, output="sos")
    _, poles, _ = signal.sos2zpk(sos)
    if np.any(np.abs(poles) >= 1.0):
        raise ValueError("IIR design has poles on or outside the unit circle")
    return sos


def iir_baseline(noisy, fs: float, cutoff: float = 0.67, order: int = 4):
    sos = design_iir(fs, cutoff, order)
    x = np.asarray(noisy, dtype=np.float64)
    padlen = min(3 * (2 * len(sos) + 1), x.shape[-1] - 1)
    return signal.sosfiltfilt(sos, x, axis=-1, padlen=padlen)


class FIRBaseline(TransformerMixin, BaseEstimator):
    def __init__(self, fs=360.0, low=0.67, high=150.0, numtaps=None):
        self.fs = fs
        self.low = low
        self.high = high
        self.numtaps = numtaps

    def fit(self, X=None, y=None):
        self.kernel_ = design_fir(self.fs, self.low, self.high, self.numtaps)
        return self

    def transform(self, X):
        if not hasattr(self, "kernel_"):
            self.fit()
        X = check_array(X, ensure_2d=False)
        return _apply_fir(X, self.kernel_)

    predict = transform


class IIRBaseline(TransformerMixin, BaseEstimator):
    def __init__(self, fs=360.0, cutoff=0.67, order=4):
        self.fs = fs
        self.cutoff = cutoff
        self.order = order

    def fit(self, X=None, y=None):
        self.sos_ = design_iir(self.fs, self.cutoff, self.order)
        return self

    def transform(self, X):
        if not hasattr(self, "sos_"):
            self.fit()
        X = check_array(X, ensure_2d=False)
        padlen = min(3 * (2 * len(self.sos_) + 1), X.shape[-1] - 1)
        return signal.sosfiltfilt(self.sos_, X, axis=-1, padlen=padlen)

    predict = transform
