"""scikit-learn style wrapper: ``MECGDenoiser.fit(noisy, clean).predict(noisy)``."""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .autodiff import (NumericError, OptimState, adamw_step, backward, exp_lr_step,
                       load_tensors, no_grad, save_tensors)
from .metrics import metric_arrays
from .net import MECGNet, ModelConfig, loss_all
from .spectral import StftConfig

log = logging.getLogger(__name__)

__version__ = "0.1.0"


def _check_signals(X, name="X"):
    X = check_array(X, dtype=np.float64, ensure_2d=False)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"{name} must be (n_segments, L), got shape {X.shape}")
    return X


class MECGDenoiser(TransformerMixin, BaseEstimator):
    """Spectrogram-domain ECG denoiser trained on (noisy, clean) segment pairs.

    ``fit(X, y)`` takes noisy segments ``X`` and clean targets ``y`` of shape
    (n_segments, L); ``predict``/``transform`` return denoised segments.
    Setting ``warm_start=True`` continues training (and epoch numbering) on
    the existing network.
    """

    def __init__(self, mode="mag_phase", c=0.3, n_blocks=4, dim=32, dilations=(1, 2, 4, 8),
                 window_len=64, hop=8, d_state=16, epochs=40, batch_size=96, lr=1e-4,
                 weight_decay=1e-2, gamma=0.99, loss_weights=(0.5, 1.0, 0.5), seed=0,
                 dtype="float32", warm_start=False, verbose=False):
        self.mode = mode
        self.c = c
        self.n_blocks = n_blocks
        self.dim = dim
        self.dilations = dilations
        self.window_len = window_len
        self.hop = hop
        self.d_state = d_state
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.gamma = gamma
        self.loss_weights = loss_weights
        self.seed = seed
        self.dtype = dtype
        self.warm_start = warm_start
        self.verbose = verbose

    # ------------------------------------------------------------ setup

    def model_config(self) -> ModelConfig:
        return ModelConfig(mode=self.mode, c=self.c, n_blocks=self.n_blocks, dim=self.dim,
                           densenet_dilations=tuple(self.dilations),
                           stft=StftConfig(self.window_len, self.hop), d_state=self.d_state)

    def initialize(self):
        """Build a freshly initialised network (no training)."""
        exp_lr_step(1.0, self.gamma)
        self.net_ = MECGNet(self.model_config(), seed=self.seed, dtype=np.dtype(self.dtype))
        self.optim_ = OptimState(lr=self.lr, weight_decay=self.weight_decay)
        self.history_ = []
        self.epoch_ = 0
        self.best_val_loss_ = np.inf
        self.best_state_ = None
        return self

    # ------------------------------------------------------------ training

    def _batch_loss(self, noisy, clean):
        cfg = self.net_.config
        out = self.net_(noisy)
        return loss_all(out, clean, cfg.c, cfg.stft, self.loss_weights)

    def evaluate_loss(self, X, y, batch_size=None) -> float:
        bs = batch_size or self.batch_size
        total = 0.0
        with no_grad():
            for s in range(0, len(X), bs):
                parts = self._batch_loss(X[s:s + bs], y[s:s + bs])
                total += float(parts.total.value) * len(X[s:s + bs])
        return total / len(X)

    def fit(self, X, y, X_val=None, y_val=None, callback=None):
        """Train for ``epochs`` epochs.

        ``callback(row, estimator)`` is invoked after every epoch with the log
        row ``{epoch, lr, train_loss, val_loss, val_ssd}``.
        """
        X = _check_signals(X)
        y = _check_signals(y, "y")
        if X.shape != y.shape:
            raise ValueError(f"X and y shapes differ: {X.shape} vs {y.shape}")
        if X_val is not None:
            X_val, y_val = _check_signals(X_val, "X_val"), _check_signals(y_val, "y_val")
        if not (self.warm_start and hasattr(self, "net_")):
            self.initialize()
            self.initial_loss_ = self.evaluate_loss(X, y)
        self.segment_len_ = X.shape[1]
        params = self.net_.parameters()
        n = len(X)
        for _ in range(self.epochs):
            epoch = self.epoch_ + 1
            order = np.random.default_rng([self.seed, epoch]).permutation(n)
            running = 0.0
            for b, s in enumerate(range(0, n, self.batch_size)):
                idx = order[s:s + self.batch_size]
                parts = self._batch_loss(X[idx], y[idx])
                value = float(parts.total.value)
                if not np.isfinite(value):
                    raise NumericError(f"non-finite loss at epoch {epoch}, batch {b} "
                                       f"(segments {idx.tolist()})")
                self.net_.zero_grad()
                backward(parts.total)
                adamw_step(params, self.optim_)
                running += value * len(idx)
            row = {"epoch": epoch, "lr": self.optim_.lr, "train_loss": running / n,
                   "val_loss": float("nan"), "val_ssd": float("nan")}
            if X_val is not None and len(X_val):
                row["val_loss"] = self.evaluate_loss(X_val, y_val)
                row["val_ssd"] = float(np.mean(metric_arrays(y_val, self.predict(X_val))["ssd"]))
                if row["val_loss"] < self.best_val_loss_:
                    self.best_val_loss_ = row["val_loss"]
                    self.best_state_ = self.net_.state_dict()
            self.optim_.lr = exp_lr_step(self.optim_.lr, self.gamma)
            self.epoch_ = epoch
            self.history_.append(row)
            if self.verbose:
                log.info("epoch %d lr %.3g train %.5f val %.5f", epoch, row["lr"],
                         row["train_loss"], row["val_loss"])
            if callback is not None:
                callback(row, self)
        self.net_.zero_grad()
        return self

    # ------------------------------------------------------------ inference

    def predict(self, X, unit_mask=False, batch_size=64):
        check_is_fitted(self, "net_")
        X = _check_signals(X)
        out = np.empty_like(X)
        with no_grad():
            for s in range(0, len(X), batch_size):
                res = self.net_(X[s:s + batch_size], unit_mask=unit_mask, noisy_phase=unit_mask)
                out[s:s + batch_size] = res.signal.value
        return out

    def transform(self, X):
        return self.predict(X)

    def score(self, X, y):
        """Mean cosine similarity between denoised ``X`` and clean ``y``."""
        y = _check_signals(y, "y")
        return float(np.nanmean(metric_arrays(y, self.predict(X))["cossim"]))

    # ------------------------------------------------------------ persistence

    def save(self, path, state=None, include_optimizer=True):
        check_is_fitted(self, "net_")
        tensors = dict(state if state is not None else self.net_.state_dict())
        if include_optimizer:
            for k, v in self.optim_.m.items():
                tensors[f"optim.m.{k}"] = v
            for k, v in self.optim_.v.items():
                tensors[f"optim.v.{k}"] = v
        params = self.get_params()
        params["dilations"] = list(params["dilations"])
        params["loss_weights"] = list(params["loss_weights"])
        meta = {"params": params, "model_config": self.net_.config.to_dict(),
                "epoch": self.epoch_, "optim": {"lr": self.optim_.lr, "step": self.optim_.step},
                "history": self.history_, "version": __version__,
                "segment_len": getattr(self, "segment_len_", None)}
        save_tensors(path, tensors, meta)
        Path(str(path) + ".config.json").write_text(json.dumps(meta, indent=1, sort_keys=True))

    @classmethod
    def load(cls, path):
        tensors, meta = load_tensors(path)
        params = dict(meta["params"])
        params["dilations"] = tuple(params["dilations"])
        params["loss_weights"] = tuple(params["loss_weights"])
        est = cls(**params).initialize()
        net_state = {k: v for k, v in tensors.items() if not k.startswith("optim.")}
        est.net_.load_state_dict(net_state)
        for k, v in tensors.items():
            if k.startswith("optim.m."):
                est.optim_.m[k[8:]] = v.astype(est.net_.dtype)
            elif k.startswith("optim.v."):
                est.optim_.v[k[8:]] = v.astype(est.net_.dtype)
        est.optim_.lr = meta["optim"]["lr"]
        est.optim_.step = meta["optim"]["step"]
        est.epoch_ = meta["epoch"]
        est.history_ = list(meta.get("history", []))
        if meta.get("segment_len"):
            est.segment_len_ = int(meta["segment_len"])
        return est
