"""Flat ``section.key = value`` run configuration."""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)


def _ints(text):
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)


@dataclass
class RunConfig:
    # model.*
    mode: str = "mag_phase"
    c: float = 0.3
    n_blocks: int = 4
    dim: int = 32
    dilations: tuple = (1, 2, 4, 8)
    window: int = 64
    hop: int = 8
    d_state: int = 16
    # train.*
    epochs: int = 40
    batch_size: int = 96
    lr: float = 1e-4
    weight_decay: float = 1e-2
    gamma: float = 0.99
    loss_weights: tuple = (0.5, 1.0, 0.5)
    seed: int = 0
    # data.*
    segment_len: int = 512
    stride: int = 512
    channel: int = 0
    split: tuple = (0.7, 0.1, 0.2)

    SECTIONS = {
        "model": ("mode", "c", "n_blocks", "dim", "dilations", "window", "hop", "d_state"),
        "train": ("epochs", "batch_size", "lr", "weight_decay", "gamma", "loss_weights", "seed"),
        "data": ("segment_len", "stride", "channel", "split"),
    }

    def set(self, key: str, value) -> None:
        name = key.split(".", 1)[-1]
        section = key.split(".", 1)[0] if "." in key else None
        owner = next((s for s, names in self.SECTIONS.items() if name in names), None)
        if owner is None or (section is not None and section != owner):
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(self, name)
        try:
            if name == "dilations":
                value = _ints(value)
            elif name in ("loss_weights", "split"):
                value = _floats(value)
            elif isinstance(current, bool):
                value = str(value).lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                value = int(value)
            elif isinstance(current, float):
                value = float(value)
            else:
                value = str(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
        setattr(self, name, value)

    def validate(self) -> "RunConfig":
        if self.mode not in ("complex", "mag_phase"):
            raise ConfigError(f"model.mode must be complex or mag_phase, got {self.mode!r}")
        if not 0 < self.c <= 1:
            raise ConfigError(f"model.c must lie in (0, 1], got {self.c}")
        if not 1 <= self.hop <= self.window:
            raise ConfigError("model.hop must be in [1, model.window]")
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("train.epochs >= 0, train.batch_size >= 1 and train.lr > 0 required")
        if not 0 < self.gamma <= 1:
            raise ConfigError("train.gamma must lie in (0, 1]")
        if not 1 <= self.stride <= self.segment_len:
            raise ConfigError("data.stride must be in [1, data.segment_len]")
        return self

    def to_text(self) -> str:
        lines = []
        for section, names in self.SECTIONS.items():
            for name in names:
                v = getattr(self, name)
                if isinstance(v, tuple):
                    v = ",".join(str(x) for x in v)
                lines.append(f"{section}.{name} = {v}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {f.name: (list(getattr(self, f.name)) if isinstance(getattr(self, f.name), tuple)
                         else getattr(self, f.name)) for f in fields(self)}

    def estimator_params(self) -> dict:
        return dict(mode=self.mode, c=self.c, n_blocks=self.n_blocks, dim=self.dim,
                    dilations=tuple(self.dilations), window_len=self.window, hop=self.hop,
                    d_state=self.d_state, epochs=self.epochs, batch_size=self.batch_size,
                    lr=self.lr, weight_decay=self.weight_decay, gamma=self.gamma,
                    loss_weights=tuple(self.loss_weights), seed=self.seed)


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg.set(key, value)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text())
