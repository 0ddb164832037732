from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .node import Node, NumericError


@dataclass
class OptimState:
    lr: float = 1e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-2
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params: dict[str, Node], state: OptimState, grads: dict | None = None) -> None:
    """One decoupled-weight-decay Adam update, in place.

    ``grads`` defaults to each parameter's ``.grad``; missing gradients count
    as zero.  Raises ``NumericError`` (and leaves everything untouched) when
    any gradient is non-finite.
    """
    if state.lr <= 0:
        raise ValueError(f"lr must be positive, got {state.lr}")
    if grads is None:
        grads = {k: p.grad for k, p in params.items()}
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name!r}; step rejected")

    state.step += 1
    b1, b2 = state.betas
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        val = p.value
        if g is None:
            g = np.zeros_like(val)
        g = g.astype(val.dtype, copy=False)
        if g.shape != val.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {val.shape} for {name!r}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(val)
            v = np.zeros_like(val)
        if state.weight_decay:
            val = val * (1.0 - state.lr * state.weight_decay)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.value = (val - state.lr * update).astype(p.value.dtype, copy=False)
        state.m[name] = m
        state.v[name] = v


def exp_lr_step(lr: float, gamma: float) -> float:
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    return lr * gamma


class ExponentialLR:
    """Multiplies ``state.lr`` by ``gamma`` once per epoch."""

    def __init__(self, state: OptimState, gamma: float = 0.99):
        exp_lr_step(1.0, gamma)
        self.state = state
        self.gamma = gamma

    def step(self) -> float:
        self.state.lr = exp_lr_step(self.state.lr, self.gamma)
        return self.state.lr
