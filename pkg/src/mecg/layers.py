"""Parameter containers for the network, built on the autodiff ops."""
from __future__ import annotations

import numpy as np

from .autodiff import Node, ops


def param(value) -> Node:
    return Node(np.asarray(value), requires_grad=True)


def uniform_fan_in(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    def named_parameters(self, prefix: str = ""):
        for key, val in vars(self).items():
            if isinstance(val, Node):
                if val.requires_grad:
                    yield prefix + key, val
            elif isinstance(val, Module):
                yield from val.named_parameters(f"{prefix}{key}.")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self) -> dict[str, Node]:
        return dict(self.named_parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.value.copy() for k, v in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise KeyError(f"state mismatch; missing={missing} unexpected={unexpected}")
        for k, p in params.items():
            arr = np.asarray(state[k])
            if arr.shape != p.shape:
                raise ValueError(f"shape mismatch for {k}: {arr.shape} vs {p.shape}")
            p.value = arr.astype(p.dtype)

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, dtype=np.float32, bias=True):
        self.weight = param(uniform_fan_in(rng, (n_out, n_in), n_in, dtype))
        self.bias = param(np.zeros(n_out, dtype=dtype)) if bias else None

    def forward(self, x):
        return ops.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, rng, dtype=np.float32, stride=1, dilation=1,
                 padding=0):
        kh, kw = (kernel, kernel) if np.isscalar(kernel) else kernel
        fan_in = c_in * kh * kw
        self.weight = param(uniform_fan_in(rng, (c_out, c_in, kh, kw), fan_in, dtype))
        self.bias = param(np.zeros(c_out, dtype=dtype))
        self.stride, self.dilation, self.padding = stride, dilation, padding

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride,
                          dilation=self.dilation, padding=self.padding)


class ConvTranspose2d(Module):
    def __init__(self, c_in, c_out, kernel, rng, dtype=np.float32, stride=1, padding=0):
        kh, kw = (kernel, kernel) if np.isscalar(kernel) else kernel
        fan_in = c_in * kh * kw
        self.weight = param(uniform_fan_in(rng, (c_in, c_out, kh, kw), fan_in, dtype))
        self.bias = param(np.zeros(c_out, dtype=dtype))
        self.stride, self.padding = stride, padding

    def forward(self, x):
        return ops.conv_transpose2d(x, self.weight, self.bias, stride=self.stride,
                                    padding=self.padding)


class InstanceNorm2d(Module):
    """Instance normalization with a per-channel affine transform."""

    def __init__(self, channels, dtype=np.float32, eps=1e-5):
        self.weight = param(np.ones(channels, dtype=dtype))
        self.bias = param(np.zeros(channels, dtype=dtype))
        self.eps = eps

    def forward(self, x):
        y = ops.instance_norm(x, eps=self.eps)
        y = ops.mul(y, ops.reshape(self.weight, (1, -1, 1, 1)))
        return ops.add(y, ops.reshape(self.bias, (1, -1, 1, 1)))


class PReLU(Module):
    def __init__(self, channels, dtype=np.float32, init=0.25):
        self.slope = param(np.full(channels, init, dtype=dtype))

    def forward(self, x):
        return ops.prelu(x, self.slope, axis=1)
