"""Tape-free reverse-mode graph: ``Node`` values and the ``backward`` sweep."""
from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True
_DEBUG = False


class NumericError(FloatingPointError):
    """A forward value or gradient went non-finite."""


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def set_debug(flag: bool) -> None:
    """Enable NaN/Inf checks after every forward op."""
    global _DEBUG
    _DEBUG = bool(flag)


class Node:
    """A differentiable array.

    ``parents`` holds ``(node, backward_fn)`` pairs; ``backward_fn`` maps the
    gradient of this node to the gradient contribution for that parent.
    """

    __slots__ = ("value", "grad", "parents", "requires_grad", "name")
    __array_priority__ = 100.0

    def __init__(self, value, requires_grad=False, parents=(), name=None):
        self.value = np.asarray(value)
        self.grad = None
        self.parents = tuple(parents)
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Node(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    # operator sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __pow__(self, p):
        from . import ops
        return ops.power(self, p)

    def __getitem__(self, idx):
        from . import ops
        return ops.getitem(self, idx)

    def backward(self):
        backward(self)


def as_node(x, dtype=None) -> Node:
    if isinstance(x, Node):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Node(arr)


def make(value, parents) -> Node:
    """Wrap an op result, keeping only parents that need gradients."""
    value = np.asarray(value)
    if _DEBUG and not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite forward value, shape {value.shape}")
    if not _GRAD_ENABLED:
        return Node(value)
    live = [(p, fn) for p, fn in parents if p.requires_grad]
    if not live:
        return Node(value)
    return Node(value, requires_grad=True, parents=live)


def _topo(root: Node) -> list[Node]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p, _ in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(output: Node) -> None:
    """Accumulate d(output)/d(node) into ``.grad`` of every reachable node."""
    if output.value.size != 1:
        raise ValueError(f"backward needs a scalar output, got shape {output.shape}")
    if not output.requires_grad:
        return
    order = _topo(output)
    seed = np.ones_like(output.value)
    pending = {id(output): seed}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node.parents:
            for parent, fn in node.parents:
                contrib = fn(g)
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + contrib
                else:
                    pending[key] = contrib
        else:
            node.grad = g if node.grad is None else node.grad + g
