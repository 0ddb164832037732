from __future__ import annotations

import numpy as np

from .node import Node, backward, no_grad


def finite_diff_check(fn, inputs, h: float = 1e-6, n_coords: int | None = None,
                      seed: int = 0) -> float:
    """Compare reverse-mode gradients of ``fn`` against central differences.

    ``fn`` maps a list of Nodes to a scalar Node.  ``inputs`` are arrays
    (cast to float64) or Nodes to differentiate.  With ``n_coords`` set, only
    that many random coordinates per input are probed.  Returns the max over
    probed coordinates of ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"h must lie in [1e-7, 1e-3], got {h}")
    rng = np.random.default_rng(seed)
    nodes = []
    for x in inputs:
        if isinstance(x, Node):
            x.value = np.asarray(x.value, dtype=np.float64)
            x.requires_grad = True
            x.grad = None
            nodes.append(x)
        else:
            nodes.append(Node(np.array(x, dtype=np.float64), requires_grad=True))
    out = fn(nodes)
    backward(out)
    worst = 0.0
    for node in nodes:
        analytic = node.grad if node.grad is not None else np.zeros_like(node.value)
        flat = node.value.reshape(-1)
        if n_coords is None or n_coords >= flat.size:
            coords = range(flat.size)
        else:
            coords = rng.choice(flat.size, size=n_coords, replace=False)
        for k in coords:
            orig = flat[k]
            with no_grad():
                flat[k] = orig + h
                fp = float(fn(nodes).value)
                flat[k] = orig - h
                fm = float(fn(nodes).value)
            flat[k] = orig
            num = (fp - fm) / (2 * h)
            a = float(analytic.reshape(-1)[k])
            worst = max(worst, abs(a - num) / max(1.0, abs(a)))
    return worst
