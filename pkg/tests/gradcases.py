"""Gradient-check cases shared by the unit and acceptance suites."""
import numpy as np

from mecg.autodiff import ops

# name -> (fn, input shapes, options)
PRIMITIVES = {
    "add": (lambda a, b: ops.add(a, b), [(3, 4), (4,)], {}),
    "sub": (lambda a, b: ops.sub(a, b), [(3, 4), (3, 1)], {}),
    "mul": (lambda a, b: ops.mul(a, b), [(2, 3), (2, 3)], {}),
    "div": (lambda a, b: ops.div(a, b), [(2, 3), (2, 3)], {"positive": True}),
    "matmul": (lambda a, b: ops.matmul(a, b), [(2, 3, 4), (4, 5)], {}),
    "exp": (ops.exp, [(5,)], {}),
    "log": (ops.log, [(5,)], {"positive": True}),
    "sigmoid": (ops.sigmoid, [(5,)], {}),
    "silu": (ops.silu, [(5,)], {}),
    "softplus": (ops.softplus, [(5,)], {}),
    "abs": (ops.abs, [(5,)], {"positive": True}),
    "power": (lambda a: ops.power(a, 0.3), [(5,)], {"positive": True}),
    "cos": (ops.cos, [(5,)], {}),
    "sin": (ops.sin, [(5,)], {}),
    "expm1_ratio": (ops.expm1_ratio, [(6,)], {}),
    "phase_atan2": (ops.phase_atan2, [(6,), (6,)], {}),
    "prelu": (lambda x, s: ops.prelu(x, s, axis=1), [(2, 3, 4), (3,)], {}),
    "mean": (lambda a: ops.mean(a, axis=1) * 3.0, [(3, 4)], {}),
    "reshape": (lambda a: ops.reshape(a, (4, 3)) * np.arange(12.0).reshape(4, 3), [(3, 4)], {}),
    "transpose": (lambda a: ops.transpose(a, (1, 0, 2)) * np.arange(24.0).reshape(3, 2, 4),
                  [(2, 3, 4)], {}),
    "flip": (lambda a: ops.flip(a, 1) * np.arange(12.0).reshape(3, 4), [(3, 4)], {}),
    "slice": (lambda a: ops.getitem(a, (slice(None), slice(1, 3))) ** 2, [(3, 4)], {}),
    "concat": (lambda a, b: ops.concat([a, b], axis=1) ** 2, [(2, 3), (2, 2)], {}),
    "pad": (lambda a: ops.pad(a, ((1, 0), (2, 1))) * np.arange(24.0).reshape(4, 6), [(3, 3)], {}),
    "squared_error": (ops.squared_error, [(4,), (4,)], {}),
    "conv2d": (lambda x, w: ops.conv2d(x, w, stride=(1, 2), dilation=(2, 1), padding=(1, 1)) ** 2,
               [(2, 3, 6, 7), (4, 3, 2, 3)], {}),
    "conv_transpose2d": (lambda x, w: ops.conv_transpose2d(x, w, stride=(1, 2), padding=(0, 1),
                                                           output_padding=(0, 1)) ** 2,
                         [(2, 3, 3, 4), (3, 2, 1, 3)], {}),
    "conv1d_depthwise": (lambda x, w: ops.conv1d_depthwise(x, w) ** 2, [(2, 6, 3), (3, 4)], {}),
    "instance_norm": (lambda x: ops.instance_norm(x) * np.arange(32.0).reshape(1, 2, 4, 4),
                      [(1, 2, 4, 4)], {}),
    "neg": (ops.neg, [(5,)], {}),
    "sum": (lambda a: ops.sum(a, axis=0) * np.arange(4.0), [(3, 4)], {}),
    "linear": (lambda x, w, b: ops.linear(x, w, b) ** 2, [(2, 3, 4), (5, 4), (5,)], {}),
    "selective_scan": (lambda u, a, b, c, d: ops.selective_scan(u, ops.sigmoid(a), b, c, d) ** 2,
                       [(2, 5, 3), (2, 5, 3, 4), (2, 5, 3, 4), (2, 5, 4), (3,)], {}),
}
