"""Pure NumPy kernel backend.

Mirrors the compiled core in `_core.pyx` operation for operation. matmul
accumulates in ascending-k order with one rounded multiply and one rounded
add per term, which makes it bit-identical to the compiled kernel; the
nonlinear kernels agree with it to a few ulps (their reductions differ in
association only).

All functions fill a caller-provided `out` array. `matmul` requires `out`
to be zeroed on entry.
"""

import numpy as np

NAME = "python"


def matmul(a, b, out):
    # One outer-product update per k keeps the per-element summation order
    # identical to the compiled i,k,j loop. Overflow to inf is silent, as
    # in the compiled core; callers enforce the finiteness contract.
    with np.errstate(over="ignore"):
        for k in range(a.shape[1]):
            out += a[:, k, None] * b[k, :]


def softmax_rows(a, out):
    m = a.max(axis=1, keepdims=True)
    np.exp(a - m, out=out)
    out /= out.sum(axis=1, keepdims=True)


def layer_norm_rows(x, gain, bias, eps, out):
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    np.multiply(gain, xc * inv, out=out)
    out += bias


def gelu(x, out):
    # Tanh-approximation GELU; the constant roundings and the operation
    # order match the compiled kernel exactly.
    dt = x.dtype.type
    c1 = dt(0.7978845608028654)  # sqrt(2/pi)
    c2 = dt(0.044715)
    half = dt(0.5)
    one = dt(1.0)
    t = np.tanh(c1 * (x + c2 * (x * x * x)))
    np.multiply(half * x, one + t, out=out)
