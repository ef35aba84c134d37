"""Dense linear-algebra kernels and seeded random sampling.

Matrices are 2-D C-contiguous NumPy arrays, float32 by default with a
float64 mode for gradient checking. Every kernel is deterministic for a
fixed backend, dtype, and inputs: matmul accumulates each output element
in ascending-k order with no reassociation, so zero-padded operands
reproduce unpadded results bit for bit.

The random stream is xorshift64* seeded through splitmix64, with normals
drawn by Box-Muller; the exact algorithm is part of the package contract
and is documented in the README.
"""

import math

import numpy as np

from ttfr._kernels import BACKEND, impl
from ttfr.errors import NumericsError, ParameterError, ShapeError

__all__ = [
    "BACKEND",
    "Rng",
    "gelu",
    "layer_norm",
    "layer_norm_rows",
    "matmul",
    "matmul_nt",
    "pad_zeros",
    "sample_normal",
    "softmax_rows",
    "transpose",
]

_FLOAT_DTYPES = (np.float32, np.float64)

DEFAULT_DTYPE = np.float32


def _as_matrix(x, name):
    a = np.ascontiguousarray(x)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if a.dtype.type not in _FLOAT_DTYPES:
        a = np.ascontiguousarray(x, dtype=DEFAULT_DTYPE)
    return a


def _as_vector(x, name, dtype=None):
    a = np.ascontiguousarray(x, dtype=dtype)
    if a.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {a.shape}")
    return a


def _check_finite(out, op):
    if not np.isfinite(out).all():
        raise NumericsError(f"non-finite values in {op} output")


def matmul(a, b):
    """Matrix product with a fixed ascending-k summation order."""
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} x {b.shape}")
    if a.dtype != b.dtype:
        raise ShapeError(f"matmul: mixed dtypes {a.dtype} and {b.dtype}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=a.dtype)
    impl.matmul(a, b, out)
    _check_finite(out, "matmul")
    return out


def transpose(a):
    """C-contiguous transpose (a copy, so kernels can consume it)."""
    return np.ascontiguousarray(np.asarray(a).T)


def matmul_nt(a, b):
    """a @ b.T, bit-identical to matmul(a, transpose(b))."""
    return matmul(a, transpose(b))


def pad_zeros(a, new_rows, new_cols):
    """Place `a` as the top-left block of a zero (new_rows, new_cols) matrix."""
    a = _as_matrix(a, "a")
    if new_rows < a.shape[0] or new_cols < a.shape[1]:
        raise ShapeError(
            f"pad_zeros cannot shrink {a.shape} to ({new_rows}, {new_cols})"
        )
    out = np.zeros((new_rows, new_cols), dtype=a.dtype)
    out[: a.shape[0], : a.shape[1]] = a
    return out


def softmax_rows(a):
    """Row-wise softmax with per-row max subtraction."""
    a = _as_matrix(a, "a")
    out = np.empty_like(a)
    impl.softmax_rows(a, out)
    _check_finite(out, "softmax_rows")
    return out


def layer_norm_rows(x, gain, bias, eps=1e-5):
    """Layer normalization of every row: gain * (x - mu) / sqrt(var + eps) + bias.

    Variance is biased (divided by the row length).
    """
    x = _as_matrix(x, "x")
    gain = _as_vector(gain, "gain", dtype=x.dtype)
    bias = _as_vector(bias, "bias", dtype=x.dtype)
    if gain.shape[0] != x.shape[1] or bias.shape[0] != x.shape[1]:
        raise ShapeError(
            f"layer_norm: lengths differ, x rows {x.shape[1]}, "
            f"gain {gain.shape[0]}, bias {bias.shape[0]}"
        )
    out = np.empty_like(x)
    impl.layer_norm_rows(x, gain, bias, x.dtype.type(eps), out)
    _check_finite(out, "layer_norm")
    return out


def layer_norm(x, gain, bias, eps=1e-5):
    """Layer normalization of a single vector."""
    x = _as_vector(x, "x")
    return layer_norm_rows(x[None, :], gain, bias, eps)[0]


def gelu(x):
    """Tanh-approximation GELU: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))."""
    shape = np.shape(x)
    a = np.asarray(x)
    if a.dtype.type not in _FLOAT_DTYPES:
        a = a.astype(DEFAULT_DTYPE)
    flat = np.ascontiguousarray(a.reshape(-1))
    out = np.empty_like(flat)
    impl.gelu(flat, out)
    _check_finite(out, "gelu")
    return float(out[0]) if shape == () else out.reshape(shape)


# --- seeded random sampling ------------------------------------------------

_MASK64 = 0xFFFFFFFFFFFFFFFF
_XS_MULT = 0x2545F4914F6CDD1D
_SM_GAMMA = 0x9E3779B97F4A7C15
_TWO_NEG_53 = 2.0 ** -53


def _splitmix64(x):
    x = (x + _SM_GAMMA) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class Rng:
    """xorshift64* stream; identical seed gives an identical sample stream."""

    def __init__(self, seed):
        state = _splitmix64(int(seed) & _MASK64)
        self._state = state if state != 0 else _SM_GAMMA

    def next_u64(self):
        s = self._state
        s ^= s >> 12
        s = (s ^ (s << 25)) & _MASK64
        s ^= s >> 27
        self._state = s
        return (s * _XS_MULT) & _MASK64

    def uniform(self):
        """Double in (0, 1]."""
        return ((self.next_u64() >> 11) + 1) * _TWO_NEG_53

    def below(self, n):
        """Uniform integer in [0, n) via Lemire multiply-shift."""
        if n <= 0:
            raise ParameterError(f"below() needs n >= 1, got {n}")
        return (self.next_u64() * n) >> 64

    def normal_pair(self):
        """One Box-Muller draw: two independent standard normals."""
        u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        return r * math.cos(theta), r * math.sin(theta)


def sample_normal(rng, mean, std, rows, cols, dtype=DEFAULT_DTYPE):
    """Matrix of i.i.d. N(mean, std^2) entries drawn from the rng stream.

    Entries are filled in row-major order, two per Box-Muller draw; the
    trailing half-pair of an odd-sized matrix is discarded.
    """
    if std < 0:
        raise ParameterError(f"std must be >= 0, got {std}")
    n = rows * cols
    flat = np.empty(n, dtype=np.float64)
    for i in range(0, n - 1, 2):
        flat[i], flat[i + 1] = rng.normal_pair()
    if n % 2:
        flat[n - 1] = rng.normal_pair()[0]
    out = (mean + std * flat).reshape(rows, cols).astype(dtype)
    _check_finite(out, "sample_normal")
    return out
