# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel core.

Same contract as `_pure`: callers allocate `out` (zeroed for matmul).
Summation order in matmul is ascending k for every output element; the
build disables FP contraction so each multiply and add rounds separately,
keeping results bit-identical to the NumPy fallback.

The float32 paths use Cephes-style polynomial exp/tanh (2-3 ulp), which
beats scalar libm by ~4x and makes the nonlinear kernels bitwise
reproducible across platforms; float64 paths (gradient checking only)
stay on libm. Cross-backend agreement for the nonlinear kernels is
tolerance-level, not bitwise.
"""

from libc.math cimport exp, sqrt, sqrtf, tanh
from libc.string cimport memcpy

NAME = "cython"

ctypedef fused real:
    float
    double

cdef float LOG2EF = 1.44269504088896341
cdef float EXPF_C1 = 0.693359375
cdef float EXPF_C2 = -2.12194440e-4
cdef float EXPF_P0 = 1.9875691500e-4
cdef float EXPF_P1 = 1.3981999507e-3
cdef float EXPF_P2 = 8.3334519073e-3
cdef float EXPF_P3 = 4.1665795894e-2
cdef float EXPF_P4 = 1.6666665459e-1
cdef float EXPF_P5 = 5.0000001201e-1
cdef float TANHF_P0 = -5.70498872745e-3
cdef float TANHF_P1 = 2.06390887954e-2
cdef float TANHF_P2 = -5.37397155531e-2
cdef float TANHF_P3 = 1.33314422036e-1
cdef float TANHF_P4 = -3.33332819422e-1
cdef float ONE = 1.0
cdef float TWO = 2.0


cdef inline float _expf(float x) noexcept nogil:
    # Cephes expf: argument reduction by powers of two plus a degree-5
    # polynomial on the remainder. Results below the normal range flush
    # to zero; callers keep x under +88, so no overflow handling.
    cdef float zf, z, p, scale
    cdef int n
    cdef unsigned int bits
    if x < -87.0:
        return 0.0
    zf = LOG2EF * x + 0.5
    n = <int>zf
    if zf < 0.0 and n != zf:
        n -= 1  # truncation rounds toward zero; we need floor
    z = <float>n
    x -= z * EXPF_C1
    x -= z * EXPF_C2
    z = x * x
    p = EXPF_P0
    p = p * x + EXPF_P1
    p = p * x + EXPF_P2
    p = p * x + EXPF_P3
    p = p * x + EXPF_P4
    p = p * x + EXPF_P5
    bits = <unsigned int>(n + 127) << 23  # 2^n as float bits
    memcpy(&scale, &bits, 4)
    return (p * z + x + ONE) * scale


cdef inline float _tanhf(float x) noexcept nogil:
    # Cephes tanhf: odd polynomial below 0.625, exp form above it.
    cdef float z, s, p
    s = -ONE if x < 0.0 else ONE
    z = x * s
    if z >= 0.625:
        if z > 9.0:
            return s
        p = ONE - TWO / (_expf(TWO * z) + ONE)
        return s * p
    p = TANHF_P0
    z = x * x
    p = p * z + TANHF_P1
    p = p * z + TANHF_P2
    p = p * z + TANHF_P3
    p = p * z + TANHF_P4
    return x + x * z * p


def matmul(const real[:, ::1] a, const real[:, ::1] b, real[:, ::1] out):
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t kk = a.shape[1]
    cdef Py_ssize_t n = b.shape[1]
    cdef Py_ssize_t i, k, j
    cdef real aik
    for i in range(m):
        for k in range(kk):
            aik = a[i, k]
            for j in range(n):
                out[i, j] += aik * b[k, j]


def softmax_rows(const real[:, ::1] a, real[:, ::1] out):
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    cdef Py_ssize_t i, j
    cdef real mx, s, e
    for i in range(m):
        mx = a[i, 0]
        for j in range(1, n):
            if a[i, j] > mx:
                mx = a[i, j]
        s = 0
        for j in range(n):
            if real is float:
                e = _expf(a[i, j] - mx)  # argument is <= 0 after max shift
            else:
                e = exp(a[i, j] - mx)
            out[i, j] = e
            s += e
        for j in range(n):
            out[i, j] = out[i, j] / s


def layer_norm_rows(const real[:, ::1] x, const real[::1] gain,
                    const real[::1] bias, real eps, real[:, ::1] out):
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    cdef Py_ssize_t i, j
    cdef real mu, var, d, inv
    for i in range(m):
        mu = 0
        for j in range(n):
            mu += x[i, j]
        mu = mu / n
        var = 0
        for j in range(n):
            d = x[i, j] - mu
            var += d * d
        var = var / n
        if real is float:
            inv = 1.0 / sqrtf(var + eps)
        else:
            inv = 1.0 / sqrt(var + eps)
        for j in range(n):
            out[i, j] = gain[j] * ((x[i, j] - mu) * inv) + bias[j]


def gelu(const real[::1] x, real[::1] out):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef real c1 = <real>0.7978845608028654  # sqrt(2/pi)
    cdef real c2 = <real>0.044715
    cdef real t
    for i in range(n):
        if real is float:
            t = _tanhf(c1 * (x[i] + c2 * (x[i] * x[i] * x[i])))
        else:
            t = tanh(c1 * (x[i] + c2 * (x[i] * x[i] * x[i])))
        out[i] = (<real>0.5 * x[i]) * (<real>1.0 + t)
