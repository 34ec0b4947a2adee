# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled training kernels: BLAS matrix products with fused bias/activation
and single-pass elementwise updates.  Mirrors ``numpy_backend`` exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

IDENTITY = 0
RELU = 1
SIGMOID = 2

NAME = "native"

DEF ACT_IDENTITY = 0
DEF ACT_RELU = 1
DEF ACT_SIGMOID = 2


cdef void _mm_nn(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c) noexcept nogil:
    # row-major c(M,N) = a(M,K) @ b(K,N)
    cdef int M = a.shape[0], K = a.shape[1], N = b.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char cn = b'N'
    dgemm(&cn, &cn, &N, &M, &K, &one, &b[0, 0], &N, &a[0, 0], &K, &zero, &c[0, 0], &N)


cdef void _mm_tn(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c) noexcept nogil:
    # row-major c(M,N) = a.T @ b, with a stored (K,M) and b stored (K,N)
    cdef int K = a.shape[0], M = a.shape[1], N = b.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char cn = b'N', ct = b'T'
    dgemm(&cn, &ct, &N, &M, &K, &one, &b[0, 0], &N, &a[0, 0], &M, &zero, &c[0, 0], &N)


cdef void _mm_nt(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c) noexcept nogil:
    # row-major c(M,N) = a @ b.T, with a stored (M,K) and b stored (N,K)
    cdef int M = a.shape[0], K = a.shape[1], N = b.shape[0]
    cdef double one = 1.0, zero = 0.0
    cdef char cn = b'N', ct = b'T'
    dgemm(&ct, &cn, &N, &M, &K, &one, &b[0, 0], &K, &a[0, 0], &K, &zero, &c[0, 0], &N)


def dense_forward(x, w, b, int act):
    """Fused dense layer: activation(x @ w + b)."""
    cdef double[:, ::1] xv = x
    cdef double[:, ::1] wv = w
    cdef double[::1] bv = b
    cdef Py_ssize_t rows = xv.shape[0], cols = wv.shape[1]
    out = np.empty((rows, cols), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    cdef double z
    with nogil:
        _mm_nn(xv, wv, ov)
        for i in range(rows):
            for j in range(cols):
                z = ov[i, j] + bv[j]
                if act == ACT_RELU:
                    ov[i, j] = z if z > 0.0 else 0.0
                elif act == ACT_SIGMOID:
                    if z >= 0.0:
                        ov[i, j] = 1.0 / (1.0 + exp(-z))
                    else:
                        z = exp(z)
                        ov[i, j] = z / (1.0 + z)
                else:
                    ov[i, j] = z
    return out


def dense_backward(da, x, w, a, int act, bint need_dx):
    """Gradients of a dense layer from the gradient w.r.t. its output."""
    cdef double[:, ::1] dav = da
    cdef double[:, ::1] xv = x
    cdef double[:, ::1] wv = w
    cdef double[:, ::1] av = a
    cdef Py_ssize_t rows = dav.shape[0], cols = dav.shape[1]
    dz_arr = np.empty((rows, cols), dtype=np.float64)
    dw = np.empty((xv.shape[1], cols), dtype=np.float64)
    db = np.zeros(cols, dtype=np.float64)
    dx = np.empty((rows, xv.shape[1]), dtype=np.float64) if need_dx else None
    cdef double[:, ::1] dzv = dz_arr
    cdef double[:, ::1] dwv = dw
    cdef double[::1] dbv = db
    cdef double[:, ::1] dxv = dx if need_dx else dz_arr
    cdef Py_ssize_t i, j
    cdef double g
    with nogil:
        for i in range(rows):
            for j in range(cols):
                g = dav[i, j]
                if act == ACT_RELU:
                    g = g if av[i, j] > 0.0 else 0.0
                elif act == ACT_SIGMOID:
                    g = g * av[i, j] * (1.0 - av[i, j])
                dzv[i, j] = g
                dbv[j] += g
        _mm_tn(xv, dzv, dwv)
        if need_dx:
            _mm_nt(dzv, wv, dxv)
    return dx, dw, db


def rmsprop_update(param, grad, square_avg, momentum_buf,
                   double lr, double momentum, double smoothing, double eps):
    """One in-place RMSprop-with-momentum step on a single parameter tensor."""
    cdef double[::1] p = param.reshape(-1)
    cdef double[::1] g = grad.reshape(-1)
    cdef double[::1] sq = square_avg.reshape(-1)
    cdef double[::1] mom = momentum_buf.reshape(-1)
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double gi, s
    with nogil:
        for i in range(n):
            gi = g[i]
            s = smoothing * sq[i] + (1.0 - smoothing) * gi * gi
            sq[i] = s
            mom[i] = momentum * mom[i] + gi / sqrt(s + eps)
            p[i] -= lr * mom[i]


def row_l2(x, t):
    """Per-row Euclidean distance between two b-by-d matrices."""
    cdef double[:, ::1] xv = x
    cdef double[:, ::1] tv = t
    cdef Py_ssize_t rows = xv.shape[0], cols = xv.shape[1]
    out = np.empty(rows, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j
    cdef double acc, diff
    with nogil:
        for i in range(rows):
            acc = 0.0
            for j in range(cols):
                diff = xv[i, j] - tv[i, j]
                acc += diff * diff
            ov[i] = sqrt(acc)
    return out
