# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: BLAS-backed matrix products plus fused C loops.

Matrix products delegate to dgemm through scipy's C-level BLAS bindings
(no Python dispatch per call); elementwise forward/backward passes and the
Adam update are single fused loops. Signatures and accumulate semantics
mirror ``_numpy`` exactly.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp as c_exp, sqrt as c_sqrt, tanh as c_tanh
from scipy.linalg.cython_blas cimport dgemm

BACKEND_NAME = "cython"


# BLAS is column-major; a row-major matrix X[r, c] is the column-major X^T.
# Each helper below computes a row-major product by feeding dgemm the
# transposed problem.

cdef char *_N = "N"
cdef char *_T = "T"


cdef void _mm_nn(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
                 double beta) noexcept nogil:
    # c[m,n] = a[m,k] @ b[k,n] + beta*c
    cdef int m = <int> a.shape[0], k = <int> a.shape[1], n = <int> b.shape[1]
    cdef double alpha = 1.0
    dgemm(_N, _N, &n, &m, &k, &alpha, &b[0, 0], &n, &a[0, 0], &k,
          &beta, &c[0, 0], &n)


cdef void _mm_nt(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
                 double beta) noexcept nogil:
    # c[m,n] = a[m,k] @ b[n,k]^T + beta*c
    cdef int m = <int> a.shape[0], k = <int> a.shape[1], n = <int> b.shape[0]
    cdef double alpha = 1.0
    dgemm(_T, _N, &n, &m, &k, &alpha, &b[0, 0], &k, &a[0, 0], &k,
          &beta, &c[0, 0], &n)


cdef void _mm_tn(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
                 double beta) noexcept nogil:
    # c[k,n] = a[m,k]^T @ b[m,n] + beta*c
    cdef int m = <int> a.shape[0], k = <int> a.shape[1], n = <int> b.shape[1]
    cdef double alpha = 1.0
    dgemm(_N, _T, &n, &k, &m, &alpha, &b[0, 0], &n, &a[0, 0], &k,
          &beta, &c[0, 0], &n)


def matmul(double[:, ::1] a, double[:, ::1] b):
    out = np.empty((a.shape[0], b.shape[1]))
    cdef double[:, ::1] c = out
    _mm_nn(a, b, c, 0.0)
    return out


def matmul_bwd(double[:, ::1] a, double[:, ::1] b, double[:, ::1] dc,
               double[:, ::1] da, double[:, ::1] db):
    _mm_nt(dc, b, da, 1.0)
    _mm_tn(a, dc, db, 1.0)


def tanh_fwd(double[:, ::1] x):
    out = np.empty((x.shape[0], x.shape[1]))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            y[i, j] = c_tanh(x[i, j])
    return out


def tanh_bwd(double[:, ::1] y, double[:, ::1] dy, double[:, ::1] dx):
    cdef Py_ssize_t i, j
    for i in range(y.shape[0]):
        for j in range(y.shape[1]):
            dx[i, j] += (1.0 - y[i, j] * y[i, j]) * dy[i, j]


def relu_fwd(double[:, ::1] x):
    out = np.empty((x.shape[0], x.shape[1]))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            y[i, j] = x[i, j] if x[i, j] > 0.0 else 0.0
    return out


def relu_bwd(double[:, ::1] y, double[:, ::1] dy, double[:, ::1] dx):
    cdef Py_ssize_t i, j
    for i in range(y.shape[0]):
        for j in range(y.shape[1]):
            if y[i, j] > 0.0:
                dx[i, j] += dy[i, j]


def softmax_fwd(double[:, ::1] x):
    out = np.empty((x.shape[0], x.shape[1]))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    cdef double hi = x[0, 0]
    cdef double total = 0.0
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            if x[i, j] > hi:
                hi = x[i, j]
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            y[i, j] = c_exp(x[i, j] - hi)
            total += y[i, j]
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            y[i, j] /= total
    return out


def softmax_bwd(double[:, ::1] y, double[:, ::1] dy, double[:, ::1] dx):
    cdef Py_ssize_t i, j
    cdef double dot = 0.0
    for i in range(y.shape[0]):
        for j in range(y.shape[1]):
            dot += y[i, j] * dy[i, j]
    for i in range(y.shape[0]):
        for j in range(y.shape[1]):
            dx[i, j] += y[i, j] * (dy[i, j] - dot)


def add_bias_fwd(double[:, ::1] x, double[:, ::1] b):
    out = np.empty((x.shape[0], x.shape[1]))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            y[i, j] = x[i, j] + b[0, j]
    return out


def add_bias_bwd(double[:, ::1] dy, double[:, ::1] dx, double[:, ::1] db):
    cdef Py_ssize_t i, j
    for i in range(dy.shape[0]):
        for j in range(dy.shape[1]):
            dx[i, j] += dy[i, j]
            db[0, j] += dy[i, j]


def reduce_sum_fwd(double[:, ::1] x):
    out = np.zeros((1, x.shape[1]))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            y[0, j] += x[i, j]
    return out


def reduce_sum_bwd(double[:, ::1] dy, double[:, ::1] dx):
    cdef Py_ssize_t i, j
    for i in range(dx.shape[0]):
        for j in range(dx.shape[1]):
            dx[i, j] += dy[0, j]


def reduce_mean_fwd(double[:, ::1] x):
    out = np.zeros((1, x.shape[1]))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    cdef double inv = 1.0 / x.shape[0]
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            y[0, j] += x[i, j]
    for j in range(x.shape[1]):
        y[0, j] *= inv
    return out


def reduce_mean_bwd(double[:, ::1] dy, double[:, ::1] dx):
    cdef Py_ssize_t i, j
    cdef double k = <double> dx.shape[0]
    for i in range(dx.shape[0]):
        for j in range(dx.shape[1]):
            dx[i, j] += dy[0, j] / k


def reduce_max_fwd(double[:, ::1] x):
    out = np.empty((1, x.shape[1]))
    rows = np.zeros(x.shape[1], dtype=np.int64)
    cdef double[:, ::1] y = out
    cdef cnp.int64_t[::1] r = rows
    cdef Py_ssize_t i, j
    for j in range(x.shape[1]):
        y[0, j] = x[0, j]
    for i in range(1, x.shape[0]):
        for j in range(x.shape[1]):
            # strict > keeps the first maximal row on ties
            if x[i, j] > y[0, j]:
                y[0, j] = x[i, j]
                r[j] = i
    return out, rows


def reduce_max_bwd(double[:, ::1] dy, cnp.int64_t[::1] rows, double[:, ::1] dx):
    cdef Py_ssize_t j
    for j in range(dx.shape[1]):
        dx[rows[j], j] += dy[0, j]


def adam_step(double[:, ::1] theta, double[:, ::1] g, double[:, ::1] m,
              double[:, ::1] v, double lr, double beta1, double beta2,
              double eps, double bc1, double bc2):
    cdef Py_ssize_t i, j
    cdef double mi, vi
    for i in range(theta.shape[0]):
        for j in range(theta.shape[1]):
            mi = beta1 * m[i, j] + (1.0 - beta1) * g[i, j]
            vi = beta2 * v[i, j] + (1.0 - beta2) * (g[i, j] * g[i, j])
            m[i, j] = mi
            v[i, j] = vi
            theta[i, j] -= lr * (mi / bc1) / (c_sqrt(vi / bc2) + eps)
