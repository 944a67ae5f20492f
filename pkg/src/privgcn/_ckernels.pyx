# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: elementwise loss derivatives, fused loss/margin
gradient pass, dense normalized adjacency and summed row differences.

Mirrors ``_pykernels`` function for function.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log1p, sqrt

cnp.import_array()

cdef enum:
    MLSM = 0
    PSEUDO_HUBER = 1


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double _softplus(double x) nogil:
    if x > 0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


def loss_derivs(int kind, x, y, double c, double delta_l):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64).ravel()
    if kind != MLSM and kind != PSEUDO_HUBER:
        raise ValueError(f"unknown loss kind {kind}")
    shape = np.shape(x)
    cdef Py_ssize_t n = xv.shape[0], i
    if yv.shape[0] == 1 and n != 1:
        yv = np.full(n, yv[0])
    elif yv.shape[0] != n:
        raise ValueError("x and y must have the same size")
    l0 = np.empty(n)
    l1 = np.empty(n)
    l2 = np.empty(n)
    l3 = np.empty(n)
    cdef double[::1] o0 = l0, o1 = l1, o2 = l2, o3 = l3
    cdef double inv_c = 1.0 / c, s, q, t, r2, r, d2 = delta_l * delta_l
    with nogil:
        if kind == MLSM:
            for i in range(n):
                s = _sigmoid(xv[i])
                q = s * (1.0 - s)
                o0[i] = inv_c * (_softplus(xv[i]) - yv[i] * xv[i])
                o1[i] = inv_c * (s - yv[i])
                o2[i] = inv_c * q
                o3[i] = inv_c * q * (1.0 - 2.0 * s)
        else:
            for i in range(n):
                t = xv[i] - yv[i]
                r2 = 1.0 + (t / delta_l) * (t / delta_l)
                r = sqrt(r2)
                o0[i] = inv_c * d2 * (r - 1.0)
                o1[i] = inv_c * t / r
                o2[i] = inv_c / (r2 * r)
                o3[i] = -3.0 * inv_c * t / (d2 * r2 * r2 * r)
    return (l0.reshape(shape), l1.reshape(shape), l2.reshape(shape), l3.reshape(shape))


def loss_and_grad_margins(int kind, M, Y, double c, double delta_l):
    """Return ``(sum of losses, dloss/dmargin)`` for a margin matrix."""
    cdef double[:, ::1] Mv = np.ascontiguousarray(M, dtype=np.float64)
    cdef double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    if kind != MLSM and kind != PSEUDO_HUBER:
        raise ValueError(f"unknown loss kind {kind}")
    if Mv.shape[0] != Yv.shape[0] or Mv.shape[1] != Yv.shape[1]:
        raise ValueError("margin and label matrices differ in shape")
    cdef Py_ssize_t n = Mv.shape[0], k = Mv.shape[1], i, j
    G = np.empty((n, k))
    cdef double[:, ::1] Gv = G
    cdef double inv_c = 1.0 / c, x, t, r, total = 0.0, row
    with nogil:
        for i in range(n):
            row = 0.0
            for j in range(k):
                x = Mv[i, j]
                if kind == MLSM:
                    row += _softplus(x) - Yv[i, j] * x
                    Gv[i, j] = inv_c * (_sigmoid(x) - Yv[i, j])
                else:
                    t = x - Yv[i, j]
                    r = sqrt(1.0 + (t / delta_l) * (t / delta_l))
                    row += r - 1.0
                    Gv[i, j] = inv_c * t / r
            total += row
    if kind == MLSM:
        total *= inv_c
    else:
        total *= inv_c * delta_l * delta_l
    return total, G


def loss_sum(int kind, M, Y, double c, double delta_l):
    cdef double[:, ::1] Mv = np.ascontiguousarray(M, dtype=np.float64)
    cdef double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    if kind != MLSM and kind != PSEUDO_HUBER:
        raise ValueError(f"unknown loss kind {kind}")
    if Mv.shape[0] != Yv.shape[0] or Mv.shape[1] != Yv.shape[1]:
        raise ValueError("margin and label matrices differ in shape")
    cdef Py_ssize_t n = Mv.shape[0], k = Mv.shape[1], i, j
    cdef double inv_c = 1.0 / c, x, t, total = 0.0, row
    with nogil:
        for i in range(n):
            row = 0.0
            for j in range(k):
                x = Mv[i, j]
                if kind == MLSM:
                    row += _softplus(x) - Yv[i, j] * x
                else:
                    t = (x - Yv[i, j]) / delta_l
                    row += sqrt(1.0 + t * t) - 1.0
            total += row
    if kind == MLSM:
        return total * inv_c
    return total * inv_c * delta_l * delta_l


def normalized_adjacency(Py_ssize_t n, edges, double p):
    cdef cnp.int64_t[:, ::1] E = np.ascontiguousarray(
        np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    )
    cdef Py_ssize_t m = E.shape[0], i, u, v
    cdef cnp.int64_t[::1] deg = np.zeros(n, dtype=np.int64)
    out = np.zeros((n, n))
    cdef double[:, ::1] A = out
    cdef double inv
    for i in range(m):
        u = E[i, 0]
        v = E[i, 1]
        if u < 0 or u >= n or v < 0 or v >= n:
            raise ValueError(f"edge ({u}, {v}) out of range")
        deg[u] += 1
        deg[v] += 1
    with nogil:
        for i in range(m):
            u = E[i, 0]
            v = E[i, 1]
            inv = 1.0 / (deg[u] + 1.0)
            A[u, v] = inv if inv < p else p
            inv = 1.0 / (deg[v] + 1.0)
            A[v, u] = inv if inv < p else p
        # row i off-diagonals all equal min(1/(k_i+1), p)
        for i in range(n):
            inv = 1.0 / (deg[i] + 1.0)
            A[i, i] = inv if inv <= p else 1.0 - deg[i] * p
    return out


def row_diff_norm_sum(A, B):
    cdef double[:, ::1] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, ::1] Bv = np.ascontiguousarray(B, dtype=np.float64)
    if Av.shape[0] != Bv.shape[0] or Av.shape[1] != Bv.shape[1]:
        raise ValueError("matrices differ in shape")
    cdef Py_ssize_t n = Av.shape[0], k = Av.shape[1], i, j
    cdef double total = 0.0, acc, d
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(k):
                d = Av[i, j] - Bv[i, j]
                acc += d * d
            total += sqrt(acc)
    return total
