"""Numpy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is missing or disabled; the
two modules expose the same functions with the same signatures.
"""

import numpy as np

MLSM = 0
PSEUDO_HUBER = 1


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def loss_derivs(kind, x, y, c, delta_l):
    shape = np.shape(x)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64)).ravel()
    y = np.broadcast_to(np.asarray(y, dtype=np.float64).ravel(), x.shape)
    return tuple(a.reshape(shape) for a in _loss_derivs(kind, x, y, c, delta_l))


def _loss_derivs(kind, x, y, c, delta_l):
    inv_c = 1.0 / c
    if kind == MLSM:
        s = _sigmoid(x)
        q = s * (1.0 - s)
        return (
            inv_c * (_softplus(x) - y * x),
            inv_c * (s - y),
            inv_c * q,
            inv_c * q * (1.0 - 2.0 * s),
        )
    if kind == PSEUDO_HUBER:
        t = x - y
        r2 = 1.0 + (t / delta_l) ** 2
        r = np.sqrt(r2)
        return (
            inv_c * delta_l**2 * (r - 1.0),
            inv_c * t / r,
            inv_c / (r2 * r),
            -3.0 * inv_c * t / (delta_l**2 * r2 * r2 * r),
        )
    raise ValueError(f"unknown loss kind {kind}")


def loss_and_grad_margins(kind, M, Y, c, delta_l):
    """Return ``(sum of losses, dloss/dmargin)`` for a margin matrix."""
    M = np.ascontiguousarray(M, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    inv_c = 1.0 / c
    if kind == MLSM:
        total = inv_c * float(np.sum(_softplus(M) - Y * M))
        return total, inv_c * (_sigmoid(M) - Y)
    if kind == PSEUDO_HUBER:
        t = M - Y
        r = np.sqrt(1.0 + (t / delta_l) ** 2)
        total = inv_c * delta_l**2 * float(np.sum(r - 1.0))
        return total, inv_c * t / r
    raise ValueError(f"unknown loss kind {kind}")


def loss_sum(kind, M, Y, c, delta_l):
    return loss_and_grad_margins(kind, M, Y, c, delta_l)[0]


def normalized_adjacency(n, edges, p):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    deg = np.bincount(edges.ravel(), minlength=n).astype(np.float64)
    M = np.zeros((n, n))
    if len(edges):
        u, v = edges[:, 0], edges[:, 1]
        M[u, v] = np.minimum(1.0 / (deg[u] + 1.0), p)
        M[v, u] = np.minimum(1.0 / (deg[v] + 1.0), p)
    # every off-diagonal entry in row i equals min(1/(k_i+1), p)
    inv = 1.0 / (deg + 1.0)
    M[np.diag_indices(n)] = np.where(inv <= p, inv, 1.0 - deg * p)
    return M


def row_diff_norm_sum(A, B):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    return float(np.sum(np.sqrt(np.sum((A - B) ** 2, axis=1))))
