"""PPR / APPR propagation matrices and the scaled multi-step feature concatenation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.linalg

from privgcn.graph import NormalizedAdjacency

INF = math.inf
Step = Union[int, float]

#: Dense n x n matrices are refused above this node count.
MAX_DENSE_NODES = 20000


def parse_step(tok) -> Step:
    if isinstance(tok, str):
        t = tok.strip().lower()
        if t in ("inf", "infinity", "∞"):
            return INF
        tok = t
    val = float(tok)
    if math.isinf(val) and val > 0:
        return INF
    if val < 0 or val != int(val):
        raise ValueError(f"propagation step must be a non-negative integer or inf, got {tok!r}")
    return int(val)


def format_step(m: Step) -> str:
    return "inf" if m == INF else str(int(m))


@dataclass(frozen=True)
class PropagationConfig:
    alpha: float
    steps: tuple[Step, ...]

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        steps = tuple(parse_step(m) for m in self.steps)
        if not steps:
            raise ValueError("at least one propagation step is required")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "steps", steps)

    @property
    def s(self) -> int:
        return len(self.steps)

    def steps_str(self) -> str:
        return ",".join(format_step(m) for m in self.steps)


@dataclass(frozen=True, eq=False)
class AggregateFeatures:
    Z: np.ndarray
    config: PropagationConfig
    d1: int

    @property
    def d(self) -> int:
        return self.Z.shape[1]


def _check_size(n: int, max_nodes: int | None):
    cap = MAX_DENSE_NODES if max_nodes is None else max_nodes
    if n > cap:
        raise ValueError(f"{n} nodes exceeds the dense propagation cap of {cap}")


def build_propagation_matrix(
    adj: NormalizedAdjacency, alpha: float, m: Step, max_nodes: int | None = None
) -> np.ndarray:
    """Return ``R_m`` for restart probability ``alpha``.

    Finite ``m`` uses the recursion ``R_k = (1 - alpha) A R_{k-1} + alpha I``
    starting from ``R_0 = I``; ``m = inf`` solves
    ``(I - (1 - alpha) A) R = alpha I`` by LU.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    m = parse_step(m)
    A = adj.matrix
    n = A.shape[0]
    _check_size(n, max_nodes)
    eye = np.eye(n)
    if m == 0:
        return eye
    if m == INF:
        R = scipy.linalg.lu_solve(scipy.linalg.lu_factor(eye - (1.0 - alpha) * A), alpha * eye)
        if not np.all(np.isfinite(R)):
            raise FloatingPointError("non-finite entries in the PPR solve")
        return R
    R = eye
    for _ in range(m):
        R = (1.0 - alpha) * (A @ R) + alpha * eye
    return R


def propagation_matrix_closed_form(adj: NormalizedAdjacency, alpha: float, m: int) -> np.ndarray:
    """``alpha * sum_{i<m} (1-alpha)^i A^i + (1-alpha)^m A^m`` by explicit powers."""
    A = adj.matrix
    n = A.shape[0]
    R = np.zeros((n, n))
    P = np.eye(n)
    for i in range(m):
        R += alpha * (1.0 - alpha) ** i * P
        P = P @ A
    return R + (1.0 - alpha) ** m * P


def aggregate(
    adj: NormalizedAdjacency, X: np.ndarray, cfg: PropagationConfig, max_nodes: int | None = None
) -> AggregateFeatures:
    """Concatenate ``R_{m_i} X`` over the configured steps and scale by ``1/s``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != adj.n:
        raise ValueError(f"feature matrix has shape {X.shape}, expected {adj.n} rows")
    cache: dict[Step, np.ndarray] = {}
    blocks = []
    for m in cfg.steps:
        if m not in cache:
            cache[m] = X if m == 0 else build_propagation_matrix(adj, cfg.alpha, m, max_nodes) @ X
        blocks.append(cache[m])
    Z = np.hstack(blocks) / cfg.s
    return AggregateFeatures(Z, cfg, X.shape[1])


def ppr_convergence_gap(adj: NormalizedAdjacency, alpha: float, m: int) -> float:
    """Frobenius distance between the m-step approximation and the PPR limit."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("gap is only defined for alpha in (0, 1)")
    diff = build_propagation_matrix(adj, alpha, m) - build_propagation_matrix(adj, alpha, INF)
    return float(np.linalg.norm(diff))


def dump_matrix_tsv(R: np.ndarray, path) -> None:
    np.savetxt(path, R, delimiter="\t", fmt="%.17g")


def normalize_rows(X: np.ndarray) -> np.ndarray:
    """Scale rows to unit L2 norm; all-zero rows stay zero."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return X / safe
