"""Graph container, self-loop row normalization and edge-neighbor enumeration."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from privgcn import kernels

SPLIT_TAGS = ("train", "val", "test", "unlabeled")


class GraphError(ValueError):
    """Raised for structurally invalid graphs."""


def _canonical_edges(edges, n: int) -> tuple[tuple[int, int], ...]:
    out = set()
    for e in edges:
        u, v = (int(e[0]), int(e[1]))
        if u == v:
            raise GraphError(f"self-loop on node {u}")
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"edge ({u}, {v}) has an endpoint outside [0, {n})")
        key = (u, v) if u < v else (v, u)
        if key in out:
            raise GraphError(f"duplicate edge {key}")
        out.add(key)
    return tuple(sorted(out))


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected, unweighted attributed graph.

    ``Y`` is one-hot for labeled nodes and all-zero for unlabeled ones.
    ``split`` holds one tag from :data:`SPLIT_TAGS` per node.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    X: np.ndarray
    Y: np.ndarray
    split: tuple[str, ...] = ()
    neighbors: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise GraphError("graph needs at least one node")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", _canonical_edges(self.edges, n))

        X = np.array(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(n, -1)
        if X.ndim != 2 or X.shape[0] != n:
            raise GraphError(f"feature matrix must have {n} rows, got shape {X.shape}")
        Y = np.array(self.Y, dtype=np.float64)
        if Y.ndim != 2 or Y.shape[0] != n:
            raise GraphError(f"label matrix must have {n} rows, got shape {Y.shape}")
        if not np.all((Y == 0) | (Y == 1)):
            raise GraphError("label matrix must be 0/1")
        if np.any(Y.sum(axis=1) > 1):
            raise GraphError("labeled rows must be one-hot")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

        split = tuple(self.split) if self.split else tuple(
            "train" if Y[i].any() else "unlabeled" for i in range(n)
        )
        if len(split) != n:
            raise GraphError(f"split must tag all {n} nodes")
        for i, tag in enumerate(split):
            if tag not in SPLIT_TAGS:
                raise GraphError(f"node {i}: unknown split tag {tag!r}")
            if tag != "unlabeled" and not Y[i].any():
                raise GraphError(f"node {i} is in split {tag!r} but has no label")
        object.__setattr__(self, "split", split)

        nbrs: list[list[int]] = [[] for _ in range(n)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        object.__setattr__(self, "neighbors", tuple(tuple(sorted(a)) for a in nbrs))

    @property
    def num_classes(self) -> int:
        return self.Y.shape[1]

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.neighbors], dtype=np.int64)

    @property
    def labels(self) -> np.ndarray:
        """Class index per node, -1 where unlabeled."""
        lab = np.argmax(self.Y, axis=1)
        lab[self.Y.sum(axis=1) == 0] = -1
        return lab

    def mask(self, tag: str) -> np.ndarray:
        return np.array([t == tag for t in self.split], dtype=bool)

    def edge_set(self) -> frozenset:
        return frozenset(self.edges)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        if self.edges:
            e = np.asarray(self.edges)
            A[e[:, 0], e[:, 1]] = 1.0
            A[e[:, 1], e[:, 0]] = 1.0
        return A

    def with_edges(self, edges) -> "Graph":
        return Graph(self.n, tuple(edges), self.X, self.Y, self.split)

    def with_split(self, split: Sequence[str]) -> "Graph":
        return Graph(self.n, self.edges, self.X, self.Y, tuple(split))

    def with_features(self, X) -> "Graph":
        return Graph(self.n, self.edges, X, self.Y, self.split)


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    matrix: np.ndarray
    clip: float
    degrees: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def normalize_adjacency(g: Graph, p: float = 0.5) -> NormalizedAdjacency:
    """Row-stochastic ``D^-1 (A + I)`` with off-diagonal entries capped at ``p``.

    Off-diagonal entry ``(i, j)`` of an edge is ``min(1/(k_i + 1), p)`` and the
    diagonal absorbs the remaining row mass, so ``p = 1/2`` is the plain
    self-loop normalization.
    """
    if not (0.0 < p <= 0.5):
        raise ValueError(f"clip p must lie in (0, 1/2], got {p}")
    if g.edges:
        e = np.asarray(g.edges, dtype=np.int64)
    else:
        e = np.zeros((0, 2), dtype=np.int64)
    M = kernels.normalized_adjacency(g.n, e, float(p))
    M.setflags(write=False)
    return NormalizedAdjacency(M, float(p), g.degrees)


def neighboring_graphs(g: Graph, direction: str = "both") -> Iterator[tuple[tuple[int, int], str, Graph]]:
    """Yield ``(edge, "remove"|"add", neighbor)`` for every edge-level neighbor."""
    if direction not in ("both", "remove", "add"):
        raise ValueError(f"unknown direction {direction!r}")
    present = g.edge_set()
    if direction in ("both", "remove"):
        for e in g.edges:
            yield e, "remove", g.with_edges(present - {e})
    if direction in ("both", "add"):
        for u in range(g.n):
            for v in range(u + 1, g.n):
                if (u, v) not in present:
                    yield (u, v), "add", g.with_edges(present | {(u, v)})


def homophily_ratio(g: Graph) -> float:
    """Mean over nodes of the fraction of neighbors sharing the node's label."""
    lab = g.labels
    if np.any(lab < 0):
        raise GraphError("homophily needs every node labeled")
    total = 0.0
    for v, nb in enumerate(g.neighbors):
        if not nb:
            raise GraphError(f"node {v} is isolated")
        total += np.mean(lab[list(nb)] == lab[v])
    return float(total / g.n)
