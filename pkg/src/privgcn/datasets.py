"""TSV dataset loading/saving, synthetic graph generators and stratified splits.

A dataset directory holds::

    edges.tsv     "src<TAB>dst" per undirected edge, 0-based ids, each pair once
    features.tsv  one row of tab-separated decimals per node, in id order
    labels.tsv    "id<TAB>class" per labeled node
    split.tsv     "id<TAB>train|val|test" (optional)
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from privgcn.graph import Graph, GraphError

SPLIT_NAMES = ("train", "val", "test")
SYNTHETIC_KINDS = ("sbm", "blobs-on-graph")


class DatasetError(ValueError):
    def __init__(self, path, line, msg):
        self.path, self.line = str(path), line
        where = f"{path}:{line}" if line else str(path)
        super().__init__(f"{where}: {msg}")


def _rows(path: Path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line.split("\t")


def _int(tok, path, lineno, what):
    try:
        return int(tok)
    except ValueError:
        raise DatasetError(path, lineno, f"{what} {tok!r} is not an integer") from None


def load_dataset(directory) -> Graph:
    root = Path(directory)
    fpath = root / "features.tsv"
    if not fpath.exists():
        raise DatasetError(fpath, 0, "missing features file")
    feats = []
    for lineno, toks in _rows(fpath):
        try:
            feats.append([float(t) for t in toks])
        except ValueError:
            raise DatasetError(fpath, lineno, "non-numeric feature value") from None
        if len(feats[-1]) != len(feats[0]):
            raise DatasetError(fpath, lineno, f"expected {len(feats[0])} columns, got {len(feats[-1])}")
        if not np.all(np.isfinite(feats[-1])):
            raise DatasetError(fpath, lineno, "non-finite feature value")
    n = len(feats)
    if n == 0:
        raise DatasetError(fpath, 0, "no feature rows")
    X = np.array(feats, dtype=np.float64)

    epath = root / "edges.tsv"
    edges, seen = [], set()
    if epath.exists():
        for lineno, toks in _rows(epath):
            if len(toks) != 2:
                raise DatasetError(epath, lineno, f"expected 2 fields, got {len(toks)}")
            u, v = (_int(t, epath, lineno, "node id") for t in toks)
            if u == v:
                raise DatasetError(epath, lineno, f"self-loop on node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise DatasetError(epath, lineno, f"node id out of range [0, {n})")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise DatasetError(epath, lineno, f"duplicate edge {key}")
            seen.add(key)
            edges.append(key)

    lpath = root / "labels.tsv"
    labels = {}
    if lpath.exists():
        for lineno, toks in _rows(lpath):
            if len(toks) != 2:
                raise DatasetError(lpath, lineno, f"expected 2 fields, got {len(toks)}")
            i = _int(toks[0], lpath, lineno, "node id")
            k = _int(toks[1], lpath, lineno, "class")
            if not 0 <= i < n:
                raise DatasetError(lpath, lineno, f"node id out of range [0, {n})")
            if k < 0:
                raise DatasetError(lpath, lineno, "class ids must be non-negative")
            if i in labels:
                raise DatasetError(lpath, lineno, f"node {i} labeled twice")
            labels[i] = k
    c = max(labels.values()) + 1 if labels else 1
    Y = np.zeros((n, max(c, 2)))
    for i, k in labels.items():
        Y[i, k] = 1.0

    spath = root / "split.tsv"
    if spath.exists():
        split = ["unlabeled"] * n
        assigned = set()
        for lineno, toks in _rows(spath):
            if len(toks) != 2:
                raise DatasetError(spath, lineno, f"expected 2 fields, got {len(toks)}")
            i = _int(toks[0], spath, lineno, "node id")
            if not 0 <= i < n:
                raise DatasetError(spath, lineno, f"node id out of range [0, {n})")
            if toks[1] not in SPLIT_NAMES:
                raise DatasetError(spath, lineno, f"unknown split {toks[1]!r}")
            if i in assigned:
                raise DatasetError(spath, lineno, f"node {i} assigned twice")
            if i not in labels:
                raise DatasetError(spath, lineno, f"node {i} is in split {toks[1]!r} but has no label")
            assigned.add(i)
            split[i] = toks[1]
    else:
        split = ["train" if i in labels else "unlabeled" for i in range(n)]

    try:
        return Graph(n, tuple(edges), X, Y, tuple(split))
    except GraphError as exc:
        raise DatasetError(root, 0, str(exc)) from None


def save_dataset(g: Graph, directory) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "edges.tsv", "w") as fh:
        for u, v in g.edges:
            fh.write(f"{u}\t{v}\n")
    with open(root / "features.tsv", "w") as fh:
        for row in g.X:
            fh.write("\t".join(repr(float(x)) for x in row) + "\n")
    lab = g.labels
    with open(root / "labels.tsv", "w") as fh:
        for i in np.flatnonzero(lab >= 0):
            fh.write(f"{i}\t{lab[i]}\n")
    with open(root / "split.tsv", "w") as fh:
        for i, tag in enumerate(g.split):
            if tag in SPLIT_NAMES:
                fh.write(f"{i}\t{tag}\n")


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str = "sbm"
    n: int = 400
    classes: int = 4
    p_in: float = 0.08
    p_out: float = 0.0066
    noise: float = 1.0
    d0: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SYNTHETIC_KINDS:
            raise ValueError(f"kind must be one of {SYNTHETIC_KINDS}, got {self.kind!r}")
        for name in ("p_in", "p_out"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {val}")
        if self.classes < 2:
            raise ValueError("need at least two classes")
        if self.n < self.classes:
            raise ValueError(f"n={self.n} is smaller than the class count {self.classes}")
        if self.noise < 0:
            raise ValueError("noise level must be non-negative")
        if self.d0 < 1:
            raise ValueError("feature width must be positive")


def _class_means(rng, classes, d0):
    if d0 >= classes:
        return np.eye(classes, d0)
    M = rng.normal(size=(classes, d0))
    return M / np.linalg.norm(M, axis=1, keepdims=True)


def _block_edges(rng, groups, p_in, p_out):
    n = len(groups)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(groups[iu] == groups[ju], p_in, p_out)
    keep = rng.random(iu.size) < prob
    return tuple(zip(iu[keep].tolist(), ju[keep].tolist()))


def generate_sbm(spec: SyntheticSpec) -> Graph:
    """Class-balanced stochastic block model with noisy class-mean features.

    ``blobs-on-graph`` draws blocks from each node's nearest class mean in
    feature space rather than its true class, so edges follow the features.
    """
    rng = np.random.default_rng(spec.seed)
    labels = rng.permutation(np.arange(spec.n) % spec.classes)
    means = _class_means(rng, spec.classes, spec.d0)
    X = means[labels] + spec.noise * rng.normal(size=(spec.n, spec.d0))
    if spec.kind == "sbm":
        groups = labels
    else:
        groups = np.argmin(((X[:, None, :] - means[None]) ** 2).sum(axis=2), axis=1)
    edges = _block_edges(rng, groups, spec.p_in, spec.p_out)
    Y = np.eye(spec.classes)[labels]
    return Graph(spec.n, edges, X, Y)


def make_split(g: Graph, per_class_train: int, val_count: int, test_count: int, seed: int = 0) -> Graph:
    """Stratified train split plus disjoint random validation/test sets."""
    rng = np.random.default_rng(seed)
    lab = g.labels
    split = ["unlabeled"] * g.n
    rest = []
    for k in range(g.num_classes):
        members = np.flatnonzero(lab == k)
        if len(members) < per_class_train:
            raise ValueError(f"class {k} has {len(members)} nodes, {per_class_train} requested for training")
        members = rng.permutation(members)
        for i in members[:per_class_train]:
            split[i] = "train"
        rest.extend(members[per_class_train:].tolist())
    rest = rng.permutation(np.array(sorted(rest), dtype=np.int64))
    if val_count + test_count > len(rest):
        raise ValueError(f"only {len(rest)} labeled nodes left for {val_count} val + {test_count} test")
    for i in rest[:val_count]:
        split[i] = "val"
    for i in rest[val_count : val_count + test_count]:
        split[i] = "test"
    return g.with_split(split)


def dataset_files(directory) -> list[Path]:
    root = Path(directory)
    return sorted(p for p in root.iterdir() if p.is_file() and p.suffix == ".tsv") if os.path.isdir(root) else []
