import numpy as np
import pytest

from privgcn.graph import Graph


def random_graph(rng, n, density=0.3, d0=3, classes=2, labeled=True):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < density
    edges = list(zip(iu[keep].tolist(), ju[keep].tolist()))
    X = rng.normal(size=(n, d0))
    Y = np.zeros((n, classes))
    if labeled:
        Y[np.arange(n), rng.integers(0, classes, size=n)] = 1.0
    return Graph(n, edges, X, Y)


def unit_rows(rng, n, d):
    X = rng.normal(size=(n, d))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def path2():
    return Graph(2, [(0, 1)], np.eye(2), np.eye(2))


@pytest.fixture
def triangle():
    return Graph(3, [(0, 1), (1, 2), (0, 2)], np.eye(3), np.tile([1.0, 0.0], (3, 1)))


def blobs_graph(rng, n=40, classes=2, d0=4, sep=4.0, density=0.15, train_frac=0.5):
    """Well-separated Gaussian blobs with random edges and a train/test split."""
    labels = np.arange(n) % classes
    X = rng.normal(size=(n, d0)) + sep * np.eye(classes, d0)[labels]
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < density
    split = tuple("train" if rng.random() < train_frac or i < classes else "test" for i in range(n))
    return Graph(n, list(zip(iu[keep].tolist(), ju[keep].tolist())), X, np.eye(classes)[labels], split)
