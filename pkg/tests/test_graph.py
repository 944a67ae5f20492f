import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from conftest import random_graph
from privgcn.graph import Graph, GraphError, homophily_ratio, neighboring_graphs, normalize_adjacency


class TestGraphValidation:
    def test_edges_are_canonicalized(self):
        g = Graph(3, [(2, 0), (1, 0)], np.zeros((3, 1)), np.zeros((3, 2)))
        assert g.edges == ((0, 1), (0, 2))
        assert g.neighbors == ((1, 2), (0,), (0,))

    @pytest.mark.parametrize("edges", [[(1, 1)], [(0, 3)], [(0, 1), (1, 0)], [(-1, 0)]])
    def test_bad_edges_rejected(self, edges):
        with pytest.raises(GraphError):
            Graph(3, edges, np.zeros((3, 1)), np.zeros((3, 2)))

    def test_labels_must_be_one_hot(self):
        with pytest.raises(GraphError):
            Graph(2, [], np.zeros((2, 1)), np.array([[1.0, 1.0], [0, 0]]))
        with pytest.raises(GraphError):
            Graph(2, [], np.zeros((2, 1)), np.array([[0.5, 0.0], [0, 0]]))

    def test_split_needs_labels(self):
        with pytest.raises(GraphError, match="no label"):
            Graph(2, [], np.zeros((2, 1)), np.array([[1.0, 0], [0, 0]]), ("train", "test"))

    def test_unlabeled_rows_and_labels(self):
        g = Graph(3, [], np.zeros((3, 1)), np.array([[0, 1.0], [0, 0], [1.0, 0]]))
        assert_array_equal(g.labels, [1, -1, 0])
        assert g.split == ("train", "unlabeled", "train")

    def test_adjacency_symmetric_zero_diagonal(self, rng):
        A = random_graph(rng, 9).adjacency()
        assert_array_equal(A, A.T)
        assert_array_equal(np.diag(A), 0)


class TestNormalizeAdjacency:
    def test_single_node(self):
        g = Graph(1, [], np.zeros((1, 1)), np.zeros((1, 2)))
        assert_array_equal(normalize_adjacency(g, 0.5).matrix, [[1.0]])

    def test_triangle_uniform(self, triangle):
        assert_allclose(normalize_adjacency(triangle, 0.5).matrix, np.full((3, 3), 1 / 3), rtol=0, atol=1e-15)

    def test_path_clipped(self, path2):
        M = normalize_adjacency(path2, 1 / 3).matrix
        assert_allclose(M, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], atol=1e-15)

    def test_half_clip_is_plain_normalization(self, rng):
        for _ in range(20):
            g = random_graph(rng, int(rng.integers(1, 25)), density=rng.random())
            A = g.adjacency() + np.eye(g.n)
            assert_allclose(normalize_adjacency(g, 0.5).matrix, A / A.sum(axis=1, keepdims=True), rtol=0, atol=1e-15)

    def test_isolated_node_keeps_self_mass(self):
        g = Graph(3, [(0, 1)], np.zeros((3, 1)), np.zeros((3, 2)))
        assert normalize_adjacency(g, 0.25).matrix[2, 2] == 1.0

    @pytest.mark.parametrize("p", [0.0, 0.6, -0.1])
    def test_bad_clip(self, triangle, p):
        with pytest.raises(ValueError):
            normalize_adjacency(triangle, p)

    @settings(max_examples=100, deadline=None)
    @given(n=st.integers(1, 50), density=st.floats(0, 1), p=st.sampled_from([1 / 3, 0.5, 0.2]), seed=st.integers(0, 2**31))
    def test_stochastic_with_column_bounds(self, n, density, p, seed):
        g = random_graph(np.random.default_rng(seed), n, density)
        M = normalize_adjacency(g, p).matrix
        k = g.degrees
        assert np.all(M >= 0)
        assert_allclose(M.sum(axis=1), 1.0, rtol=0, atol=1e-9)
        assert np.all(M.sum(axis=0) <= np.maximum((k + 1) * p, 1.0) + 1e-9)
        off = M - np.diag(np.diag(M))
        A = g.adjacency()
        assert_allclose(off, A * np.minimum(1.0 / (k + 1), p)[:, None], rtol=0, atol=1e-15)

    def test_independent_of_edge_order(self, rng):
        g = random_graph(rng, 12, 0.4)
        shuffled = [g.edges[i][::-1] for i in rng.permutation(len(g.edges))]
        assert_array_equal(normalize_adjacency(g, 0.3).matrix, normalize_adjacency(g.with_edges(shuffled), 0.3).matrix)


class TestNeighboringGraphs:
    def test_two_node(self, path2):
        out = list(neighboring_graphs(path2))
        assert [(e, d) for e, d, _ in out] == [((0, 1), "remove")]

    def test_empty_three_node(self):
        g = Graph(3, [], np.zeros((3, 1)), np.zeros((3, 2)))
        assert [d for _, d, _ in neighboring_graphs(g)] == ["add"] * 3

    def test_path4(self):
        g = Graph(4, [(0, 1), (1, 2), (2, 3)], np.zeros((4, 1)), np.zeros((4, 2)))
        dirs = [d for _, d, _ in neighboring_graphs(g)]
        assert dirs.count("remove") == 3 and dirs.count("add") == 3

    def test_each_differs_by_one_edge(self, rng):
        g = random_graph(rng, 7, 0.5)
        seen = set()
        for edge, how, nb in neighboring_graphs(g):
            diff = g.edge_set() ^ nb.edge_set()
            assert diff == {edge}
            assert (edge in g.edge_set()) == (how == "remove")
            seen.add(nb.edge_set())
        assert len(seen) == 7 * 6 // 2

    def test_direction_filter(self, rng):
        g = random_graph(rng, 6, 0.5)
        assert len(list(neighboring_graphs(g, "remove"))) == len(g.edges)
        with pytest.raises(ValueError):
            list(neighboring_graphs(g, "sideways"))


class TestHomophily:
    def test_triangle_same_label(self, triangle):
        assert homophily_ratio(triangle) == 1.0

    def test_path_differing(self, path2):
        assert homophily_ratio(path2) == 0.0

    def test_path3(self):
        g = Graph(3, [(0, 1), (1, 2)], np.zeros((3, 1)), np.array([[1.0, 0], [1, 0], [0, 1]]))
        assert_allclose(homophily_ratio(g), 0.5)

    def test_isolated_rejected(self):
        g = Graph(3, [(0, 1)], np.zeros((3, 1)), np.eye(3))
        with pytest.raises(GraphError, match="isolated"):
            homophily_ratio(g)
