import numpy as np
import pytest

from graphfew.graph import AdjacencyMode, Graph, _build_graph, normalize_adjacency


def make_graph(num_vertices, edges, features=None, labels=None, num_classes=None):
    """Hand-build a Graph from an edge list; features default to identity-ish."""
    if features is None:
        features = np.eye(num_vertices, max(2, min(num_vertices, 8)))
    return _build_graph(
        num_vertices,
        np.array(edges, dtype=np.int64).reshape(-1, 2),
        np.asarray(features, dtype=np.float64),
        None if labels is None else np.asarray(labels, dtype=np.int64),
        num_classes,
    )


def dense_normalized(g: Graph, mode: AdjacencyMode) -> np.ndarray:
    """Independent dense-matrix oracle for D^-1/2 A D^-1/2 (optionally A + I)."""
    n = g.num_vertices
    a = np.zeros((n, n))
    for v in range(n):
        for u in g.neighbors(v):
            a[v, u] = 1.0
    if mode is AdjacencyMode.SELF_LOOP:
        a = a + np.eye(n)
    deg = a.sum(axis=1)
    inv = np.zeros(n)
    inv[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    return np.diag(inv) @ a @ np.diag(inv)


def random_graph(rng: np.random.Generator, n: int, p: float = 0.4, feature_dim: int = 3) -> Graph:
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    return make_graph(n, edges, features=rng.standard_normal((n, feature_dim)))


@pytest.fixture
def path3():
    """Path graph 0 - 1 - 2."""
    return make_graph(3, [(0, 1), (1, 2)])


@pytest.fixture
def triangle():
    return make_graph(3, [(0, 1), (1, 2), (0, 2)])
