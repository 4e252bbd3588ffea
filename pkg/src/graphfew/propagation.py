"""PageRank, label propagation with entropy filtering, and feature smoothing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import AdjacencyMode, Graph, NormalizedAdjacency


@dataclass(frozen=True)
class PageRankScores:
    """Per-vertex stationary scores; they sum to one."""

    scores: np.ndarray
    damping: float
    converged: bool
    iterations: int


def pagerank(
    g: Graph,
    damping: float = 0.85,
    tol: float = 1e-9,
    max_iter: int = 200,
) -> PageRankScores:
    """Power iteration on the column-stochastic transition matrix.

    Teleport is uniform; mass on dangling (isolated) vertices is
    redistributed uniformly. Iteration stops once the L1 change drops
    below tol; otherwise the last iterate is returned with converged=False.
    """
    if not 0.0 < damping < 1.0:
        raise ValueError("damping must lie in (0, 1)")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    n = g.num_vertices
    deg = g.degrees().astype(np.float64)
    dangling = deg == 0
    inv_deg = np.divide(1.0, deg, out=np.zeros(n), where=~dangling)
    v = np.full(n, 1.0 / n)
    src = np.repeat(np.arange(n), np.diff(g.csr_offsets))
    dst = g.csr_neighbors
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        outflow = v * inv_deg
        new_v = np.zeros(n)
        np.add.at(new_v, dst, outflow[src])
        new_v += v[dangling].sum() / n
        new_v = damping * new_v + (1.0 - damping) / n
        delta = np.abs(new_v - v).sum()
        v = new_v
        if delta < tol:
            converged = True
            break
    v = v / v.sum()
    return PageRankScores(scores=v, damping=damping, converged=converged, iterations=iterations)


def one_hot_seeds(num_vertices: int, num_classes: int, labels: dict[int, int]) -> np.ndarray:
    """Soft-label matrix with one-hot rows at the labeled vertices."""
    y = np.zeros((num_vertices, num_classes))
    for v, c in labels.items():
        y[v, c] = 1.0
    return y


def label_propagate(
    adj: NormalizedAdjacency,
    seeds: np.ndarray,
    alpha: float = 0.9,
    hops: int = 3,
) -> np.ndarray:
    """Iterate Y <- alpha * A_norm Y + (1 - alpha) * Y for `hops` steps.

    Expects the plain (no self-loop) normalization. Seed rows are not
    re-clamped between steps; rows of vertices the mass never reaches
    stay all-zero.
    """
    if adj.mode is not AdjacencyMode.PLAIN:
        raise ValueError("label propagation uses the plain normalized adjacency")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    mat = adj.to_scipy()
    y = np.array(seeds, dtype=np.float64)
    for _ in range(hops):
        y = alpha * np.asarray(mat @ y) + (1.0 - alpha) * y
    return y


def normalized_entropy(row: np.ndarray) -> float:
    """Shannon entropy of the row (normalized to a distribution) over ln(k)."""
    total = row.sum()
    if total <= 0.0:
        return 1.0
    p = row / total
    nz = p > 0.0
    h = float(-(p[nz] * np.log(p[nz])).sum())
    if len(row) < 2:
        return 0.0
    return h / np.log(len(row))


def filter_pseudo_labels(
    soft_labels: np.ndarray,
    threshold: float = 0.2,
    exclude: set[int] | frozenset[int] = frozenset(),
) -> dict[int, int]:
    """Keep confident argmax pseudo-labels.

    A vertex outside `exclude` with positive row mass keeps its argmax label
    iff the normalized entropy of its row is at most `threshold`. Zero-mass
    rows are never kept; argmax ties resolve to the lowest class index.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    kept: dict[int, int] = {}
    mass = soft_labels.sum(axis=1)
    for v in np.nonzero(mass > 0.0)[0]:
        if int(v) in exclude:
            continue
        if normalized_entropy(soft_labels[v]) <= threshold:
            kept[int(v)] = int(np.argmax(soft_labels[v]))
    return kept


def propagate_features(
    adj: NormalizedAdjacency,
    x: np.ndarray,
    hops: int,
) -> np.ndarray:
    """Left-multiply `hops` times by the self-loop-normalized operator."""
    if adj.mode is not AdjacencyMode.SELF_LOOP:
        raise ValueError("feature propagation uses the self-loop normalized adjacency")
    if hops < 0:
        raise ValueError("hops must be nonnegative")
    mat = adj.to_scipy()
    out = np.array(x, dtype=np.float64)
    for _ in range(hops):
        out = np.asarray(mat @ out)
    return out
