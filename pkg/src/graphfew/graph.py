"""Sparse undirected graphs with vertex features.

Storage is symmetric CSR over simple undirected edges (no self-loops, no
multi-edges). Loaders ingest the classic citation-dataset text layout and a
JSON document format; a stochastic block model generator provides synthetic
homophilic test graphs.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class GraphFormatError(ValueError):
    """A dataset file or document could not be parsed or validated."""


class AdjacencyMode(str, Enum):
    """Normalization flavor: D^-1/2 A D^-1/2 on A itself or on A + I."""

    PLAIN = "plain"
    SELF_LOOP = "self_loop"


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph in CSR form with dense vertex features.

    Neighbor lists are sorted ascending, deduplicated, free of self-loops,
    and symmetric (u in neighbors(v) iff v in neighbors(u)).
    """

    num_vertices: int
    csr_offsets: np.ndarray
    csr_neighbors: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None
    num_classes: int | None = None

    def __post_init__(self):
        n = self.num_vertices
        off, nbr = self.csr_offsets, self.csr_neighbors
        if off.shape != (n + 1,) or off[0] != 0 or off[-1] != len(nbr):
            raise GraphFormatError("csr_offsets inconsistent with neighbor storage")
        if np.any(np.diff(off) < 0):
            raise GraphFormatError("csr_offsets must be nondecreasing")
        if len(nbr) and (nbr.min() < 0 or nbr.max() >= n):
            raise GraphFormatError("neighbor index out of range")
        if self.features.shape[0] != n:
            raise GraphFormatError("feature matrix row count != num_vertices")
        if self.labels is not None:
            if self.num_classes is None:
                raise GraphFormatError("labels present but num_classes missing")
            if self.labels.shape != (n,):
                raise GraphFormatError("label vector length != num_vertices")
            if len(self.labels) and (
                self.labels.min() < 0 or self.labels.max() >= self.num_classes
            ):
                raise GraphFormatError("label index outside [0, num_classes)")
        for v in range(n):
            row = nbr[off[v] : off[v + 1]]
            if np.any(np.diff(row) <= 0):
                raise GraphFormatError(f"neighbor list of vertex {v} not strictly sorted")
            if v in row:
                raise GraphFormatError(f"self-loop stored at vertex {v}")
        # Symmetry: the CSR matrix must equal its transpose exactly.
        mat = sp.csr_matrix(
            (np.ones(len(nbr)), nbr, off), shape=(n, n)
        )
        if (mat != mat.T).nnz != 0:
            raise GraphFormatError("edge storage is not symmetric")

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        """Undirected edge count (each edge stored twice in CSR)."""
        return len(self.csr_neighbors) // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.csr_offsets)

    def neighbors(self, v: int) -> np.ndarray:
        return self.csr_neighbors[self.csr_offsets[v] : self.csr_offsets[v + 1]]

    def edge_list(self) -> np.ndarray:
        """(num_edges, 2) array with u < v per row, lexicographically sorted."""
        src = np.repeat(np.arange(self.num_vertices), np.diff(self.csr_offsets))
        dst = self.csr_neighbors
        keep = src < dst
        return np.column_stack([src[keep], dst[keep]])


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetric degree-normalized adjacency operator in CSR form.

    Plain mode: weight(u,v) = 1/sqrt(deg(u) deg(v)) over the stored edges,
    isolated vertices get empty rows. Self-loop mode applies the same
    construction to A + I, so every vertex carries a self edge.
    """

    num_vertices: int
    csr_offsets: np.ndarray
    csr_neighbors: np.ndarray
    weights: np.ndarray
    mode: AdjacencyMode

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.weights, self.csr_neighbors, self.csr_offsets),
            shape=(self.num_vertices, self.num_vertices),
        )

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()


def _build_graph(
    num_vertices: int,
    edges: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray | None,
    num_classes: int | None,
) -> Graph:
    """Assemble a Graph from an arbitrary (possibly duplicated) edge array."""
    if len(edges):
        u, v = edges[:, 0], edges[:, 1]
        keep = u != v
        u, v = u[keep], v[keep]
        both = np.concatenate([np.column_stack([u, v]), np.column_stack([v, u])])
        both = np.unique(both, axis=0)
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        src, dst = both[:, 0], both[:, 1]
    else:
        src = dst = np.empty(0, dtype=np.int64)
    offsets = np.zeros(num_vertices + 1, dtype=np.int64)
    np.add.at(offsets, src + 1, 1)
    offsets = np.cumsum(offsets)
    return Graph(
        num_vertices=num_vertices,
        csr_offsets=offsets,
        csr_neighbors=dst.astype(np.int64),
        features=np.ascontiguousarray(features, dtype=np.float64),
        labels=None if labels is None else labels.astype(np.int64),
        num_classes=num_classes,
    )


def load_text_dataset(content_path: str | Path, cites_path: str | Path) -> Graph:
    """Load the citation-dataset text layout (Cora/CiteSeer style).

    Content file: one vertex per line, ``id feat_0 ... feat_{F-1} label``.
    Cites file: one edge per line, ``cited_id citing_id``. Edges whose
    endpoints never appear in the content file are dropped (with a warning
    giving the count); duplicates and both orientations collapse into one
    undirected edge.
    """
    content_path, cites_path = Path(content_path), Path(cites_path)
    ids: dict[str, int] = {}
    feature_rows: list[np.ndarray] = []
    label_names: dict[str, int] = {}
    label_rows: list[int] = []
    feature_dim = None
    with content_path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise GraphFormatError(
                    f"{content_path}:{lineno}: expected 'id features... label', got {len(parts)} fields"
                )
            vid, raw_feats, label = parts[0], parts[1:-1], parts[-1]
            if vid in ids:
                raise GraphFormatError(f"{content_path}:{lineno}: duplicate vertex id {vid!r}")
            if feature_dim is None:
                feature_dim = len(raw_feats)
            elif len(raw_feats) != feature_dim:
                raise GraphFormatError(
                    f"{content_path}:{lineno}: feature count {len(raw_feats)} != {feature_dim}"
                )
            try:
                feature_rows.append(np.array(raw_feats, dtype=np.float64))
            except ValueError as exc:
                raise GraphFormatError(f"{content_path}:{lineno}: bad feature value ({exc})") from exc
            ids[vid] = len(ids)
            label_rows.append(label_names.setdefault(label, len(label_names)))
    if not ids:
        raise GraphFormatError(f"{content_path}: dataset contains zero vertices")

    edges = []
    dropped = 0
    with cites_path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise GraphFormatError(
                    f"{cites_path}:{lineno}: expected 'cited_id citing_id', got {len(parts)} fields"
                )
            a, b = parts
            if a in ids and b in ids:
                edges.append((ids[a], ids[b]))
            else:
                dropped += 1
    if dropped:
        warnings.warn(f"{cites_path}: dropped {dropped} edge lines with unknown endpoints")

    return _build_graph(
        num_vertices=len(ids),
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        features=np.vstack(feature_rows),
        labels=np.array(label_rows, dtype=np.int64),
        num_classes=len(label_names),
    )


def load_json_graph(path: str | Path) -> Graph:
    """Load a graph from the JSON document format (see write_json_graph)."""
    with Path(path).open() as fh:
        doc = json.load(fh)
    return graph_from_dict(doc)


def graph_from_dict(doc: dict) -> Graph:
    for key in ("num_vertices", "features", "edges"):
        if key not in doc:
            raise GraphFormatError(f"graph document missing required key {key!r}")
    n = doc["num_vertices"]
    if not isinstance(n, int) or n < 0:
        raise GraphFormatError("num_vertices must be a nonnegative integer")
    features = np.asarray(doc["features"], dtype=np.float64)
    if features.ndim == 1 and n == 0:
        features = features.reshape(0, 0)
    if features.ndim != 2 or features.shape[0] != n:
        raise GraphFormatError(f"features must be a {n}-row matrix")
    edges = np.asarray(doc["edges"], dtype=np.int64).reshape(-1, 2)
    if len(edges) and (edges.min() < 0 or edges.max() >= n):
        bad = edges[(edges.min(axis=1) < 0) | (edges.max(axis=1) >= n)][0]
        raise GraphFormatError(f"edge {bad.tolist()} references a vertex outside [0, {n})")
    labels = doc.get("labels")
    num_classes = doc.get("num_classes")
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if num_classes is None:
            raise GraphFormatError("labels present but num_classes is null")
        if labels.shape != (n,):
            raise GraphFormatError("labels length != num_vertices")
        if len(labels) and (labels.min() < 0 or labels.max() >= num_classes):
            raise GraphFormatError("label index outside [0, num_classes)")
    return _build_graph(n, edges, features, labels, num_classes if labels is not None else None)


def graph_to_dict(g: Graph) -> dict:
    return {
        "num_vertices": g.num_vertices,
        "num_classes": g.num_classes,
        "features": g.features.tolist(),
        "edges": g.edge_list().tolist(),
        "labels": None if g.labels is None else g.labels.tolist(),
    }


def write_json_graph(g: Graph, path: str | Path) -> None:
    """Inverse of load_json_graph."""
    with Path(path).open("w") as fh:
        json.dump(graph_to_dict(g), fh)


def generate_sbm(
    num_vertices: int,
    num_classes: int,
    p_in: float,
    p_out: float,
    feature_dim: int,
    feature_shift: float,
    seed: int,
) -> Graph:
    """Homophilic stochastic block model with Gaussian class-mean features.

    Vertices are split into near-equal contiguous blocks; same-block pairs
    are joined with probability p_in, cross-block pairs with p_out. Features
    are unit Gaussians around a per-class mean of norm feature_shift.
    """
    if not (0.0 <= p_out <= p_in <= 1.0):
        raise ValueError("require 0 <= p_out <= p_in <= 1")
    if num_classes < 2:
        raise ValueError("require num_classes >= 2")
    rng = np.random.default_rng(seed)
    base, extra = divmod(num_vertices, num_classes)
    sizes = [base + (1 if c < extra else 0) for c in range(num_classes)]
    labels = np.repeat(np.arange(num_classes), sizes)

    means = rng.standard_normal((num_classes, feature_dim))
    norms = np.linalg.norm(means, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    means = means / norms * feature_shift
    features = means[labels] + rng.standard_normal((num_vertices, feature_dim))

    same = labels[:, None] == labels[None, :]
    probs = np.where(same, p_in, p_out)
    draws = rng.random((num_vertices, num_vertices))
    upper = np.triu(draws < probs, k=1)
    u, v = np.nonzero(upper)
    edges = np.column_stack([u, v]).astype(np.int64)
    return _build_graph(num_vertices, edges, features, labels, num_classes)


def normalize_adjacency(g: Graph, mode: AdjacencyMode | str = AdjacencyMode.PLAIN) -> NormalizedAdjacency:
    """D^-1/2 A D^-1/2 over the stored edges, optionally on A + I.

    Isolated vertices yield empty rows in plain mode and a weight-1
    self-loop in self-loop mode.
    """
    mode = AdjacencyMode(mode)
    n = g.num_vertices
    if mode is AdjacencyMode.PLAIN:
        offsets, neighbors = g.csr_offsets.copy(), g.csr_neighbors.copy()
        deg = g.degrees().astype(np.float64)
    else:
        # Insert a self edge into every (sorted) neighbor list.
        deg = g.degrees().astype(np.float64) + 1.0
        neighbors = np.empty(len(g.csr_neighbors) + n, dtype=np.int64)
        offsets = np.zeros(n + 1, dtype=np.int64)
        pos = 0
        for v in range(n):
            row = g.neighbors(v)
            k = np.searchsorted(row, v)
            neighbors[pos : pos + k] = row[:k]
            neighbors[pos + k] = v
            neighbors[pos + k + 1 : pos + len(row) + 1] = row[k:]
            pos += len(row) + 1
            offsets[v + 1] = pos
    inv_sqrt = np.zeros(n)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    src = np.repeat(np.arange(n), np.diff(offsets))
    weights = inv_sqrt[src] * inv_sqrt[neighbors]
    return NormalizedAdjacency(n, offsets, neighbors, weights, mode)


def homophily_ratio(g: Graph) -> float:
    """Class-insensitive edge homophily ratio.

    Per class k, h_k is the fraction of edges touching class k whose both
    endpoints lie in class k; excess over the class share |C_k|/|V| is
    averaged over classes (clamped at zero). Edgeless graphs and
    single-class graphs score 0.
    """
    if g.labels is None:
        raise ValueError("homophily_ratio requires vertex labels")
    c = int(g.num_classes)
    edges = g.edge_list()
    if len(edges) == 0 or c < 2:
        return 0.0
    lu, lv = g.labels[edges[:, 0]], g.labels[edges[:, 1]]
    intra = np.zeros(c)
    touched = np.zeros(c)
    same = lu == lv
    np.add.at(intra, lu[same], 1)
    np.add.at(touched, lu[same], 1)
    np.add.at(touched, lu[~same], 1)
    np.add.at(touched, lv[~same], 1)
    h = np.divide(intra, touched, out=np.zeros(c), where=touched > 0)
    share = np.bincount(g.labels, minlength=c) / g.num_vertices
    return float(np.maximum(0.0, h - share).sum() / (c - 1))
