"""Pseudo-class partitioning, vertex-selection strategies, and annotators.

Selection always works within partition cells restricted to the unlabeled
pool, so a vertex is never queried twice. Annotators map selected vertices
to labels: a perfect oracle, a noisy oracle that corrupts each answer
independently with probability epsilon, or a blocking interactive session
driven by a human through the HTTP API.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .clustering import kmedoids
from .graph import Graph
from .models import ModelOutput
from .propagation import normalized_entropy, propagate_features

SETTINGS = ("balanced", "unbalanced", "unknown_k")
STRATEGIES = ("random", "entropy", "pagerank", "medoid")


class SessionAborted(RuntimeError):
    """The interactive annotation session was closed mid-experiment."""

    def __init__(self, message: str = "annotation session aborted"):
        super().__init__(message)


@dataclass
class LabelState:
    """Labeled/unlabeled bookkeeping for one experiment run."""

    budget_total: int
    unlabeled_pool: set[int]
    human_labels: dict[int, int] = field(default_factory=dict)
    pseudo_labels: dict[int, int] = field(default_factory=dict)
    partition: np.ndarray | None = None

    @property
    def budget_used(self) -> int:
        return len(self.human_labels)

    def add_human(self, vertex: int, label: int) -> None:
        if vertex not in self.unlabeled_pool:
            raise ValueError(f"vertex {vertex} is not in the unlabeled pool")
        if self.budget_used >= self.budget_total:
            raise ValueError("annotation budget exhausted")
        self.unlabeled_pool.discard(vertex)
        self.human_labels[vertex] = label
        self.pseudo_labels.pop(vertex, None)

    def replace_pseudo(self, labels: dict[int, int]) -> None:
        """Pseudo-labels are recomputed from scratch each round."""
        overlap = set(labels) & set(self.human_labels)
        if overlap:
            raise ValueError(f"pseudo-labels collide with human labels: {sorted(overlap)[:5]}")
        self.pseudo_labels = dict(labels)


@dataclass(frozen=True)
class Annotator:
    """kind is one of 'oracle', 'noisy', 'interactive'."""

    kind: str = "oracle"
    epsilon: float = 0.0
    session: object | None = None

    def __post_init__(self):
        if self.kind not in ("oracle", "noisy", "interactive"):
            raise ValueError(f"unknown annotator kind {self.kind!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")


def partition_vertices(
    setting: str,
    g: Graph,
    out: ModelOutput | None,
    k: int,
    vertices: np.ndarray,
    seed: int,
) -> np.ndarray:
    """Cell index per vertex of `vertices` (the training vertices).

    Balanced uses the ground-truth classes; the other settings run
    k-medoids on the model's embedding rows with the requested k (clipped
    to the number of vertices, with a warning).
    """
    if setting not in SETTINGS:
        raise ValueError(f"unknown setting {setting!r}")
    vertices = np.asarray(vertices, dtype=np.int64)
    if setting == "balanced":
        if g.labels is None:
            raise ValueError("balanced partitioning needs ground-truth labels")
        return g.labels[vertices].copy()
    if out is None:
        raise ValueError(f"{setting} partitioning needs a model output")
    if k > len(vertices):
        warnings.warn(f"partition k={k} clipped to {len(vertices)} vertices")
        k = len(vertices)
    return kmedoids(out.embeddings[vertices], k, seed).assignment


def _weighted_without_replacement(
    members: np.ndarray,
    weights: np.ndarray,
    quota: int,
    rng: np.random.Generator,
) -> list[int]:
    """Sequential weighted draws; all-zero weights fall back to uniform."""
    chosen: list[int] = []
    remaining = list(range(len(members)))
    w = np.asarray(weights, dtype=np.float64).copy()
    for _ in range(min(quota, len(members))):
        cur = w[remaining]
        total = cur.sum()
        p = None if total <= 0.0 else cur / total
        pick = rng.choice(len(remaining), p=p)
        chosen.append(int(members[remaining[pick]]))
        remaining.pop(pick)
    return chosen


def select_vertices(
    strategy: str,
    vertices: np.ndarray,
    cells: np.ndarray,
    per_part_quota: int,
    pool: set[int],
    out: ModelOutput | None,
    pagerank_scores: np.ndarray | None,
    rng: np.random.Generator,
) -> list[int]:
    """Draw up to `per_part_quota` pool vertices from every partition cell.

    random: uniform without replacement. entropy: weighted by the Shannon
    entropy of each vertex's logit row. pagerank: weighted by PageRank
    score. medoid: k-medoids on the cell's logit rows with k = quota,
    returning the medoid vertices. Cells smaller than the quota contribute
    whole; cells with no pool vertices contribute nothing.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if per_part_quota < 1:
        raise ValueError("per_part_quota must be at least 1")
    vertices = np.asarray(vertices, dtype=np.int64)
    cells = np.asarray(cells, dtype=np.int64)
    selected: list[int] = []
    for cell in np.unique(cells):
        members = vertices[cells == cell]
        members = np.array([v for v in members if v in pool], dtype=np.int64)
        if len(members) == 0:
            continue
        if len(members) <= per_part_quota:
            selected.extend(int(v) for v in members)
            continue
        if strategy == "random":
            picks = rng.choice(members, size=per_part_quota, replace=False)
            selected.extend(int(v) for v in picks)
        elif strategy == "entropy":
            weights = np.array([normalized_entropy(out.logits[v]) * (out.logits[v].sum() > 0) for v in members])
            selected.extend(_weighted_without_replacement(members, weights, per_part_quota, rng))
        elif strategy == "pagerank":
            selected.extend(
                _weighted_without_replacement(
                    members, pagerank_scores[members], per_part_quota, rng
                )
            )
        else:
            c = kmedoids(out.logits[members], per_part_quota, seed=int(rng.integers(2**31)))
            selected.extend(int(members[m]) for m in c.medoids)
    return selected


def featprop_select(
    g: Graph,
    budget: int,
    hops: int,
    seed: int,
    vertices: np.ndarray | None = None,
) -> list[int]:
    """One-shot baseline: k-medoids with k = budget on propagated features.

    Features are smoothed over the self-loop-normalized adjacency (no
    nonlinearity) before clustering; the medoid vertices are the selection.
    `vertices` optionally restricts the candidate rows.
    """
    from .graph import AdjacencyMode, normalize_adjacency

    if vertices is None:
        vertices = np.arange(g.num_vertices, dtype=np.int64)
    else:
        vertices = np.asarray(vertices, dtype=np.int64)
    if budget > len(vertices):
        raise ValueError(f"budget {budget} exceeds {len(vertices)} candidate vertices")
    adj = normalize_adjacency(g, AdjacencyMode.SELF_LOOP)
    smoothed = propagate_features(adj, g.features, hops)
    c = kmedoids(smoothed[vertices], budget, seed)
    return [int(vertices[m]) for m in c.medoids]


def annotate(
    annotator: Annotator,
    vertices: list[int],
    g: Graph,
    rng: np.random.Generator,
) -> list[int]:
    """Labels for the given vertices, in order.

    The oracle returns ground truth. The noisy annotator answers wrongly
    with probability epsilon, drawing uniformly among the other classes.
    The interactive annotator blocks until its session supplies labels for
    exactly these vertices.
    """
    if annotator.kind == "interactive":
        if annotator.session is None:
            raise ValueError("interactive annotation needs a live session")
        supplied = annotator.session.request_labels(list(vertices))
        return [supplied[v] for v in vertices]
    if g.labels is None:
        raise ValueError(f"{annotator.kind} annotation needs ground-truth labels")
    labels = []
    for v in vertices:
        true = int(g.labels[v])
        if annotator.kind == "noisy" and rng.random() < annotator.epsilon:
            others = [c for c in range(g.num_classes) if c != true]
            labels.append(int(rng.choice(others)))
        else:
            labels.append(true)
    return labels
