"""Discriminative and prototypical heads over a two-layer graph-convolution encoder.

Both heads share the encoder shape: H = A_loop relu(A_loop X W0) W1 with
out_dim equal to the number of classes, so the embeddings double as raw
logits. The discriminative head applies a row softmax; the prototypical
head classifies by softmax over negated Euclidean distances to
PageRank-weighted class prototypes. A label-propagation-only model serves
as the non-parametric baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist

from .autodiff import AdamState, Tape, Tensor, adam_step
from .graph import Graph, NormalizedAdjacency
from .propagation import label_propagate, one_hot_seeds

MODEL_KINDS = ("gcn", "gpn", "lp")


@dataclass(frozen=True)
class HyperParams:
    """Run hyperparameters; defaults follow the small-dataset configuration."""

    hidden: int = 64
    dropout: float = 0.5
    lam: float = 1.0
    lr: float = 0.005
    weight_decay: float = 5e-4
    alpha: float = 0.9
    entropy_threshold: float = 0.2
    lp_hops: int = 3
    feature_hops: int = 2
    damping: float = 0.85
    max_epochs: int = 200
    patience: int = 4
    min_epochs: int = 50
    pseudo_in_prototypes: bool = False


@dataclass
class GcnParams:
    """Trainable weights plus optimizer state for the two-layer encoder."""

    w0: np.ndarray
    w1: np.ndarray
    adam_w0: AdamState = field(init=False)
    adam_w1: AdamState = field(init=False)

    def __post_init__(self):
        self.adam_w0 = AdamState.zeros_like(self.w0)
        self.adam_w1 = AdamState.zeros_like(self.w1)


@dataclass(frozen=True)
class ModelOutput:
    """Per-vertex embeddings and normalized per-class logits."""

    embeddings: np.ndarray
    logits: np.ndarray
    class_coverage: frozenset[int] = frozenset()


@dataclass(frozen=True)
class Prototypes:
    """One prototype vector per covered class, in class_ids order."""

    class_ids: tuple[int, ...]
    vectors: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.vectors.mean(axis=0)


def glorot_init(feature_dim: int, hidden: int, out_dim: int, seed: int) -> GcnParams:
    rng = np.random.default_rng(seed)

    def mat(fan_in, fan_out):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    return GcnParams(w0=mat(feature_dim, hidden), w1=mat(hidden, out_dim))


def feature_operand(features: np.ndarray) -> np.ndarray | sp.csr_matrix:
    """Sparse CSR view of the features when that pays off (bag-of-words)."""
    nnz = np.count_nonzero(features)
    if features.size > 50_000 and nnz < 0.25 * features.size:
        return sp.csr_matrix(features)
    return features


def gcn_forward(
    tape: Tape,
    adj: NormalizedAdjacency,
    features: np.ndarray | sp.csr_matrix,
    w0: Tensor,
    w1: Tensor,
    dropout: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """H = A relu(A X W0) W1, with inverted dropout after the relu in training."""
    if features.shape[1] != w0.shape[0]:
        raise ValueError(
            f"feature dim {features.shape[1]} does not match W0 rows {w0.shape[0]}"
        )
    x = tape.const(features)
    h = tape.spmm(adj, tape.matmul(x, w0))
    h = tape.relu(h)
    if training and dropout > 0.0:
        h = tape.dropout(h, dropout, rng)
    return tape.spmm(adj, tape.matmul(h, w1))


def discriminative_logits(embeddings: np.ndarray) -> np.ndarray:
    """Row softmax of the embeddings (max-shifted for overflow safety)."""
    shifted = embeddings - embeddings.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def prototype_weights(
    labeled_sets: dict[int, list[int]],
    pagerank_scores: np.ndarray,
    num_vertices: int,
) -> tuple[tuple[int, ...], np.ndarray]:
    """Per-class PageRank weights renormalized to sum 1 within each class.

    Returns covered class ids (ascending) and a (k, n) weight matrix whose
    row c combines vertex embeddings into the class-c prototype.
    """
    class_ids = tuple(sorted(c for c, vs in labeled_sets.items() if len(vs)))
    if not class_ids:
        raise ValueError("cannot build prototypes with zero covered classes")
    weights = np.zeros((len(class_ids), num_vertices))
    for row, c in enumerate(class_ids):
        vs = np.asarray(labeled_sets[c], dtype=np.int64)
        s = pagerank_scores[vs]
        total = s.sum()
        weights[row, vs] = s / total if total > 0 else 1.0 / len(vs)
    return class_ids, weights


def compute_prototypes(
    embeddings: np.ndarray,
    labeled_sets: dict[int, list[int]],
    pagerank_scores: np.ndarray,
) -> Prototypes:
    class_ids, weights = prototype_weights(labeled_sets, pagerank_scores, len(embeddings))
    return Prototypes(class_ids=class_ids, vectors=weights @ embeddings)


def prototype_logits(
    embeddings: np.ndarray,
    protos: Prototypes,
    num_classes: int,
) -> np.ndarray:
    """Softmax over negated distances to covered prototypes; other columns 0."""
    d = cdist(embeddings, protos.vectors)
    shifted = -d + d.min(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    logits = np.zeros((len(embeddings), num_classes))
    logits[:, list(protos.class_ids)] = probs
    return logits


def discriminative_loss(
    tape: Tape,
    embeddings: Tensor,
    labels: np.ndarray,
    rows: np.ndarray,
) -> Tensor:
    """Mean cross-entropy of the softmax head at the supervised rows."""
    return tape.cross_entropy(embeddings, labels, rows)


def prototypical_loss(
    tape: Tape,
    embeddings: Tensor,
    proto_weights_matrix: np.ndarray,
    class_ids: tuple[int, ...],
    labels: np.ndarray,
    rows: np.ndarray,
    lam: float,
) -> Tensor:
    """Intra-class distance loss plus prototype-separation regularizers.

    The first term averages -log p(c|v) over the supervised rows, with
    p given by softmax over negated prototype distances. With at least two
    covered classes, two regularizers weighted by `lam` push prototypes
    apart: mean over classes of the largest e^{-d} to another prototype,
    and mean over classes of the largest pairwise cosine of the
    prototype-to-mean directions, shifted by +1. Supervised rows whose
    label has no prototype are dropped.
    """
    col_of = {c: i for i, c in enumerate(class_ids)}
    keep = np.array([label in col_of for label in labels], dtype=bool)
    rows, labels = np.asarray(rows)[keep], np.asarray(labels)[keep]
    if len(rows) == 0:
        raise ValueError("no supervised vertex has a covered class")
    cols = np.array([col_of[label] for label in labels], dtype=np.int64)

    protos = tape.weighted_sum(embeddings, proto_weights_matrix)
    dists = tape.pairwise_distance(embeddings, protos)
    intra = tape.cross_entropy(tape.neg(dists), cols, rows)
    k = len(class_ids)
    if k < 2 or lam == 0.0:
        return intra

    # Closest-other-prototype attraction penalty: diagonal masked below the
    # e^{-d} range (0, 1] before the per-row max.
    pd = tape.exp(tape.neg(tape.pairwise_distance(protos, protos)))
    off_diag = tape.add_const(pd, -2.0 * np.eye(k))
    l_e = tape.mean(tape.max_over_rows(off_diag))

    # Cosine spread of directions from the prototype mean; diagonal cosines
    # (=1) masked below the [-1, 1] range.
    mean_proto = tape.mean_rows(protos)
    directions = tape.row_normalize(tape.sub(protos, mean_proto))
    cosines = tape.add_const(tape.gram(directions), -3.0 * np.eye(k))
    l_c = tape.add_scalar(tape.mean(tape.max_over_rows(cosines)), 1.0)

    return tape.add(intra, tape.scale(tape.add(l_e, l_c), lam))


@dataclass(frozen=True)
class TrainResult:
    output: ModelOutput
    params: GcnParams | None
    converged: bool
    degenerate_coverage: bool
    epochs: int


def _forward_eval(adj, features, w0, w1) -> np.ndarray:
    mat = adj.to_scipy()
    h = np.maximum(np.asarray(mat @ np.asarray(features @ w0)), 0.0)
    return np.asarray(mat @ (h @ w1))


def _accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    return float((pred == truth).mean()) if len(truth) else 0.0


def _labeled_sets(labels: dict[int, int]) -> dict[int, list[int]]:
    sets: dict[int, list[int]] = {}
    for v in sorted(labels):
        sets.setdefault(labels[v], []).append(v)
    return sets


def _split_train_validation(
    human: dict[int, int],
    pseudo: dict[int, int],
    rng: np.random.Generator,
) -> tuple[list[int], list[int]]:
    """Stratified 75/25 split; tiny supervision falls back to val == train.

    Every class with human labels keeps at least one human-labeled vertex
    in the training side so prototype coverage never shrinks below the
    annotated class set.
    """
    everything = sorted(set(human) | set(pseudo))
    if len(everything) < 8:
        return everything, everything
    train: list[int] = []
    val: list[int] = []
    for source in (human, pseudo):
        by_class: dict[int, list[int]] = {}
        for v in sorted(source):
            by_class.setdefault(source[v], []).append(v)
        for c in sorted(by_class):
            members = np.array(by_class[c])
            rng.shuffle(members)
            n_train = max(1, math.ceil(0.75 * len(members)))
            train.extend(int(v) for v in members[:n_train])
            val.extend(int(v) for v in members[n_train:])
    if not val:
        val = list(train)
    return sorted(train), sorted(val)


def untrained_output(
    kind: str,
    g: Graph,
    adj_loop: NormalizedAdjacency,
    hyper: HyperParams,
    seed: int,
    num_classes: int,
) -> ModelOutput:
    """Round-zero model state: random encoder weights, no supervision."""
    if kind == "lp":
        zeros = np.zeros((g.num_vertices, num_classes))
        return ModelOutput(embeddings=zeros, logits=zeros, class_coverage=frozenset())
    params = glorot_init(g.feature_dim, hyper.hidden, num_classes, seed)
    h = _forward_eval(adj_loop, feature_operand(g.features), params.w0, params.w1)
    if kind == "gcn":
        return ModelOutput(embeddings=h, logits=discriminative_logits(h))
    return ModelOutput(
        embeddings=h,
        logits=np.zeros((g.num_vertices, num_classes)),
        class_coverage=frozenset(),
    )


def train_model(
    kind: str,
    g: Graph,
    adj_loop: NormalizedAdjacency,
    adj_plain: NormalizedAdjacency,
    state,
    hyper: HyperParams,
    seed: int,
    pagerank_scores: np.ndarray | None = None,
) -> TrainResult:
    """Full-batch training with early stopping on validation accuracy.

    `state` supplies `human_labels` and `pseudo_labels` dicts. The epoch
    loop keeps the parameters of the best validation accuracy seen and
    stops once accuracy has not improved for `hyper.patience` consecutive
    epochs, with a `hyper.min_epochs` warmup before patience may fire and a
    hard cap at `hyper.max_epochs`. `kind="lp"` skips training entirely and
    returns the propagated soft labels as logits.
    """
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    human = dict(state.human_labels)
    pseudo = dict(state.pseudo_labels)
    if not human:
        raise ValueError("training requires at least one labeled vertex")
    all_labels = {**pseudo, **human}
    # Interactive unknown-k sessions may introduce classes beyond the
    # dataset's own label space.
    num_classes = max(g.num_classes or 0, max(all_labels.values()) + 1)

    if kind == "lp":
        seeds = one_hot_seeds(g.num_vertices, num_classes, all_labels)
        soft = label_propagate(adj_plain, seeds, alpha=hyper.alpha, hops=hyper.lp_hops)
        coverage = frozenset(all_labels.values())
        output = ModelOutput(embeddings=soft, logits=soft, class_coverage=coverage)
        return TrainResult(output, None, True, len(coverage) < 2, 0)

    seq = np.random.SeedSequence([seed, 0x6F5])
    split_rng, dropout_rng = (np.random.default_rng(s) for s in seq.spawn(2))
    train_v, val_v = _split_train_validation(human, pseudo, split_rng)
    y_train = np.array([all_labels[v] for v in train_v], dtype=np.int64)
    y_val = np.array([all_labels[v] for v in val_v], dtype=np.int64)
    train_rows = np.array(train_v, dtype=np.int64)
    val_rows = np.array(val_v, dtype=np.int64)

    proto_source = all_labels if hyper.pseudo_in_prototypes else human
    train_protos = {v: c for v, c in proto_source.items() if v in set(train_v)}
    labeled_sets = _labeled_sets(train_protos)
    degenerate = kind == "gpn" and len(labeled_sets) < 2
    if kind == "gpn":
        if pagerank_scores is None:
            raise ValueError("the prototypical head needs PageRank scores")
        class_ids, weight_matrix = prototype_weights(
            labeled_sets, pagerank_scores, g.num_vertices
        )

    params = glorot_init(g.feature_dim, hyper.hidden, num_classes, seed)
    features = feature_operand(g.features)

    def evaluate(w0, w1):
        h = _forward_eval(adj_loop, features, w0, w1)
        if kind == "gcn":
            logits = discriminative_logits(h)
            coverage = frozenset(range(num_classes))
        else:
            protos = Prototypes(class_ids, weight_matrix @ h)
            logits = prototype_logits(h, protos, num_classes)
            coverage = frozenset(class_ids)
        return h, logits, coverage

    def val_score(logits):
        # Accuracy is the selection criterion; tiny validation sets saturate
        # it within a few epochs, so the mean log-likelihood breaks ties.
        # The tiebreak must improve by a minimum delta to reset patience.
        acc = _accuracy(logits[val_rows].argmax(axis=1), y_val)
        probs = np.maximum(logits[val_rows, y_val], 1e-300)
        return acc, float(np.log(probs).mean())

    def improved(score, best_score, min_delta=0.01):
        if score[0] != best_score[0]:
            return score[0] > best_score[0]
        return score[1] > best_score[1] + min_delta

    best = {"score": (-1.0, -np.inf), "w0": params.w0.copy(), "w1": params.w1.copy()}
    stale = 0
    epoch = 0
    for epoch in range(1, hyper.max_epochs + 1):
        tape = Tape()
        w0, w1 = tape.param(params.w0), tape.param(params.w1)
        h = gcn_forward(
            tape, adj_loop, features, w0, w1,
            dropout=hyper.dropout, training=True, rng=dropout_rng,
        )
        if kind == "gcn":
            loss = discriminative_loss(tape, h, y_train, train_rows)
        else:
            loss = prototypical_loss(
                tape, h, weight_matrix, class_ids, y_train, train_rows, hyper.lam
            )
        g0, g1 = tape.gradients(loss, [w0, w1])
        g0 += hyper.weight_decay * params.w0
        g1 += hyper.weight_decay * params.w1
        params.w0 = adam_step(params.w0, g0, params.adam_w0, hyper.lr)
        params.w1 = adam_step(params.w1, g1, params.adam_w1, hyper.lr)

        _, logits, _ = evaluate(params.w0, params.w1)
        score = val_score(logits)
        if improved(score, best["score"]):
            best.update(score=score, w0=params.w0.copy(), w1=params.w1.copy())
            stale = 0
        else:
            stale += 1
            # Patience only fires after the optimizer transient has passed;
            # tiny validation sets saturate within a handful of epochs and
            # would otherwise cut training almost immediately.
            if stale >= hyper.patience and epoch >= hyper.min_epochs:
                break

    params.w0, params.w1 = best["w0"], best["w1"]
    h, logits, coverage = evaluate(params.w0, params.w1)
    output = ModelOutput(embeddings=h, logits=logits, class_coverage=coverage)
    return TrainResult(
        output=output,
        params=params,
        converged=epoch < hyper.max_epochs,
        degenerate_coverage=degenerate,
        epochs=epoch,
    )
