import numpy as np
import pytest

from graphfew.autodiff import Tape
from graphfew.graph import AdjacencyMode, generate_sbm, normalize_adjacency
from graphfew.models import (
    HyperParams,
    Prototypes,
    compute_prototypes,
    discriminative_logits,
    discriminative_loss,
    gcn_forward,
    glorot_init,
    prototype_logits,
    prototype_weights,
    prototypical_loss,
    train_model,
    untrained_output,
)
from graphfew.propagation import label_propagate, one_hot_seeds, pagerank

from conftest import dense_normalized, make_graph
from test_autodiff import assert_close_to_fd, finite_difference


class FakeState:
    def __init__(self, human, pseudo=None):
        self.human_labels = human
        self.pseudo_labels = pseudo or {}


# -- encoder -------------------------------------------------------------------

def test_gcn_forward_zero_weights_zero_embeddings(path3):
    adj = normalize_adjacency(path3, AdjacencyMode.SELF_LOOP)
    tape = Tape()
    out = gcn_forward(
        tape, adj, path3.features, tape.param(np.zeros((path3.feature_dim, 4))),
        tape.param(np.zeros((4, 2))),
    )
    np.testing.assert_array_equal(out.data, 0.0)


def test_gcn_forward_edgeless_graph_is_per_vertex_mlp():
    rng = np.random.default_rng(0)
    g = make_graph(4, [], features=rng.standard_normal((4, 3)))
    adj = normalize_adjacency(g, AdjacencyMode.SELF_LOOP)
    w0, w1 = rng.standard_normal((3, 5)), rng.standard_normal((5, 2))
    tape = Tape()
    base = gcn_forward(tape, adj, g.features, tape.param(w0), tape.param(w1)).data

    bumped = g.features.copy()
    bumped[2] += 10.0
    tape = Tape()
    out = gcn_forward(tape, adj, bumped, tape.param(w0), tape.param(w1)).data
    np.testing.assert_array_equal(out[[0, 1, 3]], base[[0, 1, 3]])
    assert not np.allclose(out[2], base[2])


def test_gcn_forward_matches_dense_oracle(path3):
    rng = np.random.default_rng(1)
    g = make_graph(5, [(0, 1), (1, 2), (2, 3), (3, 4)], features=rng.standard_normal((5, 4)))
    adj = normalize_adjacency(g, AdjacencyMode.SELF_LOOP)
    w0, w1 = rng.standard_normal((4, 6)), rng.standard_normal((6, 3))
    tape = Tape()
    out = gcn_forward(tape, adj, g.features, tape.param(w0), tape.param(w1)).data
    a = dense_normalized(g, AdjacencyMode.SELF_LOOP)
    oracle = a @ np.maximum(a @ g.features @ w0, 0.0) @ w1
    np.testing.assert_allclose(out, oracle, atol=1e-10)


def test_gcn_forward_shape_mismatch(path3):
    adj = normalize_adjacency(path3, AdjacencyMode.SELF_LOOP)
    tape = Tape()
    with pytest.raises(ValueError, match="feature dim"):
        gcn_forward(tape, adj, path3.features, tape.param(np.zeros((99, 4))), tape.param(np.zeros((4, 2))))


# -- discriminative head ---------------------------------------------------------

def test_discriminative_logits_zero_row_uniform():
    probs = discriminative_logits(np.zeros((1, 4)))
    np.testing.assert_allclose(probs, 0.25)


def test_discriminative_logits_shift_invariant():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((3, 5))
    shifted = x + rng.standard_normal((3, 1))
    np.testing.assert_allclose(
        discriminative_logits(x), discriminative_logits(shifted), atol=1e-12
    )


def test_discriminative_logits_two_class_row():
    probs = discriminative_logits(np.array([[1.0, 0.0]]))
    np.testing.assert_allclose(probs, [[0.7310585786300049, 0.2689414213699951]], atol=1e-12)


def test_discriminative_loss_values():
    tape = Tape()
    perfect = tape.param(np.array([[100.0, 0.0], [0.0, 100.0]]))
    loss = discriminative_loss(tape, perfect, np.array([0, 1]), np.array([0, 1]))
    assert float(loss.data) == pytest.approx(0.0, abs=1e-12)

    tape = Tape()
    uniform = tape.param(np.zeros((3, 5)))
    loss = discriminative_loss(tape, uniform, np.array([0, 1, 2]), np.array([0, 1, 2]))
    assert float(loss.data) == pytest.approx(np.log(5), rel=1e-12)

    tape = Tape()
    mixed = tape.param(np.array([[1.0, 0.0], [0.0, 1.0]]))
    loss = discriminative_loss(tape, mixed, np.array([0, 1]), np.array([0, 1]))
    assert float(loss.data) == pytest.approx(0.3132616875182228, rel=1e-10)


# -- prototypes --------------------------------------------------------------------

def test_prototypes_singleton_class_is_its_embedding():
    h = np.array([[1.0, 2.0], [3.0, 4.0]])
    pr = np.array([0.7, 0.3])
    protos = compute_prototypes(h, {1: [1]}, pr)
    assert protos.class_ids == (1,)
    np.testing.assert_allclose(protos.vectors, [[3.0, 4.0]])


def test_prototypes_pagerank_weighted_mean():
    h = np.array([[1.0, 0.0], [0.0, 1.0], [9.0, 9.0]])
    pr = np.array([0.1, 0.3, 0.6])
    protos = compute_prototypes(h, {0: [0, 1]}, pr)
    np.testing.assert_allclose(protos.vectors, [[0.25, 0.75]], atol=1e-12)


def test_prototypes_identical_embeddings_any_weights():
    h = np.tile([2.0, -1.0], (4, 1))
    pr = np.array([0.9, 0.02, 0.05, 0.03])
    protos = compute_prototypes(h, {0: [0, 1, 2, 3]}, pr)
    np.testing.assert_allclose(protos.vectors, [[2.0, -1.0]], atol=1e-12)


def test_prototypes_zero_covered_classes_error():
    with pytest.raises(ValueError, match="zero covered"):
        prototype_weights({}, np.ones(3) / 3, 3)


def test_prototypes_mean_property():
    protos = Prototypes(class_ids=(0, 2), vectors=np.array([[0.0, 2.0], [4.0, 0.0]]))
    np.testing.assert_allclose(protos.mean, [2.0, 1.0], atol=1e-12)


def test_prototype_logits_equidistant_half():
    protos = Prototypes(class_ids=(0, 1), vectors=np.array([[1.0, 0.0], [-1.0, 0.0]]))
    logits = prototype_logits(np.array([[0.0, 5.0]]), protos, 2)
    np.testing.assert_allclose(logits, [[0.5, 0.5]], atol=1e-12)


def test_prototype_logits_unit_distance_gap():
    protos = Prototypes(class_ids=(0, 1), vectors=np.array([[0.0], [1.0]]))
    logits = prototype_logits(np.array([[0.0]]), protos, 2)
    np.testing.assert_allclose(
        logits, [[0.7310585786300049, 0.2689414213699951]], atol=1e-12
    )


def test_prototype_logits_uncovered_columns_zero_and_rows_normalized():
    rng = np.random.default_rng(3)
    protos = Prototypes(class_ids=(1, 3), vectors=rng.standard_normal((2, 4)))
    h = rng.standard_normal((6, 4))
    logits = prototype_logits(h, protos, 5)
    np.testing.assert_array_equal(logits[:, [0, 2, 4]], 0.0)
    np.testing.assert_allclose(logits[:, [1, 3]].sum(axis=1), 1.0, atol=1e-9)


def test_prototype_logits_argmax_is_nearest_prototype():
    rng = np.random.default_rng(4)
    protos = Prototypes(class_ids=(0, 1, 2), vectors=rng.standard_normal((3, 3)))
    h = rng.standard_normal((20, 3))
    logits = prototype_logits(h, protos, 3)
    from scipy.spatial.distance import cdist

    np.testing.assert_array_equal(logits.argmax(axis=1), cdist(h, protos.vectors).argmin(axis=1))


def test_prototype_logits_translation_invariant():
    rng = np.random.default_rng(5)
    vecs = rng.standard_normal((3, 4))
    h = rng.standard_normal((7, 4))
    shift = rng.standard_normal(4)
    a = prototype_logits(h, Prototypes((0, 1, 2), vecs), 3)
    b = prototype_logits(h + shift, Prototypes((0, 1, 2), vecs + shift), 3)
    np.testing.assert_allclose(a, b, atol=1e-9)


# -- prototypical loss ----------------------------------------------------------------

def proto_setup(h, labels):
    """Singleton-class prototype weights: each labeled vertex is its class."""
    sets = {}
    for v, c in labels.items():
        sets.setdefault(c, []).append(v)
    return prototype_weights(sets, np.ones(len(h)) / len(h), len(h))


def test_prototypical_loss_symmetric_prototypes_zero_cosine_term():
    # Two prototypes symmetric about their mean: per-class max cosine is -1,
    # so the cosine regularizer term contributes (-1) + 1 = 0, leaving
    # loss = L_p + e^{-d}.
    h = np.array([[1.0, 0.0], [-1.0, 0.0]])
    class_ids, w = proto_setup(h, {0: 0, 1: 1})
    tape = Tape()
    ht = tape.param(h)
    loss = prototypical_loss(tape, ht, w, class_ids, np.array([0, 1]), np.array([0, 1]), lam=1.0)
    d = 2.0
    l_p = -np.log(1.0 / (1.0 + np.exp(-d)))
    l_e = np.exp(-d)
    assert float(loss.data) == pytest.approx(l_p + l_e, rel=1e-10)


def test_prototypical_loss_lambda_zero_is_intra_class_only():
    rng = np.random.default_rng(6)
    h = rng.standard_normal((5, 3))
    class_ids, w = proto_setup(h, {0: 0, 1: 1, 2: 2})
    labels = np.array([0, 1, 2, 0, 1])
    rows = np.arange(5)
    tape = Tape()
    loss = prototypical_loss(tape, tape.param(h), w, class_ids, labels, rows, lam=0.0)
    protos = w @ h
    from scipy.spatial.distance import cdist

    d = cdist(h, protos)
    p = np.exp(-d - np.log(np.exp(-d).sum(axis=1, keepdims=True)))
    expected = -np.log(p[rows, labels]).mean()
    assert float(loss.data) == pytest.approx(expected, rel=1e-10)


def test_prototypical_loss_single_class_skips_regularizers():
    h = np.array([[0.0, 0.0], [1.0, 1.0]])
    class_ids, w = proto_setup(h, {0: 0})
    tape = Tape()
    loss = prototypical_loss(tape, tape.param(h), w, class_ids, np.array([0]), np.array([0]), lam=1.0)
    assert np.isfinite(float(loss.data))
    assert float(loss.data) == pytest.approx(0.0, abs=1e-12)  # only prototype, p=1


def test_prototypical_loss_coinciding_prototype_mean_no_failure():
    # Both prototypes equal: directions to the mean are zero-norm; the
    # cosine contribution is defined as 0 per class.
    h = np.array([[1.0, 1.0], [1.0, 1.0]])
    class_ids, w = proto_setup(h, {0: 0, 1: 1})
    tape = Tape()
    loss = prototypical_loss(tape, tape.param(h), w, class_ids, np.array([0, 1]), np.array([0, 1]), lam=1.0)
    # L_p = ln 2 (equidistant), L_e = e^0 = 1, L_c = 0 + 1.
    assert float(loss.data) == pytest.approx(np.log(2) + 2.0, rel=1e-10)


def test_both_loss_heads_match_finite_differences_end_to_end():
    rng = np.random.default_rng(7)
    n, f, hidden, c = 10, 4, 5, 3
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.35]
    g = make_graph(n, edges, features=rng.standard_normal((n, f)),
                   labels=rng.integers(0, c, n), num_classes=c)
    adj = normalize_adjacency(g, AdjacencyMode.SELF_LOOP)
    w0 = rng.standard_normal((f, hidden)) * 0.6
    w1 = rng.standard_normal((hidden, c)) * 0.6
    rows = np.arange(n)
    labels = np.asarray(g.labels)
    sets = {}
    for v in range(n):
        sets.setdefault(int(labels[v]), []).append(v)
    class_ids, wmat = prototype_weights(sets, np.ones(n) / n, n)

    def build(kind):
        def forward():
            tape = Tape()
            w0t, w1t = tape.param(w0), tape.param(w1)
            h = gcn_forward(tape, adj, g.features, w0t, w1t)
            if kind == "gcn":
                loss = discriminative_loss(tape, h, labels, rows)
            else:
                loss = prototypical_loss(tape, h, wmat, class_ids, labels, rows, lam=1.0)
            return tape, w0t, w1t, loss

        return forward

    for kind in ("gcn", "gpn"):
        forward = build(kind)
        tape, w0t, w1t, loss = forward()
        analytic = tape.gradients(loss, [w0t, w1t])
        fd = finite_difference(lambda: float(forward()[3].data), [w0, w1])
        assert_close_to_fd(analytic, fd, rel=1e-4)


# -- training -----------------------------------------------------------------------

def sbm_fixture(seed=0):
    return generate_sbm(120, 3, 0.15, 0.01, feature_dim=8, feature_shift=1.5, seed=seed)


def adjacencies(g):
    return (
        normalize_adjacency(g, AdjacencyMode.SELF_LOOP),
        normalize_adjacency(g, AdjacencyMode.PLAIN),
    )


def test_train_model_lp_is_label_propagation_passthrough():
    g = sbm_fixture()
    adj_loop, adj_plain = adjacencies(g)
    hyper = HyperParams()
    state = FakeState({0: 0, 40: 1, 80: 2})
    result = train_model("lp", g, adj_loop, adj_plain, state, hyper, seed=0)
    seeds = one_hot_seeds(g.num_vertices, 3, {0: 0, 40: 1, 80: 2})
    expected = label_propagate(adj_plain, seeds, alpha=hyper.alpha, hops=hyper.lp_hops)
    np.testing.assert_array_equal(result.output.logits, expected)
    assert result.params is None


def test_train_model_deterministic_given_seed():
    g = sbm_fixture()
    adj_loop, adj_plain = adjacencies(g)
    pr = pagerank(g).scores
    hyper = HyperParams(max_epochs=30)
    state = FakeState({0: 0, 1: 0, 40: 1, 41: 1, 80: 2, 81: 2})
    a = train_model("gpn", g, adj_loop, adj_plain, state, hyper, seed=5, pagerank_scores=pr)
    b = train_model("gpn", g, adj_loop, adj_plain, state, hyper, seed=5, pagerank_scores=pr)
    np.testing.assert_array_equal(a.params.w0, b.params.w0)
    np.testing.assert_array_equal(a.params.w1, b.params.w1)
    np.testing.assert_array_equal(a.output.logits, b.output.logits)


def test_train_model_gcn_separable_sbm_beats_080():
    # Spec-calibrated smoke check: 3 labels/class on a well-separated SBM.
    g = generate_sbm(300, 3, 0.1, 0.01, feature_dim=16, feature_shift=1.0, seed=3)
    adj_loop, adj_plain = adjacencies(g)
    pr = pagerank(g).scores
    human = {}
    for c in range(3):
        members = np.nonzero(g.labels == c)[0][:3]
        for v in members:
            human[int(v)] = c
    state = FakeState(human)
    result = train_model("gcn", g, adj_loop, adj_plain, state, HyperParams(), seed=1,
                         pagerank_scores=pr)
    test_vs = np.array([v for v in range(300) if v not in human])
    acc = (result.output.logits[test_vs].argmax(axis=1) == g.labels[test_vs]).mean()
    assert acc > 0.8


def test_train_model_single_class_gpn_flags_degenerate():
    g = sbm_fixture()
    adj_loop, adj_plain = adjacencies(g)
    pr = pagerank(g).scores
    state = FakeState({0: 0, 1: 0})
    result = train_model("gpn", g, adj_loop, adj_plain, state, HyperParams(max_epochs=5),
                         seed=2, pagerank_scores=pr)
    assert result.degenerate_coverage
    assert result.output.class_coverage == frozenset({0})
    # Uncovered columns stay exactly zero.
    np.testing.assert_array_equal(result.output.logits[:, 1:], 0.0)


def test_train_model_requires_labels():
    g = sbm_fixture()
    adj_loop, adj_plain = adjacencies(g)
    with pytest.raises(ValueError, match="labeled"):
        train_model("gcn", g, adj_loop, adj_plain, FakeState({}), HyperParams(), seed=0)


def test_untrained_output_shapes_and_coverage():
    g = sbm_fixture()
    adj_loop, _ = adjacencies(g)
    for kind in ("gcn", "gpn", "lp"):
        out = untrained_output(kind, g, adj_loop, HyperParams(), seed=0, num_classes=3)
        assert out.logits.shape == (g.num_vertices, 3)
        if kind == "gcn":
            np.testing.assert_allclose(out.logits.sum(axis=1), 1.0, atol=1e-9)
        else:
            assert out.class_coverage == frozenset()
