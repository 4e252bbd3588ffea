"""Acceptance suite: every exit criterion at its stated tolerance.

Each test prints one [PASS]/[FAIL] line. Criteria anchored to the Cora
citation dataset need the raw files under $GRAPHFEW_DATA/cora (or ./data/cora);
without them those tests skip with an explicit message, and the
*_sbm_surrogate tests exercise the same claims on synthetic graphs.
"""

import itertools
import os
import time
from pathlib import Path

import numpy as np
import pytest

from graphfew.autodiff import Tape
from graphfew.clustering import estimate_num_classes, kmeans, kmedoids
from graphfew.experiment import (
    ExperimentConfig,
    aggregate,
    records_to_csv,
    run_experiment,
)
from graphfew.graph import (
    AdjacencyMode,
    generate_sbm,
    homophily_ratio,
    load_text_dataset,
    normalize_adjacency,
)
from graphfew.models import (
    HyperParams,
    discriminative_loss,
    gcn_forward,
    prototype_weights,
    prototypical_loss,
)
from graphfew.propagation import label_propagate, one_hot_seeds, pagerank, propagate_features

from conftest import dense_normalized, make_graph, random_graph
from test_autodiff import finite_difference
from test_clustering import exhaustive_kmedoids_cost

DATA_DIR = Path(os.environ.get("GRAPHFEW_DATA", Path(__file__).resolve().parent.parent / "data"))
CORA_DIR = DATA_DIR / "cora"
HAS_CORA = (CORA_DIR / "cora.content").exists() and (CORA_DIR / "cora.cites").exists()
requires_cora = pytest.mark.skipif(
    not HAS_CORA,
    reason=f"Cora raw files not found under {CORA_DIR} (no network in this environment); "
    "place cora.content and cora.cites there to run the published-number reproduction criteria",
)


def report(name: str, ok: bool, detail: str = ""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" — {detail}" if detail else ""))
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def cora():
    return load_text_dataset(CORA_DIR / "cora.content", CORA_DIR / "cora.cites")


def final_round_accuracies(records):
    last = max(r.round for r in records)
    return np.array([r.test_accuracy for r in records if r.round == last])


def mean_by_round(records):
    rounds = sorted({r.round for r in records})
    return {
        rd: float(np.mean([r.test_accuracy for r in records if r.round == rd]))
        for rd in rounds
    }


# ---------------------------------------------------------------------------
# Criterion 1: gradient correctness of both loss heads.
# ---------------------------------------------------------------------------

def test_acceptance_gradient_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(10):
        n, f, hidden, c = 10, 4, 4, 3
        edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.3]
        g = make_graph(n, edges, features=rng.standard_normal((n, f)),
                       labels=rng.integers(0, c, n), num_classes=c)
        adj = normalize_adjacency(g, AdjacencyMode.SELF_LOOP)
        w0 = rng.standard_normal((f, hidden)) * 0.7
        w1 = rng.standard_normal((hidden, c)) * 0.7
        labels = np.asarray(g.labels)
        rows = np.arange(n)
        sets = {}
        for v in range(n):
            sets.setdefault(int(labels[v]), []).append(v)
        class_ids, wmat = prototype_weights(sets, np.ones(n) / n, n)

        for kind in ("gcn", "gpn"):
            def forward():
                tape = Tape()
                w0t, w1t = tape.param(w0), tape.param(w1)
                h = gcn_forward(tape, adj, g.features, w0t, w1t)
                if kind == "gcn":
                    loss = discriminative_loss(tape, h, labels, rows)
                else:
                    loss = prototypical_loss(tape, h, wmat, class_ids, labels, rows, lam=1.0)
                return tape, w0t, w1t, loss

            tape, w0t, w1t, loss = forward()
            analytic = tape.gradients(loss, [w0t, w1t])
            fd = finite_difference(lambda: float(forward()[3].data), [w0, w1], step=1e-5)
            for a, fdg in zip(analytic, fd):
                denom = np.maximum(np.maximum(np.abs(a), np.abs(fdg)), 1.0)
                worst = max(worst, float(np.max(np.abs(a - fdg) / denom)))
    elapsed = time.perf_counter() - start
    report(
        "gradient correctness (both heads, 10 instances, rel 1e-4, < 5 s)",
        worst < 1e-4 and elapsed < 5.0,
        f"worst rel err {worst:.2e}, {elapsed:.2f}s",
    )


# ---------------------------------------------------------------------------
# Criterion 2: propagation matches dense oracles.
# ---------------------------------------------------------------------------

def test_acceptance_propagation_oracles():
    rng = np.random.default_rng(7)
    worst_lp = worst_fp = worst_pr = 0.0
    sums_ok = True
    for _ in range(100):
        g = random_graph(rng, n=8, p=float(rng.uniform(0.2, 0.7)))
        plain = normalize_adjacency(g, AdjacencyMode.PLAIN)
        loop = normalize_adjacency(g, AdjacencyMode.SELF_LOOP)
        dense_plain = dense_normalized(g, AdjacencyMode.PLAIN)
        dense_loop = dense_normalized(g, AdjacencyMode.SELF_LOOP)

        seeds = one_hot_seeds(8, 3, {0: 0, 3: 1, 5: 2})
        hops = int(rng.integers(1, 5))
        got = label_propagate(plain, seeds, alpha=0.9, hops=hops)
        want = seeds.copy()
        for _ in range(hops):
            want = 0.9 * dense_plain @ want + 0.1 * want
        worst_lp = max(worst_lp, float(np.abs(got - want).max()))

        x = rng.standard_normal((8, 3))
        got = propagate_features(loop, x, hops)
        want = x.copy()
        for _ in range(hops):
            want = dense_loop @ want
        worst_fp = max(worst_fp, float(np.abs(got - want).max()))

        pr = pagerank(g, damping=0.85, tol=1e-12, max_iter=2000)
        sums_ok &= abs(pr.scores.sum() - 1.0) < 1e-9
        n = g.num_vertices
        a = dense_plain * 0  # placeholder shape
        a = np.zeros((n, n))
        for v in range(n):
            for u in g.neighbors(v):
                a[u, v] = 1.0
        deg = a.sum(axis=0)
        p = np.where(deg > 0, a / np.where(deg > 0, deg, 1.0), 1.0 / n)
        v = np.full(n, 1.0 / n)
        for _ in range(3000):
            v = 0.85 * (p @ v) + 0.15 / n
        worst_pr = max(worst_pr, float(np.abs(pr.scores - v / v.sum()).max()))

    report(
        "propagation oracles (100 random 8-vertex graphs)",
        worst_lp < 1e-9 and worst_fp < 1e-9 and worst_pr < 1e-8 and sums_ok,
        f"lp {worst_lp:.1e}, featprop {worst_fp:.1e}, pagerank {worst_pr:.1e}",
    )


# ---------------------------------------------------------------------------
# Criterion 3: clustering quality.
# ---------------------------------------------------------------------------

def test_acceptance_clustering_oracle():
    rng = np.random.default_rng(99)
    optimum_hits = 0
    within_5pct = True
    for _ in range(50):
        n = int(rng.integers(4, 13))
        k = int(rng.integers(2, min(4, n) + 1))
        points = rng.standard_normal((n, int(rng.integers(1, 4))))
        c = kmedoids(points, k, seed=int(rng.integers(2**31)))
        best = exhaustive_kmedoids_cost(points, k)
        if c.cost <= best + 1e-9:
            optimum_hits += 1
        elif best > 0:
            within_5pct &= c.cost <= 1.05 * best

    monotone = True
    for _ in range(20):
        points = rng.standard_normal((int(rng.integers(20, 80)), 3))
        c = kmeans(points, int(rng.integers(2, 8)), seed=int(rng.integers(2**31)))
        monotone &= all(b <= a + 1e-9 for a, b in zip(c.cost_history, c.cost_history[1:]))

    report(
        "clustering oracle (50 instances, >=90% optimal, <=5% otherwise; Lloyd monotone)",
        optimum_hits >= 45 and within_5pct and monotone,
        f"{optimum_hits}/50 optimal",
    )


# ---------------------------------------------------------------------------
# Criterion 4: elbow recovery.
# ---------------------------------------------------------------------------

def test_acceptance_elbow_recovery_blobs():
    rng = np.random.default_rng(5)
    correct = 0
    cases = [3, 5, 8, 3, 5, 8, 3, 5, 8, 5]
    for true_k in cases:
        centers = rng.uniform(-50, 50, size=(true_k, 6))
        points = np.vstack(
            [c + rng.standard_normal((500 // true_k, 6)) for c in centers]
        )
        est = estimate_num_classes(points, (2, 100), seed=int(rng.integers(2**31)))
        correct += est.k == true_k
    report("elbow recovery on blobs (10/10 exact)", correct == 10, f"{correct}/10")


@requires_cora
def test_acceptance_elbow_cora_substitute(cora):
    adj = normalize_adjacency(cora, AdjacencyMode.SELF_LOOP)
    embeds = propagate_features(adj, cora.features, 2)
    est = estimate_num_classes(embeds, (2, 100), seed=17)
    report(
        "class-count estimate on Cora substitute embeddings in [5, 20]",
        5 <= est.k <= 20,
        f"estimated {est.k}",
    )


# ---------------------------------------------------------------------------
# Criterion 5: Cora balanced reproduction.
# ---------------------------------------------------------------------------

def cora_cfg(**kwargs):
    base = dict(dataset="cora", data_dir=str(DATA_DIR), repeats=10, rounds=5, seed=0)
    base.update(kwargs)
    return ExperimentConfig(**base)


@requires_cora
@pytest.mark.slow
def test_acceptance_cora_balanced_reproduction():
    gpn = run_experiment(cora_cfg(model="gpn", sampler="medoid", setting="balanced"))
    gpn_mean = final_round_accuracies(gpn).mean() * 100
    gcn = run_experiment(
        cora_cfg(model="gcn", sampler="medoid", setting="balanced", use_label_propagation=True)
    )
    gcn_mean = final_round_accuracies(gcn).mean() * 100
    report(
        "Cora balanced: GPN+medoid within 65.6±8.0, GCN+medoid+LP within 71.8±8.0",
        abs(gpn_mean - 65.6) <= 8.0 and abs(gcn_mean - 71.8) <= 8.0,
        f"GPN+medoid {gpn_mean:.1f}, GCN+medoid+LP {gcn_mean:.1f}",
    )


# ---------------------------------------------------------------------------
# Criterion 6: ordering claims.
# ---------------------------------------------------------------------------

@requires_cora
@pytest.mark.slow
def test_acceptance_cora_ordering_claims():
    runs = {}
    for model in ("gpn", "gcn"):
        for setting in ("balanced", "unbalanced"):
            runs[model, setting, "random"] = run_experiment(
                cora_cfg(model=model, sampler="random", setting=setting)
            )
    gpn_rounds = mean_by_round(runs["gpn", "balanced", "random"])
    gcn_rounds = mean_by_round(runs["gcn", "balanced", "random"])
    few_shot_ordering = all(
        gpn_rounds[r] >= gcn_rounds[r] for r in gpn_rounds if r > 0
    )

    def drop(model):
        bal = final_round_accuracies(runs[model, "balanced", "random"]).mean()
        unb = final_round_accuracies(runs[model, "unbalanced", "random"]).mean()
        return bal - unb

    robustness_ordering = drop("gcn") > drop("gpn")

    sampler_means = {}
    for sampler in ("random", "entropy", "pagerank", "medoid"):
        records = run_experiment(cora_cfg(model="gpn", sampler=sampler, setting="balanced"))
        sampler_means[sampler] = final_round_accuracies(records).mean()
    medoid_beats_random = sampler_means["medoid"] >= sampler_means["random"]

    report(
        "Cora ordering claims (GPN>=GCN per budget; GCN drop > GPN drop; medoid >= random)",
        few_shot_ordering and robustness_ordering and medoid_beats_random,
        f"gpn={gpn_rounds}, gcn={gcn_rounds}, drops gcn={drop('gcn'):.3f} gpn={drop('gpn'):.3f}, "
        f"samplers={ {k: round(v, 3) for k, v in sampler_means.items()} }",
    )


def test_acceptance_learning_and_sampler_sanity_sbm_surrogate(tmp_path):
    # Desk-scale stand-in while Cora is unavailable. Gaussian-feature block
    # models do not reproduce the bag-of-words overfitting that drives the
    # paper's GPN-over-GCN ordering, so this asserts the properties that do
    # transfer: every model learns from the budget, the prototypical head is
    # competitive and stable, and medoid sampling at least matches random.
    from graphfew.graph import write_json_graph

    g = generate_sbm(600, 3, 0.04, 0.008, feature_dim=12, feature_shift=0.8, seed=21)
    path = tmp_path / "hard.json"
    write_json_graph(g, path)

    def run(model, sampler):
        return run_experiment(
            ExperimentConfig(
                dataset=f"json:{path}", model=model, sampler=sampler,
                setting="balanced", repeats=10, rounds=5, seed=0,
            )
        )

    curves = {model: mean_by_round(run(model, "random")) for model in ("lp", "gcn", "gpn")}
    learns = all(c[5] >= c[0] + 0.25 for c in curves.values())
    competitive = curves["gpn"][5] >= curves["gcn"][5] - 0.05
    stable = all(
        curves[m][r + 1] >= curves[m][r] - 0.10 for m in ("gcn", "gpn") for r in range(1, 5)
    )
    medoid = mean_by_round(run("gpn", "medoid"))[5]
    sampler_ok = medoid >= curves["gpn"][5] - 0.01

    report(
        "SBM surrogate sanity (all models learn; GPN competitive+stable; medoid >= random)",
        learns and competitive and stable and sampler_ok,
        f"finals lp={curves['lp'][5]:.3f} gcn={curves['gcn'][5]:.3f} "
        f"gpn={curves['gpn'][5]:.3f} gpn+medoid={medoid:.3f}",
    )


# ---------------------------------------------------------------------------
# Criterion 7: noisy annotator.
# ---------------------------------------------------------------------------

@requires_cora
@pytest.mark.slow
def test_acceptance_cora_noisy_annotator():
    means = {}
    for eps in (0.0, 0.1, 0.2, 0.3, 0.4, 0.5):
        records = run_experiment(
            cora_cfg(
                model="gpn", sampler="medoid", setting="unbalanced",
                use_label_propagation=True,
                annotator="noisy" if eps > 0 else "oracle", epsilon=eps,
            )
        )
        means[eps] = final_round_accuracies(records).mean() * 100
    report(
        "Cora noisy annotator (eps=0.5 above 14%, eps=0 exceeds eps=0.5 by >= 10 pts)",
        means[0.5] > 14.0 and means[0.0] - means[0.5] >= 10.0,
        f"{ {k: round(v, 1) for k, v in means.items()} }",
    )


def test_acceptance_noisy_annotator_sbm_surrogate(tmp_path):
    from graphfew.graph import write_json_graph

    g = generate_sbm(600, 3, 0.04, 0.008, feature_dim=12, feature_shift=0.8, seed=22)
    path = tmp_path / "noisy.json"
    write_json_graph(g, path)
    means = {}
    for eps in (0.0, 0.5):
        records = run_experiment(
            ExperimentConfig(
                dataset=f"json:{path}", model="gpn", sampler="medoid",
                setting="unbalanced", use_label_propagation=True,
                annotator="noisy" if eps else "oracle", epsilon=eps,
                repeats=10, rounds=5, seed=0,
            )
        )
        means[eps] = final_round_accuracies(records).mean()
    report(
        "SBM surrogate noisy annotator (eps=0.5 above chance, degradation >= 0)",
        means[0.5] > 1 / 3 and means[0.0] >= means[0.5],
        f"eps0 {means[0.0]:.3f}, eps0.5 {means[0.5]:.3f}",
    )


# ---------------------------------------------------------------------------
# Criterion 8: homophily anchor.
# ---------------------------------------------------------------------------

@requires_cora
def test_acceptance_cora_homophily(cora):
    h = homophily_ratio(cora)
    report("homophily_ratio(Cora) within 0.63±0.02", abs(h - 0.63) <= 0.02, f"{h:.4f}")


def test_acceptance_homophily_analytic_extremes():
    intra = make_graph(4, [(0, 1), (2, 3)], labels=[0, 0, 1, 1], num_classes=2)
    cross = make_graph(4, [(0, 2), (1, 3)], labels=[0, 0, 1, 1], num_classes=2)
    report(
        "homophily analytic extremes (all-intra=1, all-cross=0)",
        homophily_ratio(intra) == 1.0 and homophily_ratio(cross) == 0.0,
    )


# ---------------------------------------------------------------------------
# Criterion 9: determinism.
# ---------------------------------------------------------------------------

def strip_wall_column(csv_text: str) -> str:
    lines = csv_text.splitlines()
    return "\n".join(",".join(line.split(",")[:-1]) for line in lines)


def test_acceptance_byte_identical_replay():
    cfg = ExperimentConfig(
        dataset="sbm", model="gpn", sampler="medoid", setting="unbalanced",
        use_label_propagation=True, repeats=3, rounds=3, seed=11,
        hyper=HyperParams(max_epochs=40),
    )
    a = records_to_csv(run_experiment(cfg))
    b = records_to_csv(run_experiment(ExperimentConfig.from_dict(cfg.to_dict())))
    identical = strip_wall_column(a) == strip_wall_column(b)
    import json as _json

    summaries_equal = _json.dumps(
        aggregate(run_experiment(cfg)), sort_keys=True
    ) == _json.dumps(aggregate(run_experiment(cfg)), sort_keys=True)
    report(
        "determinism: replayed config yields byte-identical CSV (wall_ms column excluded)",
        identical and summaries_equal,
    )
