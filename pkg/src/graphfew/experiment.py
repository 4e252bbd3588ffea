"""End-to-end experiment loop: sample, annotate, propagate, train, record.

One config describes a fully reproducible batch of repeats. Each repeat
fixes a test split, starts from an empty labeled set, and iterates
partition -> select -> annotate -> (optional label propagation) -> train
until the annotation budget is spent, recording test accuracy per round.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .active import (
    Annotator,
    LabelState,
    SessionAborted,
    annotate,
    featprop_select,
    partition_vertices,
    select_vertices,
)
from .clustering import estimate_num_classes
from .graph import (
    AdjacencyMode,
    Graph,
    generate_sbm,
    load_json_graph,
    load_text_dataset,
    normalize_adjacency,
)
from .models import HyperParams, train_model, untrained_output
from .propagation import filter_pseudo_labels, label_propagate, one_hot_seeds, pagerank, propagate_features

SAMPLERS = ("random", "entropy", "pagerank", "medoid", "featprop")

# Desk-scale synthetic default: three well-separated homophilic blocks.
SBM_DEFAULTS = dict(
    num_vertices=600,
    num_classes=3,
    p_in=0.05,
    p_out=0.005,
    feature_dim=16,
    feature_shift=1.5,
    seed=7,
)


@dataclass(frozen=True)
class ExperimentConfig:
    """One reproducible experiment description."""

    dataset: str = "sbm"
    model: str = "gcn"
    sampler: str = "random"
    setting: str = "balanced"
    use_label_propagation: bool = False
    budget: int | None = None
    rounds: int = 5
    per_round_quota: int = 1
    repeats: int = 10
    seed: int = 0
    split_seed: int = 20
    test_fraction: float = 0.2
    annotator: str = "oracle"
    epsilon: float = 0.0
    hyper: HyperParams = field(default_factory=HyperParams)
    data_dir: str = "data"

    def __post_init__(self):
        if self.model not in ("gcn", "gpn", "lp"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.setting not in ("balanced", "unbalanced", "unknown_k"):
            raise ValueError(f"unknown setting {self.setting!r}")
        if self.annotator not in ("oracle", "noisy", "interactive"):
            raise ValueError(f"unknown annotator {self.annotator!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["hyper"] = asdict(self.hyper)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "hyper" in doc and isinstance(doc["hyper"], dict):
            doc["hyper"] = HyperParams(**doc["hyper"])
        return cls(**doc)


@dataclass(frozen=True)
class RunRecord:
    """One (round, budget, accuracy) measurement within one repeat."""

    run_id: str
    seed: int
    setting: str
    model: str
    sampler: str
    label_prop: bool
    round: int
    budget_used: int
    test_accuracy: float | None
    wall_ms: float
    flags: dict = field(default_factory=dict)


class RunHooks:
    """Callbacks for live observers (the annotation service); no-ops here."""

    def on_round(self, repeat: int, round_index: int) -> None: ...

    def on_training(self, active: bool) -> None: ...

    def on_record(self, record: RunRecord) -> None: ...

    def on_model_output(self, output) -> None: ...


def load_dataset(cfg: ExperimentConfig) -> Graph:
    name = cfg.dataset
    if name.startswith("json:"):
        return load_json_graph(name[len("json:") :])
    if name == "sbm":
        return generate_sbm(**SBM_DEFAULTS)
    if name in ("cora", "citeseer", "pubmed"):
        base = Path(cfg.data_dir) / name
        content, cites = base / f"{name}.content", base / f"{name}.cites"
        if not content.exists() or not cites.exists():
            raise FileNotFoundError(
                f"dataset files not found under {base} "
                f"(expected {name}.content and {name}.cites)"
            )
        return load_text_dataset(content, cites)
    raise ValueError(f"unknown dataset {name!r}")


def split_test_set(g: Graph, split_seed: int, fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """Fixed stratified test split; returns (train_vertices, test_vertices)."""
    rng = np.random.default_rng(np.random.SeedSequence([split_seed, 0x7E57]))
    n = g.num_vertices
    test: list[int] = []
    if g.labels is not None:
        for c in range(g.num_classes):
            members = np.nonzero(g.labels == c)[0]
            rng.shuffle(members)
            take = int(round(fraction * len(members)))
            test.extend(int(v) for v in members[:take])
    else:
        order = rng.permutation(n)
        test.extend(int(v) for v in order[: int(round(fraction * n))])
    test_arr = np.array(sorted(test), dtype=np.int64)
    mask = np.ones(n, dtype=bool)
    mask[test_arr] = False
    return np.nonzero(mask)[0].astype(np.int64), test_arr


def _test_accuracy(logits: np.ndarray, g: Graph, test_v: np.ndarray) -> float | None:
    if g.labels is None or len(test_v) == 0:
        return None
    pred = logits[test_v].argmax(axis=1)
    return float((pred == g.labels[test_v]).mean())


def _resolved_budget(cfg: ExperimentConfig, num_classes: int) -> int:
    if cfg.budget is not None:
        return cfg.budget
    return num_classes * cfg.rounds * cfg.per_round_quota


def run_experiment(
    cfg: ExperimentConfig,
    annotator: Annotator | None = None,
    hooks: RunHooks | None = None,
    graph: Graph | None = None,
) -> list[RunRecord]:
    """Execute every repeat of the configured experiment.

    An interactive session abort returns the records gathered so far; all
    other paths run to completion. Ground-truth-free graphs produce records
    with test_accuracy None.
    """
    hooks = hooks or RunHooks()
    g = graph if graph is not None else load_dataset(cfg)
    if annotator is None:
        if cfg.annotator == "interactive":
            raise ValueError("interactive runs must supply an Annotator with a session")
        annotator = Annotator(kind=cfg.annotator, epsilon=cfg.epsilon)

    adj_plain = normalize_adjacency(g, AdjacencyMode.PLAIN)
    adj_loop = normalize_adjacency(g, AdjacencyMode.SELF_LOOP)
    pr = pagerank(g, damping=cfg.hyper.damping)
    train_v, test_v = split_test_set(g, cfg.split_seed, cfg.test_fraction)

    known_classes = g.num_classes if g.num_classes is not None else 0
    k_estimated = None
    if cfg.setting == "unknown_k":
        embeds = propagate_features(adj_loop, g.features, cfg.hyper.feature_hops)
        est_seed = int(np.random.SeedSequence([cfg.split_seed, 0xE57]).generate_state(1)[0])
        k_estimated = estimate_num_classes(embeds, (2, 100), seed=est_seed).k

    budget = _resolved_budget(cfg, known_classes if known_classes else (k_estimated or 2))
    if cfg.setting in ("balanced", "unbalanced") and known_classes:
        expected = cfg.rounds * known_classes * cfg.per_round_quota
        if cfg.budget is not None and cfg.budget != expected:
            raise ValueError(
                f"budget {cfg.budget} != rounds*classes*quota = {expected} "
                f"for the {cfg.setting} setting"
            )

    lp_tag = "lp1" if cfg.use_label_propagation else "lp0"

    def single(repeat: int) -> list[RunRecord]:
        seed = cfg.seed + repeat
        run_id = f"{cfg.dataset}-{cfg.setting}-{cfg.model}-{cfg.sampler}-{lp_tag}-s{seed}"
        return _run_single(
            cfg, g, adj_plain, adj_loop, pr, train_v, test_v,
            budget, k_estimated, annotator, seed, run_id, repeat, hooks,
        )

    records: list[RunRecord] = []
    if annotator.kind == "interactive" or cfg.repeats == 1:
        # The interactive session allows one outstanding query batch, so
        # its repeats must run strictly in order.
        try:
            for repeat in range(cfg.repeats):
                records.extend(single(repeat))
        except SessionAborted:
            pass
    else:
        # Repeats are fully independent; results are merged in repeat order
        # so the record stream stays deterministic.
        with ThreadPoolExecutor(max_workers=min(4, cfg.repeats)) as pool:
            for chunk in pool.map(single, range(cfg.repeats)):
                records.extend(chunk)
    return records


def _run_single(
    cfg, g, adj_plain, adj_loop, pr, train_v, test_v,
    budget, k_estimated, annotator, seed, run_id, repeat, hooks,
) -> list[RunRecord]:
    sel_seq, ann_seq, misc_seq = np.random.SeedSequence([seed, 0xA17]).spawn(3)
    sel_rng = np.random.default_rng(sel_seq)
    ann_rng = np.random.default_rng(ann_seq)
    misc = misc_seq.generate_state(2)
    model_seed_base, part_seed_base = int(misc[0] % 2**31), int(misc[1] % 2**31)

    if g.num_classes is not None:
        model_classes = g.num_classes
    else:
        model_classes = max(k_estimated or 1, 1)

    state = LabelState(budget_total=budget, unlabeled_pool=set(int(v) for v in train_v))
    out = untrained_output(cfg.model, g, adj_loop, cfg.hyper, model_seed_base, model_classes)
    hooks.on_model_output(out)

    def record(round_index: int, accuracy, wall_ms: float, flags: dict) -> RunRecord:
        rec = RunRecord(
            run_id=run_id,
            seed=seed,
            setting=cfg.setting,
            model=cfg.model,
            sampler=cfg.sampler,
            label_prop=cfg.use_label_propagation,
            round=round_index,
            budget_used=state.budget_used,
            test_accuracy=accuracy,
            wall_ms=wall_ms,
            flags=flags,
        )
        hooks.on_record(rec)
        return rec

    records = [record(0, _test_accuracy(out.logits, g, test_v), 0.0, {})]

    featprop_order: list[int] | None = None
    if cfg.sampler == "featprop":
        featprop_order = featprop_select(
            g, budget, cfg.hyper.feature_hops, model_seed_base, vertices=train_v
        )
    chunk = max(1, -(-budget // cfg.rounds))  # ceil

    round_index = 0
    while state.budget_used < budget and state.unlabeled_pool:
        round_index += 1
        hooks.on_round(repeat, round_index)
        if featprop_order is not None:
            selected = [v for v in featprop_order if v in state.unlabeled_pool][:chunk]
        else:
            if cfg.setting == "balanced":
                k_cells = g.num_classes
            elif cfg.setting == "unbalanced":
                k_cells = model_classes
            else:
                k_cells = k_estimated
            cells = partition_vertices(
                cfg.setting, g, out, k_cells, train_v, part_seed_base + round_index
            )
            state.partition = cells
            selected = select_vertices(
                cfg.sampler, train_v, cells, cfg.per_round_quota,
                state.unlabeled_pool, out, pr.scores, sel_rng,
            )
        remaining = budget - state.budget_used
        if len(selected) > remaining:
            selected = selected[:remaining]
        if not selected:
            break
        labels = annotate(annotator, selected, g, ann_rng)
        for v, lab in zip(selected, labels):
            state.add_human(v, lab)

        if cfg.use_label_propagation:
            classes_seen = max(model_classes, max(state.human_labels.values()) + 1)
            seeds = one_hot_seeds(g.num_vertices, classes_seen, state.human_labels)
            soft = label_propagate(adj_plain, seeds, cfg.hyper.alpha, cfg.hyper.lp_hops)
            pseudo = filter_pseudo_labels(
                soft, cfg.hyper.entropy_threshold, exclude=set(state.human_labels)
            )
            state.replace_pseudo(
                {v: c for v, c in pseudo.items() if v in state.unlabeled_pool}
            )

        hooks.on_training(True)
        t0 = time.perf_counter()
        result = train_model(
            cfg.model, g, adj_loop, adj_plain, state, cfg.hyper,
            model_seed_base + round_index, pr.scores,
        )
        wall_ms = (time.perf_counter() - t0) * 1000.0
        hooks.on_training(False)
        out = result.output
        hooks.on_model_output(out)
        records.append(
            record(
                round_index,
                _test_accuracy(out.logits, g, test_v),
                wall_ms,
                {
                    "converged": result.converged,
                    "degenerate_coverage": result.degenerate_coverage,
                },
            )
        )
    return records


def aggregate(records: list[RunRecord]) -> dict:
    """Mean/sample-std of test accuracy per configuration and round."""
    if not records:
        raise ValueError("no records to aggregate")
    groups: dict[tuple, dict[int, list]] = {}
    budgets: dict[tuple, dict[int, int]] = {}
    for rec in records:
        key = (rec.setting, rec.model, rec.sampler, rec.label_prop)
        groups.setdefault(key, {}).setdefault(rec.round, []).append(rec.test_accuracy)
        budgets.setdefault(key, {})[rec.round] = rec.budget_used
    summary = {}
    for key, by_round in sorted(groups.items()):
        rounds = sorted(by_round)
        means, stds = [], []
        for r in rounds:
            vals = [v for v in by_round[r] if v is not None]
            if not vals:
                means.append(None)
                stds.append(None)
                continue
            means.append(float(np.mean(vals)))
            stds.append(float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0)
        setting, model, sampler, lp = key
        summary["/".join([setting, model, sampler, "lp" if lp else "nolp"])] = {
            "rounds": rounds,
            "budget_used": [budgets[key][r] for r in rounds],
            "mean": means,
            "std": stds,
            "repeats": max(len(v) for v in by_round.values()),
        }
    return summary


CSV_COLUMNS = (
    "run_id", "seed", "setting", "model", "sampler", "label_prop",
    "round", "budget_used", "test_accuracy", "wall_ms",
)


def records_to_csv(records: list[RunRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        writer.writerow(
            [
                rec.run_id,
                rec.seed,
                rec.setting,
                rec.model,
                rec.sampler,
                int(rec.label_prop),
                rec.round,
                rec.budget_used,
                "" if rec.test_accuracy is None else repr(rec.test_accuracy),
                f"{rec.wall_ms:.3f}",
            ]
        )
    return buf.getvalue()


def write_outputs(records: list[RunRecord], out_dir: str | Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "records.csv"
    csv_path.write_text(records_to_csv(records))
    json_path = out_dir / "summary.json"
    with json_path.open("w") as fh:
        json.dump(aggregate(records), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path
