"""Command-line entry point: run experiment batches or serve the annotation API."""

from __future__ import annotations

import argparse
import sys

from .experiment import ExperimentConfig, aggregate, run_experiment, write_outputs
from .models import HyperParams


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="graphfew",
        description="Active few-shot vertex classification experiments",
    )
    p.add_argument("--dataset", default="sbm",
                   help="cora | citeseer | pubmed | sbm | json:<path>")
    p.add_argument("--model", default="gcn", choices=["gcn", "gpn", "lp"])
    p.add_argument("--sampler", default="random",
                   choices=["random", "entropy", "pagerank", "medoid", "featprop"])
    p.add_argument("--setting", default="balanced",
                   choices=["balanced", "unbalanced", "unknown-k"])
    p.add_argument("--label-prop", action="store_true",
                   help="extend each round's training set by label propagation")
    p.add_argument("--budget", type=int, default=None,
                   help="annotation budget (default: classes * rounds)")
    p.add_argument("--rounds", type=int, default=5)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=0.0,
                   help="annotator error rate; > 0 switches to the noisy annotator")
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--entropy-threshold", type=float, default=0.2)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--lp-hops", type=int, default=3)
    p.add_argument("--out", default="out", help="output directory for CSV + JSON")
    p.add_argument("--data-dir", default="data",
                   help="directory holding <name>/<name>.content for text datasets")
    p.add_argument("--serve", action="store_true", help="start the annotation service")
    p.add_argument("--port", type=int, default=8080)
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    hyper = HyperParams(
        hidden=args.hidden,
        dropout=args.dropout,
        lam=args.lam,
        lr=args.lr,
        alpha=args.alpha,
        entropy_threshold=args.entropy_threshold,
        lp_hops=args.lp_hops,
    )
    return ExperimentConfig(
        dataset=args.dataset,
        model=args.model,
        sampler=args.sampler,
        setting=args.setting.replace("-", "_"),
        use_label_propagation=args.label_prop,
        budget=args.budget,
        rounds=args.rounds,
        repeats=args.repeats,
        seed=args.seed,
        annotator="noisy" if args.epsilon > 0 else "oracle",
        epsilon=args.epsilon,
        hyper=hyper,
        data_dir=args.data_dir,
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    if args.serve:
        import uvicorn

        from .server import create_app

        uvicorn.run(create_app(), host="127.0.0.1", port=args.port)
        return 0

    try:
        cfg = config_from_args(args)
        records = run_experiment(cfg)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    csv_path, json_path = write_outputs(records, args.out)
    for key, row in aggregate(records).items():
        final_mean = row["mean"][-1]
        shown = "n/a" if final_mean is None else f"{final_mean:.3f} +- {row['std'][-1]:.3f}"
        print(f"{key}: final accuracy {shown} over {row['repeats']} repeats")
    print(f"wrote {csv_path} and {json_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
