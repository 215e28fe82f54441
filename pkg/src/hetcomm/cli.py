"""Command-line harness: train, eval, aggregate and smoke verbs."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .aggregate import aggregate_percentiles, render_figures, write_aggregate_csv
from .config import TrainConfig
from .harness import run_eval, run_train


def _default_out() -> str:
    return os.environ.get("HETCOMM_OUT_DIR", "runs")


def _add_override_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="config file (JSON); flags override its fields")
    p.add_argument("--scenario", help="builtin scenario id or scenario file path")
    p.add_argument("--comm", choices=["rgcn", "gat", "none"])
    p.add_argument("--mixer", choices=["iql", "vdn"])
    p.add_argument("--steps", type=int)
    p.add_argument("--eval-interval", type=int, dest="eval_interval")
    p.add_argument("--eval-episodes", type=int, dest="eval_episodes")
    p.add_argument("--seed", type=int, action="append", dest="seeds",
                   help="repeat for multiple seeds")


def _build_config(args) -> TrainConfig:
    cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
    overrides = {}
    for key in ("scenario", "comm", "mixer", "steps", "eval_interval",
                "eval_episodes", "seeds"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return cfg.replace(**overrides)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hetcomm",
        description="Class-specialized communication for cooperative multi-agent RL",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_train = sub.add_parser("train", help="train one config over its seed list")
    _add_override_flags(p_train)
    p_train.add_argument("--out", default=None, help="output root (default $HETCOMM_OUT_DIR or ./runs)")

    p_eval = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--scenario", default=None,
                        help="override the scenario stored in the checkpoint")
    p_eval.add_argument("--eval-episodes", type=int, default=32, dest="eval_episodes")
    p_eval.add_argument("--seed", type=int, default=0)

    p_agg = sub.add_parser("aggregate", help="percentile table + figures across seeds")
    p_agg.add_argument("metrics", nargs="+", help="metric CSV files (>= 2 seeds)")
    p_agg.add_argument("--out", default=None)
    p_agg.add_argument("--no-figures", action="store_true")

    sub.add_parser("smoke", help="run the quick invariant suite on tiny instances")

    args = parser.parse_args(argv)

    if args.verb == "train":
        cfg = _build_config(args)
        out_root = args.out or _default_out()
        results = run_train(cfg, out_root)
        for r in results:
            print(f"{r['run_id']}: metrics {r['metrics_path']} checkpoint {r['checkpoint_path']}")
        return 0

    if args.verb == "eval":
        summary = run_eval(args.checkpoint, args.scenario, args.eval_episodes, args.seed)
        print(json.dumps(
            {k: summary[k] for k in ("win_rate", "mean_defeated_enemies", "mean_episode_reward")},
            indent=2,
        ))
        return 0

    if args.verb == "aggregate":
        out_root = args.out or _default_out()
        os.makedirs(out_root, exist_ok=True)
        table = aggregate_percentiles(args.metrics)
        csv_path = os.path.join(out_root, "aggregate.csv")
        write_aggregate_csv(table, csv_path)
        print(f"wrote {csv_path}")
        if not args.no_figures:
            for path in render_figures(table, out_root):
                print(f"wrote {path}")
        return 0

    if args.verb == "smoke":
        from .checks import run_smoke

        return 0 if run_smoke() else 1

    return 2


if __name__ == "__main__":
    sys.exit(main())
