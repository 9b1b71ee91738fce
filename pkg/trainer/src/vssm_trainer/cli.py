"""Command-line entry: train the toy recall task and export artifacts."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .export import export_weights
from .meta import meta_to_dict
from .train import TrainConfig, train_toy, write_curves_csv


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="vssm-train", description="toy needle-recall training"
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--steps", type=int, default=5000)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--lr", type=float, default=3e-4)
    parser.add_argument("--window-only", action="store_true")
    parser.add_argument("--eval-count", type=int, default=400)
    args = parser.parse_args(argv)

    try:
        config = TrainConfig(
            steps=args.steps,
            batch_size=args.batch_size,
            seed=args.seed,
            lr=args.lr,
            window_only=args.window_only,
            eval_count=args.eval_count,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    result = train_toy(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = export_weights(result.params, config.meta, out)
    write_curves_csv(result.curves, out / "curves.csv")
    (out / "config.json").write_text(json.dumps(meta_to_dict(config.meta), indent=1) + "\n")
    print(
        json.dumps(
            {
                "final_acc": result.final_acc,
                "eval_distance": config.resolved_eval_distance(),
                "weights": str(manifest),
                "window_only": config.window_only,
            }
        )
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
