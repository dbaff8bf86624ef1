"""Batch command-line entry point.

    gridtheft run --config pipeline.json [--out DIR] [--stage NAME]

Exit codes: 0 success, 1 configuration error, 2 data error, 3 training
divergence.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, DataError, TrainingError
from .pipeline import STAGES, PipelineConfig, run_pipeline


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridtheft",
        description="Hybrid electricity-theft detection pipeline (batch).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute the pipeline from a config file")
    run.add_argument("--config", required=True, help="JSON pipeline config")
    run.add_argument("--out", default=None, help="override the output directory")
    run.add_argument(
        "--stage",
        default=None,
        choices=STAGES,
        help="resume at this stage from a previous run's cache",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = PipelineConfig.from_file(args.config)
        if args.out is not None:
            cfg.output_dir = args.out
        manifest = run_pipeline(cfg, resume_from=args.stage)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return 3

    print(f"run complete; outputs in {cfg.output_dir}")
    print(f"  decision threshold: {manifest.tau_star:.6f}")
    for key in sorted(manifest.headline_metrics):
        print(f"  {key}: {manifest.headline_metrics[key]:.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
