"""Command-line driver.

Subcommands run the pipeline through progressively later stages:

    simulate      write the source panel(s)
    train-factor  + factor-model params and training logs
    infer-z       + latent-sequence CSVs
    forecast      + the metrics grid
    report        + improvement and alignment reports
    pipeline      everything (same as report)

Exit codes: 0 success, 1 validation error, 2 runtime or numerical error.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys

from .errors import ValidationError
from .pipeline import load_run_config, run_pipeline

_STAGE_BY_COMMAND = {
    "simulate": "simulate",
    "train-factor": "train-factor",
    "infer-z": "infer-z",
    "forecast": "forecast",
    "report": "report",
    "pipeline": "report",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deconfound",
        description="Deconfounded time-series forecasting pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("simulate", "generate and write the source panel(s)"),
        ("train-factor", "train the latent-confounder factor model"),
        ("infer-z", "infer the latent sequence over the full timeline"),
        ("forecast", "fit and evaluate the forecaster grid"),
        ("report", "write improvement and alignment reports"),
        ("pipeline", "run every stage"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to a run-config JSON file")
        p.add_argument("--out", default=None, help="output directory (overrides the config)")
        p.add_argument(
            "--seed",
            type=int,
            default=None,
            help="replace the config's seed list with this single seed",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_run_config(args.config)
        if args.out is not None:
            config = dataclasses.replace(config, output_dir=args.out)
        if args.seed is not None:
            config = dataclasses.replace(config, seeds=(args.seed,))
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        out = run_pipeline(config, upto=_STAGE_BY_COMMAND[args.command])
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote artifacts to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
