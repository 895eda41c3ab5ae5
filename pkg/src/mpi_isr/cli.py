"""
Command-line entry point ``mpi-isr``.

Exit codes: 0 success, 2 configuration error, 3 missing or mismatched
stage input, 4 numerical failure.
"""

import argparse
import logging
import sys

import numpy as np

from .config import load_config, ScenarioConfig
from .exceptions import ConfigError, MpiIsrError, StageInputError
from .pipeline import STAGES, run_pipeline

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4

COMMANDS = ("validate",) + STAGES + ("pipeline",)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mpi-isr",
        description="Multipath-aware imaging from planar near-field samples.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True,
                        help="scenario JSON file, or bundled:<name>.json for a packaged scenario")
    parser.add_argument("--out", default="out", help="output directory (default: %(default)s)")
    parser.add_argument("--stages", nargs="+", choices=STAGES,
                        help="stages to run for the pipeline command (default: all)")
    parser.add_argument("--order", type=int, help="override image_max_order")
    parser.add_argument("--seed", type=int, help="override the random seed")
    parser.add_argument("--snr-db", type=float, help="override the measurement SNR in dB")
    parser.add_argument("--force", action="store_true",
                        help="accept stage inputs produced by a different config")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def apply_overrides(config, args):
    data = config.to_dict()
    if args.order is not None:
        data["image_max_order"] = args.order
        data["image_orders"] = None
    if args.seed is not None:
        data["seed"] = args.seed
    if args.snr_db is not None:
        data["snr_db"] = args.snr_db
    return ScenarioConfig(data)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    stage = "config"
    try:
        config = apply_overrides(load_config(args.config), args)
        if args.command == "validate":
            problems = config.violations()
            for p in problems:
                print(p, file=sys.stderr)
            if problems:
                return EXIT_CONFIG
            print(f"ok {config.hash}")
            return EXIT_OK
        stages = (args.stages or STAGES) if args.command == "pipeline" else [args.command]
        outputs = run_pipeline(config, args.out, stages, args.force)
        for name, files in outputs.items():
            print(f"{name}: " + ", ".join(str(f) for f in files))
        return EXIT_OK
    except ConfigError as exc:
        print(f"[{stage}] {exc}", file=sys.stderr)
        for v in exc.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_CONFIG
    except StageInputError as exc:
        print(f"[{getattr(exc, 'stage', stage)}] {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (MpiIsrError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"[{getattr(exc, 'stage', stage)}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
