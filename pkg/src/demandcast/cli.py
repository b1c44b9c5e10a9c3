"""Command line entry point: ``demandcast <stage> --config run.yaml``."""

from __future__ import annotations

import argparse
import logging
import sys

from demandcast import pipeline
from demandcast.errors import InputError, InvariantViolation

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2

COMMANDS = {**{s: s for s in pipeline.STAGES}, "run-all": None}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="demandcast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "run-all" else "run every stage in order")
        p.add_argument("--config", required=True, help="run config (YAML or JSON)")
        p.add_argument("--out", default=None, help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, default=None, help="seed recorded in every output")
        p.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        cfg = pipeline.load_config(args.config, out=args.out, seed=args.seed)
        if args.command == "run-all":
            doc = pipeline.run_all(cfg, n_threads=args.threads)
            avg = doc["aggregates"]["Average"]["test"]
            if avg is not None:
                print(f"average test MAPE: {avg:.4f} ({100 * avg:.1f}%)")
        else:
            pipeline.run_stage(cfg, args.command, n_threads=args.threads)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InvariantViolation, AssertionError) as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
