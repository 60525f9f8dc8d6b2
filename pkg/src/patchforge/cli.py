"""Command-line entry point.

Usage::

    patchforge <command> --config <file> --in <path> --out <path>
               [--beam K] [--seed N]

Commands: extract, abstract, pretrain, finetune, predict, patch, eval.
"""

import argparse
import json
import logging
import sys

from .config import PipelineConfig, load_config
from .errors import PatchforgeError
from .pipeline import run_pipeline

COMMANDS = ("extract", "abstract", "pretrain", "finetune", "predict",
            "patch", "eval")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="patchforge",
        description="Learn statement-level code fixes and emit patches.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="pipeline config file (key = value)")
    parser.add_argument("--in", dest="in_path", help="input corpus/records")
    parser.add_argument("--out", dest="out_path",
                        help="output file or directory")
    parser.add_argument("--beam", type=int, default=None,
                        help="beam width override")
    parser.add_argument("--seed", type=int, default=None,
                        help="seed override")
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    config = load_config(args.config) if args.config else PipelineConfig()
    try:
        result = run_pipeline(config, args.command, args.in_path,
                              args.out_path, beam=args.beam, seed=args.seed)
    except PatchforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    for diag in result.get("diagnostics", ()):
        print(f"note: {diag}", file=sys.stderr)
    if args.command == "eval":
        print(result["text"], end="")
    else:
        printable = {k: v for k, v in result.items()
                     if k not in ("diagnostics", "report", "cve", "text")}
        print(json.dumps(printable, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
