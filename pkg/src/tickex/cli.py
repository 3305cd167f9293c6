"""Command-line entry point: generate | train | extract | evaluate.

Each subcommand reads a flat key=value config file; ``--seed`` overrides both
the corpus and training seeds for quick reproducibility experiments.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import pipeline


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="path to key=value config file")
    sub.add_argument("--seed", type=int, default=None, help="override corpus/train seeds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tickex",
                                     description="time-series tick extraction pipeline")
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, descr in (
        ("generate", "generate the synthetic corpus, store, and symbol table"),
        ("train", "train the network, the n-gram baseline, and the fusion classifier"),
        ("evaluate", "evaluate baseline and pipeline on the test split"),
    ):
        sub = subparsers.add_parser(name, help=descr)
        _add_common(sub)

    extract = subparsers.add_parser("extract", help="run the full pipeline over documents")
    _add_common(extract)
    extract.add_argument("--documents", default=None,
                         help="documents JSONL (defaults to the corpus documents)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = pipeline.load_config(args.config, seed_override=args.seed)
        if args.command == "generate":
            result = pipeline.cmd_generate(config)
        elif args.command == "train":
            result = pipeline.cmd_train(config)
        elif args.command == "extract":
            result = pipeline.cmd_extract(config, args.documents)
        else:
            result = pipeline.cmd_evaluate(config)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
