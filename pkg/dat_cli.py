#!/usr/bin/env python3
"""
Command-line entry point for the directed acyclic translation toolkit.

Commands: gen-data, lm-train, train, decode, eval, export-dag, stats.

Usage:
    python dat_cli.py gen-data --out-dir data
    python dat_cli.py --config smoke.cfg train --corpus data/train.tsv --vocab data/vocab.txt --checkpoint run/model.dat
"""

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional

import torch

from src.config import LOGS_DIR, RunConfig, default_seed, load_config_file, parse_bool
from src.errors import ConfigError, DatError
from src.logger import setup_logging
from tools.command import EXIT_FAILURE
from tools.data_tools import register_data_commands
from tools.decode_tools import register_decode_commands
from tools.graph_tools import register_graph_commands
from tools.train_tools import register_train_commands

PATH_KEYS = ("corpus", "vocab", "checkpoint", "lm", "output", "eval_corpus", "metrics", "input", "out_dir")


def build_parser():
    """Top-level parser plus every command parser."""
    parser = argparse.ArgumentParser(prog="dat", description=__doc__.strip().splitlines()[0],
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--config", type=Path, help="flat key = value file supplying flag defaults")
    parser.add_argument("--seed", type=int, default=None, help="global seed (default: $DAT_SEED or 0)")
    parser.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    parser.add_argument("--logs-dir", type=Path, default=LOGS_DIR)
    subparsers = parser.add_subparsers(dest="command", required=True)
    commands = []
    commands += register_data_commands(subparsers)
    commands += register_train_commands(subparsers)
    commands += register_decode_commands(subparsers)
    commands += register_graph_commands(subparsers)
    return parser, commands


def apply_config(parsers: List[argparse.ArgumentParser], values: Dict[str, str]) -> None:
    """Install config-file values as parser defaults so explicit flags still win."""
    claimed = set()
    for parser in parsers:
        actions = {action.dest: action for action in parser._actions}
        defaults = {}
        for key, value in values.items():
            action = actions.get(key)
            if action is None or key in ("help", "command", "config"):
                continue
            claimed.add(key)
            if action.nargs == 0:
                defaults[key] = parse_bool(value)
            elif action.type is not None:
                try:
                    defaults[key] = action.type(value)
                except ValueError as e:
                    raise ConfigError(f"config key {key!r}: {e}") from e
            else:
                defaults[key] = value
        parser.set_defaults(**defaults)
    unknown = sorted(set(values) - claimed)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()

    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, _ = pre.parse_known_args(argv)
    try:
        if known.config is not None:
            apply_config([parser] + commands, load_config_file(known.config))
        args = parser.parse_args(argv)
        if args.seed is None:
            args.seed = default_seed()
    except DatError as e:
        print(f"dat: error: {e}", file=sys.stderr)
        return EXIT_FAILURE

    run = RunConfig.from_namespace(args, PATH_KEYS)
    logger = setup_logging(run.logs_dir, run.log_level)
    logger.info("Resolved configuration", extra={'extra_data': run.to_log()})

    torch.manual_seed(run.seed)
    torch.use_deterministic_algorithms(True)
    return args.handler(run)


if __name__ == "__main__":
    sys.exit(main())
