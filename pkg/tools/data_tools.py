#!/usr/bin/env python3
"""
Commands producing inputs: the synthetic corpus (``gen-data``) and the
n-gram language model used by beam search (``lm-train``).
"""

import argparse
from pathlib import Path

from src.config import RunConfig
from src.core import gen_data_impl, lm_train_impl
from src.data import SynthTaskConfig
from src.logger import get_logger
from src.ngram import DEFAULT_BACKOFF

from .command import run_guarded

logger = get_logger("data_tools")


def cmd_gen_data(run: RunConfig) -> int:
    def action():
        opts = run.options
        cfg = SynthTaskConfig(
            alphabet_size=opts["alphabet_size"],
            min_length=opts["min_length"],
            max_length=opts["max_length"],
            synonym_maps=opts["synonym_maps"],
            orders=tuple(opts["orders"].split(",")),
            train_sources=opts["train_sources"],
            eval_sources=opts["eval_sources"],
            seed=run.seed,
        )
        gen_data_impl(cfg, run.path("out_dir"), logger)

    return run_guarded("gen-data", action, logger)


def cmd_lm_train(run: RunConfig) -> int:
    def action():
        run.require("corpus", "vocab", "output")
        lm_train_impl(run.path("corpus"), run.path("vocab"), run.options["order"], run.options["backoff"],
                      run.path("output"), logger)

    return run_guarded("lm-train", action, logger)


def register_data_commands(subparsers) -> list:
    """Register gen-data and lm-train; returns the created parsers."""
    fmt = argparse.ArgumentDefaultsHelpFormatter

    gen = subparsers.add_parser("gen-data", help="write the synthetic multi-reference task", formatter_class=fmt)
    gen.add_argument("--out-dir", type=Path, default=Path("data"), help="directory for train.tsv, eval.tsv, vocab.txt")
    gen.add_argument("--alphabet-size", type=int, default=10)
    gen.add_argument("--min-length", type=int, default=3)
    gen.add_argument("--max-length", type=int, default=8)
    gen.add_argument("--synonym-maps", type=int, default=2, help="number of digit renaming maps")
    gen.add_argument("--orders", default="forward,reverse", help="comma-separated order transforms")
    gen.add_argument("--train-sources", type=int, default=2000)
    gen.add_argument("--eval-sources", type=int, default=200)
    gen.set_defaults(handler=cmd_gen_data)

    lm = subparsers.add_parser("lm-train", help="fit an n-gram language model on corpus targets", formatter_class=fmt)
    lm.add_argument("--corpus", type=Path)
    lm.add_argument("--vocab", type=Path)
    lm.add_argument("--output", type=Path, help="language model file to write")
    lm.add_argument("--order", type=int, default=3)
    lm.add_argument("--backoff", type=float, default=DEFAULT_BACKOFF)
    lm.set_defaults(handler=cmd_lm_train)
    return [gen, lm]
