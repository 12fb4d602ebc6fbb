#!/usr/bin/env python3
"""
Commands running inference: ``decode`` writes hypotheses, ``eval`` writes a
JSON metrics report.
"""

import argparse
import math
import sys
from pathlib import Path

from src.config import RunConfig
from src.core import decode_impl, eval_impl, write_json
from src.decoding import STRATEGIES, DecodeConfig
from src.errors import ConfigError
from src.logger import get_logger

from .command import run_guarded

logger = get_logger("decode_tools")


def decode_config(run: RunConfig) -> DecodeConfig:
    opts = run.options
    return DecodeConfig(
        alpha=opts["alpha"],
        gamma=opts["gamma"],
        beam_size=opts["beam_size"],
        per_length_cap=opts["per_length_cap"],
        expand_top_k=opts["expand_top_k"],
        top_p=opts["top_p"],
        temperature=opts["temperature"],
    )


def parse_edges(text: str):
    try:
        return [math.inf if part.strip() in ("inf", "∞") else float(part) for part in text.split(",")]
    except ValueError as e:
        raise ConfigError(f"bucket edges must be comma-separated numbers, got {text!r}") from e


def cmd_decode(run: RunConfig) -> int:
    def action():
        run.require("checkpoint", "vocab", "input", "output")
        if run.options["k"] < 1:
            raise ConfigError("--k must be >= 1")
        decode_impl(run.path("checkpoint"), run.path("vocab"), run.path("input"), run.path("output"),
                    run.options["decode"], decode_config(run), run.seed, logger,
                    lm_path=run.path("lm"), k=run.options["k"])

    return run_guarded("decode", action, logger)


def cmd_eval(run: RunConfig) -> int:
    def action():
        run.require("checkpoint", "vocab", "corpus")
        report = eval_impl(run.path("checkpoint"), run.path("vocab"), run.path("corpus"), run.options["decode"],
                           decode_config(run), run.seed, logger, lm_path=run.path("lm"), k=run.options["k"],
                           bucket_edges=parse_edges(run.options["buckets"]), smooth=run.options["smooth"])
        text = write_json(report, run.path("output"))
        if run.path("output") is None:
            sys.stdout.write(text)

    return run_guarded("eval", action, logger)


def add_decode_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("decoding")
    group.add_argument("--decode", choices=STRATEGIES, default="lookahead")
    group.add_argument("--alpha", type=float, default=1.0, help="length normalization exponent")
    group.add_argument("--gamma", type=float, default=0.1, help="language model weight (beam only)")
    group.add_argument("--beam-size", type=int, default=200)
    group.add_argument("--per-length-cap", type=int, default=10)
    group.add_argument("--expand-top-k", type=int, default=5)
    group.add_argument("--top-p", type=float, default=0.8)
    group.add_argument("--temperature", type=float, default=1.0)
    group.add_argument("--lm", type=Path, help="n-gram model for beam search")


def register_decode_commands(subparsers) -> list:
    """Register decode and eval; returns the created parsers."""
    fmt = argparse.ArgumentDefaultsHelpFormatter

    dec = subparsers.add_parser("decode", help="translate source lines", formatter_class=fmt)
    dec.add_argument("--checkpoint", type=Path)
    dec.add_argument("--vocab", type=Path)
    dec.add_argument("--input", type=Path, help="source sentences, one per line")
    dec.add_argument("--output", type=Path)
    dec.add_argument("--k", type=int, default=1, help="samples per line with --decode sample")
    add_decode_arguments(dec)
    dec.set_defaults(handler=cmd_decode)

    ev = subparsers.add_parser("eval", help="score a model on a multi-reference corpus", formatter_class=fmt)
    ev.add_argument("--checkpoint", type=Path)
    ev.add_argument("--vocab", type=Path)
    ev.add_argument("--corpus", type=Path)
    ev.add_argument("--output", type=Path, help="JSON report; standard output when omitted")
    ev.add_argument("--k", type=int, default=None, help="samples per source; defaults to the reference count")
    ev.add_argument("--buckets", default="0,10,20,inf", help="reference-length bucket edges")
    ev.add_argument("--smooth", action="store_true", help="add-one smoothing of higher-order precisions")
    add_decode_arguments(ev)
    ev.set_defaults(handler=cmd_eval)
    return [dec, ev]
