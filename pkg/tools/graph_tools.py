#!/usr/bin/env python3
"""
Commands inspecting decoded graphs: ``export-dag`` and ``stats``.
"""

import argparse
import sys
from pathlib import Path

from src.config import RunConfig
from src.core import export_dag_impl, stats_impl, write_json
from src.logger import get_logger

from .command import run_guarded

logger = get_logger("graph_tools")


def cmd_export_dag(run: RunConfig) -> int:
    def action():
        run.require("checkpoint", "vocab", "output")
        export_dag_impl(run.path("checkpoint"), run.path("vocab"), run.options["source"], run.path("output"), logger,
                        min_passing=run.options["min_passing"], edge_mass=run.options["edge_mass"],
                        top_k=run.options["top_k"])

    return run_guarded("export-dag", action, logger)


def cmd_stats(run: RunConfig) -> int:
    def action():
        run.require("checkpoint", "vocab", "corpus")
        report = stats_impl(run.path("checkpoint"), run.path("vocab"), run.path("corpus"), logger,
                            passing_floor=run.options["passing_floor"], edge_mass=run.options["edge_mass"],
                            merge_same_token=run.options["merge_same_token"])
        text = write_json(report, run.path("output"))
        if run.path("output") is None:
            sys.stdout.write(text)

    return run_guarded("stats", action, logger)


def register_graph_commands(subparsers) -> list:
    """Register export-dag and stats; returns the created parsers."""
    fmt = argparse.ArgumentDefaultsHelpFormatter

    export = subparsers.add_parser("export-dag", help="write the pruned graph of one source as JSON and DOT",
                                   formatter_class=fmt)
    export.add_argument("--checkpoint", type=Path)
    export.add_argument("--vocab", type=Path)
    export.add_argument("--source", help="whitespace-tokenized source sentence")
    export.add_argument("--output", type=Path, help="output prefix; .json and .dot are appended")
    export.add_argument("--min-passing", type=float, default=0.1)
    export.add_argument("--edge-mass", type=float, default=0.9)
    export.add_argument("--top-k", type=int, default=3, help="tokens listed per vertex")
    export.set_defaults(handler=cmd_export_dag)

    stats = subparsers.add_parser("stats", help="aggregate graph statistics over a corpus", formatter_class=fmt)
    stats.add_argument("--checkpoint", type=Path)
    stats.add_argument("--vocab", type=Path)
    stats.add_argument("--corpus", type=Path)
    stats.add_argument("--output", type=Path, help="JSON report; standard output when omitted")
    stats.add_argument("--passing-floor", type=float, default=0.2)
    stats.add_argument("--edge-mass", type=float, default=0.8)
    stats.add_argument("--merge-same-token", action="store_true")
    stats.set_defaults(handler=cmd_stats)
    return [export, stats]
