#!/usr/bin/env python3
"""
The ``train`` command.
"""

import argparse
from pathlib import Path

from src.config import RunConfig
from src.core import train_impl
from src.glancing import MaskVariant
from src.logger import get_logger
from src.training import LOSS_TYPES, TrainConfig

from .command import run_guarded

logger = get_logger("train_tools")

MODEL_OPTIONS = ("model_dim", "num_heads", "encoder_layers", "decoder_layers", "ffn_dim", "graph_lambda",
                 "max_source_len", "dropout", "dtype")


def cmd_train(run: RunConfig) -> int:
    def action():
        run.require("corpus", "vocab", "checkpoint")
        opts = run.options
        train_cfg = TrainConfig(
            steps=opts["steps"],
            batch_tokens=opts["batch_tokens"],
            peak_lr=opts["lr"],
            warmup_steps=opts["warmup"],
            weight_decay=opts["weight_decay"],
            label_smoothing=opts["label_smoothing"],
            glancing=opts["glancing"],
            tau_start=opts["tau_start"],
            tau_end=opts["tau_end"],
            loss_type=opts["loss_type"],
            seed=run.seed,
            log_every=opts["log_every"],
            valid_every=opts["valid_every"],
        )
        train_impl(
            run.path("corpus"), run.path("vocab"), run.path("checkpoint"),
            {name: opts[name] for name in MODEL_OPTIONS}, train_cfg, logger,
            eval_path=run.path("eval_corpus"), metrics_path=run.path("metrics"),
            resume=opts["resume"], valid_sources=opts["valid_sources"],
        )

    return run_guarded("train", action, logger)


def register_train_commands(subparsers) -> list:
    """Register train; returns the created parser."""
    train = subparsers.add_parser("train", help="train a model with glancing",
                                  formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    train.add_argument("--corpus", type=Path)
    train.add_argument("--vocab", type=Path)
    train.add_argument("--checkpoint", type=Path, help="checkpoint to write (and read with --resume)")
    train.add_argument("--eval-corpus", type=Path, help="validation corpus; defaults to the training corpus")
    train.add_argument("--metrics", type=Path, help="validation CSV; defaults to the checkpoint path with .csv")
    train.add_argument("--resume", action="store_true", help="continue from the step stored in --checkpoint")

    model = train.add_argument_group("model")
    model.add_argument("--model-dim", type=int, default=64)
    model.add_argument("--num-heads", type=int, default=2)
    model.add_argument("--encoder-layers", type=int, default=2)
    model.add_argument("--decoder-layers", type=int, default=2)
    model.add_argument("--ffn-dim", type=int, default=128)
    model.add_argument("--graph-lambda", type=int, default=4, help="graph size = lambda x source length")
    model.add_argument("--max-source-len", type=int, default=64)
    model.add_argument("--dropout", type=float, default=0.1)
    model.add_argument("--dtype", choices=("float32", "float64"), default="float32")

    optim = train.add_argument_group("optimization")
    optim.add_argument("--steps", type=int, default=3000)
    optim.add_argument("--batch-tokens", type=int, default=2048)
    optim.add_argument("--lr", type=float, default=5e-4, help="peak learning rate")
    optim.add_argument("--warmup", type=int, default=300)
    optim.add_argument("--weight-decay", type=float, default=0.01)
    optim.add_argument("--label-smoothing", type=float, default=0.1)
    optim.add_argument("--loss-type", choices=LOSS_TYPES, default="sum")
    optim.add_argument("--glancing", choices=[v.value for v in MaskVariant], default=MaskVariant.ADAPTIVE.value)
    optim.add_argument("--tau-start", type=float, default=0.5)
    optim.add_argument("--tau-end", type=float, default=0.1)
    optim.add_argument("--log-every", type=int, default=50)
    optim.add_argument("--valid-every", type=int, default=500)
    optim.add_argument("--valid-sources", type=int, default=200)
    train.set_defaults(handler=cmd_train)
    return [train]
