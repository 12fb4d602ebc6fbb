#!/usr/bin/env python3
"""
Training loop pieces: token-budget batching, the inverse square root learning
rate schedule and the two-pass glancing update.
"""

import math
from dataclasses import asdict, dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .data import MASK, PAD, ParallelCorpus, Sentence
from .dp import batch_best_paths, batch_dag_loss, smooth_log_probs
from .errors import ConfigError, EmptyCorpusError
from .glancing import MaskStrategy, MaskVariant, anneal_tau, build_glancing_input
from .logger import get_logger
from .model import DagTransformer, pad_sequences

logger = get_logger("training")

LOSS_TYPES = ("sum", "max")


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 3000
    batch_tokens: int = 2048
    peak_lr: float = 5e-4
    warmup_steps: int = 300
    weight_decay: float = 0.01
    label_smoothing: float = 0.1
    glancing: MaskVariant = MaskVariant.ADAPTIVE
    tau_start: float = 0.5
    tau_end: float = 0.1
    loss_type: str = "sum"
    seed: int = 0
    log_every: int = 50
    valid_every: int = 500

    def __post_init__(self):
        object.__setattr__(self, "glancing", MaskVariant(self.glancing))
        if self.steps < 1 or self.batch_tokens < 1:
            raise ConfigError("steps and batch_tokens must be >= 1")
        if not 0 < self.warmup_steps <= self.steps:
            raise ConfigError(f"warmup_steps must lie in [1, steps], got {self.warmup_steps}")
        if self.peak_lr <= 0.0 or self.weight_decay < 0.0:
            raise ConfigError("peak_lr must be positive and weight_decay non-negative")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError(f"label_smoothing must lie in [0, 1), got {self.label_smoothing}")
        for name in ("tau_start", "tau_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.loss_type not in LOSS_TYPES:
            raise ConfigError(f"loss_type must be one of {LOSS_TYPES}, got {self.loss_type!r}")
        if self.log_every < 1 or self.valid_every < 1:
            raise ConfigError("log_every and valid_every must be >= 1")

    def to_dict(self) -> dict:
        values = asdict(self)
        values["glancing"] = self.glancing.value
        return values


@dataclass
class Batch:
    sources: torch.Tensor
    targets: torch.Tensor
    target_lengths: torch.Tensor

    def __len__(self) -> int:
        return self.sources.shape[0]

    def select(self, keep: torch.Tensor) -> "Batch":
        width = int(self.target_lengths[keep].max())
        source_width = int((self.sources[keep] != PAD).sum(dim=1).max())
        return Batch(self.sources[keep][:, :source_width], self.targets[keep][:, :width], self.target_lengths[keep])


@dataclass(frozen=True)
class StepResult:
    loss: float
    lr: float
    tau: float
    sentences: int
    skipped: int
    revealed: int


def inverse_sqrt_lr(step: int, peak_lr: float, warmup_steps: int) -> float:
    """Linear warm-up to ``peak_lr`` then decay proportional to 1/sqrt(step)."""
    step = max(step, 1)
    return peak_lr * min(step / warmup_steps, math.sqrt(warmup_steps / step))


def collate(samples: Sequence[Tuple[Sentence, Sentence]]) -> Batch:
    # Targets are padded with MASK so the gather in the loss stays in-vocabulary.
    sources = pad_sequences([s for s, _ in samples], PAD)
    targets = pad_sequences([t for _, t in samples], MASK)
    lengths = torch.as_tensor([len(t) for _, t in samples], dtype=torch.long)
    return Batch(sources, targets, lengths)


def make_batches(samples: Sequence[Tuple[Sentence, Sentence]], batch_tokens: int) -> List[Batch]:
    """Pack samples in order into batches of at most ``batch_tokens`` source+target tokens."""
    batches, current, used = [], [], 0
    for source, target in samples:
        size = len(source) + len(target)
        if current and used + size > batch_tokens:
            batches.append(collate(current))
            current, used = [], 0
        current.append((source, target))
        used += size
    if current:
        batches.append(collate(current))
    return batches


class EpochSampler:
    """
    Endless batch stream. Each epoch visits every distinct source once, in a
    shuffled order, paired with one of its references drawn uniformly.
    """

    def __init__(self, corpus: ParallelCorpus, batch_tokens: int, rng: np.random.Generator):
        self.groups = list(corpus.grouped().items())
        if not self.groups:
            raise EmptyCorpusError("training corpus is empty")
        self.batch_tokens = batch_tokens
        self.rng = rng
        self.epoch = 0

    def epoch_samples(self) -> List[Tuple[Sentence, Sentence]]:
        samples = []
        for index in self.rng.permutation(len(self.groups)):
            source, targets = self.groups[int(index)]
            samples.append((source, targets[int(self.rng.integers(len(targets)))]))
        return samples

    def __iter__(self) -> Iterator[Batch]:
        while True:
            self.epoch += 1
            yield from make_batches(self.epoch_samples(), self.batch_tokens)


def build_optimizer(model: DagTransformer, cfg: TrainConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(model.parameters(), lr=cfg.peak_lr, betas=(0.9, 0.98), eps=1e-8,
                             weight_decay=cfg.weight_decay)


def glancing_tokens(model: DagTransformer, batch: Batch, strategy: MaskStrategy,
                    rng: np.random.Generator) -> Tuple[Optional[torch.Tensor], int]:
    """
    Pass 1: decode with an all-MASK input, assign targets on its best paths and
    build the pass-2 decoder input.

    Returns:
        (B x L_max token tensor or None when nothing is revealed, revealed count)
    """
    if strategy.variant is MaskVariant.ALL_MASKED:
        return None, 0
    with torch.no_grad():
        first = model(batch.sources)
    paths = batch_best_paths(first.log_token_probs, first.log_transitions, batch.targets,
                             batch.target_lengths, first.graph_lengths)
    tokens = torch.full(first.log_token_probs.shape[:2], MASK, dtype=torch.long)
    revealed = 0
    for b, path in enumerate(paths):
        if path is None:
            continue
        target = batch.targets[b, :int(batch.target_lengths[b])].tolist()
        glance = build_glancing_input(first.dag(b), target, strategy, rng, assignment=path)
        for vertex, token in enumerate(glance.z):
            if token is not None:
                tokens[b, vertex] = token
        revealed += glance.revealed_count
    return tokens, revealed


def fitting(model: DagTransformer, batch: Batch) -> torch.Tensor:
    """Mask of samples whose target fits the graph built for their source."""
    graph_lengths = model.graph_lengths((batch.sources != PAD).sum(dim=1))
    return (batch.target_lengths <= graph_lengths) & ~((batch.target_lengths == 1) & (graph_lengths > 1))


def train_step(
    model: DagTransformer,
    optimizer: torch.optim.Optimizer,
    batch: Batch,
    cfg: TrainConfig,
    step: int,
    rng: np.random.Generator,
) -> StepResult:
    """
    One glancing update at 1-based ``step``.

    Samples whose target cannot fit the graph (M > L) are skipped with a
    warning; a batch with nothing left is not applied.
    """
    model.train()
    lr = inverse_sqrt_lr(step, cfg.peak_lr, cfg.warmup_steps)
    tau = anneal_tau(step, cfg.steps, cfg.tau_start, cfg.tau_end)

    fits = fitting(model, batch)
    skipped = int((~fits).sum())
    if skipped:
        logger.warning("Skipping samples whose target does not fit the graph",
                       extra={'extra_data': {'step': step, 'skipped': skipped}})
    if skipped == len(batch):
        return StepResult(loss=float("nan"), lr=lr, tau=tau, sentences=0, skipped=skipped, revealed=0)
    if skipped:
        batch = batch.select(fits)

    strategy = MaskStrategy(cfg.glancing, tau)
    tokens, revealed = glancing_tokens(model, batch, strategy, rng)
    out = model(batch.sources, tokens)
    log_p = smooth_log_probs(out.log_token_probs, cfg.label_smoothing)
    losses = batch_dag_loss(log_p, out.log_transitions, batch.targets, batch.target_lengths,
                            out.graph_lengths, reduction=cfg.loss_type)
    loss = losses.mean()

    for group in optimizer.param_groups:
        group["lr"] = lr
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return StepResult(loss=float(loss.detach()), lr=lr, tau=tau, sentences=len(batch), skipped=skipped,
                      revealed=revealed)


@torch.no_grad()
def objective(model: DagTransformer, batch: Batch, cfg: TrainConfig) -> float:
    """
    Training objective on ``batch`` without glancing or an update: label
    smoothing and the configured reduction, averaged over the batch.
    Samples whose target does not fit the graph are left out; NaN when none fit.
    """
    fits = fitting(model, batch)
    if not fits.any():
        return float("nan")
    batch = batch.select(fits)
    was_training = model.training
    model.eval()
    try:
        out = model(batch.sources)
    finally:
        model.train(was_training)
    log_p = smooth_log_probs(out.log_token_probs, cfg.label_smoothing)
    losses = batch_dag_loss(log_p, out.log_transitions, batch.targets, batch.target_lengths,
                            out.graph_lengths, reduction=cfg.loss_type)
    return float(losses.mean())
