#!/usr/bin/env python3
"""
Glancing training on the graph.

Pass 1 decodes the graph with an all-MASK input; its best path assigns each
target token to a vertex and its prediction errors decide how many tokens to
reveal. Pass 2 decodes again with the revealed tokens placed on their
vertices, and only that pass is trained.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from .dag import Dag, Path
from .dp import loss_max
from .errors import ConfigError


class MaskVariant(str, Enum):
    ALL_MASKED = "all"
    UNIFORM = "uniform"
    ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class MaskStrategy:
    variant: MaskVariant = MaskVariant.ADAPTIVE
    tau: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must lie in [0, 1], got {self.tau}")
        object.__setattr__(self, "variant", MaskVariant(self.variant))


@dataclass(frozen=True)
class GlancingInput:
    """Decoder input of length L; ``None`` marks a masked vertex."""

    z: Tuple[Optional[int], ...]
    revealed_count: int
    assignment: Path


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def assign_targets(dag: Dag, target: Sequence[int]) -> Path:
    """Most probable path for the target (Viterbi backtrace)."""
    return loss_max(dag.detach(), target).best_path


def reveal_count(target: Sequence[int], predicted: Sequence[int], tau: float) -> int:
    """tau times the number of positions where the prediction on the assignment is wrong."""
    if len(target) != len(predicted):
        raise ValueError(f"target and prediction lengths differ: {len(target)} vs {len(predicted)}")
    mismatches = sum(1 for y, y_hat in zip(target, predicted) if y != y_hat)
    return min(len(target), round_half_up(tau * mismatches))


def build_glancing_input(
    dag: Dag,
    target: Sequence[int],
    strategy: MaskStrategy,
    rng: np.random.Generator,
    assignment: Optional[Path] = None,
) -> GlancingInput:
    """
    Args:
        dag: Pass-1 graph (decoded with an all-MASK input)
        target: Reference token indices
        strategy: Masking variant and ratio
        rng: Caller-owned seeded generator
        assignment: Precomputed best path, recomputed when omitted

    Returns:
        GlancingInput whose revealed tokens sit on the assignment path
    """
    if assignment is None:
        assignment = assign_targets(dag, target)
    length = len(target)

    if strategy.variant is MaskVariant.ALL_MASKED:
        count = 0
    elif strategy.variant is MaskVariant.UNIFORM:
        count = min(length, round_half_up(float(rng.random()) * length))
    else:
        argmax_tokens = dag.log_token_probs.detach().argmax(dim=1)
        predicted = [int(argmax_tokens[v]) for v in assignment]
        count = reveal_count(target, predicted, strategy.tau)

    z = [None] * dag.graph_size
    if count > 0:
        positions = rng.choice(length, size=count, replace=False)
        for pos in sorted(int(p) for p in positions):
            z[assignment[pos]] = int(target[pos])
    return GlancingInput(z=tuple(z), revealed_count=count, assignment=assignment)


def anneal_tau(step: int, total_steps: int, tau_start: float, tau_end: float) -> float:
    """Linear schedule from tau_start at step 0 to tau_end at total_steps."""
    if total_steps <= 0:
        raise ConfigError(f"total_steps must be positive, got {total_steps}")
    step = min(max(step, 0), total_steps)
    return tau_start + (tau_end - tau_start) * step / total_steps
