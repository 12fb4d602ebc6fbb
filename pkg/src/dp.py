#!/usr/bin/env python3
"""
Exact dynamic programming over a DAG.

The forward table f[i][u] is the log probability sum of all path prefixes that
emit y_1..y_i and end at vertex u; the backward table b[i][u] is the log sum
over suffixes that continue from u and emit y_{i+1}..y_M. Every recursion runs
in log space with a max-shifted log-sum-exp, so the loss is differentiable by
autograd and the analytic gradient is available from the posteriors.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import torch

from .dag import NEG_INF, Dag, Path
from .errors import DegenerateError, LengthError, VocabError


def logsumexp(x: torch.Tensor, dim: int) -> torch.Tensor:
    """log-sum-exp whose value and gradient stay finite on all ``-inf`` slices."""
    m = x.detach().amax(dim=dim)
    finite = torch.isfinite(m)
    m_safe = torch.where(finite, m, torch.zeros_like(m))
    s = (x - m_safe.unsqueeze(dim)).exp().sum(dim=dim)
    s_safe = torch.where(finite, s, torch.ones_like(s))
    return torch.where(finite, s_safe.log() + m_safe, m)


@dataclass(frozen=True)
class DpTables:
    f: torch.Tensor
    b: Optional[torch.Tensor]
    log_likelihood: torch.Tensor


@dataclass(frozen=True)
class MarginalLoss:
    loss: torch.Tensor
    tables: DpTables


@dataclass(frozen=True)
class MaxLoss:
    loss: torch.Tensor
    best_path: Path


@dataclass(frozen=True)
class Posteriors:
    """gamma[i][u] over positions; xi[i - 1][v][u] is the edge posterior for positions 2..M."""

    gamma: torch.Tensor
    xi: torch.Tensor


@dataclass(frozen=True)
class LossGradient:
    d_log_token_probs: torch.Tensor
    d_log_transitions: torch.Tensor


def check_target(dag: Dag, target: Sequence[int]) -> torch.Tensor:
    """Validate a target against the graph and return it as a LongTensor."""
    size = dag.graph_size
    length = len(target)
    if length == 0:
        raise LengthError("target is empty")
    if length > size:
        raise LengthError(f"target length {length} exceeds graph size {size}")
    if length == 1 and size > 1:
        raise LengthError(f"a single-token target cannot reach vertex {size}")
    y = torch.as_tensor(list(target), dtype=torch.long)
    if (y < 0).any() or (y >= dag.vocab_size).any():
        raise VocabError(f"target token outside vocabulary of size {dag.vocab_size}: {list(target)}")
    return y


def _emissions(dag: Dag, y: torch.Tensor) -> torch.Tensor:
    # M x L matrix of log P[u][y_i]
    return dag.log_token_probs[:, y].transpose(0, 1)


def _first_row(emit0: torch.Tensor) -> torch.Tensor:
    is_root = torch.arange(emit0.shape[0]) == 0
    return torch.where(is_root, emit0, torch.full_like(emit0, NEG_INF))


def forward_dp(dag: Dag, target: Sequence[int]) -> DpTables:
    """Forward table and log-likelihood (the backward table is left empty)."""
    y = check_target(dag, target)
    emit = _emissions(dag, y)
    rows: List[torch.Tensor] = [_first_row(emit[0])]
    for i in range(1, len(y)):
        rows.append(logsumexp(rows[-1].unsqueeze(1) + dag.log_transitions, dim=0) + emit[i])
    f = torch.stack(rows)
    return DpTables(f=f, b=None, log_likelihood=f[-1, -1])


def loss_marginal(dag: Dag, target: Sequence[int]) -> MarginalLoss:
    """
    Negative log of the total probability of the target over all paths.

    Args:
        dag: Graph (not validated here, so perturbed parameters are accepted)
        target: Token indices y_1..y_M with M <= L

    Returns:
        MarginalLoss carrying the scalar loss tensor and the forward table

    Raises:
        LengthError: M > L, or M = 1 < L
        VocabError: A token index is out of range
    """
    tables = forward_dp(dag, target)
    return MarginalLoss(loss=-tables.log_likelihood, tables=tables)


def loss_max(dag: Dag, target: Sequence[int]) -> MaxLoss:
    """Viterbi: negative log of the best single path, ties toward the smallest predecessor."""
    y = check_target(dag, target)
    emit = _emissions(dag, y)
    score = _first_row(emit[0])
    backpointers: List[torch.Tensor] = []
    for i in range(1, len(y)):
        candidates = score.unsqueeze(1) + dag.log_transitions
        best_prev = candidates.argmax(dim=0)
        backpointers.append(best_prev)
        score = candidates.gather(0, best_prev.unsqueeze(0)).squeeze(0) + emit[i]
    best = score[-1]
    if not torch.isfinite(best.detach()):
        raise DegenerateError("target is unreachable under the graph")

    vertex = dag.graph_size - 1
    vertices = [vertex]
    for pointers in reversed(backpointers):
        vertex = int(pointers[vertex])
        vertices.append(vertex)
    return MaxLoss(loss=-best, best_path=Path(tuple(reversed(vertices))))


def backward_dp(dag: Dag, target: Sequence[int]) -> torch.Tensor:
    """Backward table: b[M][L] = 0, b[i][u] = log sum_{u'>u} E[u][u'] P[u'][y_{i+1}] exp(b[i+1][u'])."""
    y = check_target(dag, target)
    emit = _emissions(dag, y)
    size = dag.graph_size
    is_last = torch.arange(size) == size - 1
    last = torch.where(is_last, torch.zeros(size, dtype=emit.dtype), torch.full((size,), NEG_INF, dtype=emit.dtype))
    rows: List[torch.Tensor] = [last]
    for i in range(len(y) - 2, -1, -1):
        nxt = emit[i + 1] + rows[-1]
        rows.append(logsumexp(dag.log_transitions + nxt.unsqueeze(0), dim=1))
    return torch.stack(list(reversed(rows)))


def _full_tables(dag: Dag, target: Sequence[int]) -> DpTables:
    forward = forward_dp(dag, target)
    if not torch.isfinite(forward.log_likelihood.detach()):
        raise DegenerateError("target is unreachable under the graph")
    return DpTables(f=forward.f, b=backward_dp(dag, target), log_likelihood=forward.log_likelihood)


def posteriors(dag: Dag, target: Sequence[int]) -> Posteriors:
    """
    Per-position vertex posteriors and edge posteriors given the target.

    gamma[i][u] is the total weight of paths with a_i = u (path weights are
    the path posteriors), so each row of gamma sums to one.
    """
    with torch.no_grad():
        dag = dag.detach()
        tables = _full_tables(dag, target)
        f, b, ll = tables.f, tables.b, tables.log_likelihood
        gamma = (f + b - ll).exp()
        y = check_target(dag, target)
        emit = _emissions(dag, y)
        log_xi = (
            f[:-1].unsqueeze(2)
            + dag.log_transitions.unsqueeze(0)
            + (emit[1:] + b[1:]).unsqueeze(1)
            - ll
        )
        return Posteriors(gamma=gamma, xi=log_xi.exp())


def loss_grad(dag: Dag, target: Sequence[int]) -> LossGradient:
    """
    Analytic gradient of ``loss_marginal`` with respect to log P and log E.

    d loss / d log P[u][w] = -sum_i gamma(i, u) [y_i = w];
    d loss / d log E[v][u] = -sum_i xi(i, v -> u).
    """
    post = posteriors(dag, target)
    y = check_target(dag, target)
    d_log_p = torch.zeros_like(dag.log_token_probs, dtype=post.gamma.dtype)
    d_log_p.index_add_(1, y, -post.gamma.transpose(0, 1))
    d_log_e = -post.xi.sum(dim=0)
    return LossGradient(d_log_token_probs=d_log_p, d_log_transitions=d_log_e)


def smooth_log_probs(log_probs: torch.Tensor, epsilon: float) -> torch.Tensor:
    """Label smoothing on log probability rows: (1 - eps) P + eps / |V|."""
    if epsilon <= 0.0:
        return log_probs
    vocab = log_probs.shape[-1]
    keep = torch.log1p(torch.tensor(-epsilon, dtype=log_probs.dtype))
    spread = torch.log(torch.tensor(epsilon / vocab, dtype=log_probs.dtype))
    return torch.logaddexp(log_probs + keep, spread.expand_as(log_probs))


def _batch_emissions(log_token_probs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    batch, size, _ = log_token_probs.shape
    index = targets.unsqueeze(1).expand(batch, size, targets.shape[1])
    # B x M x L
    return log_token_probs.gather(2, index).transpose(1, 2)


def _vertex_mask(log_transitions: torch.Tensor, graph_lengths: torch.Tensor) -> torch.Tensor:
    size = log_transitions.shape[-1]
    inside = torch.arange(size).unsqueeze(0) < graph_lengths.unsqueeze(1)
    return log_transitions.masked_fill(~inside.unsqueeze(1), NEG_INF)


def batch_dag_loss(
    log_token_probs: torch.Tensor,
    log_transitions: torch.Tensor,
    targets: torch.Tensor,
    target_lengths: torch.Tensor,
    graph_lengths: torch.Tensor,
    reduction: str = "sum",
) -> torch.Tensor:
    """
    Per-sentence negative log-likelihood for a padded batch.

    Args:
        log_token_probs: B x L x |V|
        log_transitions: B x L x L (entries towards padded vertices are masked here)
        targets: B x M token indices, any in-vocabulary filler beyond each length
        target_lengths: B target lengths M_b
        graph_lengths: B graph sizes L_b
        reduction: "sum" marginalizes over paths, "max" keeps only the best path

    Returns:
        Tensor of B losses
    """
    if reduction not in ("sum", "max"):
        raise ValueError(f"unknown reduction {reduction!r}")
    log_e = _vertex_mask(log_transitions, graph_lengths)
    emit = _batch_emissions(log_token_probs, targets)
    batch, max_len, size = emit.shape
    is_root = (torch.arange(size) == 0).unsqueeze(0)
    score = torch.where(is_root, emit[:, 0], torch.full_like(emit[:, 0], NEG_INF))
    rows = [score]
    for i in range(1, max_len):
        candidates = score.unsqueeze(2) + log_e
        if reduction == "sum":
            score = logsumexp(candidates, dim=1)
        else:
            best_prev = candidates.argmax(dim=1, keepdim=True)
            score = candidates.gather(1, best_prev).squeeze(1)
        score = score + emit[:, i]
        rows.append(score)
    f = torch.stack(rows, dim=1)
    rows_idx = torch.arange(batch)
    return -f[rows_idx, target_lengths - 1, graph_lengths - 1]


@torch.no_grad()
def batch_best_paths(
    log_token_probs: torch.Tensor,
    log_transitions: torch.Tensor,
    targets: torch.Tensor,
    target_lengths: torch.Tensor,
    graph_lengths: torch.Tensor,
) -> List[Optional[Path]]:
    """Batched Viterbi assignment; None for samples that do not fit or are unreachable."""
    log_e = _vertex_mask(log_transitions, graph_lengths)
    emit = _batch_emissions(log_token_probs, targets)
    batch, max_len, size = emit.shape
    is_root = (torch.arange(size) == 0).unsqueeze(0)
    score = torch.where(is_root, emit[:, 0], torch.full_like(emit[:, 0], NEG_INF))
    scores = [score]
    backpointers: List[torch.Tensor] = []
    for i in range(1, max_len):
        candidates = score.unsqueeze(2) + log_e
        best_prev = candidates.argmax(dim=1)
        backpointers.append(best_prev)
        score = candidates.gather(1, best_prev.unsqueeze(1)).squeeze(1) + emit[:, i]
        scores.append(score)

    paths: List[Optional[Path]] = []
    for b in range(batch):
        length, size_b = int(target_lengths[b]), int(graph_lengths[b])
        if length > size_b or (length == 1 and size_b > 1):
            paths.append(None)
            continue
        vertex = size_b - 1
        if not torch.isfinite(scores[length - 1][b, vertex]):
            paths.append(None)
            continue
        vertices = [vertex]
        for i in range(length - 2, -1, -1):
            vertex = int(backpointers[i][b, vertex])
            vertices.append(vertex)
        paths.append(Path(tuple(reversed(vertices))))
    return paths
