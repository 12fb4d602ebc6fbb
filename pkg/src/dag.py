#!/usr/bin/env python3
"""
DAG data model shared by training and inference.

A ``Dag`` holds the vertex token distributions P (L x |V|) and the transition
matrix E (L x L), both stored as natural logarithms with ``-inf`` for masked
entries. Vertex indices are 0-based in storage and 1-based in every message
meant for a human.
"""

from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterator, List, Sequence, Tuple, Union

import torch

from .errors import NormalizationError, StructureError

NEG_INF = float("-inf")

# Row sums, cumulative-mass cut-offs and passing thresholds are compared with
# this slack so that exp(log(p)) round trips do not flip a decision.
PROB_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Dag:
    """A decoded graph: log token distributions and log transition matrix."""

    log_token_probs: torch.Tensor
    log_transitions: torch.Tensor

    @classmethod
    def from_probs(cls, token_probs, transitions) -> "Dag":
        """Build a Dag from linear-space probabilities (lists or tensors)."""
        p = torch.as_tensor(token_probs, dtype=torch.float64)
        e = torch.as_tensor(transitions, dtype=torch.float64)
        return cls(p.log(), e.log())

    @property
    def graph_size(self) -> int:
        return self.log_token_probs.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.log_token_probs.shape[1]

    @property
    def token_probs(self) -> torch.Tensor:
        return self.log_token_probs.exp()

    @property
    def transitions(self) -> torch.Tensor:
        return self.log_transitions.exp()

    def detach(self) -> "Dag":
        return Dag(self.log_token_probs.detach(), self.log_transitions.detach())


@dataclass(frozen=True)
class Path:
    """Strictly increasing vertex sequence from the first to the last vertex."""

    vertices: Tuple[int, ...]

    def __post_init__(self):
        if not self.vertices or self.vertices[0] != 0:
            raise StructureError(f"path must start at vertex 1, got {self.one_based()}")
        if any(b <= a for a, b in zip(self.vertices, self.vertices[1:])):
            raise StructureError(f"path is not strictly increasing: {self.one_based()}")

    def __len__(self) -> int:
        return len(self.vertices)

    def __iter__(self) -> Iterator[int]:
        return iter(self.vertices)

    def __getitem__(self, i: int) -> int:
        return self.vertices[i]

    def one_based(self) -> Tuple[int, ...]:
        return tuple(v + 1 for v in self.vertices)


@dataclass(frozen=True)
class DagStats:
    passing_probs: torch.Tensor
    max_token_probs: torch.Tensor
    out_degree_hist: Dict[int, int]


@dataclass(frozen=True)
class PrunedDag:
    """Export view of a Dag: kept vertices and kept edges with their original mass."""

    dag: Dag
    passing: torch.Tensor
    vertices: Tuple[int, ...]
    edges: Tuple[Tuple[int, int, float], ...]


def validate(dag: Dag, atol: float = PROB_TOLERANCE) -> None:
    """
    Check every Dag invariant, raising on the first violation.

    Args:
        dag: Graph to check
        atol: Allowed deviation of a row sum from one

    Raises:
        StructureError: Bad shapes or mass on an entry j <= i of E
        NormalizationError: A row of P, or a non-terminal row of E, does not sum to one
    """
    log_p, log_e = dag.log_token_probs, dag.log_transitions
    if log_p.dim() != 2 or log_p.shape[0] < 1 or log_p.shape[1] < 2:
        raise StructureError(f"token_probs must be L x |V| with L >= 1, |V| >= 2, got {tuple(log_p.shape)}")
    size = log_p.shape[0]
    if tuple(log_e.shape) != (size, size):
        raise StructureError(f"transitions must be {size} x {size}, got {tuple(log_e.shape)}")

    lower = torch.tril(torch.ones(size, size, dtype=torch.bool))
    bad = (log_e > NEG_INF) & lower
    if bad.any():
        i, j = bad.nonzero()[0].tolist()
        raise StructureError(f"transition E[{i + 1}][{j + 1}] has mass but {j + 1} <= {i + 1}")

    token_sums = torch.logsumexp(log_p.double(), dim=1).exp()
    for row, total in enumerate(token_sums.tolist()):
        if not abs(total - 1.0) <= atol:
            raise NormalizationError(f"token_probs row {row + 1} sums to {total!r}")

    if size > 1:
        edge_sums = torch.logsumexp(log_e[:-1].double(), dim=1).exp()
        for row, total in enumerate(edge_sums.tolist()):
            if not abs(total - 1.0) <= atol:
                raise NormalizationError(f"transitions row {row + 1} sums to {total!r}")


def passing_probs(dag: Dag) -> torch.Tensor:
    """
    Probability that a random walk under E visits each vertex.

    r[1] = 1 and r[u] = sum_{v<u} r[v] E[v][u]; computed in log space.
    """
    log_e = dag.log_transitions.detach().double()
    size = log_e.shape[0]
    log_r: List[torch.Tensor] = [torch.tensor(0.0, dtype=torch.float64)]
    for u in range(1, size):
        prev = torch.stack(log_r)
        log_r.append(torch.logsumexp(prev + log_e[:u, u], dim=0))
    return torch.stack(log_r).exp()


def select_by_mass(weighted: Sequence[Tuple[int, float]], mass: float) -> List[Tuple[int, float]]:
    """Most probable items whose cumulative probability first reaches ``mass``."""
    ranked = sorted(weighted, key=lambda item: (-item[1], item[0]))
    kept = []
    total = 0.0
    for item in ranked:
        kept.append(item)
        total += item[1]
        if total >= mass - PROB_TOLERANCE:
            break
    return kept


def prune_for_export(source: Union[Dag, PrunedDag], min_passing: float, edge_mass: float) -> PrunedDag:
    """
    Drop rarely visited vertices and low-mass edges for rendering.

    Vertices 1 and L are always kept. Edge selection is per vertex: the most
    probable outgoing edges (towards kept vertices) until their cumulative
    probability reaches ``edge_mass``. Accepts a previous view, in which case
    only its vertices and edges are candidates, so pruning is idempotent.
    """
    if isinstance(source, PrunedDag):
        dag, passing = source.dag, source.passing
        candidates = list(source.vertices)
        candidate_edges = {(u, v): p for u, v, p in source.edges}
    else:
        dag = source.detach()
        passing = passing_probs(dag)
        candidates = list(range(dag.graph_size))
        probs = dag.transitions
        candidate_edges = {
            (u, v): float(probs[u, v])
            for u in range(dag.graph_size)
            for v in range(u + 1, dag.graph_size)
            if probs[u, v] > 0
        }

    last = dag.graph_size - 1
    kept = tuple(
        u for u in candidates
        if u in (0, last) or float(passing[u]) + PROB_TOLERANCE >= min_passing
    )
    kept_set = set(kept)

    edges: List[Tuple[int, int, float]] = []
    for u in kept:
        outgoing = [(v, p) for (src, v), p in candidate_edges.items() if src == u and v in kept_set]
        for v, p in sorted(select_by_mass(outgoing, edge_mass)):
            edges.append((u, v, p))
    return PrunedDag(dag=dag, passing=passing, vertices=kept, edges=tuple(edges))


def dag_stats(dag: Dag, passing_floor: float, edge_mass: float, merge_same_token: bool) -> DagStats:
    """
    Passing probabilities, per-vertex max token probability and out-degree histogram.

    The histogram counts vertices with r[u] >= passing_floor; the degree of a
    vertex is the number of outgoing edges needed to reach ``edge_mass``, after
    optionally merging edges whose destinations share the same argmax token.
    """
    dag = dag.detach()
    passing = passing_probs(dag)
    token_probs = dag.token_probs
    max_token, argmax_token = token_probs.max(dim=1)
    probs = dag.transitions

    hist: Counter = Counter()
    for u in range(dag.graph_size):
        if float(passing[u]) + PROB_TOLERANCE < passing_floor:
            continue
        outgoing = [(v, float(probs[u, v])) for v in range(u + 1, dag.graph_size) if probs[u, v] > 0]
        if merge_same_token:
            merged: Dict[int, Tuple[int, float]] = {}
            for v, p in outgoing:
                token = int(argmax_token[v])
                first, total = merged.get(token, (v, 0.0))
                merged[token] = (first, total + p)
            outgoing = list(merged.values())
        degree = len(select_by_mass(outgoing, edge_mass)) if outgoing else 0
        hist[degree] += 1
    return DagStats(passing_probs=passing, max_token_probs=max_token, out_degree_hist=dict(hist))


def categorize_vertices(stats: DagStats) -> Counter:
    """
    Count vertices in the three analysis categories.

    ``frequent``: passing > 0.5; ``confident``: passing < 0.5 and max token
    probability > 0.5; ``unused``: passing < 0.2 and max token probability < 0.2.
    The categories do not cover every vertex.
    """
    counts: Counter = Counter()
    for r, m in zip(stats.passing_probs.tolist(), stats.max_token_probs.tolist()):
        if r > 0.5:
            counts["frequent"] += 1
        elif r < 0.5 and m > 0.5:
            counts["confident"] += 1
        if r < 0.2 and m < 0.2:
            counts["unused"] += 1
    counts["total"] += len(stats.passing_probs)
    return counts
