#!/usr/bin/env python3
"""
Inference strategies over a Dag: greedy, lookahead, prefix-merging beam
search with optional n-gram fusion, and nucleus sampling.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
import torch

from .dag import NEG_INF, PROB_TOLERANCE, Dag
from .dp import loss_marginal
from .errors import ConfigError, EmptyResultError
from .ngram import NgramLm, score_ngram


@dataclass(frozen=True)
class DecodeConfig:
    alpha: float = 1.0
    gamma: float = 0.1
    beam_size: int = 200
    per_length_cap: int = 10
    expand_top_k: int = 5
    top_p: float = 0.8
    temperature: float = 1.0

    def __post_init__(self):
        if self.beam_size < 1 or self.per_length_cap < 1 or self.expand_top_k < 1:
            raise ConfigError("beam_size, per_length_cap and expand_top_k must all be >= 1")
        if not 0.0 < self.top_p <= 1.0:
            raise ConfigError(f"top_p must lie in (0, 1], got {self.top_p}")
        if not self.temperature > 0.0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")


@dataclass
class Beam:
    """A prefix with the log mass of its paths, per end vertex."""

    prefix: Tuple[int, ...]
    end_scores: Dict[int, float] = field(default_factory=dict)
    lm_score: float = 0.0

    @property
    def total(self) -> float:
        """log sum_i s_i(B)."""
        if not self.end_scores:
            return NEG_INF
        return float(torch.logsumexp(torch.tensor(list(self.end_scores.values()), dtype=torch.float64), dim=0))

    def add(self, vertex: int, log_mass: float) -> None:
        current = self.end_scores.get(vertex)
        self.end_scores[vertex] = log_mass if current is None else float(np.logaddexp(current, log_mass))


def _walk(tokens: torch.Tensor, edges: torch.Tensor, size: int) -> List[int]:
    vertex = 0
    output = [int(tokens[0])]
    while vertex != size - 1:
        vertex = int(edges[vertex])
        output.append(int(tokens[vertex]))
    return output


def decode_greedy(dag: Dag) -> List[int]:
    """Argmax token at each vertex, argmax transition out of it, walking from vertex 1 to L."""
    tokens = dag.log_token_probs.detach().argmax(dim=1)
    edges = dag.log_transitions.detach().argmax(dim=1)
    return _walk(tokens, edges, dag.graph_size)


def decode_lookahead(dag: Dag) -> List[int]:
    """Greedy walk whose transition rows are reweighted by the destination's max token probability."""
    log_p = dag.log_token_probs.detach()
    joint = dag.log_transitions.detach() + log_p.amax(dim=1).unsqueeze(0)
    return _walk(log_p.argmax(dim=1), joint.argmax(dim=1), dag.graph_size)


def _fused_score(log_prob: float, lm_score: float, length: int, cfg: DecodeConfig, gamma: float) -> float:
    return (log_prob + gamma * lm_score) / (length ** cfg.alpha)


def _candidates(dag: Dag, vertex: int, k: int) -> List[Tuple[int, int, float]]:
    """Top-k (next vertex, token) pairs by E[i][v] P[v][t]; ties toward smaller v, then t."""
    size, vocab = dag.graph_size, dag.vocab_size
    if vertex >= size - 1:
        return []
    joint = dag.log_transitions[vertex, vertex + 1:].unsqueeze(1) + dag.log_token_probs[vertex + 1:]
    flat = joint.reshape(-1)
    values, order = torch.sort(flat, descending=True, stable=True)
    picked = []
    for value, index in zip(values.tolist()[:k], order.tolist()[:k]):
        if value == NEG_INF:
            break
        picked.append((vertex + 1 + index // vocab, index % vocab, value))
    return picked


def decode_beam(dag: Dag, cfg: DecodeConfig, lm: Optional[NgramLm] = None) -> List[Tuple[List[int], float]]:
    """
    Prefix-merging beam search.

    Beams are grouped by the vertex their paths end at. At each vertex the
    group is ranked by (log P(Y|X) + gamma log P_lm(Y)) / |Y|^alpha, capped per
    prefix length and overall, then expanded with the vertex's top joint
    candidates; expansions that land on an existing (prefix, vertex) add their
    mass to it.

    Args:
        dag: Graph to decode
        cfg: Search sizes and scoring weights
        lm: Optional n-gram model; without it gamma is treated as 0

    Returns:
        Complete hypotheses (ending at vertex L) with their scores, best first
    """
    dag = dag.detach()
    gamma = cfg.gamma if lm is not None else 0.0
    size = dag.graph_size
    beams: Dict[Tuple[int, ...], Beam] = {}
    groups: List[Set[Tuple[int, ...]]] = [set() for _ in range(size)]

    values, order = torch.sort(dag.log_token_probs[0], descending=True, stable=True)
    for value, token in zip(values.tolist()[:cfg.expand_top_k], order.tolist()[:cfg.expand_top_k]):
        if value == NEG_INF:
            break
        beam = Beam(prefix=(token,))
        beam.add(0, value)
        if lm is not None:
            beam.lm_score = lm.log_prob(lm.context(()), token)
        beams[beam.prefix] = beam
        groups[0].add(beam.prefix)

    def rank_key(prefix: Tuple[int, ...]):
        beam = beams[prefix]
        return (-_fused_score(beam.total, beam.lm_score, len(prefix), cfg, gamma), prefix)

    for vertex in range(size - 1):
        ranked = sorted(groups[vertex], key=rank_key)
        per_length: Dict[int, int] = {}
        survivors = []
        for prefix in ranked:
            seen = per_length.get(len(prefix), 0)
            if seen < cfg.per_length_cap:
                per_length[len(prefix)] = seen + 1
                survivors.append(prefix)
        survivors = survivors[:cfg.beam_size]
        kept = set(survivors)
        for prefix in ranked:
            if prefix not in kept:
                del beams[prefix].end_scores[vertex]
        groups[vertex] = kept

        candidates = _candidates(dag, vertex, cfg.expand_top_k)
        for prefix in survivors:
            beam = beams[prefix]
            mass = beam.end_scores[vertex]
            for nxt, token, joint in candidates:
                extended = prefix + (token,)
                child = beams.get(extended)
                if child is None:
                    child = Beam(prefix=extended)
                    if lm is not None:
                        child.lm_score = beam.lm_score + lm.log_prob(lm.context(prefix), token)
                    beams[extended] = child
                child.add(nxt, mass + joint)
                groups[nxt].add(extended)

    finished = []
    for prefix in groups[size - 1]:
        beam = beams[prefix]
        score = _fused_score(beam.end_scores[size - 1], beam.lm_score, len(prefix), cfg, gamma)
        finished.append((list(prefix), score))
    if not finished:
        raise EmptyResultError("no beam reached the terminal vertex")
    finished.sort(key=lambda item: (-item[1], item[0]))
    return finished


def beam_score(dag: Dag, tokens: Sequence[int], cfg: DecodeConfig, lm: Optional[NgramLm] = None) -> float:
    """Beam-search score of a complete output, recomputed from the exact marginal likelihood."""
    log_prob = -float(loss_marginal(dag.detach(), tokens).loss)
    gamma = cfg.gamma if lm is not None else 0.0
    lm_score = score_ngram(lm, tokens) if lm is not None else 0.0
    return _fused_score(log_prob, lm_score, len(tokens), cfg, gamma)


def nucleus_distribution(log_probs: torch.Tensor, top_p: float, temperature: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Temperature-scaled, nucleus-filtered distribution.

    Probabilities are raised to 1/temperature and renormalized; the nucleus is
    the smallest prefix of the sorted distribution with mass >= top_p.

    Returns:
        (indices, probabilities) of the kept entries, probabilities summing to one
    """
    scaled = torch.softmax(log_probs.detach().double() / temperature, dim=0)
    probs, order = torch.sort(scaled, descending=True, stable=True)
    cumulative = torch.cumsum(probs, dim=0)
    keep = int((cumulative < top_p - PROB_TOLERANCE).sum()) + 1
    keep = max(1, min(keep, int((probs > 0).sum())))
    kept = probs[:keep].numpy()
    return order[:keep].numpy(), kept / kept.sum()


def _sample(log_probs: torch.Tensor, cfg: DecodeConfig, rng: np.random.Generator) -> int:
    indices, probs = nucleus_distribution(log_probs, cfg.top_p, cfg.temperature)
    return int(indices[rng.choice(len(indices), p=probs)])


def decode_sample(dag: Dag, cfg: DecodeConfig, rng: np.random.Generator) -> List[int]:
    """Nucleus sampling: first token at vertex 1, then next vertex and its token, until vertex L."""
    dag = dag.detach()
    vertex = 0
    output = [_sample(dag.log_token_probs[0], cfg, rng)]
    while vertex != dag.graph_size - 1:
        vertex = _sample(dag.log_transitions[vertex], cfg, rng)
        output.append(_sample(dag.log_token_probs[vertex], cfg, rng))
    return output


def strip_special(tokens: Sequence[int], specials: Sequence[int]) -> List[int]:
    """Drop reserved tokens (BOS, EOS, ...) from a decoded sequence."""
    special = set(specials)
    return [t for t in tokens if t not in special]


STRATEGIES = ("greedy", "lookahead", "beam", "sample")


def decode(
    dag: Dag,
    strategy: str,
    cfg: DecodeConfig,
    lm: Optional[NgramLm] = None,
    rng: Optional[np.random.Generator] = None,
) -> List[int]:
    """One output sequence with the named strategy."""
    if strategy == "greedy":
        return decode_greedy(dag)
    if strategy == "lookahead":
        return decode_lookahead(dag)
    if strategy == "beam":
        return decode_beam(dag, cfg, lm)[0][0]
    if strategy == "sample":
        if rng is None:
            raise ConfigError("sampling needs a seeded generator")
        return decode_sample(dag, cfg, rng)
    raise ConfigError(f"unknown decoding strategy {strategy!r}; expected one of {STRATEGIES}")
