#!/usr/bin/env python3
"""
Evaluation metrics: corpus BLEU-4 (single and multi-reference), pairwise BLEU
for sample diversity, length-bucketed BLEU, token accuracy under the best
assignment and posterior entropy.

Sentences are token sequences; a plain string is split on whitespace.
"""

import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Dict, Hashable, Sequence, Tuple, Union

import torch

from .dag import Dag
from .dp import loss_max, posteriors
from .errors import MetricError

MAX_ORDER = 4

Sentence = Union[str, Sequence[Hashable]]


@dataclass(frozen=True)
class BleuResult:
    score: float
    precisions: Tuple[float, ...]
    brevity_penalty: float
    hyp_length: int
    ref_length: int

    def to_dict(self) -> dict:
        values = asdict(self)
        values["precisions"] = list(self.precisions)
        return values


def _tokens(sentence: Sentence) -> Tuple[Hashable, ...]:
    return tuple(sentence.split()) if isinstance(sentence, str) else tuple(sentence)


def _ngrams(tokens: Tuple[Hashable, ...], n: int) -> Counter:
    return Counter(tokens[i:i + n] for i in range(len(tokens) - n + 1))


def _closest_length(hyp_length: int, ref_lengths: Sequence[int]) -> int:
    return min(ref_lengths, key=lambda r: (abs(r - hyp_length), r))


def _corpus_bleu(hypotheses: Sequence[Sentence], reference_sets: Sequence[Sequence[Sentence]],
                 smooth: bool, max_order: int = MAX_ORDER) -> BleuResult:
    if len(hypotheses) != len(reference_sets):
        raise MetricError(f"{len(hypotheses)} hypotheses but {len(reference_sets)} references")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_length = ref_length = 0
    for hypothesis, references in zip(hypotheses, reference_sets):
        if not references:
            raise MetricError("every hypothesis needs at least one reference")
        hyp = _tokens(hypothesis)
        refs = [_tokens(r) for r in references]
        hyp_length += len(hyp)
        ref_length += _closest_length(len(hyp), [len(r) for r in refs])
        for n in range(1, max_order + 1):
            hyp_counts = _ngrams(hyp, n)
            max_ref = Counter()
            for ref in refs:
                max_ref |= _ngrams(ref, n)
            matches[n - 1] += sum(min(count, max_ref[gram]) for gram, count in hyp_counts.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)

    precisions = []
    for n, (matched, total) in enumerate(zip(matches, totals), start=1):
        if smooth and n > 1:
            precisions.append((matched + 1) / (total + 1))
        else:
            precisions.append(matched / total if total else 0.0)

    if hyp_length == 0:
        brevity_penalty = 0.0
    elif hyp_length < ref_length:
        brevity_penalty = math.exp(1 - ref_length / hyp_length)
    else:
        brevity_penalty = 1.0

    if min(precisions) <= 0.0:
        score = 0.0
    else:
        score = brevity_penalty * math.exp(sum(math.log(p) for p in precisions) / max_order)
    return BleuResult(score, tuple(precisions), brevity_penalty, hyp_length, ref_length)


def bleu(hypotheses: Sequence[Sentence], references: Sequence[Sentence], smooth: bool = False) -> BleuResult:
    """
    Corpus-level BLEU-4 with clipped counts and brevity penalty.

    Raises:
        MetricError: Lists of different lengths
    """
    return _corpus_bleu(hypotheses, [[r] for r in references], smooth)


def multi_ref_bleu(hypotheses: Sequence[Sentence], reference_sets: Sequence[Sequence[Sentence]],
                   smooth: bool = False) -> BleuResult:
    """BLEU clipping each n-gram by its maximum count over a segment's references."""
    return _corpus_bleu(hypotheses, reference_sets, smooth)


def pairwise_bleu(sample_sets: Sequence[Sequence[Sentence]], smooth: bool = False) -> float:
    """
    Mean BLEU over ordered sample pairs (i != j), sample j serving as the
    reference of sample i across all sources. Lower means more diverse.
    """
    if not sample_sets:
        raise MetricError("pairwise BLEU needs at least one source")
    k = len(sample_sets[0])
    if k < 2 or any(len(samples) != k for samples in sample_sets):
        raise MetricError(f"pairwise BLEU needs the same k >= 2 samples for every source, got {k}")
    scores = []
    for i in range(k):
        for j in range(k):
            if i != j:
                hyps = [samples[i] for samples in sample_sets]
                refs = [samples[j] for samples in sample_sets]
                scores.append(bleu(hyps, refs, smooth).score)
    return sum(scores) / len(scores)


def bucketed_bleu(hypotheses: Sequence[Sentence], references: Sequence[Sentence],
                  edges: Sequence[float], smooth: bool = False) -> Dict[str, Dict[str, object]]:
    """
    BLEU per reference-length bucket [edges[i], edges[i+1]).

    Returns:
        Mapping "[lo,hi)" -> {"count", "bleu"}; empty buckets are absent
    """
    if len(hypotheses) != len(references):
        raise MetricError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise MetricError(f"bucket edges must increase strictly: {list(edges)}")
    buckets: Dict[str, Dict[str, object]] = {}
    for lo, hi in zip(edges, edges[1:]):
        members = [i for i, ref in enumerate(references) if lo <= len(_tokens(ref)) < hi]
        if not members:
            continue
        result = bleu([hypotheses[i] for i in members], [references[i] for i in members], smooth)
        buckets[f"[{_edge(lo)},{_edge(hi)})"] = {"count": len(members), "bleu": result.to_dict()}
    return buckets


def _edge(value: float) -> str:
    return "inf" if math.isinf(value) else str(int(value))


def token_accuracy_best_assignment(dag: Dag, target: Sequence[int]) -> float:
    """Fraction of target tokens equal to the argmax token of their best-path vertex."""
    path = loss_max(dag.detach(), target).best_path
    argmax_tokens = dag.log_token_probs.detach().argmax(dim=1)
    hits = sum(1 for vertex, y in zip(path, target) if int(argmax_tokens[vertex]) == int(y))
    return hits / len(target)


def posterior_entropy(dag: Dag, target: Sequence[int]) -> float:
    """Mean over target positions of the entropy (nats) of gamma(i, .)."""
    gamma = posteriors(dag, target).gamma
    entropy = -torch.special.xlogy(gamma, gamma).sum(dim=1)
    return float(entropy.mean())


def exact_match(hypotheses: Sequence[Sentence], reference_sets: Sequence[Sequence[Sentence]]) -> float:
    """Fraction of hypotheses equal to at least one of their references."""
    if len(hypotheses) != len(reference_sets):
        raise MetricError(f"{len(hypotheses)} hypotheses but {len(reference_sets)} reference sets")
    if not hypotheses:
        return 0.0
    hits = sum(1 for hyp, refs in zip(hypotheses, reference_sets)
               if _tokens(hyp) in {_tokens(r) for r in refs})
    return hits / len(hypotheses)


def distinct_valid_fraction(sample_sets: Sequence[Sequence[Sentence]],
                            reference_sets: Sequence[Sequence[Sentence]], min_distinct: int = 2) -> float:
    """Fraction of sources whose samples cover at least ``min_distinct`` different valid references."""
    if len(sample_sets) != len(reference_sets):
        raise MetricError(f"{len(sample_sets)} sample sets but {len(reference_sets)} reference sets")
    if not sample_sets:
        return 0.0
    covered = 0
    for samples, refs in zip(sample_sets, reference_sets):
        valid = {_tokens(r) for r in refs}
        if len({_tokens(s) for s in samples} & valid) >= min_distinct:
            covered += 1
    return covered / len(sample_sets)
