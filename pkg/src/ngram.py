#!/usr/bin/env python3
"""
Small n-gram language model with stupid-backoff scoring, used to fuse an LM
term into beam search scores.

Tokens are integer indices. Each sentence is padded with ``order - 1`` start
sentinels and one end sentinel when counting.
"""

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence, Tuple

from .errors import CheckpointError, ConfigError, EmptyCorpusError, ParseError, VersionMismatchError

START = -1
END = -2
DEFAULT_BACKOFF = 0.4

LM_MAGIC = "#ngram-lm"
LM_VERSION = 1

Gram = Tuple[int, ...]


@dataclass
class NgramLm:
    order: int
    counts: Dict[int, Counter] = field(default_factory=dict)
    backoff_factor: float = DEFAULT_BACKOFF
    vocab_size: Optional[int] = None

    def __post_init__(self):
        if self.order < 1:
            raise ConfigError(f"n-gram order must be >= 1, got {self.order}")
        if not 0.0 < self.backoff_factor < 1.0:
            raise ConfigError(f"backoff factor must lie in (0, 1), got {self.backoff_factor}")
        if self.vocab_size is not None and self.vocab_size < 1:
            raise ConfigError(f"vocabulary size must be >= 1, got {self.vocab_size}")
        for k in range(1, self.order + 1):
            self.counts.setdefault(k, Counter())
        unigrams = self.counts[1]
        self._total = sum(c for (w,), c in unigrams.items() if w != START)
        # add-one mass is spread over the vocabulary; without one, over the observed types plus one
        if self.vocab_size is not None:
            self._types = self.vocab_size
        else:
            self._types = sum(1 for (w,) in unigrams if w != START) + 1

    def context(self, prefix: Sequence[int]) -> Gram:
        """History used to predict the token following ``prefix``."""
        if self.order == 1:
            return ()
        padded = (START,) * (self.order - 1) + tuple(prefix)
        return padded[-(self.order - 1):]

    def _unigram(self, token: int) -> float:
        return (self.counts[1].get((token,), 0) + 1) / (self._total + self._types)

    def prob(self, history: Sequence[int], token: int) -> float:
        """Stupid-backoff score S(token | history); add-one smoothing at the unigram level."""
        history = tuple(history)[-(self.order - 1):] if self.order > 1 else ()
        weight = 1.0
        while history:
            numerator = self.counts[len(history) + 1].get(history + (token,), 0)
            if numerator > 0:
                return weight * numerator / self.counts[len(history)][history]
            weight *= self.backoff_factor
            history = history[1:]
        return weight * self._unigram(token)

    def log_prob(self, history: Sequence[int], token: int) -> float:
        return math.log(self.prob(history, token))


def fit_ngram(
    corpus: Iterable[Sequence[int]],
    order: int,
    backoff_factor: float = DEFAULT_BACKOFF,
    vocab_size: Optional[int] = None,
) -> NgramLm:
    """Count every k-gram (k <= order) of the boundary-padded sentences."""
    if order < 1:
        raise ConfigError(f"n-gram order must be >= 1, got {order}")
    counts: Dict[int, Counter] = {k: Counter() for k in range(1, order + 1)}
    sentences = 0
    for sentence in corpus:
        sentences += 1
        padded = (START,) * (order - 1) + tuple(int(t) for t in sentence) + (END,)
        for k in range(1, order + 1):
            for i in range(len(padded) - k + 1):
                counts[k][padded[i:i + k]] += 1
    if sentences == 0:
        raise EmptyCorpusError("cannot fit an n-gram model on an empty corpus")
    return NgramLm(order=order, counts=counts, backoff_factor=backoff_factor, vocab_size=vocab_size)


def score_ngram(lm: NgramLm, tokens: Sequence[int], include_end: bool = False) -> float:
    """Sum of log S(w_t | history) over the tokens, history padded with start sentinels."""
    total = 0.0
    for t, token in enumerate(tokens):
        total += lm.log_prob(lm.context(tokens[:t]), int(token))
    if include_end:
        total += lm.log_prob(lm.context(tokens), END)
    return total


def save_ngram(lm: NgramLm, path: Path) -> None:
    """Versioned header line, then one ``k<TAB>count<TAB>gram`` record per gram."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        header = f"{LM_MAGIC}\tversion={LM_VERSION}\torder={lm.order}\tbackoff={lm.backoff_factor!r}"
        if lm.vocab_size is not None:
            header += f"\tvocab={lm.vocab_size}"
        f.write(header + "\n")
        for k in range(1, lm.order + 1):
            for gram, count in sorted(lm.counts[k].items()):
                f.write(f"{k}\t{count}\t{' '.join(str(t) for t in gram)}\n")


def load_ngram(path: Path) -> NgramLm:
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise CheckpointError(f"cannot read language model {path}: {e}") from e
    if not lines:
        raise VersionMismatchError(f"{path} is empty")
    header = lines[0].split("\t")
    if header[0] != LM_MAGIC:
        raise VersionMismatchError(f"{path} is not a language model file")
    fields = dict(item.split("=", 1) for item in header[1:])
    if int(fields.get("version", -1)) != LM_VERSION:
        raise VersionMismatchError(f"unsupported language model version {fields.get('version')}")
    order = int(fields["order"])
    counts: Dict[int, Counter] = {k: Counter() for k in range(1, order + 1)}
    for number, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError("expected k, count and gram", number)
        k, count = int(parts[0]), int(parts[1])
        gram = tuple(int(t) for t in parts[2].split())
        if len(gram) != k or k not in counts:
            raise ParseError(f"gram of length {len(gram)} filed under order {k}", number)
        counts[k][gram] = count
    vocab_size = int(fields["vocab"]) if "vocab" in fields else None
    return NgramLm(order=order, counts=counts, backoff_factor=float(fields["backoff"]), vocab_size=vocab_size)
