#!/usr/bin/env python3
"""
Synthetic multi-modal translation task, vocabulary and corpus I/O.

Each source is a digit sequence. Its references are every combination of a
synonym map (digit d becomes "x"+d, "y"+d, ...) and an order transform
(forward, reverse, ...), so one source has several equally valid targets.
Targets are wrapped with BOS/EOS when loaded; sources are not.
"""

import itertools
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ParseError, UnknownTokenError
from .parser import CorpusParser

MASK, BOS, EOS, PAD = 0, 1, 2, 3
RESERVED = ("<mask>", "<bos>", "<eos>", "<pad>")
SPECIALS = (MASK, BOS, EOS, PAD)

SYNONYM_PREFIXES = "xyzwuv"
ORDER_TRANSFORMS = {
    "forward": lambda seq: list(seq),
    "reverse": lambda seq: list(reversed(seq)),
    "rotate": lambda seq: list(seq[1:]) + list(seq[:1]),
}

Sentence = Tuple[int, ...]


@dataclass(frozen=True)
class Vocab:
    tokens: Tuple[str, ...]
    index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.tokens[:len(RESERVED)]) != RESERVED:
            raise ConfigError(f"vocabulary must start with the reserved tokens {RESERVED}")
        index = {token: i for i, token in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise ConfigError("vocabulary tokens must be unique")
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, words: Sequence[str], line_number: int = None) -> List[int]:
        ids = []
        for word in words:
            if word in RESERVED:
                raise ParseError(f"reserved token {word!r} in corpus text", line_number)
            if word not in self.index:
                raise UnknownTokenError(f"unknown token {word!r}", line_number)
            ids.append(self.index[word])
        return ids

    def decode(self, ids: Iterable[int], strip: bool = True) -> List[str]:
        return [self.tokens[i] for i in ids if not (strip and i in SPECIALS)]

    def save(self, path: Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("".join(f"{token}\n" for token in self.tokens))

    @classmethod
    def load(cls, path: Path) -> "Vocab":
        with open(path, "r", encoding="utf-8") as f:
            return cls(tuple(CorpusParser.parse_vocab(f.read())))


@dataclass(frozen=True)
class ParallelCorpus:
    """Source/target index pairs; a source may repeat with different targets."""

    pairs: Tuple[Tuple[Sentence, Sentence], ...]

    def __len__(self) -> int:
        return len(self.pairs)

    def grouped(self) -> "OrderedDict[Sentence, List[Sentence]]":
        """Distinct sources in first-appearance order with all of their targets."""
        groups: "OrderedDict[Sentence, List[Sentence]]" = OrderedDict()
        for source, target in self.pairs:
            groups.setdefault(source, [])
            if target not in groups[source]:
                groups[source].append(target)
        return groups


@dataclass(frozen=True)
class SynthTaskConfig:
    alphabet_size: int = 10
    min_length: int = 3
    max_length: int = 8
    synonym_maps: int = 2
    orders: Tuple[str, ...] = ("forward", "reverse")
    train_sources: int = 2000
    eval_sources: int = 200
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "orders", tuple(self.orders))
        if not 2 <= self.alphabet_size <= 10:
            raise ConfigError(f"alphabet_size must lie in [2, 10], got {self.alphabet_size}")
        if not 1 <= self.min_length <= self.max_length:
            raise ConfigError(f"invalid length range [{self.min_length}, {self.max_length}]")
        if not 1 <= self.synonym_maps <= len(SYNONYM_PREFIXES):
            raise ConfigError(f"synonym_maps must lie in [1, {len(SYNONYM_PREFIXES)}]")
        unknown = [o for o in self.orders if o not in ORDER_TRANSFORMS]
        if unknown or len(set(self.orders)) != len(self.orders):
            raise ConfigError(f"orders must be distinct names from {sorted(ORDER_TRANSFORMS)}, got {self.orders}")
        if self.references_per_source < 2:
            raise ConfigError("the task needs at least two references per source (maps x orders >= 2)")
        if self.train_sources < 1 or self.eval_sources < 0:
            raise ConfigError("train_sources must be >= 1 and eval_sources >= 0")

    @property
    def references_per_source(self) -> int:
        return self.synonym_maps * len(self.orders)


@dataclass(frozen=True)
class SyntheticTask:
    vocab: Vocab
    train: ParallelCorpus
    eval: ParallelCorpus


def references_for(source: Sequence[str], cfg: SynthTaskConfig) -> List[List[str]]:
    """Every order(map(source)) combination, maps outermost."""
    refs = []
    for prefix, order in itertools.product(SYNONYM_PREFIXES[:cfg.synonym_maps], cfg.orders):
        refs.append(ORDER_TRANSFORMS[order]([prefix + d for d in source]))
    return refs


def synthetic_vocab(cfg: SynthTaskConfig) -> Vocab:
    digits = [str(d) for d in range(cfg.alphabet_size)]
    words = digits + [p + d for p in SYNONYM_PREFIXES[:cfg.synonym_maps] for d in digits]
    return Vocab(RESERVED + tuple(sorted(words)))


def gen_synthetic(cfg: SynthTaskConfig) -> SyntheticTask:
    """
    Generate disjoint train/eval sources with their full reference sets.

    Sources whose transforms collide (e.g. palindromes under reverse) are
    redrawn so every source has exactly maps x orders distinct references.
    Both corpora list every (source, reference) pair; the trainer draws one
    reference per source per epoch.
    """
    rng = np.random.default_rng(cfg.seed)
    vocab = synthetic_vocab(cfg)
    wanted = cfg.train_sources + cfg.eval_sources
    seen = set()
    sources: List[List[str]] = []
    attempts = 0
    while len(sources) < wanted:
        attempts += 1
        if attempts > 100 * wanted + 1000:
            raise ConfigError("could not draw enough distinct multi-modal sources; widen the alphabet or lengths")
        length = int(rng.integers(cfg.min_length, cfg.max_length + 1))
        source = [str(int(d)) for d in rng.integers(0, cfg.alphabet_size, size=length)]
        key = tuple(source)
        if key in seen:
            continue
        refs = references_for(source, cfg)
        if len({tuple(r) for r in refs}) != cfg.references_per_source:
            continue
        seen.add(key)
        sources.append(source)

    def corpus(chunk: List[List[str]]) -> ParallelCorpus:
        pairs = []
        for source in chunk:
            src_ids = tuple(vocab.encode(source))
            for ref in references_for(source, cfg):
                pairs.append((src_ids, (BOS,) + tuple(vocab.encode(ref)) + (EOS,)))
        return ParallelCorpus(tuple(pairs))

    return SyntheticTask(
        vocab=vocab,
        train=corpus(sources[:cfg.train_sources]),
        eval=corpus(sources[cfg.train_sources:]),
    )


def format_pair(vocab: Vocab, source: Sentence, target: Sentence) -> str:
    return " ".join(vocab.decode(source)) + "\t" + " ".join(vocab.decode(target))


def write_corpus(corpus: ParallelCorpus, vocab: Vocab, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for source, target in corpus.pairs:
            f.write(format_pair(vocab, source, target) + "\n")


def load_corpus(path: Path, vocab: Vocab) -> ParallelCorpus:
    """
    Read a corpus TSV against a closed vocabulary.

    Raises:
        ParseError: Malformed line (with its line number)
        UnknownTokenError: Token outside the vocabulary
    """
    with open(path, "r", encoding="utf-8", newline="") as f:
        content = f.read()
    pairs = []
    lines = content.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for number, line in enumerate(lines, start=1):
        source, target = CorpusParser.parse_line(line, number)
        pairs.append((
            tuple(vocab.encode(source, number)),
            (BOS,) + tuple(vocab.encode(target, number)) + (EOS,),
        ))
    return ParallelCorpus(tuple(pairs))


def load_source_lines(path: Path, vocab: Vocab) -> List[Sentence]:
    """Source-only input for decoding: one whitespace-tokenized sentence per line."""
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    sentences = []
    for number, line in enumerate(lines, start=1):
        words = line.split("\t")[0].split()
        if not words:
            raise ParseError("empty source line", number)
        sentences.append(tuple(vocab.encode(words, number)))
    return sentences


def build_vocab(paths: Sequence[Path]) -> Vocab:
    """Reserved tokens first, then every corpus token sorted lexicographically."""
    words = set()
    for path in paths:
        with open(path, "r", encoding="utf-8") as f:
            for source, target in CorpusParser.parse_corpus(f.read()):
                words.update(source)
                words.update(target)
    clash = words.intersection(RESERVED)
    if clash:
        raise ParseError(f"reserved tokens in corpus text: {sorted(clash)}")
    return Vocab(RESERVED + tuple(sorted(words)))
