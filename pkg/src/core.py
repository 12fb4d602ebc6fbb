#!/usr/bin/env python3
"""
Core implementation of the command-line operations.

These functions hold the actual work behind each command (data generation,
language model fitting, training, decoding, evaluation, graph export and
statistics). They take plain arguments plus a logger and raise ``DatError``
subclasses on failure; the tools layer turns those into exit codes.
"""

import csv
import json
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .checkpoint import load_checkpoint, restore_optimizer, save_checkpoint
from .dag import categorize_vertices, dag_stats, prune_for_export
from .data import (SPECIALS, ParallelCorpus, Sentence, SynthTaskConfig, Vocab, gen_synthetic,
                   load_corpus, load_source_lines, write_corpus)
from .decoding import DecodeConfig, decode, decode_lookahead, decode_sample, strip_special
from .dp import loss_marginal
from .errors import CheckpointError, EmptyCorpusError, LengthError
from .export import dumps_export_json, to_dot
from .metrics import (bleu, bucketed_bleu, distinct_valid_fraction, exact_match, multi_ref_bleu,
                      pairwise_bleu, posterior_entropy, token_accuracy_best_assignment)
from .model import DagTransformer, ModelConfig, init_params
from .ngram import NgramLm, fit_ngram, load_ngram, save_ngram
from .training import EpochSampler, TrainConfig, build_optimizer, collate, objective, train_step

METRICS_COLUMNS = ("step", "loss", "valid_exact_match", "valid_bleu", "reference_nll", "probe_entropy")

Group = Tuple[Sentence, List[Sentence]]


def _fits(target_length: int, graph_size: int) -> bool:
    return target_length <= graph_size and not (target_length == 1 and graph_size > 1)


def _load_model(checkpoint_path: Path, vocab: Vocab, logger) -> DagTransformer:
    ckpt = load_checkpoint(checkpoint_path)
    if ckpt.model_config.vocab_size != len(vocab):
        raise CheckpointError(
            f"checkpoint vocabulary has {ckpt.model_config.vocab_size} entries, vocab file has {len(vocab)}"
        )
    logger.info("Loaded checkpoint", extra={'extra_data': {'path': str(checkpoint_path), 'step': ckpt.step}})
    model = ckpt.build_model()
    model.eval()
    return model


def gen_data_impl(cfg: SynthTaskConfig, out_dir: Path, logger) -> Dict[str, Path]:
    """
    Generate the synthetic task and write its files.

    Args:
        cfg: Task configuration (seeded)
        out_dir: Directory receiving train.tsv, eval.tsv and vocab.txt
        logger: Logger instance

    Returns:
        Mapping of artifact name to written path
    """
    task = gen_synthetic(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"train": out_dir / "train.tsv", "eval": out_dir / "eval.tsv", "vocab": out_dir / "vocab.txt"}
    write_corpus(task.train, task.vocab, paths["train"])
    write_corpus(task.eval, task.vocab, paths["eval"])
    task.vocab.save(paths["vocab"])
    logger.info(
        "Wrote synthetic task",
        extra={'extra_data': {'train_pairs': len(task.train), 'eval_pairs': len(task.eval),
                              'vocab_size': len(task.vocab), 'out_dir': str(out_dir)}}
    )
    return paths


def lm_train_impl(corpus_path: Path, vocab_path: Path, order: int, backoff: float, out_path: Path, logger) -> NgramLm:
    """Fit an n-gram model on the (BOS/EOS wrapped) target side of a corpus."""
    vocab = Vocab.load(vocab_path)
    corpus = load_corpus(corpus_path, vocab)
    lm = fit_ngram((target for _, target in corpus.pairs), order, backoff, vocab_size=len(vocab))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_ngram(lm, out_path)
    logger.info("Wrote n-gram model", extra={'extra_data': {'order': order, 'sentences': len(corpus), 'path': str(out_path)}})
    return lm


def validate(model: DagTransformer, groups: Sequence[Group], probe: Sequence[Tuple[Sentence, Sentence]]) -> Dict[str, float]:
    """
    Lookahead exact match and multi-reference BLEU over ``groups``, plus mean
    NLL and posterior entropy over the probe pairs.
    """
    dags = model.predict_dags([source for source, _ in groups])
    hyps = [strip_special(decode_lookahead(dag), SPECIALS) for dag in dags]
    refs = [[strip_special(r, SPECIALS) for r in targets] for _, targets in groups]

    losses, entropies = [], []
    for dag, (_, target) in zip(model.predict_dags([s for s, _ in probe]), probe):
        if _fits(len(target), dag.graph_size):
            losses.append(float(loss_marginal(dag, target).loss))
            entropies.append(posterior_entropy(dag, target))
    return {
        "valid_exact_match": exact_match(hyps, refs),
        "valid_bleu": multi_ref_bleu(hyps, refs, smooth=True).score,
        "reference_nll": float(np.mean(losses)) if losses else float("nan"),
        "probe_entropy": float(np.mean(entropies)) if entropies else float("nan"),
    }


def _objective(model: DagTransformer, pairs: Sequence[Tuple[Sentence, Sentence]], cfg: TrainConfig) -> float:
    return objective(model, collate(pairs), cfg) if pairs else float("nan")


def train_impl(
    corpus_path: Path,
    vocab_path: Path,
    checkpoint_path: Path,
    model_options: Dict[str, object],
    train_cfg: TrainConfig,
    logger,
    eval_path: Optional[Path] = None,
    metrics_path: Optional[Path] = None,
    resume: bool = False,
    valid_sources: int = 200,
    probe_size: int = 16,
) -> Path:
    """
    Train (or resume training) a model and write its checkpoint and metrics CSV.

    CSV columns: ``loss`` is the training objective (label smoothing, configured
    reduction) averaged over the steps since the previous row; the step-0 row
    evaluates it without glancing on the entropy pairs. ``reference_nll`` is the
    unsmoothed marginal NLL of the entropy pairs under the current model.

    Args:
        corpus_path: Training corpus TSV
        vocab_path: Vocabulary file
        checkpoint_path: Checkpoint written at every validation and at the end
        model_options: ModelConfig fields except vocab_size and seed
        train_cfg: Optimization and glancing settings
        logger: Logger instance
        eval_path: Validation corpus; the training corpus is used when omitted
        metrics_path: CSV of validation rows, defaults to the checkpoint path with .csv
        resume: Continue from the step stored in ``checkpoint_path``
        valid_sources: Number of distinct validation sources decoded per validation
        probe_size: Number of (source, first reference) pairs in the entropy probe

    Returns:
        Path of the written checkpoint
    """
    vocab = Vocab.load(vocab_path)
    corpus = load_corpus(corpus_path, vocab)
    if len(corpus) == 0:
        raise EmptyCorpusError(f"{corpus_path} has no sentence pairs")
    valid = load_corpus(eval_path, vocab) if eval_path is not None else corpus
    groups = list(valid.grouped().items())[:valid_sources]
    probe = [(source, targets[0]) for source, targets in groups[:probe_size]]
    metrics_path = metrics_path or checkpoint_path.with_suffix(".csv")

    if resume:
        ckpt = load_checkpoint(checkpoint_path)
        if ckpt.model_config.vocab_size != len(vocab):
            raise CheckpointError("checkpoint vocabulary does not match the vocab file")
        model = ckpt.build_model()
        optimizer = build_optimizer(model, train_cfg)
        restore_optimizer(model, optimizer, ckpt.optimizer_arrays)
        start_step = ckpt.step
    else:
        model_cfg = ModelConfig(vocab_size=len(vocab), seed=train_cfg.seed, **model_options)
        model = init_params(model_cfg)
        optimizer = build_optimizer(model, train_cfg)
        start_step = 0
    logger.info(
        "Starting training",
        extra={'extra_data': {'model_config': model.cfg.to_dict(), 'train_config': train_cfg.to_dict(),
                              'start_step': start_step, 'pairs': len(corpus)}}
    )
    if start_step >= train_cfg.steps:
        logger.info("Checkpoint already reached the requested step count", extra={'extra_data': {'step': start_step}})
        return checkpoint_path

    torch.manual_seed(train_cfg.seed + start_step)
    rng = np.random.default_rng([train_cfg.seed, start_step])
    batches = iter(EpochSampler(corpus, train_cfg.batch_tokens, rng))

    append = resume and metrics_path.exists()
    metrics_path.parent.mkdir(parents=True, exist_ok=True)
    with open(metrics_path, "a" if append else "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        if not append:
            writer.writerow(METRICS_COLUMNS)
            scores = validate(model, groups, probe)
            writer.writerow([0, _objective(model, probe, train_cfg), scores["valid_exact_match"],
                             scores["valid_bleu"], scores["reference_nll"], scores["probe_entropy"]])
            f.flush()

        window: List[float] = []
        for step in range(start_step + 1, train_cfg.steps + 1):
            result = train_step(model, optimizer, next(batches), train_cfg, step, rng)
            if math.isfinite(result.loss):
                window.append(result.loss)
            if step % train_cfg.log_every == 0:
                logger.info(
                    "Training step",
                    extra={'extra_data': {'step': step, 'loss': result.loss, 'lr': result.lr, 'tau': result.tau,
                                          'sentences': result.sentences, 'revealed': result.revealed}}
                )
            if step % train_cfg.valid_every == 0 or step == train_cfg.steps:
                scores = validate(model, groups, probe)
                loss = float(np.mean(window)) if window else _objective(model, probe, train_cfg)
                writer.writerow([step, loss, scores["valid_exact_match"], scores["valid_bleu"],
                                 scores["reference_nll"], scores["probe_entropy"]])
                f.flush()
                window = []
                save_checkpoint(model, checkpoint_path, step=step, optimizer=optimizer)
                logger.info("Validation", extra={'extra_data': {'step': step, 'loss': loss, **scores}})
    return checkpoint_path


def _load_lm(lm_path: Optional[Path]) -> Optional[NgramLm]:
    return load_ngram(lm_path) if lm_path is not None else None


def decode_impl(
    checkpoint_path: Path,
    vocab_path: Path,
    input_path: Path,
    output_path: Path,
    strategy: str,
    decode_cfg: DecodeConfig,
    seed: int,
    logger,
    lm_path: Optional[Path] = None,
    k: int = 1,
) -> int:
    """
    Decode every source line of ``input_path``.

    Writes one hypothesis per line; with ``sample`` each line holds ``k``
    tab-separated samples. Returns the number of lines written.
    """
    vocab = Vocab.load(vocab_path)
    model = _load_model(checkpoint_path, vocab, logger)
    lm = _load_lm(lm_path)
    sources = load_source_lines(input_path, vocab)
    rng = np.random.default_rng(seed)
    lines = []
    for dag in model.predict_dags(sources):
        if strategy == "sample":
            samples = [vocab.decode(decode_sample(dag, decode_cfg, rng)) for _ in range(k)]
            lines.append("\t".join(" ".join(s) for s in samples))
        else:
            lines.append(" ".join(vocab.decode(decode(dag, strategy, decode_cfg, lm, rng))))
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("".join(line + "\n" for line in lines))
    logger.info("Decoded", extra={'extra_data': {'strategy': strategy, 'lines': len(lines), 'output': str(output_path)}})
    return len(lines)


def eval_impl(
    checkpoint_path: Path,
    vocab_path: Path,
    corpus_path: Path,
    strategy: str,
    decode_cfg: DecodeConfig,
    seed: int,
    logger,
    lm_path: Optional[Path] = None,
    k: Optional[int] = None,
    bucket_edges: Sequence[float] = (0, 10, 20, math.inf),
    smooth: bool = False,
) -> Dict[str, object]:
    """
    Evaluation report over a corpus with possibly several references per source.

    ``bleu``, ``precisions``, ``bp`` and ``buckets`` score each hypothesis
    against the first reference of its source; ``multi_ref`` uses all of them.
    ``pairwise`` and ``distinct_valid`` use ``k`` nucleus samples per source,
    ``k`` defaulting to the number of references of the first source.
    """
    vocab = Vocab.load(vocab_path)
    model = _load_model(checkpoint_path, vocab, logger)
    lm = _load_lm(lm_path)
    corpus: ParallelCorpus = load_corpus(corpus_path, vocab)
    groups = list(corpus.grouped().items())
    if not groups:
        raise EmptyCorpusError(f"{corpus_path} has no sentence pairs")
    rng = np.random.default_rng(seed)
    dags = model.predict_dags([source for source, _ in groups])

    hyps = [vocab.decode(decode(dag, strategy, decode_cfg, lm, rng)) for dag in dags]
    ref_sets = [[vocab.decode(t) for t in targets] for _, targets in groups]
    first_refs = [refs[0] for refs in ref_sets]

    k = k or len(groups[0][1])
    samples = [[vocab.decode(decode_sample(dag, decode_cfg, rng)) for _ in range(k)] for dag in dags]

    accuracies = [
        token_accuracy_best_assignment(dag, targets[0])
        for dag, (_, targets) in zip(dags, groups) if _fits(len(targets[0]), dag.graph_size)
    ]
    single = bleu(hyps, first_refs, smooth)
    report = {
        "strategy": strategy,
        "sources": len(groups),
        "bleu": single.score,
        "precisions": list(single.precisions),
        "bp": single.brevity_penalty,
        "buckets": bucketed_bleu(hyps, first_refs, bucket_edges, smooth),
        "multi_ref": multi_ref_bleu(hyps, ref_sets, smooth).score,
        "pairwise": pairwise_bleu(samples, smooth) if k >= 2 else None,
        "samples_per_source": k,
        "distinct_valid": distinct_valid_fraction(samples, ref_sets),
        "exact_match": exact_match(hyps, ref_sets),
        "token_accuracy": float(np.mean(accuracies)) if accuracies else None,
    }
    logger.info("Evaluated", extra={'extra_data': report})
    return report


def export_dag_impl(
    checkpoint_path: Path,
    vocab_path: Path,
    source_text: Optional[str],
    out_prefix: Path,
    logger,
    min_passing: float = 0.1,
    edge_mass: float = 0.9,
    top_k: int = 3,
) -> Dict[str, Path]:
    """Decode the graph of one source, prune it and write ``<prefix>.json`` and ``<prefix>.dot``."""
    vocab = Vocab.load(vocab_path)
    model = _load_model(checkpoint_path, vocab, logger)
    words = (source_text or "").split()
    if not words:
        raise LengthError("export-dag needs a non-empty source sentence")
    dag = model.predict_dags([vocab.encode(words)])[0]
    view = prune_for_export(dag, min_passing, edge_mass)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = {"json": out_prefix.with_name(out_prefix.name + ".json"),
             "dot": out_prefix.with_name(out_prefix.name + ".dot")}
    with open(paths["json"], "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps_export_json(view, vocab.tokens, top_k))
    with open(paths["dot"], "w", encoding="utf-8", newline="\n") as f:
        f.write(to_dot(view, vocab.tokens, top_k))
    logger.info(
        "Exported graph",
        extra={'extra_data': {'graph_size': dag.graph_size, 'kept_vertices': len(view.vertices),
                              'kept_edges': len(view.edges), 'prefix': str(out_prefix)}}
    )
    return paths


def stats_impl(
    checkpoint_path: Path,
    vocab_path: Path,
    corpus_path: Path,
    logger,
    passing_floor: float = 0.2,
    edge_mass: float = 0.8,
    merge_same_token: bool = False,
) -> Dict[str, object]:
    """Aggregate graph statistics over every distinct source of a corpus."""
    vocab = Vocab.load(vocab_path)
    model = _load_model(checkpoint_path, vocab, logger)
    sources = list(load_corpus(corpus_path, vocab).grouped())
    if not sources:
        raise EmptyCorpusError(f"{corpus_path} has no sentence pairs")
    histogram: Dict[int, int] = {}
    categories: Dict[str, int] = {"frequent": 0, "confident": 0, "unused": 0, "total": 0}
    passing_sum = 0.0
    for dag in model.predict_dags(sources):
        stats = dag_stats(dag, passing_floor, edge_mass, merge_same_token)
        for degree, count in stats.out_degree_hist.items():
            histogram[degree] = histogram.get(degree, 0) + count
        for name, count in categorize_vertices(stats).items():
            categories[name] += count
        passing_sum += float(stats.passing_probs.sum())
    total = categories["total"]
    report = {
        "sources": len(sources),
        "vertices": total,
        "passing_floor": passing_floor,
        "edge_mass": edge_mass,
        "merge_same_token": merge_same_token,
        "mean_passing": passing_sum / total,
        "out_degree_hist": {str(d): histogram[d] for d in sorted(histogram)},
        "categories": {name: categories[name] / total for name in ("frequent", "confident", "unused")},
    }
    logger.info("Computed graph statistics", extra={'extra_data': report})
    return report


def write_json(report: Dict[str, object], path: Optional[Path]) -> str:
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    return text
