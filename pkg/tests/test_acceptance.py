"""
End-to-end runs on the full synthetic task. Each test trains desk-sized
models for many minutes, so they only run with ``pytest -m slow``.
"""

import csv
import json
import statistics

import pytest

from dat_cli import main

pytestmark = pytest.mark.slow

DESK_MODEL = ["--model-dim", "64", "--num-heads", "2", "--encoder-layers", "2", "--decoder-layers", "2",
              "--ffn-dim", "128", "--graph-lambda", "4", "--max-source-len", "8", "--dropout", "0.1"]
DESK_TRAIN = ["--steps", "3000", "--warmup", "300", "--batch-tokens", "2048", "--valid-every", "500",
              "--valid-sources", "100"]


@pytest.fixture(scope="module")
def task(tmp_path_factory):
    root = tmp_path_factory.mktemp("task")
    assert main(["--logs-dir", str(root / "logs"), "--seed", "1", "gen-data", "--out-dir", str(root),
                 "--min-length", "3", "--max-length", "8", "--train-sources", "2000", "--eval-sources", "200"]) == 0
    return root


def train(task, out_dir, seed, *extra):
    checkpoint = out_dir / "model.dat"
    assert main(["--logs-dir", str(out_dir / "logs"), "--seed", str(seed), "train",
                 "--corpus", str(task / "train.tsv"), "--vocab", str(task / "vocab.txt"),
                 "--eval-corpus", str(task / "eval.tsv"), "--checkpoint", str(checkpoint),
                 *DESK_MODEL, *DESK_TRAIN, *extra]) == 0
    return checkpoint


def evaluate(task, checkpoint, *extra):
    report = checkpoint.with_suffix(".json")
    assert main(["--logs-dir", str(checkpoint.parent / "logs"), "eval", "--checkpoint", str(checkpoint),
                 "--vocab", str(task / "vocab.txt"), "--corpus", str(task / "eval.tsv"),
                 "--output", str(report), *extra]) == 0
    return json.loads(report.read_text(encoding="utf-8"))


def test_multimodal_translation(task, tmp_path):
    checkpoint = train(task, tmp_path, 1)
    report = evaluate(task, checkpoint, "--decode", "lookahead", "--k", "8", "--top-p", "0.8", "--temperature", "1.0")
    assert report["exact_match"] >= 0.9
    assert report["distinct_valid"] >= 0.5

    with open(checkpoint.with_suffix(".csv"), newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert float(rows[-1]["probe_entropy"]) < float(rows[0]["probe_entropy"])


@pytest.mark.parametrize("baseline, variant", [
    (["--loss-type", "sum"], ["--loss-type", "max"]),
    (["--glancing", "adaptive"], ["--glancing", "all"]),
])
def test_ablation_direction(task, tmp_path, baseline, variant):
    scores = {"baseline": [], "variant": []}
    for seed in (1, 2, 3):
        for name, flags in (("baseline", baseline), ("variant", variant)):
            run_dir = tmp_path / f"{name}-{seed}"
            checkpoint = train(task, run_dir, seed, *flags)
            scores[name].append(evaluate(task, checkpoint, "--decode", "lookahead")["exact_match"])
    assert statistics.median(scores["baseline"]) >= statistics.median(scores["variant"]) - 0.01
