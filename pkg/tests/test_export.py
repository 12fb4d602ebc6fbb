import json

import pytest

from src.dag import prune_for_export
from src.export import dumps_export_json, to_dot, to_export_json

VOCAB = ["a", "b", 'say "hi"']


def test_json_is_one_based(d1):
    doc = to_export_json(prune_for_export(d1, min_passing=0.55, edge_mass=0.9), VOCAB, top_k=2)
    assert doc["L"] == 4
    assert [v["id"] for v in doc["vertices"]] == [1, 3, 4]
    assert {(e["from"], e["to"]) for e in doc["edges"]} == {(1, 3), (1, 4), (3, 4)}
    assert doc["vertices"][1]["passing"] == pytest.approx(0.575)


def test_top_tokens_sorted(d1):
    doc = to_export_json(prune_for_export(d1, 0.0, 1.0), VOCAB, top_k=2)
    first = doc["vertices"][0]["top_tokens"]
    assert [t["token"] for t in first] == ["a", "b"]
    assert first[0]["p"] == pytest.approx(0.9)


def test_top_k_larger_than_vocab(d1):
    doc = to_export_json(prune_for_export(d1, 0.0, 1.0), VOCAB, top_k=10)
    assert all(len(v["top_tokens"]) == 3 for v in doc["vertices"])


def test_dumps_is_valid_json(d1):
    text = dumps_export_json(prune_for_export(d1, 0.0, 1.0), VOCAB)
    assert json.loads(text)["vocab"] == VOCAB
    assert text.endswith("\n")


def test_dot_lists_kept_vertices_and_edges(d1):
    dot = to_dot(prune_for_export(d1, min_passing=0.55, edge_mass=0.9), VOCAB)
    assert dot.startswith("digraph dag {")
    assert "v2 [" not in dot
    assert "v1 -> v3" in dot and "v3 -> v4" in dot
    assert 'say \\"hi\\"' in dot
