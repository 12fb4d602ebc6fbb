#!/usr/bin/env python3
"""
Rendering of pruned DAG views as JSON and Graphviz DOT.

Vertex ids in both formats are 1-based.
"""

import json
from typing import Dict, List, Sequence

from .dag import PrunedDag


def _top_tokens(view: PrunedDag, vertex: int, vocab: Sequence[str], top_k: int) -> List[Dict[str, object]]:
    probs = view.dag.token_probs[vertex]
    k = min(top_k, probs.shape[0])
    values, indices = probs.sort(descending=True, stable=True)
    return [{"token": vocab[int(i)], "p": float(p)} for p, i in zip(values[:k], indices[:k])]


def to_export_json(view: PrunedDag, vocab: Sequence[str], top_k: int = 3) -> Dict[str, object]:
    """
    Args:
        view: Pruned graph from ``prune_for_export``
        vocab: Token strings indexed by token id
        top_k: Number of tokens listed per vertex

    Returns:
        Mapping with keys L, vocab, vertices, edges
    """
    return {
        "L": view.dag.graph_size,
        "vocab": list(vocab),
        "vertices": [
            {
                "id": u + 1,
                "passing": float(view.passing[u]),
                "top_tokens": _top_tokens(view, u, vocab, top_k),
            }
            for u in view.vertices
        ],
        "edges": [{"from": u + 1, "to": v + 1, "p": p} for u, v, p in view.edges],
    }


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def to_dot(view: PrunedDag, vocab: Sequence[str], top_k: int = 3) -> str:
    """DOT digraph; vertex labels list the top-k tokens, edge labels the transition probability."""
    lines = ["digraph dag {", "  rankdir=LR;", "  node [shape=box];"]
    for u in view.vertices:
        tokens = "\\n".join(
            f"{_dot_escape(str(t['token']))} {t['p']:.2f}" for t in _top_tokens(view, u, vocab, top_k)
        )
        lines.append(f'  v{u + 1} [label="v{u + 1}\\n{tokens}"];')
    for u, v, p in view.edges:
        lines.append(f'  v{u + 1} -> v{v + 1} [label="{p:.2f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def dumps_export_json(view: PrunedDag, vocab: Sequence[str], top_k: int = 3) -> str:
    return json.dumps(to_export_json(view, vocab, top_k), indent=2, sort_keys=True) + "\n"
