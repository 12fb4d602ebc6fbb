#!/usr/bin/env python3
"""
Toy encoder plus directed acyclic decoder.

The decoder input is a learnable graph positional embedding per vertex (plus
the embeddings of revealed glancing tokens); its output states V give the
transition matrix E = softmax(Q K^T / sqrt(d)) restricted to j > i, and the
token distributions P = softmax(V W_P^T). Both log-softmaxes run in float64
so every produced Dag meets the 1e-9 normalization invariants.
"""

import math
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence

import torch
from torch import nn

from .dag import NEG_INF, Dag
from .data import MASK, PAD
from .errors import ConfigError, LengthError
from .glancing import GlancingInput

DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    model_dim: int = 64
    num_heads: int = 2
    encoder_layers: int = 2
    decoder_layers: int = 2
    ffn_dim: int = 128
    graph_lambda: int = 4
    max_source_len: int = 64
    dropout: float = 0.1
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ConfigError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.model_dim % self.num_heads != 0:
            raise ConfigError(f"model_dim {self.model_dim} is not divisible by num_heads {self.num_heads}")
        if self.graph_lambda < 2:
            raise ConfigError(f"graph_lambda must be >= 2, got {self.graph_lambda}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.encoder_layers < 0 or self.decoder_layers < 0 or self.max_source_len < 1:
            raise ConfigError("layer counts must be >= 0 and max_source_len >= 1")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(DTYPES)}, got {self.dtype!r}")

    @property
    def graph_table_size(self) -> int:
        return self.graph_lambda * self.max_source_len

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DagBatch:
    """Padded decoder output: B x L x |V| and B x L x L log tensors plus true graph sizes."""

    log_token_probs: torch.Tensor
    log_transitions: torch.Tensor
    graph_lengths: torch.Tensor

    def dag(self, b: int) -> Dag:
        size = int(self.graph_lengths[b])
        return Dag(self.log_token_probs[b, :size], self.log_transitions[b, :size, :size])


class DagTransformer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.model_dim
        self.token_embed = nn.Embedding(cfg.vocab_size, d, padding_idx=MASK)
        self.source_pos = nn.Embedding(cfg.max_source_len, d)
        self.graph_pos = nn.Embedding(cfg.graph_table_size, d)
        self.dropout = nn.Dropout(cfg.dropout)
        self.encoder = nn.ModuleList([
            nn.TransformerEncoderLayer(d, cfg.num_heads, cfg.ffn_dim, cfg.dropout, batch_first=True, norm_first=True)
            for _ in range(cfg.encoder_layers)
        ])
        self.decoder = nn.ModuleList([
            nn.TransformerDecoderLayer(d, cfg.num_heads, cfg.ffn_dim, cfg.dropout, batch_first=True, norm_first=True)
            for _ in range(cfg.decoder_layers)
        ])
        self.encoder_norm = nn.LayerNorm(d) if cfg.encoder_layers else nn.Identity()
        self.decoder_norm = nn.LayerNorm(d) if cfg.decoder_layers else nn.Identity()
        self.query = nn.Linear(d, d, bias=False)
        self.key = nn.Linear(d, d, bias=False)
        self.token_proj = nn.Linear(d, cfg.vocab_size, bias=False)
        self.reset_parameters()

    def reset_parameters(self) -> None:
        embeddings = {self.token_embed.weight, self.source_pos.weight, self.graph_pos.weight}
        std = self.cfg.model_dim ** -0.5
        for param in self.parameters():
            if param in embeddings:
                nn.init.normal_(param, mean=0.0, std=std)
            elif param.dim() > 1:
                nn.init.xavier_uniform_(param)
        with torch.no_grad():
            self.token_embed.weight[MASK].zero_()

    def graph_lengths(self, source_lengths: torch.Tensor) -> torch.Tensor:
        return torch.clamp(source_lengths * self.cfg.graph_lambda, max=self.cfg.graph_table_size)

    def encode(self, sources: torch.Tensor):
        """
        Args:
            sources: B x N token indices padded with PAD

        Returns:
            (B x N x d encoder states, B x N padding mask)
        """
        length = sources.shape[1]
        if length > self.cfg.max_source_len:
            raise LengthError(f"source length {length} exceeds max_source_len {self.cfg.max_source_len}")
        pad_mask = sources == PAD
        positions = torch.arange(length, device=sources.device)
        x = self.dropout(self.token_embed(sources) + self.source_pos(positions))
        for layer in self.encoder:
            x = layer(x, src_key_padding_mask=pad_mask)
        return self.encoder_norm(x), pad_mask

    def decode(
        self,
        memory: torch.Tensor,
        memory_pad_mask: torch.Tensor,
        graph_lengths: torch.Tensor,
        glancing_tokens: Optional[torch.Tensor] = None,
    ) -> DagBatch:
        """
        Args:
            memory: B x N x d encoder states
            memory_pad_mask: B x N, True at padded source positions
            graph_lengths: B graph sizes L_b
            glancing_tokens: Optional B x L_max revealed tokens, MASK elsewhere

        Returns:
            DagBatch with float64 log probabilities
        """
        size = int(graph_lengths.max())
        if size > self.cfg.graph_table_size:
            raise LengthError(f"graph size {size} exceeds the positional table of {self.cfg.graph_table_size}")
        batch = memory.shape[0]
        vertices = torch.arange(size, device=memory.device)
        h = self.graph_pos(vertices).unsqueeze(0).expand(batch, size, -1)
        if glancing_tokens is not None:
            h = h + self.token_embed(glancing_tokens[:, :size])
        h = self.dropout(h)
        vertex_pad = vertices.unsqueeze(0) >= graph_lengths.unsqueeze(1)
        for layer in self.decoder:
            h = layer(h, memory, tgt_key_padding_mask=vertex_pad, memory_key_padding_mask=memory_pad_mask)
        h = self.decoder_norm(h)

        log_token_probs = torch.log_softmax(self.token_proj(h).double(), dim=-1)

        scores = (self.query(h) @ self.key(h).transpose(1, 2)).double() / math.sqrt(self.cfg.model_dim)
        allowed = (vertices.unsqueeze(0) > vertices.unsqueeze(1)).unsqueeze(0) & ~vertex_pad.unsqueeze(1)
        has_successor = allowed.any(dim=-1, keepdim=True)
        softmax_mask = allowed | ~has_successor
        log_transitions = torch.log_softmax(scores.masked_fill(~softmax_mask, NEG_INF), dim=-1)
        log_transitions = log_transitions.masked_fill(~allowed, NEG_INF)
        return DagBatch(log_token_probs, log_transitions, graph_lengths)

    def forward(self, sources: torch.Tensor, glancing_tokens: Optional[torch.Tensor] = None) -> DagBatch:
        memory, pad_mask = self.encode(sources)
        lengths = (~pad_mask).sum(dim=1)
        return self.decode(memory, pad_mask, self.graph_lengths(lengths), glancing_tokens)

    def encode_source(self, source: Sequence[int]) -> torch.Tensor:
        """Encoder states (N x d) for one unpadded source."""
        memory, _ = self.encode(torch.as_tensor([list(source)], dtype=torch.long))
        return memory[0]

    def decode_dag(
        self,
        encoder_states: torch.Tensor,
        graph_size: int,
        glancing_input: Optional[GlancingInput] = None,
    ) -> Dag:
        """Decode one Dag of ``graph_size`` vertices from the states of one source."""
        graph_size = min(graph_size, self.cfg.graph_table_size)
        tokens = None
        if glancing_input is not None:
            z = [MASK if t is None else t for t in glancing_input.z[:graph_size]]
            z += [MASK] * (graph_size - len(z))
            tokens = torch.as_tensor([z], dtype=torch.long)
        memory = encoder_states.unsqueeze(0)
        pad_mask = torch.zeros(memory.shape[:2], dtype=torch.bool)
        out = self.decode(memory, pad_mask, torch.as_tensor([graph_size]), tokens)
        return out.dag(0)

    @torch.no_grad()
    def predict_dags(self, sources: Sequence[Sequence[int]], batch_size: int = 64) -> List[Dag]:
        """Dags for many sources in eval mode, in input order."""
        was_training = self.training
        self.eval()
        dags: List[Dag] = []
        try:
            for start in range(0, len(sources), batch_size):
                chunk = sources[start:start + batch_size]
                out = self(pad_sequences(chunk))
                dags.extend(out.dag(b) for b in range(len(chunk)))
        finally:
            self.train(was_training)
        return dags


def pad_sequences(sequences: Sequence[Sequence[int]], value: int = PAD) -> torch.Tensor:
    width = max(len(s) for s in sequences)
    return torch.as_tensor([list(s) + [value] * (width - len(s)) for s in sequences], dtype=torch.long)


def init_params(cfg: ModelConfig) -> DagTransformer:
    """Build a model whose initial weights depend only on ``cfg.seed``."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        model = DagTransformer(cfg)
    return model.to(DTYPES[cfg.dtype])
