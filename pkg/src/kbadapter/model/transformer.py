"""Pre-LN encoder-decoder transformer with deterministic initialization.

Kept deliberately small and explicit: learned positional embeddings, one
shared token embedding for both sides, an untied LM head, and hand-written
attention so every hidden state is easy to reach from the fusion code.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .config import ModelConfig


def _init_linear(m: nn.Linear, gen: torch.Generator) -> None:
    m.weight.data.normal_(0.0, 0.02, generator=gen)
    if m.bias is not None:
        m.bias.data.zero_()


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention over n_heads subspaces."""

    def __init__(self, d_model: int, n_heads: int, dropout: float):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.o_proj = nn.Linear(d_model, d_model)
        self.drop = nn.Dropout(dropout)

    def forward(
        self,
        query: torch.Tensor,
        keyval: torch.Tensor,
        key_pad: torch.Tensor | None = None,
        causal: bool = False,
    ) -> torch.Tensor:
        bsz, q_len, d_model = query.shape
        k_len = keyval.shape[1]

        def split(x: torch.Tensor, length: int) -> torch.Tensor:
            return x.view(bsz, length, self.n_heads, self.head_dim).transpose(1, 2)

        q = split(self.q_proj(query), q_len)
        k = split(self.k_proj(keyval), k_len)
        v = split(self.v_proj(keyval), k_len)
        scores = torch.matmul(q, k.transpose(-1, -2)) / math.sqrt(self.head_dim)
        if key_pad is not None:
            scores = scores.masked_fill(key_pad[:, None, None, :], float("-inf"))
        if causal:
            future = torch.triu(
                torch.ones(q_len, k_len, dtype=torch.bool, device=query.device), diagonal=1
            )
            scores = scores.masked_fill(future, float("-inf"))
        weights = self.drop(torch.softmax(scores, dim=-1))
        out = torch.matmul(weights, v).transpose(1, 2).reshape(bsz, q_len, d_model)
        return self.o_proj(out)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, ffn_dim: int, dropout: float):
        super().__init__()
        self.fc1 = nn.Linear(d_model, ffn_dim)
        self.fc2 = nn.Linear(ffn_dim, d_model)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.drop(torch.nn.functional.gelu(self.fc1(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_dim, cfg.dropout)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x: torch.Tensor, pad: torch.Tensor) -> torch.Tensor:
        h = self.ln1(x)
        x = x + self.drop(self.attn(h, h, key_pad=pad))
        x = x + self.drop(self.ffn(self.ln2(x)))
        return x


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.ln3 = nn.LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_dim, cfg.dropout)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(
        self,
        x: torch.Tensor,
        memory: torch.Tensor,
        src_pad: torch.Tensor | None,
        tgt_pad: torch.Tensor | None,
    ) -> torch.Tensor:
        h = self.ln1(x)
        x = x + self.drop(self.self_attn(h, h, key_pad=tgt_pad, causal=True))
        x = x + self.drop(self.cross_attn(self.ln2(x), memory, key_pad=src_pad))
        x = x + self.drop(self.ffn(self.ln3(x)))
        return x


class Seq2SeqTransformer(nn.Module):
    """Encoder-decoder backbone exposing encode/decode/logits separately."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.tok_embed = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.pos_embed = nn.Embedding(cfg.max_len, cfg.d_model)
        self.embed_drop = nn.Dropout(cfg.dropout)
        self.encoder = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.enc_layers))
        self.enc_ln = nn.LayerNorm(cfg.d_model)
        self.decoder = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.dec_layers))
        self.dec_ln = nn.LayerNorm(cfg.d_model)
        self.lm_head = nn.Linear(cfg.d_model, cfg.vocab_size)
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        for module in self.modules():
            if isinstance(module, nn.Linear):
                _init_linear(module, gen)
            elif isinstance(module, nn.Embedding):
                module.weight.data.normal_(0.0, 0.02, generator=gen)
            elif isinstance(module, nn.LayerNorm):
                module.weight.data.fill_(1.0)
                module.bias.data.zero_()

    def pad_mask(self, ids: torch.Tensor) -> torch.Tensor:
        return ids.eq(self.cfg.pad_id)

    def _embed(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.shape[1] > self.cfg.max_len:
            raise ValueError(
                f"sequence length {ids.shape[1]} exceeds max_len {self.cfg.max_len}"
            )
        pos = torch.arange(ids.shape[1], device=ids.device)
        x = self.tok_embed(ids) + self.pos_embed(pos)[None, :, :]
        return self.embed_drop(x)

    def encode(self, src_ids: torch.Tensor) -> torch.Tensor:
        pad = self.pad_mask(src_ids)
        x = self._embed(src_ids)
        for layer in self.encoder:
            x = layer(x, pad)
        return self.enc_ln(x)

    def decode(
        self,
        tgt_ids: torch.Tensor,
        memory: torch.Tensor,
        src_pad: torch.Tensor | None,
    ) -> torch.Tensor:
        tgt_pad = self.pad_mask(tgt_ids)
        x = self._embed(tgt_ids)
        for layer in self.decoder:
            x = layer(x, memory, src_pad, tgt_pad)
        return self.dec_ln(x)

    def logits(self, hidden: torch.Tensor) -> torch.Tensor:
        return self.lm_head(hidden)

    def forward(self, src_ids: torch.Tensor, tgt_ids: torch.Tensor) -> torch.Tensor:
        memory = self.encode(src_ids)
        hidden = self.decode(tgt_ids, memory, self.pad_mask(src_ids))
        return self.logits(hidden)
