"""Bottleneck adapters and the softmax fusion gate."""

from __future__ import annotations

import torch
from torch import nn

from .config import AdapterConfig

_ACTIVATIONS = {
    "gelu": torch.nn.functional.gelu,
    "relu": torch.nn.functional.relu,
}


class Adapter(nn.Module):
    """Residual bottleneck block: LN, down-project, activate, up-project.

    The up-projection starts at zero so a freshly built adapter is the
    identity map; training moves it away from the residual path gradually.
    """

    def __init__(self, d_model: int, cfg: AdapterConfig, seed: int = 0):
        super().__init__()
        cfg.validate()
        self.act = _ACTIVATIONS[cfg.activation]
        self.ln = nn.LayerNorm(d_model)
        self.down = nn.Linear(d_model, cfg.bottleneck)
        self.up = nn.Linear(cfg.bottleneck, d_model)
        gen = torch.Generator().manual_seed(seed)
        self.down.weight.data.normal_(0.0, 0.02, generator=gen)
        self.down.bias.data.zero_()
        self.up.weight.data.zero_()
        self.up.bias.data.zero_()

    def forward(self, hidden: torch.Tensor) -> torch.Tensor:
        return hidden + self.up(self.act(self.down(self.ln(hidden))))


class FusionGate(nn.Module):
    """Maps backbone hidden states to mixing scores over k+1 streams.

    One linear map per side (encoder and decoder), each producing k+1
    scores per position: one for the backbone stream and one per domain
    adapter stream. Mixing weights are the softmax of the scores.
    """

    def __init__(self, d_model: int, n_adapters: int, seed: int = 0):
        super().__init__()
        self.n_streams = n_adapters + 1
        self.enc_score = nn.Linear(d_model, self.n_streams)
        self.dec_score = nn.Linear(d_model, self.n_streams)
        gen = torch.Generator().manual_seed(seed)
        for lin in (self.enc_score, self.dec_score):
            lin.weight.data.normal_(0.0, 0.02, generator=gen)
            lin.bias.data.zero_()

    def weights(self, hidden: torch.Tensor, side: str) -> torch.Tensor:
        score = self.enc_score if side == "enc" else self.dec_score
        return torch.softmax(score(hidden), dim=-1)


def fuse(streams: list[torch.Tensor], weights: torch.Tensor) -> torch.Tensor:
    """Convex combination of equally shaped streams.

    weights has shape [..., len(streams)] and is expected to lie on the
    simplex (softmax output); streams are hidden states or logits.
    """
    if weights.shape[-1] != len(streams):
        raise ValueError(
            f"got {len(streams)} streams but {weights.shape[-1]} weight columns"
        )
    stacked = torch.stack(streams, dim=-1)
    return (stacked * weights.unsqueeze(-2)).sum(dim=-1)
