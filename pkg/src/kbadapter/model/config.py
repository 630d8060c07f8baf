"""Model and adapter hyperparameter containers."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from ..errors import InvalidConfig

# Bottleneck width matching the hidden size of a large pretrained seq2seq
# encoder plus one, the configuration used at full scale. Desk-scale runs
# use the much smaller default below.
FULL_SCALE_BOTTLENECK = 769


@dataclass
class ModelConfig:
    """Seq2seq transformer dimensions, desk-scale by default."""

    vocab_size: int = 0
    d_model: int = 128
    n_heads: int = 4
    enc_layers: int = 2
    dec_layers: int = 2
    ffn_dim: int = 256
    max_len: int = 128
    dropout: float = 0.1
    pad_id: int = 0

    def validate(self) -> None:
        if self.vocab_size <= 0:
            raise InvalidConfig(f"vocab_size must be positive, got {self.vocab_size}")
        for name in ("d_model", "n_heads", "enc_layers", "dec_layers", "ffn_dim", "max_len"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_model % self.n_heads != 0:
            raise InvalidConfig(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidConfig(f"dropout must be in [0, 1), got {self.dropout}")
        if self.pad_id < 0:
            raise InvalidConfig(f"pad_id must be nonnegative, got {self.pad_id}")

    def to_json(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json(raw: dict) -> "ModelConfig":
        cfg = ModelConfig(**raw)
        cfg.validate()
        return cfg


@dataclass
class AdapterConfig:
    """Bottleneck adapter shape shared by every domain adapter."""

    bottleneck: int = 64
    activation: str = "gelu"

    def validate(self) -> None:
        if self.bottleneck <= 0:
            raise InvalidConfig(f"bottleneck must be positive, got {self.bottleneck}")
        if self.activation not in ("gelu", "relu"):
            raise InvalidConfig(f"unknown activation '{self.activation}'")

    def to_json(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json(raw: dict) -> "AdapterConfig":
        cfg = AdapterConfig(**raw)
        cfg.validate()
        return cfg


def save_config(path: str | Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_config(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
