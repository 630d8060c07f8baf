from .config import FULL_SCALE_BOTTLENECK, AdapterConfig, ModelConfig
from .transformer import Seq2SeqTransformer
from .adapters import Adapter, FusionGate, fuse
from .augmented import ADA_HIDDEN, ADA_LOGITS, AugmentedModel, generate, score_sequences
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "ADA_HIDDEN",
    "ADA_LOGITS",
    "Adapter",
    "AdapterConfig",
    "AugmentedModel",
    "FULL_SCALE_BOTTLENECK",
    "FusionGate",
    "ModelConfig",
    "Seq2SeqTransformer",
    "fuse",
    "generate",
    "load_checkpoint",
    "save_checkpoint",
    "score_sequences",
]
