"""KB memorization adapters for seq2seq dialogue models.

The toolkit injects domain knowledge-base facts into a frozen seq2seq
backbone through trainable bottleneck adapters (memorization), fuses the
adapters back in during downstream fine-tuning through a learned gate
(utilization), and ships a contrastive response-selection benchmark plus
response-generation metrics to measure whether the injected knowledge
actually surfaces.
"""

__version__ = "0.1.0"

from .errors import (
    EmptyKB,
    EmptyResponse,
    InvalidConfig,
    KbAdapterError,
    MalformedKB,
    MissingSlot,
    MissingTemplate,
    NothingToMask,
    Rejected,
    StageAborted,
)
from .kb import (
    BOOLEAN,
    BUILTIN_DOMAINS,
    CATEGORICAL,
    COORDINATES,
    FREE_TEXT,
    INTEGER,
    PHONE,
    TIME,
    DomainSpec,
    Fact,
    KnowledgeBase,
    SlotValue,
    load_kb,
    save_kb,
    validate_kb,
    value_text,
)
from .model import (
    ADA_HIDDEN,
    ADA_LOGITS,
    FULL_SCALE_BOTTLENECK,
    Adapter,
    AdapterConfig,
    AugmentedModel,
    FusionGate,
    ModelConfig,
    Seq2SeqTransformer,
    generate,
    load_checkpoint,
    save_checkpoint,
    score_sequences,
)
from .seeding import stream_rng, substream
from .tokenizer import WordTokenizer
from .training import (
    StageReport,
    TrainConfig,
    memorization_accuracy,
    memorization_accuracy_by_domain,
    memorize,
    sequential_finetune,
    utilize,
)
from .verbalize import (
    BUILTIN_TEMPLATES,
    MASK_TOKEN,
    MaskedStatement,
    Statement,
    TemplateSet,
    build_corpus,
    corrupt,
)

__all__ = [name for name in dir() if not name.startswith("_")]
