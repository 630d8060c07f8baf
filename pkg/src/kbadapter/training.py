"""Two-stage training: adapter memorization, then task utilization.

Memorization trains the adapters (and gate) to reconstruct masked
declarative statements while the backbone stays frozen; utilization trains
the backbone (and gate) on task pairs while the adapters stay frozen.
Freezing is enforced by checksumming the frozen group before and after,
aborting the stage if a single byte moved. Sequential fine-tuning of the
full backbone over per-domain corpora gives the no-adapter baseline.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import torch
from torch import nn

from .errors import StageAborted
from .model.augmented import AugmentedModel, generate, pad_batch
from .seeding import stream_rng, substream
from .tokenizer import BOS_ID, EOS_ID, PAD_ID, WordTokenizer, tokenize
from .verbalize import MaskedStatement, Statement, corrupt

MEMORIZATION = "memorization"
UTILIZATION = "utilization"
SEQUENTIAL = "sequential"
RAND_INIT = "rand_init"
PRETRAIN = "pretrain"


@dataclass
class TrainConfig:
    """Optimization settings; defaults follow the reference recipe."""

    learning_rate: float = 3e-5
    max_epochs: int = 50
    early_stop_patience: int = 10
    batch_size: int = 32
    weight_decay: float = 0.0
    grad_clip: float = 1.0
    dev_fraction: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.early_stop_patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.early_stop_patience}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.dev_fraction < 1.0:
            raise ValueError(f"dev_fraction must be in (0, 1), got {self.dev_fraction}")

    def to_json(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "max_epochs": self.max_epochs,
            "early_stop_patience": self.early_stop_patience,
            "batch_size": self.batch_size,
            "weight_decay": self.weight_decay,
            "grad_clip": self.grad_clip,
            "dev_fraction": self.dev_fraction,
            "seed": self.seed,
        }

    @staticmethod
    def from_json(raw: dict) -> "TrainConfig":
        cfg = TrainConfig(**raw)
        cfg.validate()
        return cfg


@dataclass
class StageReport:
    """Outcome of one training stage.

    wall_time stays out of to_json so serialized artifacts are byte-stable
    across reruns; callers print it separately when they want it.
    """

    stage: str
    epochs_run: int
    best_epoch: int
    best_dev_loss: float | None
    frozen_checksum_ok: bool
    train_examples: int
    dev_examples: int
    domain_order: list[str] | None = None
    wall_time: float = 0.0

    def to_json(self) -> dict:
        out = {
            "stage": self.stage,
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "best_dev_loss": self.best_dev_loss,
            "frozen_checksum_ok": self.frozen_checksum_ok,
            "train_examples": self.train_examples,
            "dev_examples": self.dev_examples,
        }
        if self.domain_order is not None:
            out["domain_order"] = list(self.domain_order)
        return out


def _encode_pair(
    tokenizer: WordTokenizer, src_text: str, tgt_text: str, max_len: int
) -> tuple[list[int], list[int]]:
    """Tokenize one training pair; long sources keep their most recent tokens."""
    src = tokenizer.encode(src_text)
    if len(src) > max_len:
        src = src[-max_len:]
    tgt = tokenizer.encode(tgt_text)
    if len(tgt) > max_len - 1:
        tgt = tgt[: max_len - 1]
    return src, tgt


def _batch_loss(
    model: AugmentedModel,
    pairs: list[tuple[list[int], list[int]]],
) -> tuple[torch.Tensor, int]:
    """Summed token NLL and token count for one batch of id pairs."""
    src_ids = pad_batch([s for s, _ in pairs], PAD_ID)
    tgt_in = pad_batch([[BOS_ID] + t for _, t in pairs], PAD_ID)
    labels = pad_batch([t + [EOS_ID] for _, t in pairs], PAD_ID)
    logits = model(src_ids, tgt_in)
    loss = nn.functional.cross_entropy(
        logits.reshape(-1, logits.shape[-1]),
        labels.reshape(-1),
        ignore_index=PAD_ID,
        reduction="sum",
    )
    return loss, int(labels.ne(PAD_ID).sum())


@torch.no_grad()
def _dev_loss(
    model: AugmentedModel,
    pairs: list[tuple[list[int], list[int]]],
    batch_size: int,
) -> float:
    was_training = model.training
    model.eval()
    total, count = 0.0, 0
    for lo in range(0, len(pairs), batch_size):
        loss, n = _batch_loss(model, pairs[lo : lo + batch_size])
        total += float(loss)
        count += n
    if was_training:
        model.train()
    return total / max(count, 1)


def _fit(
    model: AugmentedModel,
    epoch_pairs,
    dev_pairs: list[tuple[list[int], list[int]]],
    cfg: TrainConfig,
    rng_tag: str,
) -> tuple[int, int, float | None]:
    """Early-stopped training loop over trainable parameters only.

    epoch_pairs(epoch) yields that epoch's tokenized training pairs; the
    best-dev parameter snapshot is restored before returning.
    """
    cfg.validate()
    params = model.trainable_parameters()
    if not params:
        raise StageAborted("no trainable parameters for this stage")
    optim = torch.optim.AdamW(params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    torch.manual_seed(substream(cfg.seed, f"{rng_tag}:torch"))

    best_loss: float | None = None
    best_epoch = 0
    best_state: dict[str, torch.Tensor] | None = None
    stale = 0
    epochs_run = 0
    trainable_names = [n for n, p in model.named_parameters() if p.requires_grad]

    for epoch in range(cfg.max_epochs):
        epochs_run = epoch + 1
        pairs = list(epoch_pairs(epoch))
        order = list(range(len(pairs)))
        stream_rng(cfg.seed, f"{rng_tag}:shuffle:{epoch}").shuffle(order)
        model.train()
        for lo in range(0, len(order), cfg.batch_size):
            batch = [pairs[i] for i in order[lo : lo + cfg.batch_size]]
            loss, count = _batch_loss(model, batch)
            optim.zero_grad()
            (loss / max(count, 1)).backward()
            if cfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip)
            optim.step()
        dev = _dev_loss(model, dev_pairs, cfg.batch_size)
        if best_loss is None or dev < best_loss:
            best_loss = dev
            best_epoch = epochs_run
            state = model.state_dict()
            best_state = {n: state[n].detach().clone() for n in trainable_names}
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break

    if best_state is not None:
        with torch.no_grad():
            state = dict(model.named_parameters())
            for name, tensor in best_state.items():
                state[name].copy_(tensor)
    model.eval()
    return epochs_run, best_epoch, best_loss


def _corruption_pairs(
    statements: list[Statement],
    tokenizer: WordTokenizer,
    max_len: int,
    rng,
) -> list[tuple[list[int], list[int]]]:
    out = []
    for stmt in statements:
        ms = corrupt(stmt, rng)
        out.append(_encode_pair(tokenizer, ms.input_text, ms.target_text, max_len))
    return out


def _dev_indices(n: int, fraction: float, rng) -> list[int]:
    k = max(1, round(n * fraction))
    return sorted(rng.sample(range(n), k))


def memorize(
    model: AugmentedModel,
    corpus: list[Statement],
    tokenizer: WordTokenizer,
    cfg: TrainConfig,
) -> StageReport:
    """Train adapters and gate to reconstruct masked statements.

    The backbone is frozen for the duration and its checksum is verified
    afterwards. Every epoch re-corrupts the full corpus with an
    epoch-derived seed; the dev signal is a fixed 10% subset under a fixed
    corruption (held in, not out: memorization is measured in-sample).
    """
    if not corpus:
        raise ValueError("memorization corpus is empty")
    if not model.domains:
        raise StageAborted("model has no adapters to memorize")
    start = time.monotonic()
    pre = model.checksums()
    model.freeze("plm", True)
    model.freeze("adapters", False)
    model.freeze("gate", False)

    max_len = model.plm.cfg.max_len
    dev_rng = stream_rng(cfg.seed, "memorize:dev")
    dev_idx = _dev_indices(len(corpus), cfg.dev_fraction, dev_rng)
    dev_pairs = _corruption_pairs([corpus[i] for i in dev_idx], tokenizer, max_len, dev_rng)

    def epoch_pairs(epoch: int):
        rng = stream_rng(cfg.seed, f"memorize:epoch:{epoch}")
        return _corruption_pairs(corpus, tokenizer, max_len, rng)

    if cfg.max_epochs > 0:
        epochs_run, best_epoch, best_loss = _fit(model, epoch_pairs, dev_pairs, cfg, "memorize")
    else:
        epochs_run, best_epoch, best_loss = 0, 0, None

    post = model.checksums()
    ok = post["plm"] == pre["plm"]
    if not ok:
        raise StageAborted("backbone parameters changed during memorization")
    return StageReport(
        stage=MEMORIZATION,
        epochs_run=epochs_run,
        best_epoch=best_epoch,
        best_dev_loss=best_loss,
        frozen_checksum_ok=ok,
        train_examples=len(corpus),
        dev_examples=len(dev_pairs),
        wall_time=time.monotonic() - start,
    )


def utilize(
    model: AugmentedModel,
    task_data: list[tuple[str, str]],
    tokenizer: WordTokenizer,
    cfg: TrainConfig,
    stage: str = UTILIZATION,
) -> StageReport:
    """Fine-tune the backbone and gate on (context, target) pairs.

    Adapters are frozen and checksum-verified afterwards. A fixed
    seed-derived 10% of the pairs is held out as the dev set for early
    stopping; the rest is shuffled per epoch.
    """
    if not task_data:
        raise ValueError("task data is empty")
    if stage not in (UTILIZATION, RAND_INIT):
        raise ValueError(f"unknown utilization stage '{stage}'")
    start = time.monotonic()
    pre = model.checksums()
    adapter_groups = [g for g in pre if g.startswith("adapter.")]
    model.freeze("plm", False)
    model.freeze("adapters", True)
    model.freeze("gate", False)

    max_len = model.plm.cfg.max_len
    encoded = [_encode_pair(tokenizer, s, t, max_len) for s, t in task_data]
    dev_idx = set(_dev_indices(len(encoded), cfg.dev_fraction, stream_rng(cfg.seed, "utilize:dev")))
    dev_pairs = [p for i, p in enumerate(encoded) if i in dev_idx]
    train_pairs = [p for i, p in enumerate(encoded) if i not in dev_idx]
    if not train_pairs:
        raise ValueError("task data too small to split off a dev set")

    if cfg.max_epochs > 0:
        epochs_run, best_epoch, best_loss = _fit(
            model, lambda epoch: train_pairs, dev_pairs, cfg, "utilize"
        )
    else:
        epochs_run, best_epoch, best_loss = 0, 0, None

    post = model.checksums()
    ok = all(post[g] == pre[g] for g in adapter_groups)
    if not ok:
        raise StageAborted("adapter parameters changed during utilization")
    return StageReport(
        stage=stage,
        epochs_run=epochs_run,
        best_epoch=best_epoch,
        best_dev_loss=best_loss,
        frozen_checksum_ok=ok,
        train_examples=len(train_pairs),
        dev_examples=len(dev_pairs),
        wall_time=time.monotonic() - start,
    )


def sequential_finetune(
    model: AugmentedModel,
    corpora: list[tuple[str, list[Statement]]],
    tokenizer: WordTokenizer,
    cfg: TrainConfig,
    stage: str = SEQUENTIAL,
) -> StageReport:
    """Fine-tune the full backbone on each domain corpus in order.

    No adapters take part; every backbone parameter trains. Each domain
    runs the same re-corruption loop as memorization, so both stages
    consume identical corpora and differ only in what is trainable. With
    stage=PRETRAIN the same loop labels its report as backbone
    pretraining, the usual single-corpus mixed-domain case.
    """
    if not corpora:
        raise ValueError("no corpora given")
    if stage not in (SEQUENTIAL, PRETRAIN):
        raise ValueError(f"unknown sequential stage '{stage}'")
    start = time.monotonic()
    model.freeze("plm", False)
    model.freeze("adapters", True)
    model.freeze("gate", True)

    max_len = model.plm.cfg.max_len
    total_epochs = 0
    last_best_epoch = 0
    last_best_loss: float | None = None
    total_train = 0
    total_dev = 0
    for pos, (domain, corpus) in enumerate(corpora):
        if not corpus:
            raise ValueError(f"corpus for domain '{domain}' is empty")
        tag = f"sequential:{pos}:{domain}"
        dev_rng = stream_rng(cfg.seed, f"{tag}:dev")
        dev_idx = _dev_indices(len(corpus), cfg.dev_fraction, dev_rng)
        dev_pairs = _corruption_pairs([corpus[i] for i in dev_idx], tokenizer, max_len, dev_rng)

        def epoch_pairs(epoch: int, _corpus=corpus, _tag=tag):
            rng = stream_rng(cfg.seed, f"{_tag}:epoch:{epoch}")
            return _corruption_pairs(_corpus, tokenizer, max_len, rng)

        if cfg.max_epochs > 0:
            epochs_run, best_epoch, best_loss = _fit(model, epoch_pairs, dev_pairs, cfg, tag)
        else:
            epochs_run, best_epoch, best_loss = 0, 0, None
        total_epochs += epochs_run
        last_best_epoch = best_epoch
        last_best_loss = best_loss
        total_train += len(corpus)
        total_dev += len(dev_pairs)

    return StageReport(
        stage=stage,
        epochs_run=total_epochs,
        best_epoch=last_best_epoch,
        best_dev_loss=last_best_loss,
        frozen_checksum_ok=True,
        train_examples=total_train,
        dev_examples=total_dev,
        domain_order=[d for d, _ in corpora],
        wall_time=time.monotonic() - start,
    )


def reconstruction_correct(generated: str, ms: MaskedStatement) -> bool:
    """Alignment-based match of the regenerated masked value.

    The corrupted input is prefix + mask + suffix; the generation is
    correct when it reproduces the prefix and suffix and the aligned
    middle equals the masked value (token-level, whitespace-insensitive).
    Falls back to whole-sequence match when alignment fails.
    """
    mask_at = ms.input_text.find("<mask>")
    prefix = tokenize(ms.input_text[:mask_at])
    suffix = tokenize(ms.input_text[mask_at + len("<mask>"):])
    value = tokenize(ms.masked_value)
    gen = tokenize(generated)
    if len(gen) >= len(prefix) + len(suffix):
        if gen[: len(prefix)] == prefix and (
            not suffix or gen[len(gen) - len(suffix):] == suffix
        ):
            middle = gen[len(prefix): len(gen) - len(suffix)]
            return middle == value
    return gen == tokenize(ms.target_text)


def _reconstruction_flags(
    model: AugmentedModel,
    corpus: list[Statement],
    tokenizer: WordTokenizer,
    seed: int,
    batch_size: int,
) -> list[bool]:
    rng = stream_rng(seed, "memorization-eval")
    masked = [corrupt(stmt, rng) for stmt in corpus]
    max_len = model.plm.cfg.max_len
    src = []
    budgets = []
    for ms in masked:
        s, t = _encode_pair(tokenizer, ms.input_text, ms.target_text, max_len)
        src.append(s)
        budgets.append(len(t) + 8)
    outputs = generate(
        model, src, BOS_ID, EOS_ID, PAD_ID,
        max_new_tokens=max(budgets), batch_size=batch_size,
    )
    return [
        reconstruction_correct(tokenizer.detokenize(ids), ms)
        for ms, ids in zip(masked, outputs)
    ]


def memorization_accuracy(
    model: AugmentedModel,
    corpus: list[Statement],
    tokenizer: WordTokenizer,
    seed: int,
    batch_size: int = 64,
) -> float:
    """Overall fraction of corrupted statements reconstructed correctly."""
    if not corpus:
        return 0.0
    flags = _reconstruction_flags(model, corpus, tokenizer, seed, batch_size)
    return sum(flags) / len(corpus)


def memorization_accuracy_by_domain(
    model: AugmentedModel,
    corpus: list[Statement],
    tokenizer: WordTokenizer,
    seed: int,
    batch_size: int = 64,
) -> dict[str, float]:
    """Reconstruction accuracy split by statement domain."""
    flags = _reconstruction_flags(model, corpus, tokenizer, seed, batch_size)
    correct: dict[str, int] = {}
    total: dict[str, int] = {}
    for stmt, hit in zip(corpus, flags):
        total[stmt.domain] = total.get(stmt.domain, 0) + 1
        if hit:
            correct[stmt.domain] = correct.get(stmt.domain, 0) + 1
    return {d: correct.get(d, 0) / total[d] for d in sorted(total)}
