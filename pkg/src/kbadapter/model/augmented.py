"""Backbone plus domain adapters plus fusion gate, wired for both stages.

The augmented model owns one (encoder, decoder) adapter pair per domain and
a fusion gate. With no adapters attached every forward reduces bit-exactly
to the plain backbone: the gate is never evaluated, so augmenting a model
with an empty domain list changes nothing about its behaviour.
"""

from __future__ import annotations

import hashlib
import math

import torch
from torch import nn

from ..errors import EmptyResponse, InvalidConfig
from ..seeding import substream
from .adapters import Adapter, FusionGate, fuse
from .config import AdapterConfig
from .transformer import Seq2SeqTransformer

ADA_HIDDEN = "ada_hidden"
ADA_LOGITS = "ada_logits"

PLM_PART = "plm"
ADAPTER_PART = "adapters"
GATE_PART = "gate"


class AugmentedModel(nn.Module):
    """Seq2seq backbone fused with per-domain bottleneck adapters.

    fusion_mode selects where decoder-side mixing happens: ada_hidden fuses
    hidden states and projects the blend once, ada_logits projects every
    stream through the shared LM head and fuses the logits. The encoder
    side always fuses hidden states.
    """

    def __init__(
        self,
        plm: Seq2SeqTransformer,
        adapter_cfg: AdapterConfig | None = None,
        domains: tuple[str, ...] = (),
        fusion_mode: str = ADA_HIDDEN,
        seed: int = 0,
    ):
        super().__init__()
        if fusion_mode not in (ADA_HIDDEN, ADA_LOGITS):
            raise InvalidConfig(f"unknown fusion mode '{fusion_mode}'")
        if len(set(domains)) != len(domains):
            raise InvalidConfig(f"duplicate domains in {domains}")
        self.plm = plm
        self.adapter_cfg = adapter_cfg or AdapterConfig()
        self.domains = tuple(domains)
        self.fusion_mode = fusion_mode
        d_model = plm.cfg.d_model
        self.adapters = nn.ModuleDict()
        for dom in self.domains:
            self.adapters[dom] = nn.ModuleDict(
                {
                    "enc": Adapter(d_model, self.adapter_cfg, substream(seed, f"adapter:{dom}:enc")),
                    "dec": Adapter(d_model, self.adapter_cfg, substream(seed, f"adapter:{dom}:dec")),
                }
            )
        self.gate = FusionGate(d_model, len(self.domains), substream(seed, "gate"))

    def fused_encode(self, src_ids: torch.Tensor) -> torch.Tensor:
        memory = self.plm.encode(src_ids)
        if not self.domains:
            return memory
        streams = [memory] + [self.adapters[d]["enc"](memory) for d in self.domains]
        return fuse(streams, self.gate.weights(memory, "enc"))

    def fused_logits(
        self,
        tgt_ids: torch.Tensor,
        memory: torch.Tensor,
        src_pad: torch.Tensor | None,
    ) -> torch.Tensor:
        hidden = self.plm.decode(tgt_ids, memory, src_pad)
        if not self.domains:
            return self.plm.logits(hidden)
        streams = [hidden] + [self.adapters[d]["dec"](hidden) for d in self.domains]
        weights = self.gate.weights(hidden, "dec")
        if self.fusion_mode == ADA_HIDDEN:
            return self.plm.logits(fuse(streams, weights))
        return fuse([self.plm.logits(s) for s in streams], weights)

    def forward(self, src_ids: torch.Tensor, tgt_ids: torch.Tensor) -> torch.Tensor:
        memory = self.fused_encode(src_ids)
        return self.fused_logits(tgt_ids, memory, self.plm.pad_mask(src_ids))

    def named_param_groups(self) -> dict[str, list[tuple[str, nn.Parameter]]]:
        """Parameter groups matching the checkpoint layout, sorted by name."""
        groups: dict[str, list[tuple[str, nn.Parameter]]] = {
            PLM_PART: sorted(self.plm.named_parameters())
        }
        for dom in self.domains:
            for side in ("enc", "dec"):
                mod = self.adapters[dom][side]
                groups[f"adapter.{dom}.{side}"] = sorted(mod.named_parameters())
        groups[GATE_PART] = sorted(self.gate.named_parameters())
        return groups

    def param_groups(self) -> dict[str, list[nn.Parameter]]:
        return {k: [p for _, p in v] for k, v in self.named_param_groups().items()}

    def checksums(self) -> dict[str, str]:
        """sha256 per parameter group over raw little-endian float32 bytes."""
        out = {}
        for name, params in self.param_groups().items():
            digest = hashlib.sha256()
            for p in params:
                arr = p.detach().cpu().contiguous().to(torch.float32).numpy()
                digest.update(arr.astype("<f4", copy=False).tobytes())
            out[name] = digest.hexdigest()
        return out

    def freeze(self, part: str, frozen: bool = True) -> None:
        for p in self._part_params(part):
            p.requires_grad_(not frozen)

    def _part_params(self, part: str) -> list[nn.Parameter]:
        if part == PLM_PART:
            return list(self.plm.parameters())
        if part == ADAPTER_PART:
            return list(self.adapters.parameters())
        if part == GATE_PART:
            return list(self.gate.parameters())
        raise ValueError(f"unknown part '{part}'")

    def trainable_parameters(self) -> list[nn.Parameter]:
        return [p for p in self.parameters() if p.requires_grad]


def pad_batch(seqs: list[list[int]], pad_id: int, device=None) -> torch.Tensor:
    width = max(len(s) for s in seqs)
    out = torch.full((len(seqs), width), pad_id, dtype=torch.long, device=device)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = torch.tensor(s, dtype=torch.long, device=device)
    return out


@torch.no_grad()
def generate(
    model: AugmentedModel,
    src: list[list[int]],
    bos_id: int,
    eos_id: int,
    pad_id: int,
    max_new_tokens: int = 64,
    batch_size: int = 64,
) -> list[list[int]]:
    """Batched greedy decoding; argmax breaks ties at the lowest index."""
    was_training = model.training
    model.eval()
    limit = min(max_new_tokens, model.plm.cfg.max_len - 1)
    outputs: list[list[int]] = []
    for lo in range(0, len(src), batch_size):
        chunk = src[lo : lo + batch_size]
        src_ids = pad_batch(chunk, pad_id)
        src_pad = model.plm.pad_mask(src_ids)
        memory = model.fused_encode(src_ids)
        bsz = len(chunk)
        tgt = torch.full((bsz, 1), bos_id, dtype=torch.long)
        finished = torch.zeros(bsz, dtype=torch.bool)
        for _ in range(limit):
            logits = model.fused_logits(tgt, memory, src_pad)[:, -1, :]
            next_id = logits.argmax(dim=-1)
            next_id = torch.where(finished, torch.full_like(next_id, pad_id), next_id)
            finished |= next_id.eq(eos_id)
            tgt = torch.cat([tgt, next_id[:, None]], dim=1)
            if bool(finished.all()):
                break
        for row in tgt[:, 1:].tolist():
            ids = []
            for tok in row:
                if tok in (eos_id, pad_id):
                    break
                ids.append(tok)
            outputs.append(ids)
    if was_training:
        model.train()
    return outputs


@torch.no_grad()
def score_sequences(
    model: AugmentedModel,
    pairs: list[tuple[list[int], list[int]]],
    bos_id: int,
    eos_id: int,
    pad_id: int,
    batch_size: int = 64,
) -> list[dict[str, float]]:
    """Teacher-forced NLL of each (source, target) pair.

    Targets are scored with an appended end token; perplexity is the
    exponential of the mean per-token negative log likelihood.
    """
    for _, tgt in pairs:
        if not tgt:
            raise EmptyResponse("cannot score an empty target sequence")
    was_training = model.training
    model.eval()
    results: list[dict[str, float]] = []
    for lo in range(0, len(pairs), batch_size):
        chunk = pairs[lo : lo + batch_size]
        src_ids = pad_batch([s for s, _ in chunk], pad_id)
        tgt_in = pad_batch([[bos_id] + t for _, t in chunk], pad_id)
        labels = pad_batch([t + [eos_id] for _, t in chunk], pad_id)
        logits = model(src_ids, tgt_in)
        logprobs = torch.log_softmax(logits.float(), dim=-1)
        picked = logprobs.gather(-1, labels.clamp(min=0)[:, :, None]).squeeze(-1)
        mask = labels.ne(pad_id)
        nll = -(picked * mask).sum(dim=1)
        counts = mask.sum(dim=1)
        for total, n in zip(nll.tolist(), counts.tolist()):
            per_token = total / n
            results.append(
                {
                    "total_nll": total,
                    "per_token_nll": per_token,
                    "perplexity": math.exp(per_token),
                }
            )
    if was_training:
        model.train()
    return results
