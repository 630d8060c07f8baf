"""Response-generation metrics: inform rate, success rate, and BLEU.

A turn is informed when every entity the generation names is consistent
with the KB under the context's accumulated constraints (vacuously so if
it names none). A turn is successful when the generation carries at least
the requested slot values that the gold response carries. The combined
score is their unweighted mean.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .kb import KnowledgeBase
from .kprs import (
    ENTITY_KIND,
    MULTI_BUCKET,
    DialogueTurn,
    _fact_satisfies,
    _norm,
    context_constraints,
    find_mentions,
)
from .tokenizer import tokenize


@dataclass
class RGExample:
    """One evaluated turn: context, gold response, model generation."""

    context: list[DialogueTurn]
    gold_response: str
    generated_response: str
    requested_slots: list[str] = field(default_factory=list)
    domains: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "context": [t.to_json() for t in self.context],
            "gold_response": self.gold_response,
            "generated_response": self.generated_response,
            "requested_slots": list(self.requested_slots),
            "domains": list(self.domains),
        }

    @staticmethod
    def from_json(raw: dict) -> "RGExample":
        return RGExample(
            context=[DialogueTurn.from_json(t) for t in raw["context"]],
            gold_response=raw["gold_response"],
            generated_response=raw["generated_response"],
            requested_slots=list(raw.get("requested_slots", [])),
            domains=list(raw.get("domains", [])),
        )


@dataclass
class RGReport:
    inform_rate: float
    success_rate: float
    combined: float
    bleu: float
    per_domain: dict[str, dict]
    n: int

    def to_json(self) -> dict:
        return {
            "inform_rate": self.inform_rate,
            "success_rate": self.success_rate,
            "combined": self.combined,
            "bleu": self.bleu,
            "per_domain": self.per_domain,
            "n": self.n,
        }


def requested_slots_from_context(turns: list[DialogueTurn]) -> list[str]:
    """Slot names the user asked about anywhere in the context."""
    seen: list[str] = []
    for turn in turns:
        for slots in turn.requested_slots.values():
            for slot in slots:
                if slot not in seen:
                    seen.append(slot)
    return seen


def extract_slot_mentions(
    text: str, kbs: dict[str, KnowledgeBase]
) -> list[tuple[str, str, str, str]]:
    """(domain, mention kind, value, slot_name) tuples found in text.

    Kind is "entity" for entity-name hits and "slot" for attribute-value
    hits; matching is longest-first so container strings are never double
    counted as their fragments.
    """
    out = []
    for m in find_mentions(text, kbs):
        kind = "entity" if m.value_kind == ENTITY_KIND else "slot"
        out.append((m.domain, kind, m.value, m.slot_name))
    return out


def _entity_mentions_consistent(
    example: RGExample, kbs: dict[str, KnowledgeBase]
) -> bool:
    for m in find_mentions(example.generated_response, kbs):
        if m.value_kind != ENTITY_KIND:
            continue
        fact = kbs[m.domain].by_entity(m.value)
        if fact is None:
            return False
        constraints = context_constraints(example.context, m.domain)
        if not _fact_satisfies(fact, constraints):
            return False
    return True


def _requested_values(
    text: str, requested: set[str], kbs: dict[str, KnowledgeBase]
) -> set[tuple[str, str, str]]:
    values = set()
    for m in find_mentions(text, kbs):
        if m.value_kind != ENTITY_KIND and m.slot_name in requested:
            values.add((m.domain, m.slot_name, _norm(m.value)))
    return values


def _covers_requests(example: RGExample, kbs: dict[str, KnowledgeBase]) -> bool:
    requested = set(example.requested_slots)
    if not requested:
        return True
    gold = _requested_values(example.gold_response, requested, kbs)
    generated = _requested_values(example.generated_response, requested, kbs)
    return gold <= generated


def inform_success(examples: list[RGExample], kbs: dict[str, KnowledgeBase]) -> RGReport:
    """Full RG report over evaluated turns, bucketed by domain."""
    if not examples:
        raise ValueError("no examples to evaluate")
    informed = 0
    succeeded = 0
    buckets: dict[str, list[tuple[bool, bool]]] = {}
    for ex in examples:
        inf = _entity_mentions_consistent(ex, kbs)
        suc = _covers_requests(ex, kbs)
        informed += inf
        succeeded += suc
        domains = ex.domains or sorted(
            {m.domain for m in find_mentions(ex.gold_response, kbs)}
        )
        bucket = MULTI_BUCKET if len(domains) > 1 else (domains[0] if domains else "none")
        buckets.setdefault(bucket, []).append((inf, suc))
    n = len(examples)
    inform_rate = informed / n
    success_rate = succeeded / n
    per_domain = {}
    for bucket in sorted(buckets):
        flags = buckets[bucket]
        bi = sum(f for f, _ in flags) / len(flags)
        bs = sum(s for _, s in flags) / len(flags)
        per_domain[bucket] = {
            "inform_rate": bi,
            "success_rate": bs,
            "combined": (bi + bs) / 2,
            "n": len(flags),
        }
    return RGReport(
        inform_rate=inform_rate,
        success_rate=success_rate,
        combined=(inform_rate + success_rate) / 2,
        bleu=bleu(
            [ex.generated_response for ex in examples],
            [ex.gold_response for ex in examples],
        ),
        per_domain=per_domain,
        n=n,
    )


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(generations: list[str], references: list[str]) -> float:
    """Corpus-level BLEU-4 in [0, 100] with brevity penalty.

    Tokenization is the toolkit word splitter (lowercasing makes scoring
    case-insensitive). Higher-order precisions with zero matches get
    add-one smoothing so short corpora stay finite; unigram precision is
    never smoothed, keeping disjoint corpora at exactly 0.
    """
    if not generations or len(generations) != len(references):
        raise ValueError("need equally many generations and references, at least one")
    num = [0] * 5
    den = [0] * 5
    gen_len = 0
    ref_len = 0
    for gen_text, ref_text in zip(generations, references):
        gen = tokenize(gen_text)
        ref = tokenize(ref_text)
        gen_len += len(gen)
        ref_len += len(ref)
        for n in range(1, 5):
            gen_counts = _ngrams(gen, n)
            ref_counts = _ngrams(ref, n)
            num[n] += sum(min(c, ref_counts[g]) for g, c in gen_counts.items())
            den[n] += max(len(gen) - n + 1, 0)
    if den[1] == 0 or num[1] == 0:
        return 0.0
    log_sum = math.log(num[1] / den[1])
    for n in range(2, 5):
        if num[n] == 0:
            p = 1.0 / (den[n] + 1)
        else:
            p = num[n] / den[n]
        log_sum += math.log(p)
    geo = math.exp(log_sum / 4)
    bp = 1.0 if gen_len > ref_len else math.exp(1 - ref_len / gen_len)
    return 100.0 * bp * geo


def write_rg_examples(path: str | Path, examples: list[RGExample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json(), ensure_ascii=False) + "\n")


def read_rg_examples(path: str | Path) -> list[RGExample]:
    with open(path, encoding="utf-8") as fh:
        return [RGExample.from_json(json.loads(line)) for line in fh if line.strip()]
