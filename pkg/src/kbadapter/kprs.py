"""Contrastive response-selection benchmark probing KB knowledge.

Each sample pairs a real system response that mentions KB content with a
minimally perturbed distractor that contradicts the KB given the dialogue
context. Models are scored by which of the two they assign lower
perplexity; knowing the KB is the only way to beat chance, because the
responses are identical except at the perturbed value occurrences.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import Rejected
from .kb import BOOLEAN, INTEGER, PHONE, KnowledgeBase, value_text
from .seeding import stream_rng
from .tokenizer import WordTokenizer, tokenize, tokenize_with_spans
from .model.augmented import AugmentedModel, score_sequences

USER = "user"
SYSTEM = "system"

ENTITY_KIND = "entity"
MULTI_BUCKET = "multi"

_SKIP_STATE_VALUES = {"", "dontcare", "not mentioned", "none"}


@dataclass
class DialogueTurn:
    """One utterance plus (for user turns) the annotated dialogue state."""

    speaker: str
    text: str
    dialogue_state: dict[str, dict[str, str]] = field(default_factory=dict)
    requested_slots: dict[str, list[str]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "speaker": self.speaker,
            "text": self.text,
            "dialogue_state": {d: dict(s) for d, s in sorted(self.dialogue_state.items())},
            "requested_slots": {d: list(s) for d, s in sorted(self.requested_slots.items())},
        }

    @staticmethod
    def from_json(raw: dict) -> "DialogueTurn":
        return DialogueTurn(
            speaker=raw["speaker"],
            text=raw["text"],
            dialogue_state={d: dict(s) for d, s in raw.get("dialogue_state", {}).items()},
            requested_slots={d: list(s) for d, s in raw.get("requested_slots", {}).items()},
        )


@dataclass
class Dialogue:
    dialogue_id: str
    turns: list[DialogueTurn]


@dataclass
class Mention:
    """One KB string found in a response, with its occurrence spans.

    siblings lists (slot, value) pairs of other mentions attributed to the
    same entity in the same response; entity perturbation uses them to
    decide what the distractor implicitly claims about the replacement.
    """

    domain: str
    entity_name: str
    slot_name: str
    value: str
    value_kind: str
    spans: list[tuple[int, int]]
    siblings: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class ExtractedContext:
    dialogue_id: str
    turn_index: int
    turns: list[DialogueTurn]
    response: str
    mentions: list[Mention]

    @property
    def domains(self) -> set[str]:
        return {m.domain for m in self.mentions}


@dataclass
class KprsSample:
    sample_id: str
    context: list[DialogueTurn]
    reference_response: str
    distractor_response: str
    perturbed_slot: str
    perturbed_entity: str
    domains: list[str]
    is_multi_domain: bool

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "context": [t.to_json() for t in self.context],
            "reference_response": self.reference_response,
            "distractor_response": self.distractor_response,
            "perturbed_slot": self.perturbed_slot,
            "perturbed_entity": self.perturbed_entity,
            "domains": list(self.domains),
            "is_multi_domain": self.is_multi_domain,
        }

    @staticmethod
    def from_json(raw: dict) -> "KprsSample":
        return KprsSample(
            sample_id=raw["sample_id"],
            context=[DialogueTurn.from_json(t) for t in raw["context"]],
            reference_response=raw["reference_response"],
            distractor_response=raw["distractor_response"],
            perturbed_slot=raw["perturbed_slot"],
            perturbed_entity=raw["perturbed_entity"],
            domains=list(raw["domains"]),
            is_multi_domain=raw["is_multi_domain"],
        )


@dataclass
class BenchmarkStats:
    total: int = 0
    single_domain: int = 0
    multi_domain: int = 0
    unique_dialogues: int = 0
    unique_contexts: int = 0

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "single_domain": self.single_domain,
            "multi_domain": self.multi_domain,
            "unique_dialogues": self.unique_dialogues,
            "unique_contexts": self.unique_contexts,
        }


@dataclass
class KprsConfig:
    seed: int = 0
    budget: int = 50


def parse_dialogues(raw: list[dict]) -> list[Dialogue]:
    """Parse dialogues in MultiWOZ 2.2 JSON layout."""
    dialogues = []
    for entry in raw:
        did = str(entry.get("dialogue_id", ""))
        turns = []
        for turn in entry.get("turns", []):
            text = turn.get("utterance", "")
            if not text:
                raise ValueError(f"dialogue '{did}' contains an empty utterance")
            state: dict[str, dict[str, str]] = {}
            requested: dict[str, list[str]] = {}
            for frame in turn.get("frames", []):
                service = frame.get("service", "")
                fstate = frame.get("state") or {}
                for key, values in (fstate.get("slot_values") or {}).items():
                    dom, _, slot = key.partition("-")
                    dom = service or dom
                    if values:
                        state.setdefault(dom, {})[slot] = str(values[0])
                for key in fstate.get("requested_slots") or []:
                    dom, _, slot = key.partition("-")
                    dom = service or dom
                    if slot and slot not in requested.setdefault(dom, []):
                        requested[dom].append(slot)
            turns.append(
                DialogueTurn(
                    speaker=turn.get("speaker", "").lower(),
                    text=text,
                    dialogue_state=state,
                    requested_slots=requested,
                )
            )
        dialogues.append(Dialogue(dialogue_id=did, turns=turns))
    return dialogues


def load_dialogues(path: str | Path) -> list[Dialogue]:
    """Load one dialogue JSON file or every .json file in a directory."""
    path = Path(path)
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    out: list[Dialogue] = []
    for file in files:
        with open(file, encoding="utf-8") as fh:
            out.extend(parse_dialogues(json.load(fh)))
    return out


def _norm_tokens(text: str) -> list[str]:
    return [t for t in tokenize(str(text)) if any(c.isalnum() for c in t)]


def _norm(text: str) -> str:
    return " ".join(_norm_tokens(text))


def find_mentions(response: str, kbs: dict[str, KnowledgeBase]) -> list[Mention]:
    """Locate KB entity names and slot values in a response.

    Matching is case- and punctuation-insensitive and longest-candidate
    first, so "Pizza Hut City Centre" is one entity mention rather than
    several value fragments. A value mention is attributed to an entity
    when that entity is also mentioned and its KB entry carries the value.
    """
    spanned = [t for t in tokenize_with_spans(response) if any(c.isalnum() for c in t[0])]
    if not spanned:
        return []
    resp_toks = [t for t, _, _ in spanned]

    # (sort_key, kind flag, domain, slot, value, norm token seq)
    candidates = []
    for domain in sorted(kbs):
        kb = kbs[domain]
        entity_field = kb.spec.entity_field if kb.spec else "name"
        for name in kb.entities():
            seq = _norm_tokens(name)
            if seq:
                candidates.append((domain, entity_field, name, ENTITY_KIND, seq))
        slots = sorted({s for fact in kb.facts for s in fact.slot_names()})
        for slot in slots:
            kind = kb.slot_kind_table.get(slot, "free_text")
            if kind == BOOLEAN:
                continue
            for value in kb.slot_values(slot):
                seq = _norm_tokens(value)
                if seq:
                    candidates.append((domain, slot, value, kind, seq))
    candidates.sort(key=lambda c: (-len(c[4]), c[3] != ENTITY_KIND, c[0], c[1], c[2]))

    claimed = [False] * len(resp_toks)
    hits: list[tuple[str, str, str, str, list[tuple[int, int]]]] = []
    for domain, slot, value, kind, seq in candidates:
        spans = []
        i = 0
        while i + len(seq) <= len(resp_toks):
            window = resp_toks[i : i + len(seq)]
            if window == seq and not any(claimed[i : i + len(seq)]):
                spans.append((spanned[i][1], spanned[i + len(seq) - 1][2]))
                for j in range(i, i + len(seq)):
                    claimed[j] = True
                i += len(seq)
            else:
                i += 1
        if spans:
            hits.append((domain, slot, value, kind, spans))

    mentioned_entities: dict[str, list[str]] = {}
    for domain, slot, value, kind, _ in hits:
        if kind == ENTITY_KIND:
            mentioned_entities.setdefault(domain, []).append(value)

    mentions = []
    for domain, slot, value, kind, spans in hits:
        entity_name = ""
        if kind == ENTITY_KIND:
            entity_name = value
        else:
            for name in mentioned_entities.get(domain, []):
                fact = kbs[domain].by_entity(name)
                sv = fact.get(slot) if fact else None
                if sv is not None and _norm(value_text(sv)) == _norm(value):
                    entity_name = name
                    break
        mentions.append(
            Mention(
                domain=domain,
                entity_name=entity_name,
                slot_name=slot,
                value=value,
                value_kind=kind,
                spans=spans,
            )
        )
    return mentions


def extract_contexts(
    dialogues: list[Dialogue], kbs: dict[str, KnowledgeBase]
) -> list[ExtractedContext]:
    """Contexts preceding system responses that mention KB content."""
    out = []
    for dlg in dialogues:
        for i, turn in enumerate(dlg.turns):
            if turn.speaker != SYSTEM or i == 0:
                continue
            mentions = find_mentions(turn.text, kbs)
            if not mentions:
                continue
            out.append(
                ExtractedContext(
                    dialogue_id=dlg.dialogue_id,
                    turn_index=i,
                    turns=dlg.turns[:i],
                    response=turn.text,
                    mentions=mentions,
                )
            )
    return out


def context_constraints(turns: list[DialogueTurn], domain: str) -> dict[str, str]:
    """Accumulated informable constraints for a domain over the context."""
    merged: dict[str, str] = {}
    for turn in turns:
        if turn.speaker != USER:
            continue
        for slot, value in turn.dialogue_state.get(domain, {}).items():
            if value.lower() in _SKIP_STATE_VALUES:
                continue
            merged[slot] = value
    return merged


def context_mentioned_values(turns: list[DialogueTurn], domain: str) -> set[str]:
    """Normalized constraint values stated for a domain in the context."""
    return {_norm(v) for v in context_constraints(turns, domain).values()} - {""}


def serialize_context(turns: list[DialogueTurn]) -> str:
    """Flatten context turns to model input text, states before user turns."""
    lines = []
    for turn in turns:
        if turn.speaker == USER and turn.dialogue_state:
            parts = [
                f"{dom} {slot}={val}"
                for dom in sorted(turn.dialogue_state)
                for slot, val in sorted(turn.dialogue_state[dom].items())
            ]
            lines.append("state: " + "; ".join(parts))
        lines.append(f"{turn.speaker}: {turn.text}")
    return "\n".join(lines)


def task_pairs(dialogues: list[Dialogue]) -> list[tuple[str, str]]:
    """(serialized context, system response) pairs for response generation.

    Every system turn with at least one preceding turn becomes a target;
    the context is everything before it, serialized the same way benchmark
    evaluation serializes it.
    """
    pairs = []
    for dlg in dialogues:
        for i, turn in enumerate(dlg.turns):
            if turn.speaker != SYSTEM or i == 0:
                continue
            pairs.append((serialize_context(dlg.turns[:i]), turn.text))
    return pairs


def _fact_satisfies(fact, constraints: dict[str, str]) -> bool:
    for slot, value in constraints.items():
        sv = fact.get(slot)
        if sv is None or _norm(value_text(sv)) != _norm(value):
            return False
    return True


def kb_incompatible(
    kb: KnowledgeBase,
    constraints: dict[str, str],
    entity_name: str,
    slot_name: str,
    value: str,
    value_kind: str,
) -> bool:
    """Brute-force check that (entity, slot=value) contradicts the KB.

    For attribute values: incompatible when no context-consistent fact
    (restricted to the mentioned entity, if any) carries the value. For
    entity replacements: the claim is that the replacement entity has all
    the constraint attributes, so it is incompatible only when its entry
    violates at least one of them.
    """
    norm_value = _norm(value)
    for fact in kb.facts:
        if not _fact_satisfies(fact, constraints):
            continue
        if value_kind == ENTITY_KIND:
            if _norm(fact.entity_name) == norm_value:
                return False
        else:
            if entity_name and fact.entity_name != entity_name:
                continue
            sv = fact.get(slot_name)
            if sv is not None and _norm(value_text(sv)) == norm_value:
                return False
    return True


def _apply_spans(text: str, spans: list[tuple[int, int]], replacement: str) -> str:
    for start, end in sorted(spans, reverse=True):
        text = text[:start] + replacement + text[end:]
    return text


def _draw_phone(value: str, rng) -> str | None:
    positions = [i for i, c in enumerate(value) if c.isdigit()]
    if not positions:
        return None
    pos = rng.choice(positions)
    digits = [d for d in "0123456789" if d != value[pos]]
    return value[:pos] + rng.choice(digits) + value[pos + 1 :]


def _draw_integer(value: str, rng) -> str | None:
    m = re.search(r"\d+", value)
    if m is None:
        return None
    delta = rng.choice([1, 2, 3]) * rng.choice([-1, 1])
    new = int(m.group(0)) + delta
    if new < 0:
        return None
    return value[: m.start()] + str(new) + value[m.end() :]


def perturb_response(
    response: str,
    mention: Mention,
    kb: KnowledgeBase,
    constraints: dict[str, str],
    context_values: set[str],
    rng,
    filter_lm=None,
    budget: int = 50,
) -> str:
    """Produce a KB-incompatible distractor for one mention, or Rejected.

    Phones flip one random digit; integer-kind values shift by 1..3 in
    either direction (never below zero); everything else samples
    replacements from the KB. Every emitted distractor must contradict
    the KB given the context, must not reuse a context-stated attribute
    value, and (with filter_lm set) must score a strictly lower
    perplexity than the reference.
    """
    kind = mention.value_kind
    if kind == ENTITY_KIND:
        pool = [e for e in kb.entities() if e != mention.value]
    elif kind in (PHONE, INTEGER):
        pool = []
    else:
        pool = [v for v in kb.slot_values(mention.slot_name) if v != mention.value]

    ref_ppl = filter_lm(response) if filter_lm is not None else None
    for _ in range(budget):
        if kind == PHONE:
            candidate = _draw_phone(mention.value, rng)
        elif kind == INTEGER:
            candidate = _draw_integer(mention.value, rng)
            if candidate is None and kb.slot_values(mention.slot_name):
                fallback = [v for v in kb.slot_values(mention.slot_name) if v != mention.value]
                candidate = rng.choice(fallback) if fallback else None
        else:
            if not pool:
                raise Rejected(
                    f"no replacement candidates for {mention.domain}/{mention.slot_name}"
                )
            candidate = rng.choice(pool)
        if candidate is None or _norm(candidate) == _norm(mention.value):
            continue

        if kind == ENTITY_KIND:
            # The distractor claims the replacement entity carries every
            # attribute tied to the original entity in this response.
            claimed = dict(constraints)
            for slot, val in mention.siblings:
                claimed.setdefault(slot, val)
            fact = kb.by_entity(candidate)
            if fact is None or _fact_satisfies(fact, claimed):
                continue
            if _entity_shares_context_value(fact, context_values):
                continue
        else:
            if not kb_incompatible(
                kb, constraints, mention.entity_name, mention.slot_name, candidate, kind
            ):
                continue
            if _norm(candidate) in context_values:
                continue

        distractor = _apply_spans(response, mention.spans, candidate)
        if distractor == response:
            continue
        if filter_lm is not None and not filter_lm(distractor) < ref_ppl:
            continue
        return distractor
    raise Rejected(
        f"budget exhausted for {mention.domain}/{mention.slot_name} value '{mention.value}'"
    )


def _entity_shares_context_value(fact, context_values: set[str]) -> bool:
    return any(_norm(value_text(sv)) in context_values for sv in fact.slots)


def build_benchmark(
    dialogues: list[Dialogue],
    kbs: dict[str, KnowledgeBase],
    filter_lm=None,
    cfg: KprsConfig | None = None,
) -> tuple[list[KprsSample], BenchmarkStats]:
    """One sample per accepted (context, mention) perturbation.

    filter_lm, when given, is a callable (context_text, response_text) ->
    perplexity; it is closed over the serialized context before being
    handed to the perturbation loop. Per-mention RNGs derive from
    (seed, dialogue id, turn index, mention index) so contexts are
    independent and the output is byte-stable under a fixed seed.
    """
    cfg = cfg or KprsConfig()
    contexts = extract_contexts(dialogues, kbs)
    samples: list[KprsSample] = []
    dialogues_hit: set[str] = set()
    contexts_hit: set[tuple[str, int]] = set()
    single = multi = 0
    for ctx in contexts:
        domains = sorted(ctx.domains)
        is_multi = len(domains) > 1
        ctx_text = serialize_context(ctx.turns)
        ctx_filter = None
        if filter_lm is not None:
            ctx_filter = lambda text, _ctx=ctx_text: filter_lm(_ctx, text)
        constraint_cache = {d: context_constraints(ctx.turns, d) for d in domains}
        values_cache = {d: context_mentioned_values(ctx.turns, d) for d in domains}
        for k, mention in enumerate(ctx.mentions):
            if mention.value_kind == ENTITY_KIND:
                mention.siblings = [
                    (m.slot_name, m.value)
                    for m in ctx.mentions
                    if m is not mention and m.entity_name == mention.value
                ]
            rng = stream_rng(cfg.seed, f"kprs:{ctx.dialogue_id}:{ctx.turn_index}:{k}")
            try:
                distractor = perturb_response(
                    ctx.response,
                    mention,
                    kbs[mention.domain],
                    constraint_cache[mention.domain],
                    values_cache[mention.domain],
                    rng,
                    filter_lm=ctx_filter,
                    budget=cfg.budget,
                )
            except Rejected:
                continue
            samples.append(
                KprsSample(
                    sample_id=f"{ctx.dialogue_id}-{ctx.turn_index}-{k}",
                    context=ctx.turns,
                    reference_response=ctx.response,
                    distractor_response=distractor,
                    perturbed_slot=mention.slot_name,
                    perturbed_entity=mention.entity_name or mention.value,
                    domains=domains,
                    is_multi_domain=is_multi,
                )
            )
            dialogues_hit.add(ctx.dialogue_id)
            contexts_hit.add((ctx.dialogue_id, ctx.turn_index))
            if is_multi:
                multi += 1
            else:
                single += 1
    stats = BenchmarkStats(
        total=len(samples),
        single_domain=single,
        multi_domain=multi,
        unique_dialogues=len(dialogues_hit),
        unique_contexts=len(contexts_hit),
    )
    return samples, stats


def evaluate_kprs(score_pairs, samples: list[KprsSample]) -> dict:
    """Accuracy of preferring references by perplexity; ties count wrong.

    score_pairs is a callable taking [(context_text, response_text), ...]
    and returning one perplexity per pair. Single-domain samples bucket
    under their domain, multi-domain ones under "multi".
    """
    if not samples:
        raise ValueError("no samples to evaluate")
    pairs = []
    for s in samples:
        ctx = serialize_context(s.context)
        pairs.append((ctx, s.reference_response))
        pairs.append((ctx, s.distractor_response))
    ppls = score_pairs(pairs)
    correct = 0
    bucket_n: dict[str, int] = {}
    bucket_c: dict[str, int] = {}
    for i, s in enumerate(samples):
        bucket = MULTI_BUCKET if s.is_multi_domain else s.domains[0]
        hit = ppls[2 * i] < ppls[2 * i + 1]
        correct += hit
        bucket_n[bucket] = bucket_n.get(bucket, 0) + 1
        bucket_c[bucket] = bucket_c.get(bucket, 0) + int(hit)
    return {
        "accuracy": correct / len(samples),
        "per_domain": {b: bucket_c[b] / bucket_n[b] for b in sorted(bucket_n)},
        "n": len(samples),
        "c": correct,
    }


def model_pair_scorer(model: AugmentedModel, tokenizer: WordTokenizer, batch_size: int = 64):
    """Adapt a model to the (context, response) -> perplexity interface."""
    from .tokenizer import BOS_ID, EOS_ID, PAD_ID
    from .training import _encode_pair

    max_len = model.plm.cfg.max_len

    def score(pairs: list[tuple[str, str]]) -> list[float]:
        encoded = [_encode_pair(tokenizer, src, tgt, max_len) for src, tgt in pairs]
        results = score_sequences(
            model, encoded, BOS_ID, EOS_ID, PAD_ID, batch_size=batch_size
        )
        return [r["perplexity"] for r in results]

    return score


def pair_filter(model: AugmentedModel, tokenizer: WordTokenizer, batch_size: int = 16):
    """Filter-LM interface: (context_text, response_text) -> perplexity."""
    score = model_pair_scorer(model, tokenizer, batch_size)

    def ppl(context_text: str, response_text: str) -> float:
        return score([(context_text, response_text)])[0]

    return ppl


def write_samples(path: str | Path, samples: list[KprsSample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")


def read_samples(path: str | Path) -> list[KprsSample]:
    with open(path, encoding="utf-8") as fh:
        return [KprsSample.from_json(json.loads(line)) for line in fh if line.strip()]
