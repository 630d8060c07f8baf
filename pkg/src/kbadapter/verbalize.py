"""Turn KB facts into declarative statements, and corrupt them for denoising.

Two statement formats exist: atomic (one entity, one attribute) and composite
(one entity, every attribute of its entry). Statements carry exact character
spans for the entity mention and each attribute value so that corruption and
reconstruction checking never fall back to string search.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MissingSlot, MissingTemplate, NothingToMask
from .kb import BOOLEAN, FREE_TEXT, DomainSpec, Fact, KnowledgeBase, SlotValue

MASK_TOKEN = "<mask>"

_PLACEHOLDER = re.compile(r"\{([^{}]+)\}")

ATOMIC = "atomic"
COMPOSITE = "composite"
BOTH = "both"


@dataclass
class TemplateSet:
    """Per-domain statement templates.

    Atomic templates use "{entity}" and "{value}" placeholders; boolean slots
    use "{neg}" between two anchor words (e.g. "does{neg}have") instead of
    "{value}". The composite template uses "{entity}" plus one "{slot_name}"
    placeholder per covered slot. Boolean slots in the composite fill their
    placeholder the same way "{neg}" does.
    """

    domain: str
    atomic: dict[str, str]
    composite: str = ""

    def composite_slots(self) -> list[str]:
        return [m for m in _PLACEHOLDER.findall(self.composite) if m != "entity"]

    def covered_slots(self) -> set[str]:
        return set(self.atomic) | set(self.composite_slots())

    def validate(self, spec: DomainSpec | None = None) -> None:
        for slot, template in self.atomic.items():
            names = _PLACEHOLDER.findall(template)
            if names.count("entity") != 1:
                raise ValueError(f"atomic template for '{slot}' needs exactly one {{entity}}")
            payload = [n for n in names if n != "entity"]
            if payload not in (["value"], ["neg"]):
                raise ValueError(
                    f"atomic template for '{slot}' needs exactly one {{value}} or {{neg}}"
                )
        if self.composite:
            slots = self.composite_slots()
            if len(slots) != len(set(slots)):
                raise ValueError("composite template repeats a slot placeholder")
            if self.composite.count("{entity}") != 1:
                raise ValueError("composite template needs exactly one {entity}")
        if spec is not None:
            required = set(spec.required_slots)
            # The atomic and composite tables together must cover the
            # required slots; neither table alone has to (the canonical
            # restaurant composite carries coordinates but not the street
            # address, which only the atomic table covers).
            covered = self.covered_slots()
            if covered != required:
                missing = required - covered
                extra = covered - required
                raise ValueError(
                    f"templates for '{self.domain}' cover {sorted(covered)}; "
                    f"missing={sorted(missing)} extra={sorted(extra)}"
                )

    @staticmethod
    def from_json(path: str | Path) -> "TemplateSet":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return TemplateSet(
            domain=raw["domain"],
            atomic=dict(raw.get("atomic", {})),
            composite=raw.get("composite", ""),
        )

    def to_json(self) -> dict:
        return {"domain": self.domain, "atomic": dict(self.atomic), "composite": self.composite}


@dataclass
class Statement:
    """A declarative rendering of (part of) one fact, with exact spans."""

    text: str
    domain: str
    entity_name: str
    format: str
    attribute_spans: list[tuple[str, int, int]] = field(default_factory=list)
    entity_spans: list[tuple[int, int]] = field(default_factory=list)

    def span_text(self, span: tuple[str, int, int]) -> str:
        return self.text[span[1]:span[2]]

    def to_json(self) -> dict:
        return {
            "text": self.text,
            "domain": self.domain,
            "entity_name": self.entity_name,
            "format": self.format,
            "attribute_spans": [[s, a, b] for s, a, b in self.attribute_spans],
            "entity_spans": [[a, b] for a, b in self.entity_spans],
        }

    @staticmethod
    def from_json(raw: dict) -> "Statement":
        return Statement(
            text=raw["text"],
            domain=raw["domain"],
            entity_name=raw["entity_name"],
            format=raw["format"],
            attribute_spans=[(s, a, b) for s, a, b in raw["attribute_spans"]],
            entity_spans=[(a, b) for a, b in raw["entity_spans"]],
        )


@dataclass
class MaskedStatement:
    """One statement with a single attribute span replaced by the mask token."""

    input_text: str
    target_text: str
    masked_slot: str
    masked_value: str
    domain: str = ""
    entity_name: str = ""

    def to_json(self) -> dict:
        return {
            "input_text": self.input_text,
            "target_text": self.target_text,
            "masked_slot": self.masked_slot,
            "masked_value": self.masked_value,
            "domain": self.domain,
            "entity_name": self.entity_name,
        }

    @staticmethod
    def from_json(raw: dict) -> "MaskedStatement":
        return MaskedStatement(
            input_text=raw["input_text"],
            target_text=raw["target_text"],
            masked_slot=raw["masked_slot"],
            masked_value=raw["masked_value"],
            domain=raw.get("domain", ""),
            entity_name=raw.get("entity_name", ""),
        )


def _widen_to_words(text: str, start: int, end: int) -> tuple[int, int]:
    """Extend a span over the adjacent words (for negation placeholders)."""
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    while end < len(text) and not text[end].isspace():
        end += 1
    return start, end


def _fill(
    template: str,
    fact: Fact,
    slot_for: dict[str, str],
) -> tuple[str, list[tuple[str, int, int]], list[tuple[int, int]]]:
    """Fill a template, returning (text, attribute_spans, entity_spans).

    `slot_for` maps placeholder name -> slot name ("entity" is implicit).
    Boolean slots fill with " "/" not " and their span widens to cover the
    surrounding anchor words, so the recorded surface form is e.g.
    "does not have" rather than an empty string.
    """
    pieces: list[str] = []
    attr_spans: list[tuple[str, int, int]] = []
    entity_spans: list[tuple[int, int]] = []
    pos = 0
    cursor = 0
    for match in _PLACEHOLDER.finditer(template):
        pieces.append(template[pos:match.start()])
        cursor += match.start() - pos
        name = match.group(1)
        if name == "entity":
            fill = fact.entity_name
            entity_spans.append((cursor, cursor + len(fill)))
            pieces.append(fill)
            cursor += len(fill)
        else:
            slot_name = slot_for[name]
            sv = fact.get(slot_name)
            if sv is None:
                raise MissingSlot(f"fact '{fact.entity_name}' lacks slot '{slot_name}'")
            if sv.value_kind == BOOLEAN and isinstance(sv.value, bool):
                fill = " " if sv.value else " not "
                pieces.append(fill)
                span = (cursor, cursor + len(fill))
                cursor += len(fill)
                attr_spans.append((slot_name, *span))
            else:
                fill = str(sv.value)
                pieces.append(fill)
                attr_spans.append((slot_name, cursor, cursor + len(fill)))
                cursor += len(fill)
        pos = match.end()
    pieces.append(template[pos:])
    text = "".join(pieces)

    widened = []
    for slot_name, a, b in attr_spans:
        sv = fact.get(slot_name)
        if sv is not None and sv.value_kind == BOOLEAN and isinstance(sv.value, bool):
            a, b = _widen_to_words(text, a, b)
        widened.append((slot_name, a, b))
    return text, widened, entity_spans


def render_atomic(fact: Fact, templates: TemplateSet) -> list[Statement]:
    """One Statement per templated slot of the fact, in fact slot order.

    Slots without an atomic template are skipped when they are free-text or
    covered by the composite template; any other untemplated slot is an error.
    """
    composite_covered = set(templates.composite_slots())
    statements = []
    for sv in fact.slots:
        template = templates.atomic.get(sv.slot_name)
        if template is None:
            if sv.value_kind == FREE_TEXT or sv.slot_name in composite_covered:
                continue
            raise MissingTemplate(
                f"no template for slot '{sv.slot_name}' (kind {sv.value_kind}) "
                f"in domain '{fact.domain}'"
            )
        slot_for = {"value": sv.slot_name, "neg": sv.slot_name}
        text, attr_spans, entity_spans = _fill(template, fact, slot_for)
        statements.append(
            Statement(
                text=text,
                domain=fact.domain,
                entity_name=fact.entity_name,
                format=ATOMIC,
                attribute_spans=attr_spans,
                entity_spans=entity_spans,
            )
        )
    return statements


def render_composite(fact: Fact, templates: TemplateSet) -> Statement:
    """A single Statement covering every slot the composite template names."""
    if not templates.composite:
        raise MissingTemplate(f"domain '{templates.domain}' has no composite template")
    slot_for = {s: s for s in templates.composite_slots()}
    text, attr_spans, entity_spans = _fill(templates.composite, fact, slot_for)
    return Statement(
        text=text,
        domain=fact.domain,
        entity_name=fact.entity_name,
        format=COMPOSITE,
        attribute_spans=attr_spans,
        entity_spans=entity_spans,
    )


def build_corpus(
    kb: KnowledgeBase,
    templates: TemplateSet,
    mode: str = BOTH,
) -> list[Statement]:
    """All statements for a KB in deterministic order (fact, then slot).

    mode=both concatenates each fact's atomic statements with its composite
    one, so a fact with n templated slots yields n+1 statements.
    """
    if mode not in (ATOMIC, COMPOSITE, BOTH):
        raise ValueError(f"unknown corpus mode '{mode}'")
    corpus: list[Statement] = []
    for fact in kb.facts:
        if mode in (ATOMIC, BOTH):
            corpus.extend(render_atomic(fact, templates))
        if mode in (COMPOSITE, BOTH):
            corpus.append(render_composite(fact, templates))
    return corpus


def corrupt(statement: Statement, rng: random.Random) -> MaskedStatement:
    """Mask one attribute span, chosen uniformly; the entity is never masked."""
    if not statement.attribute_spans:
        raise NothingToMask(f"statement has no attribute spans: {statement.text!r}")
    slot_name, start, end = statement.attribute_spans[
        rng.randrange(len(statement.attribute_spans))
    ]
    return MaskedStatement(
        input_text=statement.text[:start] + MASK_TOKEN + statement.text[end:],
        target_text=statement.text,
        masked_slot=slot_name,
        masked_value=statement.text[start:end],
        domain=statement.domain,
        entity_name=statement.entity_name,
    )


def expand_all_corruptions(statement: Statement) -> list[MaskedStatement]:
    """Every possible single-span masking of a statement, in span order."""
    out = []
    for slot_name, start, end in statement.attribute_spans:
        out.append(
            MaskedStatement(
                input_text=statement.text[:start] + MASK_TOKEN + statement.text[end:],
                target_text=statement.text,
                masked_slot=slot_name,
                masked_value=statement.text[start:end],
                domain=statement.domain,
                entity_name=statement.entity_name,
            )
        )
    return out


def write_statements(path: str | Path, statements: list[Statement]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for stmt in statements:
            fh.write(json.dumps(stmt.to_json(), ensure_ascii=False) + "\n")


def read_statements(path: str | Path) -> list[Statement]:
    with open(path, encoding="utf-8") as fh:
        return [Statement.from_json(json.loads(line)) for line in fh if line.strip()]


def write_masked(path: str | Path, masked: list[MaskedStatement]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ms in masked:
            fh.write(json.dumps(ms.to_json(), ensure_ascii=False) + "\n")


def read_masked(path: str | Path) -> list[MaskedStatement]:
    with open(path, encoding="utf-8") as fh:
        return [MaskedStatement.from_json(json.loads(line)) for line in fh if line.strip()]


BUILTIN_TEMPLATES: dict[str, TemplateSet] = {
    "restaurant": TemplateSet(
        domain="restaurant",
        atomic={
            "address": "The restaurant {entity} is located at {value}.",
            "area": "The restaurant {entity} is located in the {value} area of the city.",
            "food": "The restaurant {entity} serves {value} food.",
            "phone": "The phone number of the restaurant {entity} is {value}.",
            "postcode": "The postcode of the restaurant {entity} is {value}.",
            "pricerange": "The restaurant {entity} is in the {value} price range.",
            "type": "{entity} is a {value}.",
        },
        composite=(
            "{entity} is a {type} that serves {food} food in the {pricerange} "
            "price range. It is located at {location}, in the {area} area of the "
            "city, in the {postcode} postcode. Its phone number is {phone}."
        ),
    ),
    "hotel": TemplateSet(
        domain="hotel",
        atomic={
            "address": "The hotel {entity} is located at {value}.",
            "area": "The hotel {entity} is located in the {value} area of the city.",
            "internet": "The hotel {entity} does{neg}have free internet.",
            "parking": "The hotel {entity} does{neg}have free parking.",
            "phone": "The phone number of the hotel {entity} is {value}.",
            "pricerange": "The hotel {entity} is in the {value} price range.",
            "stars": "The hotel {entity} is rated as {value} stars.",
            "type": "The hotel {entity} is a {value}.",
        },
        composite=(
            "The hotel {entity} is a {type} in the {pricerange} price range. "
            "It is rated {stars} stars. It is located at {location}, in the "
            "{area} area of the city, in the {postcode} postcode. Its phone "
            "number is {phone}. It does{parking}have free parking and it "
            "does{internet}have free internet."
        ),
    ),
    "attraction": TemplateSet(
        domain="attraction",
        atomic={
            "address": "The attraction {entity} is located at {value}.",
            "area": "The attraction {entity} is located in the {value} area of the city.",
            "entrance fee": "The entrance fee for the attraction {entity} is {value}.",
            "phone": "The phone number of the attraction {entity} is {value}.",
            "postcode": "The postcode of the attraction {entity} is {value}.",
            "pricerange": "The attraction {entity} is in the {value} price range.",
            "type": "The attraction {entity} is {value}.",
        },
        composite=(
            "The attraction {entity} is {type} in the {pricerange} price range. "
            "The entrance fee is {entrance fee}. It is located at {location}, "
            "in the {area} area of the city, in the {postcode} postcode. "
            "Its phone number is {phone}."
        ),
    ),
    "train": TemplateSet(
        domain="train",
        atomic={
            "arriveBy": "The {entity} train arrives at its destination by {value}.",
            "day": "The {entity} train operates every {value}.",
            "departure": "The {entity} train departs from {value}.",
            "destination": "The destination of the {entity} train is {value}.",
            "duration": "The duration of the journey with the {entity} train is {value}.",
            "leaveAt": "The {entity} train leaves at {value}.",
            "price": "The ticket price for the {entity} train is {value}.",
        },
        composite=(
            "The {entity} train departs from {departure} every {day}. "
            "It leaves at {leaveAt}. Its destination is {destination} where it "
            "arrives at {arriveBy}. The duration of the journey is {duration}. "
            "The ticket price for this train is {price}."
        ),
    ),
}
