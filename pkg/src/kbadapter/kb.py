"""Loading, validation, and summaries of domain knowledge bases.

KBs are UTF-8 JSON arrays of flat entity records (MultiWOZ 2.2 schema). Each
record becomes one Fact; slot value kinds come from a fixed per-domain table
so that downstream perturbation logic can dispatch on kind rather than guess
from surface strings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyKB, MalformedKB

CATEGORICAL = "categorical"
PHONE = "phone"
INTEGER = "integer"
TIME = "time"
COORDINATES = "coordinates"
BOOLEAN = "boolean"
FREE_TEXT = "free_text"

VALUE_KINDS = frozenset(
    {CATEGORICAL, PHONE, INTEGER, TIME, COORDINATES, BOOLEAN, FREE_TEXT}
)

_TRUE_STRINGS = {"yes", "true", "1"}
_FALSE_STRINGS = {"no", "false", "0"}


@dataclass(frozen=True)
class DomainSpec:
    """Schema for one domain: identifying field, slot kinds, required slots.

    Required slots are exactly the slots the built-in statement templates
    consume; which slots caused entries to be dropped in the original KB
    filtering is not documented anywhere, so this is the reconstruction the
    whole pipeline is built around.
    """

    domain: str
    entity_field: str
    slot_kinds: dict[str, str]
    required_slots: tuple[str, ...]

    def kind_of(self, slot_name: str) -> str:
        return self.slot_kinds.get(slot_name, FREE_TEXT)

    @staticmethod
    def from_json(source: str | Path | dict) -> "DomainSpec":
        if isinstance(source, dict):
            raw = source
        else:
            with open(source, encoding="utf-8") as fh:
                raw = json.load(fh)
        return DomainSpec(
            domain=raw["domain"],
            entity_field=raw.get("entity_field", "name"),
            slot_kinds=dict(raw.get("slot_kinds", {})),
            required_slots=tuple(raw.get("required_slots", [])),
        )

    def to_json(self) -> dict:
        return {
            "domain": self.domain,
            "entity_field": self.entity_field,
            "slot_kinds": dict(self.slot_kinds),
            "required_slots": list(self.required_slots),
        }


BUILTIN_DOMAINS: dict[str, DomainSpec] = {
    "restaurant": DomainSpec(
        domain="restaurant",
        entity_field="name",
        slot_kinds={
            "address": FREE_TEXT,
            "area": CATEGORICAL,
            "food": CATEGORICAL,
            "phone": PHONE,
            "postcode": CATEGORICAL,
            "pricerange": CATEGORICAL,
            "type": CATEGORICAL,
            "location": COORDINATES,
        },
        required_slots=(
            "address", "area", "food", "phone", "postcode",
            "pricerange", "type", "location",
        ),
    ),
    "hotel": DomainSpec(
        domain="hotel",
        entity_field="name",
        slot_kinds={
            "address": FREE_TEXT,
            "area": CATEGORICAL,
            "internet": BOOLEAN,
            "parking": BOOLEAN,
            "phone": PHONE,
            "postcode": CATEGORICAL,
            "pricerange": CATEGORICAL,
            "stars": INTEGER,
            "type": CATEGORICAL,
            "location": COORDINATES,
        },
        required_slots=(
            "address", "area", "internet", "parking", "phone", "postcode",
            "pricerange", "stars", "type", "location",
        ),
    ),
    "attraction": DomainSpec(
        domain="attraction",
        entity_field="name",
        slot_kinds={
            "address": FREE_TEXT,
            "area": CATEGORICAL,
            "entrance fee": INTEGER,
            "phone": PHONE,
            "postcode": CATEGORICAL,
            "pricerange": CATEGORICAL,
            "type": CATEGORICAL,
            "location": COORDINATES,
        },
        required_slots=(
            "address", "area", "entrance fee", "phone", "postcode",
            "pricerange", "type", "location",
        ),
    ),
    "train": DomainSpec(
        domain="train",
        entity_field="trainID",
        slot_kinds={
            "arriveBy": TIME,
            "day": CATEGORICAL,
            "departure": CATEGORICAL,
            "destination": CATEGORICAL,
            "duration": FREE_TEXT,
            "leaveAt": TIME,
            "price": INTEGER,
        },
        required_slots=(
            "arriveBy", "day", "departure", "destination",
            "duration", "leaveAt", "price",
        ),
    ),
}


@dataclass(frozen=True)
class SlotValue:
    slot_name: str
    value: str | bool
    value_kind: str


@dataclass(frozen=True)
class Fact:
    domain: str
    entity_name: str
    slots: tuple[SlotValue, ...]

    def get(self, slot_name: str) -> SlotValue | None:
        for sv in self.slots:
            if sv.slot_name == slot_name:
                return sv
        return None

    def value(self, slot_name: str) -> str | bool | None:
        sv = self.get(slot_name)
        return sv.value if sv is not None else None

    def slot_names(self) -> tuple[str, ...]:
        return tuple(sv.slot_name for sv in self.slots)


@dataclass
class KnowledgeBase:
    domain: str
    facts: list[Fact]
    slot_kind_table: dict[str, str] = field(default_factory=dict)
    spec: DomainSpec | None = None

    def __len__(self) -> int:
        return len(self.facts)

    def entities(self) -> list[str]:
        return [f.entity_name for f in self.facts]

    def by_entity(self, entity_name: str) -> Fact | None:
        """First fact for an entity name (names are unique once validated)."""
        for f in self.facts:
            if f.entity_name == entity_name:
                return f
        return None

    def slot_values(self, slot_name: str) -> list[str]:
        """Distinct string values observed for a slot, in sorted order."""
        seen = {
            sv.value
            for f in self.facts
            for sv in f.slots
            if sv.slot_name == slot_name and isinstance(sv.value, str)
        }
        return sorted(seen)


def value_text(sv: SlotValue) -> str:
    """Surface form of a slot value; booleans map back to yes/no."""
    if isinstance(sv.value, bool):
        return "yes" if sv.value else "no"
    return str(sv.value)


@dataclass
class ValidationReport:
    kept: int
    dropped: list[tuple[str, str]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "kept": self.kept,
            "dropped": [{"entity": e, "reason": r} for e, r in self.dropped],
        }


def _coerce_value(raw: object, kind: str) -> str | bool:
    if kind == BOOLEAN:
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in _TRUE_STRINGS:
            return True
        if text in _FALSE_STRINGS:
            return False
        return str(raw)
    if kind == COORDINATES and isinstance(raw, (list, tuple)):
        # Kept verbatim as text, exactly as they appear in composite
        # statements; coordinates are never parsed or perturbed.
        return "[" + ", ".join(str(c) for c in raw) + "]"
    if kind == PHONE and isinstance(raw, str):
        stripped = raw.replace(" ", "")
        return stripped if stripped.isdigit() else raw
    if isinstance(raw, bool):
        return raw
    return str(raw)


def load_kb(
    path: str | Path,
    domain: str | None = None,
    spec: DomainSpec | None = None,
) -> KnowledgeBase:
    """Load a KB file into one Fact per record, record order preserved.

    Two file layouts are accepted: a flat array of record objects (the
    original MultiWOZ db layout, schema from `spec` or the built-in table)
    and a self-describing object {"domain", "spec", "facts"} as written by
    save_kb. Unknown slot names are retained with value_kind=free_text.
    An explicit `spec` argument always wins.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            records = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedKB(f"cannot parse KB file {path}: {exc}") from exc

    if isinstance(records, dict):
        if "facts" not in records:
            raise MalformedKB(f"KB object in {path} lacks a 'facts' array")
        if domain is None:
            domain = records.get("domain")
        if spec is None and isinstance(records.get("spec"), dict):
            spec = DomainSpec.from_json(records["spec"])
        records = records["facts"]
    if domain is None:
        raise MalformedKB(f"KB file {path} names no domain and none was given")
    if spec is None:
        spec = BUILTIN_DOMAINS.get(domain)
    if spec is None:
        spec = DomainSpec(domain=domain, entity_field="name", slot_kinds={}, required_slots=())

    if not isinstance(records, list):
        raise MalformedKB(f"KB file {path} is not a JSON array")
    if not records:
        raise EmptyKB(f"KB file {path} contains no records")

    facts = []
    for i, record in enumerate(records):
        if not isinstance(record, dict):
            raise MalformedKB(f"record {i} in {path} is not an object")
        entity_name = str(record.get(spec.entity_field, "") or "")
        slots = []
        for key, raw in record.items():
            if key == spec.entity_field:
                continue
            kind = spec.kind_of(key)
            slots.append(SlotValue(key, _coerce_value(raw, kind), kind))
        facts.append(Fact(domain=domain, entity_name=entity_name, slots=tuple(slots)))

    return KnowledgeBase(
        domain=domain,
        facts=facts,
        slot_kind_table=dict(spec.slot_kinds),
        spec=spec,
    )


def _is_empty(value: str | bool) -> bool:
    return isinstance(value, str) and value.strip() == ""


def validate_kb(
    kb: KnowledgeBase,
    required_slots: tuple[str, ...] | None = None,
) -> tuple[KnowledgeBase, ValidationReport]:
    """Drop facts with missing/empty required slots; report every drop.

    Also drops exact duplicate records (the fact-uniqueness invariant can
    only be established here). Idempotent: validating a validated KB drops
    nothing. Raises EmptyKB if nothing survives.
    """
    if required_slots is None:
        required_slots = kb.spec.required_slots if kb.spec is not None else ()

    kept: list[Fact] = []
    seen: set[tuple] = set()
    dropped: list[tuple[str, str]] = []
    for fact in kb.facts:
        if not fact.entity_name.strip():
            dropped.append((fact.entity_name, "missing entity name"))
            continue
        missing = [
            s for s in required_slots
            if fact.get(s) is None or _is_empty(fact.value(s))
        ]
        if missing:
            dropped.append((fact.entity_name, f"missing slot: {missing[0]}"))
            continue
        key = (fact.entity_name, fact.slots)
        if key in seen:
            dropped.append((fact.entity_name, "duplicate entry"))
            continue
        seen.add(key)
        kept.append(fact)

    if not kept:
        raise EmptyKB(f"all {len(kb.facts)} facts dropped during validation of '{kb.domain}'")

    filtered = KnowledgeBase(
        domain=kb.domain,
        facts=kept,
        slot_kind_table=dict(kb.slot_kind_table),
        spec=kb.spec,
    )
    return filtered, ValidationReport(kept=len(kept), dropped=dropped)


def kb_stats(kbs: list[KnowledgeBase]) -> dict[str, int]:
    """Exact fact count per domain."""
    return {kb.domain: len(kb.facts) for kb in kbs}


def serialize_kb(kb: KnowledgeBase) -> list[dict]:
    """KB back to its flat-record JSON form (booleans as yes/no)."""
    entity_field = kb.spec.entity_field if kb.spec is not None else "name"
    records = []
    for fact in kb.facts:
        record: dict[str, str] = {entity_field: fact.entity_name}
        for sv in fact.slots:
            if isinstance(sv.value, bool):
                record[sv.slot_name] = "yes" if sv.value else "no"
            else:
                record[sv.slot_name] = sv.value
        records.append(record)
    return records


def save_kb(kb: KnowledgeBase, path: str | Path) -> None:
    """Write the self-describing KB layout (domain + spec + facts)."""
    payload: dict | list
    if kb.spec is not None:
        payload = {
            "domain": kb.domain,
            "spec": kb.spec.to_json(),
            "facts": serialize_kb(kb),
        }
    else:
        payload = serialize_kb(kb)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=1)
        fh.write("\n")
