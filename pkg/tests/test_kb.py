"""KB loading, validation, and round-trip behaviour."""

import json
import random

import pytest

from kbadapter.errors import EmptyKB, MalformedKB
from kbadapter.kb import (
    BOOLEAN,
    BUILTIN_DOMAINS,
    CATEGORICAL,
    COORDINATES,
    FREE_TEXT,
    PHONE,
    DomainSpec,
    KnowledgeBase,
    kb_stats,
    load_kb,
    save_kb,
    validate_kb,
    value_text,
)

from conftest import fig2_fact


def write_records(path, records):
    path.write_text(json.dumps(records), encoding="utf-8")
    return path


RESTAURANT_RECORD = {
    "name": "Pizza Hut City Centre",
    "address": "Regent Street City Centre",
    "area": "centre",
    "food": "Italian",
    "phone": "01223323737",
    "postcode": "cb21ab",
    "pricerange": "cheap",
    "type": "restaurant",
    "location": "[51.20103, 0.126023]",
}


def test_load_single_record(tmp_path):
    path = write_records(tmp_path / "r.json", [RESTAURANT_RECORD])
    kb = load_kb(path, "restaurant")
    assert len(kb.facts) == 1
    fact = kb.facts[0]
    assert fact.entity_name == "Pizza Hut City Centre"
    assert {sv.slot_name for sv in fact.slots} == {
        "address", "area", "food", "phone", "postcode", "pricerange", "type", "location",
    }
    assert fact.get("phone").value_kind == PHONE
    assert fact.get("area").value_kind == CATEGORICAL
    assert fact.get("location").value_kind == COORDINATES
    assert fact.get("location").value == "[51.20103, 0.126023]"


def test_load_empty_array_is_error(tmp_path):
    path = write_records(tmp_path / "e.json", [])
    with pytest.raises(EmptyKB):
        load_kb(path, "restaurant")


def test_load_parse_failure(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(MalformedKB):
        load_kb(path, "restaurant")


def test_load_non_array(tmp_path):
    path = write_records(tmp_path / "o.json", {"oops": 1})
    with pytest.raises(MalformedKB):
        load_kb(path, "restaurant")


def test_unknown_slots_kept_as_free_text(tmp_path):
    record = dict(RESTAURANT_RECORD, signature_dish="margherita")
    path = write_records(tmp_path / "r.json", [record])
    kb = load_kb(path, "restaurant")
    sv = kb.facts[0].get("signature_dish")
    assert sv is not None and sv.value_kind == FREE_TEXT


def test_boolean_normalization(tmp_path):
    record = {
        "name": "Acorn Guest House",
        "address": "154 chesterton road",
        "area": "north",
        "internet": "yes",
        "parking": "no",
        "phone": "01223353888",
        "pricerange": "moderate",
        "stars": "4",
        "type": "guesthouse",
    }
    kb = load_kb(write_records(tmp_path / "h.json", [record]), "hotel")
    fact = kb.facts[0]
    assert fact.get("internet").value is True
    assert fact.get("parking").value is False
    assert fact.get("internet").value_kind == BOOLEAN
    assert value_text(fact.get("parking")) == "no"


def test_validate_drops_missing_phone(tmp_path):
    record = {k: v for k, v in RESTAURANT_RECORD.items() if k != "phone"}
    kb = load_kb(write_records(tmp_path / "r.json", [RESTAURANT_RECORD, record, dict(record, name="Other")]), "restaurant")
    kb, report = validate_kb(kb)
    assert report.kept == 1
    assert any(reason == "missing slot: phone" for _, reason in report.dropped)


def test_validate_counts(tmp_path):
    records = []
    for i in range(10):
        r = dict(RESTAURANT_RECORD, name=f"Place {i}")
        if i in (3, 7):
            r["address"] = ""
        records.append(r)
    kb = load_kb(write_records(tmp_path / "r.json", records), "restaurant")
    kb, report = validate_kb(kb)
    assert report.kept == 8
    assert len(report.dropped) == 2


def test_validate_all_dropped(tmp_path):
    record = {k: v for k, v in RESTAURANT_RECORD.items() if k != "food"}
    kb = load_kb(write_records(tmp_path / "r.json", [record]), "restaurant")
    with pytest.raises(EmptyKB):
        validate_kb(kb)


def test_validate_idempotent(tmp_path):
    records = [dict(RESTAURANT_RECORD, name=f"P{i}") for i in range(5)]
    kb = load_kb(write_records(tmp_path / "r.json", records), "restaurant")
    kb1, rep1 = validate_kb(kb)
    kb2, rep2 = validate_kb(kb1)
    assert rep2.dropped == []
    assert rep2.kept == rep1.kept
    assert [f.entity_name for f in kb2.facts] == [f.entity_name for f in kb1.facts]


def test_validate_drops_duplicates(tmp_path):
    kb = load_kb(
        write_records(tmp_path / "r.json", [RESTAURANT_RECORD, dict(RESTAURANT_RECORD)]),
        "restaurant",
    )
    kb, report = validate_kb(kb)
    assert report.kept == 1
    assert any("duplicate" in reason for _, reason in report.dropped)


def test_kb_stats():
    assert kb_stats([]) == {}
    a = KnowledgeBase(domain="a", facts=[fig2_fact()] * 3)
    b = KnowledgeBase(domain="b", facts=[fig2_fact()] * 5)
    assert kb_stats([a, b]) == {"a": 3, "b": 5}


def test_roundtrip_validated_kb(tmp_path, world):
    """save_kb then load_kb reproduces facts, kinds, and spec exactly."""
    for domain, kb in world.kbs.items():
        path = tmp_path / f"{domain}.json"
        save_kb(kb, path)
        back = load_kb(path)
        assert back.domain == kb.domain
        assert back.spec.slot_kinds == kb.spec.slot_kinds
        assert len(back.facts) == len(kb.facts)
        for f1, f2 in zip(kb.facts, back.facts):
            assert f1.entity_name == f2.entity_name
            assert f1.slots == f2.slots


def test_legacy_array_roundtrip(tmp_path):
    kb = load_kb(write_records(tmp_path / "r.json", [RESTAURANT_RECORD]), "restaurant")
    kb, _ = validate_kb(kb)
    out = tmp_path / "out.json"
    save_kb(kb, out)
    again = load_kb(out)
    assert again.facts == kb.facts


def test_self_describing_requires_no_domain_arg(tmp_path, world):
    path = tmp_path / "kb.json"
    save_kb(world.kbs["lodge"], path)
    kb = load_kb(path)
    assert kb.domain == "lodge"
    assert kb.facts[0].get("parking").value_kind == BOOLEAN


def test_missing_domain_for_plain_array(tmp_path):
    path = write_records(tmp_path / "r.json", [RESTAURANT_RECORD])
    with pytest.raises(MalformedKB):
        load_kb(path)


def test_builtin_domain_tables():
    assert set(BUILTIN_DOMAINS) == {"restaurant", "hotel", "attraction", "train"}
    assert BUILTIN_DOMAINS["train"].entity_field == "trainID"
    assert BUILTIN_DOMAINS["hotel"].slot_kinds["parking"] == BOOLEAN
    for spec in BUILTIN_DOMAINS.values():
        assert set(spec.required_slots) <= set(spec.slot_kinds) | {spec.entity_field}


def test_spec_json_roundtrip(tmp_path):
    spec = BUILTIN_DOMAINS["attraction"]
    raw = spec.to_json()
    assert DomainSpec.from_json(raw) == spec
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(raw), encoding="utf-8")
    assert DomainSpec.from_json(path) == spec


def test_synthetic_kb_fuzz_roundtrip(tmp_path):
    """Random synthetic KBs survive save/load bit-exactly (seeded loop)."""
    rng = random.Random(13)
    from kbadapter import synth

    for trial in range(10):
        domain = rng.choice(sorted(synth.SYNTH_DOMAINS))
        used: set[str] = set()
        kb = synth._make_kb(domain, rng.randrange(1, 8), rng, used)
        path = tmp_path / f"{trial}.json"
        save_kb(kb, path)
        back = load_kb(path)
        assert back.facts == kb.facts
        assert back.spec == kb.spec
