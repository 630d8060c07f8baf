"""Response-generation metrics: inform, success, combined, and BLEU."""

import math

import pytest

from kbadapter import synth
from kbadapter.kb import Fact, KnowledgeBase, SlotValue
from kbadapter.kprs import DialogueTurn
from kbadapter.metrics import (
    RGExample,
    bleu,
    extract_slot_mentions,
    inform_success,
    read_rg_examples,
    requested_slots_from_context,
    write_rg_examples,
)


def make_fact(domain, name, **values):
    spec = synth.SYNTH_DOMAINS[domain]
    slots = tuple(
        SlotValue(s, values[s], spec.kind_of(s)) for s in spec.required_slots
    )
    return Fact(domain=domain, entity_name=name, slots=slots)


def make_kb(domain, facts):
    spec = synth.SYNTH_DOMAINS[domain]
    return KnowledgeBase(
        domain=domain, facts=list(facts),
        slot_kind_table=dict(spec.slot_kinds), spec=spec,
    )


KBS = {
    "bistro": make_kb("bistro", [
        make_fact("bistro", "Roma Corner", food="italian", area="centre",
                  pricerange="cheap", phone="01223111222", opens="09:00"),
        make_fact("bistro", "Sabai Table", food="thai", area="north",
                  pricerange="expensive", phone="01223333444", opens="10:30"),
    ]),
    "lodge": make_kb("lodge", [
        make_fact("lodge", "Fenra Inn", area="centre", pricerange="cheap",
                  stars="4", parking=True, phone="01223999000"),
    ]),
}

PHONE_GOLD = "the phone number of the bistro Roma Corner is 01223111222 ."


def user(text, state=None, requested=None):
    return DialogueTurn("user", text, state or {}, requested or {})


def example(gold, generated, context=None, requested=(), domains=()):
    return RGExample(
        context=context if context is not None else [user("hello")],
        gold_response=gold,
        generated_response=generated,
        requested_slots=list(requested),
        domains=list(domains),
    )


# ---------------------------------------------------------- inform/success


def test_gold_equal_generations_score_one():
    examples = [
        example("you could try Roma Corner .", "you could try Roma Corner ."),
        example(PHONE_GOLD, PHONE_GOLD, requested=["phone"]),
    ]
    report = inform_success(examples, KBS)
    assert report.inform_rate == 1.0
    assert report.success_rate == 1.0
    assert report.combined == 1.0
    assert report.bleu == 100.0
    assert report.n == 2


def test_inform_vacuous_without_entity_mentions():
    report = inform_success(
        [example("sorry , no luck .", "i could not find anything .")], KBS
    )
    assert report.inform_rate == 1.0
    assert report.per_domain == {
        "none": {"inform_rate": 1.0, "success_rate": 1.0, "combined": 1.0, "n": 1},
    }


def test_inform_fails_on_constraint_violating_entity():
    context = [user("a lodge up north please", {"bistro": {"area": "north"}})]
    bad = example(
        "how about Sabai Table ?", "how about Roma Corner ?", context=context
    )
    good = example(
        "how about Sabai Table ?", "how about Sabai Table ?", context=context
    )
    report = inform_success([bad, good], KBS)
    assert report.inform_rate == 0.5


def test_success_requires_gold_requested_values():
    swapped = example(PHONE_GOLD, PHONE_GOLD.replace("01223111222", "01223333444"),
                      requested=["phone"])
    missing = example(PHONE_GOLD, "you could try Roma Corner .", requested=["phone"])
    extra = example(
        PHONE_GOLD, PHONE_GOLD + " it opens at 09:00 .", requested=["phone"]
    )
    report = inform_success([swapped, missing, extra], KBS)
    assert report.success_rate == pytest.approx(1 / 3)


def test_success_vacuous_when_gold_carries_no_requested_value():
    quiet = example("let me check that for you .", "one moment please .",
                    requested=["phone"])
    unasked = example(PHONE_GOLD, "you could try Roma Corner .")
    report = inform_success([quiet, unasked], KBS)
    assert report.success_rate == 1.0


def test_combined_is_the_mean_and_buckets_split():
    context = [user("hi", {"bistro": {"area": "north"}})]
    examples = [
        example(PHONE_GOLD, PHONE_GOLD, requested=["phone"], domains=["bistro"]),
        example("try Roma Corner .", "try Roma Corner .", context=context,
                domains=["bistro"]),
        example("the lodge Fenra Inn is rated as 4 stars .",
                "the lodge Fenra Inn is rated as 4 stars .",
                requested=["stars"], domains=["lodge"]),
    ]
    report = inform_success(examples, KBS)
    assert report.inform_rate == pytest.approx(2 / 3)
    assert report.success_rate == 1.0
    assert report.combined == pytest.approx((2 / 3 + 1.0) / 2)
    assert set(report.per_domain) == {"bistro", "lodge"}
    bistro = report.per_domain["bistro"]
    assert bistro["n"] == 2 and bistro["inform_rate"] == 0.5
    assert bistro["combined"] == pytest.approx((0.5 + 1.0) / 2)


def test_multi_domain_bucket_derived_from_mentions():
    text = "the bistro Roma Corner is cheap and the lodge Fenra Inn is rated as 4 stars ."
    report = inform_success([example(text, text)], KBS)
    assert set(report.per_domain) == {"multi"}


def test_inform_success_empty_is_an_error():
    with pytest.raises(ValueError):
        inform_success([], KBS)


# ------------------------------------------------------------- extraction


def test_requested_slots_from_context_ordered_unique():
    turns = [
        user("a", requested={"bistro": ["phone", "opens"]}),
        DialogueTurn("system", "b"),
        user("c", requested={"lodge": ["stars", "phone"]}),
    ]
    assert requested_slots_from_context(turns) == ["phone", "opens", "stars"]


def test_extract_slot_mentions_kinds():
    mentions = extract_slot_mentions(PHONE_GOLD, KBS)
    assert ("bistro", "entity", "Roma Corner", "name") in mentions
    assert ("bistro", "slot", "01223111222", "phone") in mentions
    assert len(mentions) == 2


# ------------------------------------------------------------------ BLEU


def test_bleu_identical_corpora():
    refs = ["you could try Roma Corner .", "it opens at 09:00 ."]
    assert bleu(list(refs), refs) == 100.0
    assert bleu(["The Cat Sat"], ["the cat sat"]) == 100.0


def test_bleu_disjoint_corpora():
    assert bleu(["alpha beta gamma"], ["delta epsilon zeta"]) == 0.0


def test_bleu_two_sentence_hand_value():
    """Hand-counted corpus BLEU for a two-pair corpus.

    Pair 1: gen "the cat sat on the mat ." (7 tokens) vs ref with "red"
    inserted (8 tokens); pair 2 identical 5-token sentences. Clipped
    matches / totals: 1-gram 12/12, 2-gram 9/10, 3-gram 6/8, 4-gram 4/6;
    brevity exp(1 - 13/12). BLEU = 100 * exp(-1/12) * (0.9 * 0.75 * 2/3
    / 1.0) ** 0.25 ~= 75.35.
    """
    gens = ["the cat sat on the mat .", "it opens at nine ."]
    refs = ["the cat sat on the red mat .", "it opens at nine ."]
    assert bleu(gens, refs) == pytest.approx(75.35, abs=0.1)


def test_bleu_brevity_penalty_hand_value():
    """Perfect precisions on a half-length generation: 100 * exp(-1)."""
    score = bleu(["the cat sat"], ["the cat sat on the mat"])
    assert score == pytest.approx(100 * math.exp(-1), abs=1e-9)
    assert bleu(["the cat sat on the mat"], ["the cat"]) < 100.0


def test_bleu_smoothing_keeps_short_overlaps_finite():
    score = bleu(["the cat ."], ["the dog ."])
    assert 0.0 < score < 100.0


def test_bleu_validation():
    with pytest.raises(ValueError):
        bleu([], [])
    with pytest.raises(ValueError):
        bleu(["a"], ["a", "b"])


# ------------------------------------------------------------------ files


def test_rg_example_roundtrip(tmp_path):
    examples = [
        example(PHONE_GOLD, "you could try Roma Corner .", requested=["phone"],
                domains=["bistro"],
                context=[user("hi", {"bistro": {"area": "centre"}},
                              {"bistro": ["phone"]})]),
        example("ok .", "ok ."),
    ]
    path = tmp_path / "rg.jsonl"
    write_rg_examples(path, examples)
    assert read_rg_examples(path) == examples


def test_report_json_shape():
    report = inform_success([example("ok .", "ok .")], KBS)
    raw = report.to_json()
    assert set(raw) == {
        "inform_rate", "success_rate", "combined", "bleu", "per_domain", "n",
    }
