"""Synthetic multi-domain world for desk-scale experiments.

Four invented service domains (bistro, lodge, museum, coach) with five
slots each, spanning every perturbable value kind. The builder produces:

- evaluation KBs whose entities split into a "familiar" subset (mentioned
  in fine-tuning dialogues) and a "held-out" subset (mentioned only in
  evaluation dialogues, so a model that never memorized the KB has no way
  to know their attributes);
- a larger pretraining world with different entities but the same value
  vocabulary, name syllabary, and templates, so a backbone pretrained on
  it handles the language of the evaluation world without knowing any of
  its facts;
- grounded dialogues in MultiWOZ 2.2 JSON layout for fine-tuning and for
  benchmark extraction.

Everything derives deterministically from one seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .kb import (
    BOOLEAN,
    CATEGORICAL,
    INTEGER,
    PHONE,
    TIME,
    DomainSpec,
    Fact,
    KnowledgeBase,
    SlotValue,
    save_kb,
    value_text,
)
from .seeding import stream_rng
from .verbalize import TemplateSet

AREAS = ["centre", "north", "south", "east", "west", "riverside", "old town"]
FOODS = ["italian", "indian", "thai", "seafood", "vegan", "persian", "mexican", "turkish"]
PRICERANGES = ["cheap", "moderate", "expensive", "premium"]
THEMES = ["history", "science", "art", "maritime", "textiles", "printing"]
PLACES = ["cambridge", "london", "norwich", "ely", "peterborough", "ipswich", "stansted", "birmingham"]
DAYS = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"]

_STEMS = [
    "bara", "celo", "dima", "fenra", "golo", "hita", "jora", "kemi",
    "luva", "mona", "nerro", "osti", "pella", "quira", "riva", "senna",
    "tovi", "ulma", "vesta", "wora", "yali", "zemi", "arno", "brivo",
    "casta", "delfo", "erin", "fole", "gavi", "helo", "iska", "jessa",
    "kond", "lira", "mirava", "noldo", "opala", "prato", "ronda", "silvo",
]
_SUFFIXES = {
    "bistro": ["Bistro", "Kitchen", "Table", "Corner"],
    "lodge": ["Lodge", "Inn", "House", "Rest"],
    "museum": ["Museum", "Gallery", "Hall", "Archive"],
}
_COACH_LETTERS = ["BD", "CR", "FL", "GN", "KT", "MV", "PS", "RW"]

SYNTH_DOMAINS: dict[str, DomainSpec] = {
    "bistro": DomainSpec(
        domain="bistro",
        entity_field="name",
        slot_kinds={
            "food": CATEGORICAL,
            "area": CATEGORICAL,
            "pricerange": CATEGORICAL,
            "phone": PHONE,
            "opens": TIME,
        },
        required_slots=("food", "area", "pricerange", "phone", "opens"),
    ),
    "lodge": DomainSpec(
        domain="lodge",
        entity_field="name",
        slot_kinds={
            "area": CATEGORICAL,
            "pricerange": CATEGORICAL,
            "stars": INTEGER,
            "parking": BOOLEAN,
            "phone": PHONE,
        },
        required_slots=("area", "pricerange", "stars", "parking", "phone"),
    ),
    "museum": DomainSpec(
        domain="museum",
        entity_field="name",
        slot_kinds={
            "theme": CATEGORICAL,
            "area": CATEGORICAL,
            "fee": INTEGER,
            "phone": PHONE,
            "opens": TIME,
        },
        required_slots=("theme", "area", "fee", "phone", "opens"),
    ),
    "coach": DomainSpec(
        domain="coach",
        entity_field="coachID",
        slot_kinds={
            "departure": CATEGORICAL,
            "destination": CATEGORICAL,
            "day": CATEGORICAL,
            "leaves": TIME,
            "price": INTEGER,
        },
        required_slots=("departure", "destination", "day", "leaves", "price"),
    ),
}

SYNTH_TEMPLATES: dict[str, TemplateSet] = {
    "bistro": TemplateSet(
        domain="bistro",
        atomic={
            "food": "The bistro {entity} serves {value} food.",
            "area": "The bistro {entity} is located in the {value} area.",
            "pricerange": "The bistro {entity} is in the {value} price range.",
            "phone": "The phone number of the bistro {entity} is {value}.",
            "opens": "The bistro {entity} opens at {value}.",
        },
        composite=(
            "{entity} is a bistro that serves {food} food in the {pricerange} "
            "price range. It is located in the {area} area. It opens at "
            "{opens}. Its phone number is {phone}."
        ),
    ),
    "lodge": TemplateSet(
        domain="lodge",
        atomic={
            "area": "The lodge {entity} is located in the {value} area.",
            "pricerange": "The lodge {entity} is in the {value} price range.",
            "stars": "The lodge {entity} is rated as {value} stars.",
            "parking": "The lodge {entity} does{neg}have free parking.",
            "phone": "The phone number of the lodge {entity} is {value}.",
        },
        composite=(
            "The lodge {entity} is in the {pricerange} price range. It is "
            "rated {stars} stars. It is located in the {area} area. It "
            "does{parking}have free parking. Its phone number is {phone}."
        ),
    ),
    "museum": TemplateSet(
        domain="museum",
        atomic={
            "theme": "The museum {entity} is dedicated to {value}.",
            "area": "The museum {entity} is located in the {value} area.",
            "fee": "The entrance fee for the museum {entity} is {value}.",
            "phone": "The phone number of the museum {entity} is {value}.",
            "opens": "The museum {entity} opens at {value}.",
        },
        composite=(
            "The museum {entity} is dedicated to {theme}. The entrance fee "
            "is {fee}. It is located in the {area} area. It opens at "
            "{opens}. Its phone number is {phone}."
        ),
    ),
    "coach": TemplateSet(
        domain="coach",
        atomic={
            "departure": "The {entity} coach departs from {value}.",
            "destination": "The destination of the {entity} coach is {value}.",
            "day": "The {entity} coach operates every {value}.",
            "leaves": "The {entity} coach leaves at {value}.",
            "price": "The ticket price for the {entity} coach is {value}.",
        },
        composite=(
            "The {entity} coach departs from {departure} every {day}. It "
            "leaves at {leaves}. Its destination is {destination}. The "
            "ticket price for this coach is {price}."
        ),
    ),
}


@dataclass
class SynthWorld:
    kbs: dict[str, KnowledgeBase]
    pretrain_kbs: dict[str, KnowledgeBase]
    templates: dict[str, TemplateSet]
    train_dialogues: list[dict]
    eval_dialogues: list[dict]
    entity_split: dict[str, dict[str, list[str]]] = field(default_factory=dict)

    @property
    def domains(self) -> list[str]:
        return sorted(self.kbs)


def _entity_name(domain: str, rng, used: set[str]) -> str:
    for _ in range(1000):
        if domain == "coach":
            name = rng.choice(_COACH_LETTERS) + "".join(
                str(rng.randrange(10)) for _ in range(4)
            )
        else:
            stem = rng.choice(_STEMS).capitalize()
            name = f"{stem} {rng.choice(_SUFFIXES[domain])}"
        if name not in used:
            used.add(name)
            return name
    raise RuntimeError(f"name pool exhausted for domain '{domain}'")


def _time_value(rng) -> str:
    return f"{rng.randrange(5, 23):02d}:{rng.choice(['00', '15', '30', '45'])}"


def _phone_value(rng, used: set[str]) -> str:
    while True:
        phone = "0" + "".join(str(rng.randrange(10)) for _ in range(10))
        if phone not in used:
            used.add(phone)
            return phone


def _make_fact(domain: str, name: str, rng, used_phones: set[str]) -> Fact:
    spec = SYNTH_DOMAINS[domain]
    if domain == "bistro":
        values: dict[str, str | bool] = {
            "food": rng.choice(FOODS),
            "area": rng.choice(AREAS),
            "pricerange": rng.choice(PRICERANGES),
            "phone": _phone_value(rng, used_phones),
            "opens": _time_value(rng),
        }
    elif domain == "lodge":
        values = {
            "area": rng.choice(AREAS),
            "pricerange": rng.choice(PRICERANGES),
            "stars": str(rng.randrange(1, 6)),
            "parking": rng.random() < 0.6,
            "phone": _phone_value(rng, used_phones),
        }
    elif domain == "museum":
        values = {
            "theme": rng.choice(THEMES),
            "area": rng.choice(AREAS),
            "fee": str(rng.randrange(0, 16)),
            "phone": _phone_value(rng, used_phones),
            "opens": _time_value(rng),
        }
    elif domain == "coach":
        departure = rng.choice(PLACES)
        destination = rng.choice([p for p in PLACES if p != departure])
        values = {
            "departure": departure,
            "destination": destination,
            "day": rng.choice(DAYS),
            "leaves": _time_value(rng),
            "price": f"{rng.randrange(8, 60)} pounds",
        }
    else:
        raise ValueError(f"unknown synthetic domain '{domain}'")
    slots = tuple(
        SlotValue(slot, values[slot], spec.kind_of(slot)) for slot in spec.required_slots
    )
    return Fact(domain=domain, entity_name=name, slots=slots)


def _make_kb(domain: str, n_facts: int, rng, used_names: set[str]) -> KnowledgeBase:
    used_phones: set[str] = set()
    facts = [
        _make_fact(domain, _entity_name(domain, rng, used_names), rng, used_phones)
        for _ in range(n_facts)
    ]
    spec = SYNTH_DOMAINS[domain]
    return KnowledgeBase(
        domain=domain, facts=facts, slot_kind_table=dict(spec.slot_kinds), spec=spec
    )


_REQUESTS = {
    "bistro": [
        ("i am looking for a bistro that serves {food} food in the {area} area .", ("food", "area")),
        ("i want a {pricerange} bistro in the {area} area .", ("pricerange", "area")),
        ("can you find me a bistro serving {food} food in the {pricerange} price range ?", ("food", "pricerange")),
    ],
    "lodge": [
        ("i need a lodge in the {area} area in the {pricerange} price range .", ("area", "pricerange")),
        ("find me a {pricerange} lodge rated {stars} stars .", ("pricerange", "stars")),
        ("is there a lodge in the {area} area rated {stars} stars ?", ("area", "stars")),
    ],
    "museum": [
        ("i am looking for a museum dedicated to {theme} in the {area} area .", ("theme", "area")),
        ("is there a museum about {theme} anywhere in the {area} area ?", ("theme", "area")),
    ],
    "coach": [
        ("i need a coach from {departure} to {destination} .", ("departure", "destination")),
        ("i am looking for a coach from {departure} to {destination} on {day} .", ("departure", "destination", "day")),
    ],
}

_INTROS = {
    "bistro": [
        "you could try {entity} . the bistro {entity} serves {food} food .",
        "how about {entity} ? the bistro {entity} is in the {pricerange} price range .",
        "i recommend {entity} . the bistro {entity} is located in the {area} area .",
    ],
    "lodge": [
        "you could try {entity} . the lodge {entity} is rated as {stars} stars .",
        "how about {entity} ? the lodge {entity} is located in the {area} area .",
        "i recommend {entity} . the lodge {entity} is in the {pricerange} price range .",
    ],
    "museum": [
        "you could visit {entity} . the museum {entity} is dedicated to {theme} .",
        "how about {entity} ? the museum {entity} is located in the {area} area .",
    ],
    "coach": [
        "the {entity} coach departs from {departure} every {day} .",
        "you could take the {entity} coach . the destination of the {entity} coach is {destination} .",
    ],
}

_ASKS = {
    "bistro": [
        ("what is the phone number ?", "phone", "the phone number of the bistro {entity} is {phone} ."),
        ("when does it open ?", "opens", "the bistro {entity} opens at {opens} ."),
    ],
    "lodge": [
        ("what is the phone number ?", "phone", "the phone number of the lodge {entity} is {phone} ."),
        ("how many stars does it have ?", "stars", "the lodge {entity} is rated as {stars} stars ."),
    ],
    "museum": [
        ("how much is the entrance fee ?", "fee", "the entrance fee for the museum {entity} is {fee} ."),
        ("what is the phone number ?", "phone", "the phone number of the museum {entity} is {phone} ."),
        ("when does it open ?", "opens", "the museum {entity} opens at {opens} ."),
    ],
    "coach": [
        ("what is the ticket price ?", "price", "the ticket price for the {entity} coach is {price} ."),
        ("when does it leave ?", "leaves", "the {entity} coach leaves at {leaves} ."),
    ],
}

_SUMMARIES = {
    "bistro": "the bistro {entity} serves {food} food",
    "lodge": "the lodge {entity} is rated as {stars} stars",
    "museum": "the museum {entity} is dedicated to {theme}",
    "coach": "the {entity} coach leaves at {leaves}",
}


def _fact_fields(fact: Fact) -> dict[str, str]:
    fields = {"entity": fact.entity_name}
    for sv in fact.slots:
        fields[sv.slot_name] = value_text(sv)
    return fields


def _user_turn(text: str, state: dict[str, dict[str, str]], requested: dict[str, list[str]]) -> dict:
    frames = []
    for dom in sorted(set(state) | set(requested)):
        frames.append(
            {
                "service": dom,
                "state": {
                    "slot_values": {
                        f"{dom}-{slot}": [val]
                        for slot, val in sorted(state.get(dom, {}).items())
                    },
                    "requested_slots": [f"{dom}-{s}" for s in requested.get(dom, [])],
                },
            }
        )
    return {"speaker": "USER", "utterance": text, "frames": frames}


def _system_turn(text: str) -> dict:
    return {"speaker": "SYSTEM", "utterance": text, "frames": []}


def _domain_exchange(
    domain: str, fact: Fact, rng, state: dict[str, dict[str, str]]
) -> list[dict]:
    """Two user/system exchanges about one entity, with state tracking."""
    fields = _fact_fields(fact)
    req_text, req_slots = rng.choice(_REQUESTS[domain])
    state.setdefault(domain, {}).update({s: fields[s] for s in req_slots})
    intro = rng.choice(_INTROS[domain])
    ask_text, ask_slot, answer = rng.choice(_ASKS[domain])
    return [
        _user_turn(req_text.format(**fields), {d: dict(s) for d, s in state.items()}, {}),
        _system_turn(intro.format(**fields)),
        _user_turn(ask_text, {d: dict(s) for d, s in state.items()}, {domain: [ask_slot]}),
        _system_turn(answer.format(**fields)),
    ]


def _single_domain_dialogue(dialogue_id: str, domain: str, fact: Fact, rng) -> dict:
    state: dict[str, dict[str, str]] = {}
    turns = _domain_exchange(domain, fact, rng, state)
    if rng.random() < 0.5:
        turns.append(_user_turn("thank you , goodbye .", {d: dict(s) for d, s in state.items()}, {}))
        turns.append(_system_turn("you are welcome . goodbye ."))
    for i, turn in enumerate(turns):
        turn["turn_id"] = str(i)
    return {"dialogue_id": dialogue_id, "services": [domain], "turns": turns}


def _multi_domain_dialogue(
    dialogue_id: str, parts: list[tuple[str, Fact]], rng
) -> dict:
    state: dict[str, dict[str, str]] = {}
    turns: list[dict] = []
    for domain, fact in parts:
        turns.extend(_domain_exchange(domain, fact, rng, state))
    summary = " and ".join(
        _SUMMARIES[d].format(**_fact_fields(f)) for d, f in parts
    )
    turns.append(
        _user_turn("can you summarize that for me ?", {d: dict(s) for d, s in state.items()}, {})
    )
    turns.append(_system_turn(summary + " ."))
    for i, turn in enumerate(turns):
        turn["turn_id"] = str(i)
    return {
        "dialogue_id": dialogue_id,
        "services": [d for d, _ in parts],
        "turns": turns,
    }


def build_world(
    seed: int = 0,
    facts_per_domain: int = 50,
    familiar_fraction: float = 0.6,
    pretrain_facts_per_domain: int = 60,
    train_dialogues_per_domain: int = 30,
    eval_dialogues_per_domain: int = 60,
    multi_train: int = 12,
    multi_eval: int = 24,
) -> SynthWorld:
    """Build KBs, templates, splits, and dialogues from one seed.

    Fine-tuning dialogues mention only the familiar entity subset;
    evaluation dialogues mention only the held-out subset. The pretraining
    KBs reuse the same name syllabary and value pools with disjoint
    entities, giving full token coverage with zero fact overlap.
    """
    used_names: set[str] = set()
    kbs = {}
    pretrain_kbs = {}
    for domain in sorted(SYNTH_DOMAINS):
        kb_rng = stream_rng(seed, f"kb:{domain}")
        kbs[domain] = _make_kb(domain, facts_per_domain, kb_rng, used_names)
        pre_rng = stream_rng(seed, f"pretrain-kb:{domain}")
        pretrain_kbs[domain] = _make_kb(
            domain, pretrain_facts_per_domain, pre_rng, used_names
        )

    entity_split: dict[str, dict[str, list[str]]] = {}
    for domain, kb in kbs.items():
        names = kb.entities()
        n_familiar = max(1, int(len(names) * familiar_fraction))
        entity_split[domain] = {
            "familiar": names[:n_familiar],
            "held_out": names[n_familiar:],
        }

    def facts_for(domain: str, subset: str) -> list[Fact]:
        wanted = set(entity_split[domain][subset])
        return [f for f in kbs[domain].facts if f.entity_name in wanted]

    train_dialogues = []
    counter = 0
    for domain in sorted(SYNTH_DOMAINS):
        rng = stream_rng(seed, f"dialogues:train:{domain}")
        pool = facts_for(domain, "familiar")
        for _ in range(train_dialogues_per_domain):
            fact = pool[rng.randrange(len(pool))]
            counter += 1
            train_dialogues.append(
                _single_domain_dialogue(f"SYNT{counter:04d}.json", domain, fact, rng)
            )
    rng = stream_rng(seed, "dialogues:train:multi")
    domains = sorted(SYNTH_DOMAINS)
    for _ in range(multi_train):
        d1, d2 = rng.sample(domains, 2)
        f1 = rng.choice(facts_for(d1, "familiar"))
        f2 = rng.choice(facts_for(d2, "familiar"))
        counter += 1
        train_dialogues.append(
            _multi_domain_dialogue(f"SYNT{counter:04d}.json", [(d1, f1), (d2, f2)], rng)
        )

    eval_dialogues = []
    counter = 0
    for domain in sorted(SYNTH_DOMAINS):
        rng = stream_rng(seed, f"dialogues:eval:{domain}")
        pool = facts_for(domain, "held_out")
        for _ in range(eval_dialogues_per_domain):
            fact = pool[rng.randrange(len(pool))]
            counter += 1
            eval_dialogues.append(
                _single_domain_dialogue(f"SYNE{counter:04d}.json", domain, fact, rng)
            )
    rng = stream_rng(seed, "dialogues:eval:multi")
    for _ in range(multi_eval):
        d1, d2 = rng.sample(domains, 2)
        f1 = rng.choice(facts_for(d1, "held_out"))
        f2 = rng.choice(facts_for(d2, "held_out"))
        counter += 1
        eval_dialogues.append(
            _multi_domain_dialogue(f"SYNE{counter:04d}.json", [(d1, f1), (d2, f2)], rng)
        )

    return SynthWorld(
        kbs=kbs,
        pretrain_kbs=pretrain_kbs,
        templates=dict(SYNTH_TEMPLATES),
        train_dialogues=train_dialogues,
        eval_dialogues=eval_dialogues,
        entity_split=entity_split,
    )


def world_texts(world: SynthWorld) -> list[str]:
    """Every text the pipeline may tokenize, for vocabulary building."""
    from .verbalize import BOTH, build_corpus

    texts = []
    for group in (world.pretrain_kbs, world.kbs):
        for domain in sorted(group):
            for stmt in build_corpus(group[domain], world.templates[domain], BOTH):
                texts.append(stmt.text)
    for dialogues in (world.train_dialogues, world.eval_dialogues):
        for dlg in dialogues:
            for turn in dlg["turns"]:
                texts.append(turn["utterance"])
            for turn in dlg["turns"]:
                for frame in turn.get("frames", []):
                    for key, vals in (frame.get("state", {}).get("slot_values") or {}).items():
                        dom, _, slot = key.partition("-")
                        for val in vals:
                            texts.append(f"state: {dom} {slot}={val}")
    return texts


def write_world(world: SynthWorld, out_dir: str | Path) -> None:
    """Write KBs, templates, dialogues, and the entity split to disk."""
    out = Path(out_dir)
    for sub in ("kb", "pretrain_kb", "templates", "dialogues"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    for domain, kb in world.kbs.items():
        save_kb(kb, out / "kb" / f"{domain}.json")
    for domain, kb in world.pretrain_kbs.items():
        save_kb(kb, out / "pretrain_kb" / f"{domain}.json")
    for domain, templates in world.templates.items():
        with open(out / "templates" / f"{domain}.json", "w", encoding="utf-8") as fh:
            json.dump(templates.to_json(), fh, indent=1)
            fh.write("\n")
    with open(out / "dialogues" / "train.json", "w", encoding="utf-8") as fh:
        json.dump(world.train_dialogues, fh, indent=1)
        fh.write("\n")
    with open(out / "dialogues" / "eval.json", "w", encoding="utf-8") as fh:
        json.dump(world.eval_dialogues, fh, indent=1)
        fh.write("\n")
    with open(out / "entity_split.json", "w", encoding="utf-8") as fh:
        json.dump(world.entity_split, fh, indent=1, sort_keys=True)
        fh.write("\n")
