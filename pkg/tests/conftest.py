"""Shared fixtures: one synthetic world and tokenizer per test session."""

import pytest
import torch

from kbadapter import synth
from kbadapter.model import ModelConfig, Seq2SeqTransformer
from kbadapter.tokenizer import WordTokenizer

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def world():
    return synth.build_world(seed=0)


@pytest.fixture(scope="session")
def tokenizer(world):
    return WordTokenizer.build(synth.world_texts(world))


@pytest.fixture(scope="session")
def model_config(tokenizer):
    return ModelConfig(vocab_size=len(tokenizer.tokens))


@pytest.fixture()
def tiny_plm(model_config):
    return Seq2SeqTransformer(model_config, seed=7)


@pytest.fixture(scope="session")
def mini_world():
    """A 6-fact-per-domain world small enough to train against in tests."""
    return synth.build_world(
        seed=3, facts_per_domain=6, pretrain_facts_per_domain=16,
        train_dialogues_per_domain=4, eval_dialogues_per_domain=4,
        multi_train=2, multi_eval=2,
    )


@pytest.fixture(scope="session")
def mini_tok(mini_world):
    return WordTokenizer.build(synth.world_texts(mini_world))


@pytest.fixture(scope="session")
def mini_p0(mini_world, mini_tok):
    """A d=64 backbone denoising-pretrained on the mini pretraining KBs.

    Built once per session; tests that train on top must deepcopy the
    backbone rather than mutate it.
    """
    from kbadapter.model import AugmentedModel
    from kbadapter.training import TrainConfig, sequential_finetune
    from kbadapter.verbalize import BOTH, build_corpus

    cfg = ModelConfig(
        vocab_size=len(mini_tok.tokens), d_model=64, n_heads=4, enc_layers=2,
        dec_layers=2, ffn_dim=128, max_len=128, dropout=0.1,
    )
    model = AugmentedModel(Seq2SeqTransformer(cfg, seed=1))
    mixed = []
    for dom in mini_world.domains:
        mixed.extend(
            build_corpus(mini_world.pretrain_kbs[dom], mini_world.templates[dom], BOTH)
        )
    sequential_finetune(
        model, [("pretrain", mixed)], mini_tok,
        TrainConfig(learning_rate=1e-3, max_epochs=50, early_stop_patience=50,
                    batch_size=32, seed=0),
    )
    return model


def fig2_fact():
    """The canonical restaurant KB entry used across oracle tests."""
    from kbadapter.kb import BUILTIN_DOMAINS, Fact, SlotValue

    spec = BUILTIN_DOMAINS["restaurant"]
    values = {
        "address": "Regent Street City Centre",
        "area": "centre",
        "food": "Italian",
        "phone": "01223323737",
        "postcode": "cb21ab",
        "pricerange": "cheap",
        "type": "restaurant",
        "location": "[51.20103, 0.126023]",
    }
    slots = tuple(
        SlotValue(s, values[s], spec.kind_of(s)) for s in spec.required_slots
    )
    return Fact(domain="restaurant", entity_name="Pizza Hut City Centre", slots=slots)
