import numpy as np
import pytest

from snapdial import corpus as cp
from snapdial.model import TrainConfig, TurnData, compile_corpus
from snapdial.numerics import Rng
from snapdial.snapshot import IndicatorSpec
from snapdial.tracker import train_trackers
from snapdial.training import train


def tiny_ontology() -> cp.Ontology:
    return cp.Ontology(
        informable={"food": ["chinese", "indian", "thai"],
                    "pricerange": ["cheap", "expensive"],
                    "area": ["north", "south"]},
        requestable=["address", "phone", "postcode",
                     "food", "pricerange", "area"],
    )


def tiny_database(ontology: cp.Ontology) -> cp.Database:
    rng = Rng(5, key=(1,))
    entities = []
    for i in range(8):
        entities.append({
            "name": f"venue {'abcdefgh'[i]}",
            "food": rng.choice(ontology.informable["food"]),
            "pricerange": rng.choice(ontology.informable["pricerange"]),
            "area": rng.choice(ontology.informable["area"]),
            "address": f"{i + 1} mill road",
            "phone": f"01223 10000{i}",
            "postcode": f"cb1{i}x",
        })
    return cp.Database(entities=entities)


def tiny_vocab() -> cp.Vocabulary:
    onto = tiny_ontology()
    words = sorted(["the", "a", "is", "in", "restaurant", "serves",
                    "what", "would", "you", "like", "nice"])
    return cp.Vocabulary(
        [cp.PAD_TOKEN, cp.UNK_TOKEN, cp.BOS_TOKEN, cp.EOS_TOKEN]
        + onto.delex_tokens() + words)


def random_simplex(rng: Rng, k: int) -> np.ndarray:
    v = rng.uniform(0.01, 1.0, k)
    return v / v.sum()


def tiny_indicators() -> IndicatorSpec:
    return IndicatorSpec(ids=("offered", "[v.name]", "[v.address]",
                              "[v.phone]", "[v.food]"))


def make_turn_data(config: TrainConfig, vocab: cp.Vocabulary,
                   ontology: cp.Ontology, indicators: IndicatorSpec,
                   seed: int = 7, n_user: int = 5,
                   n_sys: int = 6) -> TurnData:
    """Self-contained random turn for gradient tests: well-formed belief
    vectors, a one-hot match bin, and random snapshot targets."""
    rng = Rng(seed, key=(3,))
    word_ids = list(range(4, len(vocab)))
    user_ids = [word_ids[rng.integers(0, len(word_ids))]
                for _ in range(n_user)]
    target_ids = [word_ids[rng.integers(0, len(word_ids))]
                  for _ in range(n_sys - 1)] + [vocab.EOS]
    bel = []
    for slot in ontology.informable_slots:
        k = (3 if config.belief == "summary"
             else len(ontology.informable[slot]) + 2)
        bel.append((slot, random_simplex(rng, k)))
    for slot in ontology.requestable:
        bel.append((f"req.{slot}", np.array([rng.random()])))
    x = np.zeros(6)
    x[rng.integers(0, 6)] = 1.0
    snap = (rng.uniform(0, 1, (n_sys, indicators.d)) > 0.5).astype(float)
    if not config.attention:
        snap = np.tile(snap[:1], (n_sys, 1))
    return TurnData(user_ids=user_ids, target_ids=target_ids, bel=bel,
                    x=x, snap=snap, sys_tokens=[], user_lex=[],
                    requested={})


@pytest.fixture(scope="session")
def small_world():
    """A generated corpus with trained trackers, shared by the slower
    integration-style tests."""
    rng = Rng(1, key=(10,))
    ontology = cp.default_ontology()
    database = cp.build_database(ontology, rng)
    dialogues = cp.generate_corpus(ontology, database, 250, rng)
    train_d, valid_d, test_d = cp.split(dialogues, Rng(1, key=(11,)))
    vocab = cp.build_vocab(train_d, ontology, min_count=2)
    trackers = train_trackers(train_d, valid_d, ontology)
    return {"ontology": ontology, "database": database,
            "dialogues": dialogues, "train": train_d, "valid": valid_d,
            "test": test_d, "vocab": vocab, "trackers": trackers}


@pytest.fixture(scope="session")
def mini_model(small_world):
    """A briefly trained lm/summary generator over the small corpus."""
    config = TrainConfig(variant="lm", belief="summary", seed=3,
                         max_epochs=10, patience=10)
    model, history = train(
        config, small_world["train"], small_world["valid"],
        small_world["trackers"], small_world["vocab"],
        small_world["ontology"], small_world["database"],
        IndicatorSpec.for_ontology(small_world["ontology"]))
    return {"model": model, "history": history, "config": config}


@pytest.fixture(scope="session")
def mini_data(small_world, mini_model):
    return compile_corpus(
        small_world["test"], small_world["vocab"], small_world["trackers"],
        small_world["ontology"], small_world["database"],
        mini_model["model"].indicators, mini_model["config"])


@pytest.fixture(scope="session")
def mini_att_model(small_world):
    """A briefly trained hybrid + attention + snapshot generator."""
    config = TrainConfig(variant="hybrid", belief="summary", attention=True,
                         snapshot=True, seed=4, lr=0.3, max_epochs=6,
                         patience=6)
    model, history = train(
        config, small_world["train"], small_world["valid"],
        small_world["trackers"], small_world["vocab"],
        small_world["ontology"], small_world["database"],
        IndicatorSpec.for_ontology(small_world["ontology"]))
    data = compile_corpus(
        small_world["test"], small_world["vocab"], small_world["trackers"],
        small_world["ontology"], small_world["database"],
        model.indicators, config)
    return {"model": model, "config": config, "data": data}
