"""The assembled generation model: intent encoder + policy network +
conditional LSTM decoder, the per-turn loss (token cross-entropy plus the
weighted snapshot term) with its full hand-derived backward pass, corpus
compilation against frozen trackers, and checkpoint serialization.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import corpus as cp
from .decoder import (AttentiveConditioning, DecoderParams,
                      FixedConditioning, backward_teacher, forward_teacher)
from .encoder import IntentNet, PolicyNet
from .numerics import Rng
from .snapshot import IndicatorSpec, label_snapshots, snapshot_loss_grad
from .tracker import TrackerModel, belief_vectors


@dataclass
class TrainConfig:
    variant: str = "lm"
    attention: bool = False
    belief: str = "summary"
    snapshot: bool = False
    lam: float = 1.0
    lr: float = 0.05
    l2: float = 1e-5
    clip_norm: float = 1.0
    clip_mode: str = "norm"
    hidden: int = 50
    init_range: float = 0.3
    patience: int = 5
    max_epochs: int = 100
    seed: int = 1

    def __post_init__(self):
        if self.lam < 0:
            raise cp.ConfigError("lambda must be non-negative")
        if self.variant not in ("lm", "mem", "hybrid"):
            raise cp.ConfigError(f"unknown variant {self.variant!r}")
        if self.belief not in ("full", "summary"):
            raise cp.ConfigError(f"unknown belief form {self.belief!r}")
        if self.clip_mode not in ("norm", "element"):
            raise cp.ConfigError(f"unknown clip mode {self.clip_mode!r}")

    @property
    def arch_label(self) -> str:
        return self.variant + ("+att" if self.attention else "")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        return cls(**obj)


class GenerationModel:
    def __init__(self, config: TrainConfig, vocab: cp.Vocabulary,
                 ontology: cp.Ontology, indicators: IndicatorSpec,
                 rng: Rng | None = None):
        if indicators.d >= config.hidden:
            raise cp.ConfigError(
                f"{indicators.d} indicators need a hidden size above "
                f"{indicators.d}, got {config.hidden}")
        self.config = config
        self.vocab = vocab
        self.ontology = ontology
        self.indicators = indicators
        n = config.hidden
        self.intent = IntentNet(len(vocab), n, rng, config.init_range)
        self.policy = PolicyNet(ontology, config.belief, n, rng,
                                config.init_range,
                                attention=config.attention)
        self.decoder = DecoderParams(len(vocab), n, config.variant, rng,
                                     config.init_range)
        self.params = (self.intent.params + self.policy.params
                       + self.decoder.params)

    def zero_grads(self):
        for p in self.params:
            p.zero_grad()

    def values_snapshot(self) -> list[np.ndarray]:
        return [p.value.copy() for p in self.params]

    def restore_values(self, values: list[np.ndarray]):
        for p, v in zip(self.params, values):
            p.value[...] = v

    def weights_hash(self) -> str:
        h = hashlib.sha256()
        for p in self.params:
            h.update(p.value.tobytes())
        return h.hexdigest()

    # -- checkpoint

    def to_checkpoint(self) -> dict:
        tensors = {p.name: {"shape": list(p.value.shape),
                            "data": p.value.ravel().tolist()}
                   for p in self.params}
        return {
            "version": 1,
            "config": self.config.to_json(),
            "vocab": self.vocab.to_json(),
            "vocabHash": self.vocab.hash(),
            "ontology": self.ontology.to_json(),
            "indicatorSpec": self.indicators.to_json(),
            "tensors": tensors,
        }

    @classmethod
    def from_checkpoint(cls, obj: dict) -> "GenerationModel":
        config = TrainConfig.from_json(obj["config"])
        vocab = cp.Vocabulary.from_json(obj["vocab"])
        if vocab.hash() != obj["vocabHash"]:
            raise cp.ConfigError("checkpoint vocabulary hash mismatch")
        ontology = cp.Ontology.from_json(obj["ontology"])
        indicators = IndicatorSpec.from_json(obj["indicatorSpec"])
        model = cls(config, vocab, ontology, indicators, rng=None)
        for p in model.params:
            t = obj["tensors"][p.name]
            if list(p.value.shape) != list(t["shape"]):
                raise cp.ConfigError(f"checkpoint shape mismatch for {p.name}")
            p.value[...] = np.array(t["data"], dtype=np.float64).reshape(
                t["shape"])
        return model

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(json.dumps(self.to_checkpoint(), separators=(",", ":")))

    @classmethod
    def load(cls, path) -> "GenerationModel":
        with open(path, encoding="utf-8") as f:
            return cls.from_checkpoint(json.load(f))


# ---------------------------------------------------------------------------
# compiled corpus: everything the frozen stage-1 components contribute


@dataclass
class TurnData:
    user_ids: list[int]
    target_ids: list[int]
    bel: list
    x: np.ndarray
    snap: np.ndarray
    sys_tokens: list[str]
    user_lex: list[str]
    requested: dict[str, int]
    belief: object = field(repr=False, default=None)


@dataclass
class DialogueData:
    dialogue: cp.Dialogue
    turns: list[TurnData]


def match_bin(belief, ontology: cp.Ontology, database: cp.Database):
    """Match-count bin vector for the belief's argmax constraints (no
    pointer handling)."""
    constraints = {}
    for slot in ontology.informable_slots:
        classes = ontology.informable[slot] + [cp.DONTCARE, cp.NOT_MENTIONED]
        constraints[slot] = classes[int(np.argmax(belief.informable[slot]))]
    names = [e["name"] for e in database.query(constraints)]
    x = np.zeros(6)
    x[min(len(names), 5)] = 1.0
    return x, names


def compile_corpus(dialogues: list[cp.Dialogue], vocab: cp.Vocabulary,
                   trackers: TrackerModel, ontology: cp.Ontology,
                   database: cp.Database, indicators: IndicatorSpec,
                   config: TrainConfig) -> list[DialogueData]:
    """Precompute per-turn model inputs that do not change during stage-2
    training: token ids, tracked belief vectors, match bins, and snapshot
    targets."""
    out = []
    for d in dialogues:
        beliefs = trackers.track_dialogue([t.user_lex for t in d.turns])
        snaps = label_snapshots(d, indicators, config.attention)
        turns = []
        for turn, belief, snap in zip(d.turns, beliefs, snaps):
            x, _ = match_bin(belief, ontology, database)
            turns.append(TurnData(
                user_ids=vocab.encode(turn.user),
                target_ids=vocab.encode(turn.sys),
                bel=belief_vectors(belief, ontology, config.belief),
                x=x,
                snap=snap,
                sys_tokens=list(turn.sys),
                user_lex=list(turn.user_lex),
                requested=dict(turn.requested),
                belief=belief,
            ))
        out.append(DialogueData(dialogue=d, turns=turns))
    return out


# ---------------------------------------------------------------------------
# per-turn loss


def make_provider(model: GenerationModel, z: np.ndarray, td: TurnData):
    if model.config.attention:
        return AttentiveConditioning(model.policy.att_turn(z, td.x, td.bel))
    m, pcache = model.policy.forward(z, td.x, td.bel)
    provider = FixedConditioning(m)
    provider.pcache = pcache
    return provider


def turn_loss(model: GenerationModel, td: TurnData, accumulate: bool = True):
    """Teacher-forced loss of one turn; with `accumulate` the full backward
    pass runs and gradients land in the model parameters.

    Returns (token_loss, snapshot_loss, steps, tape)."""
    cfg = model.config
    z, icache = model.intent.forward(td.user_ids,
                                     bos_id=model.vocab.EOS)
    provider = make_provider(model, z, td)
    tape = forward_teacher(model.decoder, td.target_ids, provider,
                           bos_id=model.vocab.BOS, keep_probs=accumulate)
    token_loss = tape.loss
    snap_loss = 0.0
    dm_hat = None
    if cfg.snapshot:
        m_hat = tape.m_rows[:, :model.indicators.d]
        snap_loss, g = snapshot_loss_grad(m_hat, td.snap)
        dm_hat = cfg.lam * g
    if accumulate:
        backward_teacher(model.decoder, tape, provider, dm_hat=dm_hat)
        if cfg.attention:
            provider.turn.finish_backward()
            dz = provider.turn.dz
        else:
            dz = model.policy.backward(provider.dm, provider.pcache)
        model.intent.backward(dz, icache)
    return token_loss, snap_loss, len(td.target_ids), tape


def dialogue_loss(model: GenerationModel, dd: DialogueData,
                  accumulate: bool = True):
    """Summed turn losses of one dialogue (one SGD batch)."""
    token = 0.0
    snap = 0.0
    steps = 0
    for td in dd.turns:
        t, s, j, _ = turn_loss(model, td, accumulate=accumulate)
        token += t
        snap += s
        steps += j
    return token, snap, steps


def corpus_token_loglik(model: GenerationModel,
                        data: list[DialogueData]) -> float:
    """Validation-style LM log-likelihood (token terms only)."""
    total = 0.0
    for dd in data:
        for td in dd.turns:
            t, _, _, _ = turn_loss(model, td, accumulate=False)
            total -= t
    return total
