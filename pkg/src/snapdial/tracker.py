"""Per-slot belief trackers: a decayed bag-of-n-gram turn state feeding an
affine+softmax head per informable slot (classes = values + dontcare +
not-mentioned) and an affine+sigmoid head per requestable slot. Trained
standalone and frozen before the generator is trained.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import corpus as cp
from .numerics import Parameter, clip_and_step, sigmoid, softmax


@dataclass
class TrackerHyper:
    lr: float = 0.25
    l2: float = 1e-4
    clip_norm: float = 5.0
    patience: int = 5
    max_epochs: int = 100
    decay: float = 0.9
    min_feature_count: int = 2


@dataclass
class BeliefState:
    """informable: slot -> distribution over (values..., dontcare, none);
    requestable: slot -> probability the user just asked for it."""
    informable: dict[str, np.ndarray]
    requestable: dict[str, float]


def summarize(belief: BeliefState, ontology: cp.Ontology) -> dict[str, dict]:
    """Collapse each informable distribution to
    [sum of value probabilities, p(dontcare), p(not-mentioned)];
    requestable probabilities pass through unchanged."""
    informable = {}
    for slot in ontology.informable_slots:
        p = belief.informable[slot]
        informable[slot] = np.array([float(np.sum(p[:-2])), float(p[-2]),
                                     float(p[-1])])
    requestable = {slot: float(belief.requestable[slot])
                   for slot in ontology.requestable}
    return {"informable": informable, "requestable": requestable}


def belief_vectors(belief: BeliefState, ontology: cp.Ontology,
                   representation: str) -> list[tuple[str, np.ndarray]]:
    """Ordered per-tracker input vectors for the policy network:
    informable slots first (full or summary form), then requestables."""
    out = []
    if representation == "summary":
        summ = summarize(belief, ontology)["informable"]
        for slot in ontology.informable_slots:
            out.append((slot, summ[slot]))
    elif representation == "full":
        for slot in ontology.informable_slots:
            out.append((slot, belief.informable[slot].copy()))
    else:
        raise cp.ConfigError(f"unknown belief representation {representation!r}")
    for slot in ontology.requestable:
        out.append((f"req.{slot}", np.array([belief.requestable[slot]])))
    return out


def ngrams(tokens: list[str]) -> list[str]:
    low = [t.lower() for t in tokens]
    feats = list(low)
    feats += [f"{a} {b}" for a, b in zip(low, low[1:])]
    return feats


class TrackerModel:
    """The n-gram features are computed on the value-delexicalised turn so
    their weights are shared across slot values; value identity enters
    only through per-value mention-recency features appended to each
    informable head's input."""

    def __init__(self, ontology: cp.Ontology, feature_list: list[str],
                 decay: float = 0.9):
        self.ontology = ontology
        self.features = list(feature_list)
        self.fmap = {f: i for i, f in enumerate(self.features)}
        self.decay = decay
        self.classes = {
            s: list(ontology.informable[s]) + [cp.DONTCARE, cp.NOT_MENTIONED]
            for s in ontology.informable_slots}
        self._value_map: dict[str, tuple[str, str]] = {}
        for s in ontology.informable_slots:
            for v in ontology.informable[s]:
                self._value_map[v] = (s, v)
        self._display_map = {
            tuple(cp.DISPLAY_NAMES[s].split()): f"[s.{s}]"
            for s in ontology.requestable}
        F = len(self.features)
        self.params: list[Parameter] = []
        self.inf_W, self.inf_b, self.inf_share = {}, {}, {}
        for s in ontology.informable_slots:
            C = len(self.classes[s])
            nv = len(ontology.informable[s])
            self.inf_W[s] = self._add(f"trk.{s}.W", np.zeros((C, F + nv)))
            self.inf_b[s] = self._add(f"trk.{s}.b", np.zeros(C))
            # one weight shared across values: "value v was mentioned"
            # boosts class v regardless of which value v is
            self.inf_share[s] = self._add(f"trk.{s}.share", np.zeros(1))
        self.req_w, self.req_b = {}, {}
        for s in ontology.requestable:
            self.req_w[s] = self._add(f"trk.req.{s}.w", np.zeros(F))
            self.req_b[s] = self._add(f"trk.req.{s}.b", np.zeros(1))

    def _add(self, name, arr):
        p = Parameter(name, arr)
        self.params.append(p)
        return p

    def slot_delex(self, tokens: list[str]):
        """Replace ontology values with [v.slot] and slot display names with
        [s.slot]; returns (delexed tokens, values mentioned per slot)."""
        low = [t.lower() for t in tokens]
        out: list[str] = []
        mentioned: dict[str, list[str]] = {}
        i = 0
        while i < len(low):
            pair = self._display_map.get(tuple(low[i:i + 2]))
            if pair is not None:
                out.append(pair)
                i += 2
                continue
            hit = self._value_map.get(low[i])
            if hit is not None:
                slot, value = hit
                out.append(f"[v.{slot}]")
                mentioned.setdefault(slot, []).append(value)
            else:
                single = self._display_map.get((low[i],))
                out.append(single if single is not None else low[i])
            i += 1
        return out, mentioned

    def featurize(self, tokens: list[str]):
        """(n-gram indicator vector over the slot-delexed turn, values
        mentioned per slot)."""
        delexed, mentioned = self.slot_delex(tokens)
        f = np.zeros(len(self.features))
        for g in ngrams(delexed):
            idx = self.fmap.get(g)
            if idx is not None:
                f[idx] = 1.0
        return f, mentioned

    def states(self, user_turns: list[list[str]]):
        """Per-turn (recency-accumulated n-grams, per-slot value recencies,
        current-turn n-grams)."""
        g = np.zeros(len(self.features))
        val = {s: np.zeros(len(self.ontology.informable[s]))
               for s in self.ontology.informable_slots}
        out = []
        for toks in user_turns:
            f, mentioned = self.featurize(toks)
            g = np.maximum(self.decay * g, f)
            for s in self.ontology.informable_slots:
                cur = np.zeros(len(self.ontology.informable[s]))
                for v in mentioned.get(s, []):
                    cur[self.ontology.informable[s].index(v)] = 1.0
                val[s] = np.maximum(self.decay * val[s], cur)
            out.append((g.copy(), {s: v.copy() for s, v in val.items()}, f))
        return out

    def _inf_logits(self, s: str, g: np.ndarray,
                    val: dict[str, np.ndarray]) -> np.ndarray:
        feats = np.concatenate([g, val[s]])
        logits = self.inf_W[s].value @ feats + self.inf_b[s].value
        nv = len(self.ontology.informable[s])
        logits[:nv] += self.inf_share[s].value[0] * val[s]
        return logits

    def belief_from_state(self, g: np.ndarray, val: dict[str, np.ndarray],
                          f: np.ndarray) -> BeliefState:
        inf = {}
        for s in self.ontology.informable_slots:
            inf[s] = softmax(self._inf_logits(s, g, val))
        req = {}
        for s in self.ontology.requestable:
            z = float(self.req_w[s].value @ f + self.req_b[s].value[0])
            req[s] = float(sigmoid(np.array([z]))[0])
        return BeliefState(informable=inf, requestable=req)

    def track(self, user_turns: list[list[str]]) -> BeliefState:
        """Belief state after consuming the given user-turn prefix."""
        if not user_turns:
            F = len(self.features)
            empty_val = {s: np.zeros(len(self.ontology.informable[s]))
                         for s in self.ontology.informable_slots}
            return self.belief_from_state(np.zeros(F), empty_val,
                                          np.zeros(F))
        g, val, f = self.states(user_turns)[-1]
        return self.belief_from_state(g, val, f)

    def track_dialogue(self, user_turns: list[list[str]]) -> list[BeliefState]:
        return [self.belief_from_state(g, val, f)
                for g, val, f in self.states(user_turns)]

    # -- serialization

    def to_json(self) -> dict:
        tensors = {}
        for p in self.params:
            tensors[p.name] = {"shape": list(p.value.shape),
                               "data": p.value.ravel().tolist()}
        return {"version": 1, "decay": self.decay,
                "featureMap": self.features,
                "ontology": self.ontology.to_json(), "tensors": tensors}

    @classmethod
    def from_json(cls, obj: dict) -> "TrackerModel":
        model = cls(cp.Ontology.from_json(obj["ontology"]),
                    list(obj["featureMap"]), decay=float(obj["decay"]))
        for p in model.params:
            t = obj["tensors"][p.name]
            p.value[...] = np.array(t["data"]).reshape(t["shape"])
        return model

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(json.dumps(self.to_json(), separators=(",", ":")))

    @classmethod
    def load(cls, path) -> "TrackerModel":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))

    def param_bytes(self) -> bytes:
        return b"".join(p.value.tobytes() for p in self.params)


def _dialogue_loss(model: TrackerModel, dialogue: cp.Dialogue,
                   accumulate: bool) -> float:
    loss = 0.0
    states = model.states([t.user_lex for t in dialogue.turns])
    for turn, (g, val, f) in zip(dialogue.turns, states):
        for s in model.ontology.informable_slots:
            classes = model.classes[s]
            target = classes.index(turn.labels[s])
            feats = np.concatenate([g, val[s]])
            p = softmax(model._inf_logits(s, g, val))
            loss += -float(np.log(max(p[target], 1e-12)))
            if accumulate:
                dlog = p.copy()
                dlog[target] -= 1.0
                model.inf_W[s].grad += np.outer(dlog, feats)
                model.inf_b[s].grad += dlog
                nv = len(model.ontology.informable[s])
                model.inf_share[s].grad += np.array(
                    [float(dlog[:nv] @ val[s])])
        for s in model.ontology.requestable:
            y = float(turn.requested[s])
            z = float(model.req_w[s].value @ f + model.req_b[s].value[0])
            p = float(sigmoid(np.array([z]))[0])
            loss += -(y * np.log(max(p, 1e-12))
                      + (1 - y) * np.log(max(1 - p, 1e-12)))
            if accumulate:
                dpre = p - y
                model.req_w[s].grad += dpre * f
                model.req_b[s].grad += np.array([dpre])
    return loss


def train_trackers(train_split: list[cp.Dialogue],
                   valid_split: list[cp.Dialogue],
                   ontology: cp.Ontology,
                   hyper: TrackerHyper | None = None) -> TrackerModel:
    """Stage-1 training: minimize summed cross-entropy over all slot heads,
    one dialogue per update, early stopping on validation loss."""
    if not train_split or not valid_split:
        raise cp.ConfigError("tracker training needs non-empty splits")
    hyper = hyper or TrackerHyper()
    probe = TrackerModel(ontology, [], decay=hyper.decay)
    counts: dict[str, int] = {}
    for d in train_split:
        for t in d.turns:
            delexed, _ = probe.slot_delex(t.user_lex)
            for g in ngrams(delexed):
                counts[g] = counts.get(g, 0) + 1
    feats = sorted(g for g, c in counts.items()
                   if c >= hyper.min_feature_count)
    model = TrackerModel(ontology, feats, decay=hyper.decay)

    best = np.inf
    best_values = None
    best_epoch = 0
    for epoch in range(1, hyper.max_epochs + 1):
        for d in train_split:
            _dialogue_loss(model, d, accumulate=True)
            clip_and_step(model.params, hyper.lr, hyper.l2, hyper.clip_norm)
        vloss = sum(_dialogue_loss(model, d, accumulate=False)
                    for d in valid_split)
        if vloss < best - 1e-9:
            best = vloss
            best_values = [p.value.copy() for p in model.params]
            best_epoch = epoch
        elif epoch - best_epoch >= hyper.patience:
            break
    if best_values is not None:
        for p, v in zip(model.params, best_values):
            p.value[...] = v
    for p in model.params:
        p.zero_grad()
    return model


def informable_accuracy(model: TrackerModel,
                        dialogues: list[cp.Dialogue]) -> dict[str, float]:
    """Top-1 accuracy of each informable head against gold labels."""
    hits = {s: 0 for s in model.ontology.informable_slots}
    total = 0
    for d in dialogues:
        beliefs = model.track_dialogue([t.user_lex for t in d.turns])
        for turn, b in zip(d.turns, beliefs):
            total += 1
            for s in model.ontology.informable_slots:
                pred = model.classes[s][int(np.argmax(b.informable[s]))]
                if pred == turn.labels[s]:
                    hits[s] += 1
    return {s: hits[s] / max(total, 1) for s in hits}
