"""Beam-search generation of skeletal responses, candidate lists ranked by
average token log-probability, and the end-to-end turn pipeline
(track -> database query -> policy -> beam -> lexicalise).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import corpus as cp
from .decoder import DecoderParams, cell_step, output_logprobs
from .encoder import db_query
from .model import DialogueData, GenerationModel, match_bin
from .numerics import Rng
from .tracker import BeliefState, TrackerModel, belief_vectors


@dataclass
class Hypothesis:
    tokens: list[int]
    sum_logprob: float
    h: np.ndarray
    c: np.ndarray
    finished: bool = False

    @property
    def score(self) -> float:
        return self.sum_logprob / max(len(self.tokens), 1)


@dataclass
class Candidate:
    tokens: list[int]
    score: float
    truncated: bool = False


class DecodeConditioning:
    """Read-only conditioning for decoding: a fixed per-turn action vector
    or a per-step attentive one."""

    def __init__(self, model: GenerationModel, z: np.ndarray, belief_vecs,
                 x: np.ndarray):
        self.attention = model.config.attention
        if self.attention:
            self.turn = model.policy.att_turn(z, x, belief_vecs)
        else:
            self.m, _ = model.policy.forward(z, x, belief_vecs)

    def m_for(self, w: np.ndarray, h_prev: np.ndarray):
        if self.attention:
            m, alpha = self.turn.eval_step(w, h_prev)
            return m, alpha
        return self.m, None


def beam_search(dp: DecoderParams, cond: DecodeConditioning, bos_id: int,
                eos_id: int, width: int = 10, n_candidates: int = 5,
                max_len: int = 30) -> list[Candidate]:
    """Beam over the output distribution. A hypothesis moves to the
    candidate pool when it generates the end-of-sentence token; the search
    ends once the pool holds `n_candidates`, every beam finished, or
    `max_len` is reached. Candidates are ranked by average log-prob and
    deduplicated; with an empty pool the best unfinished hypothesis is
    returned flagged as truncated."""
    n = dp.n
    live = [Hypothesis(tokens=[], sum_logprob=0.0, h=np.zeros(n),
                       c=np.zeros(n))]
    pool: list[Hypothesis] = []
    per_hyp = width + 1
    for _ in range(max_len):
        extensions = []
        states = []
        for hi, hyp in enumerate(live):
            inp = hyp.tokens[-1] if hyp.tokens else bos_id
            w = dp.emb.value[inp]
            m, _ = cond.m_for(w, hyp.h)
            h2, c2, _ = cell_step(dp, m, w, hyp.h, hyp.c)
            states.append((h2, c2))
            logp = output_logprobs(dp, h2)
            if per_hyp < len(logp):
                cand_toks = np.argpartition(-logp, per_hyp)[:per_hyp]
            else:
                cand_toks = np.arange(len(logp))
            for tok in cand_toks:
                extensions.append((hyp.sum_logprob + float(logp[tok]),
                                   hi, int(tok)))
        extensions.sort(key=lambda e: (-e[0], e[1], e[2]))
        new_live = []
        for total, hi, tok in extensions:
            h2, c2 = states[hi]
            ext = Hypothesis(tokens=live[hi].tokens + [tok],
                             sum_logprob=total, h=h2, c=c2,
                             finished=(tok == eos_id))
            if ext.finished:
                pool.append(ext)
            else:
                new_live.append(ext)
                if len(new_live) == width:
                    break
        live = new_live
        if len(pool) >= n_candidates or not live:
            break

    if not pool:
        best = max(live, key=lambda hyp: (hyp.score, hyp.tokens))
        return [Candidate(tokens=best.tokens, score=best.score,
                          truncated=True)]
    seen = set()
    unique = []
    for hyp in pool:
        key = tuple(hyp.tokens)
        if key not in seen:
            seen.add(key)
            unique.append(hyp)
    unique.sort(key=lambda hyp: (-hyp.score, hyp.tokens))
    return [Candidate(tokens=hyp.tokens, score=hyp.score)
            for hyp in unique[:n_candidates]]


def belief_top_values(belief: BeliefState,
                      ontology: cp.Ontology) -> dict[str, str]:
    """Most likely actual value per informable slot (ignoring dontcare /
    not-mentioned mass); used to lexicalise when no entity is offered."""
    out = {}
    for slot in ontology.informable_slots:
        values = ontology.informable[slot]
        probs = belief.informable[slot][:len(values)]
        out[slot] = values[int(np.argmax(probs))]
    return out


@dataclass
class TurnResponse:
    skeletal: list[str]
    surface: str
    entity: str | None
    candidates: list[Candidate]
    belief: BeliefState
    db_matches: list[str]
    failed_tokens: list[str] = field(default_factory=list)
    truncated: bool = False


def lexicalise_marked(tokens: list[str], entity: dict | None,
                      top_values: dict[str, str],
                      ontology: cp.Ontology) -> tuple[str, list[str]]:
    """Lexicalise token by token; placeholders with no available source are
    kept verbatim and reported."""
    surface = []
    failed = []
    for tok in tokens:
        if tok == cp.EOS_TOKEN:
            continue
        try:
            piece = cp.lexicalise([tok], entity, top_values, ontology)
        except cp.LexicalisationError:
            failed.append(tok)
            piece = tok
        if piece:
            surface.append(piece)
    return " ".join(surface), failed


def respond(model: GenerationModel, trackers: TrackerModel,
            user_turns_lex: list[list[str]], database: cp.Database,
            rng: Rng, previous_pointer: str | None = None,
            width: int = 10, n_candidates: int = 5,
            max_len: int = 30) -> TurnResponse:
    """Full pipeline for the latest user turn of a dialogue prefix."""
    ontology = model.ontology
    belief = trackers.track(user_turns_lex)
    db = db_query(belief, ontology, database, rng, previous_pointer)
    bel_vecs = belief_vectors(belief, ontology, model.config.belief)
    last = user_turns_lex[-1] if user_turns_lex else []
    delex = cp.Delexicaliser(ontology, database)
    user_ids = model.vocab.encode(delex(last))
    z, _ = model.intent.forward(user_ids, bos_id=model.vocab.EOS)
    cond = DecodeConditioning(model, z, bel_vecs, db.x)
    cands = beam_search(model.decoder, cond, model.vocab.BOS,
                        model.vocab.EOS, width=width,
                        n_candidates=n_candidates, max_len=max_len)
    top = cands[0]
    skeletal = model.vocab.decode(top.tokens)
    entity = database.by_name(db.pointer) if db.pointer else None
    surface, failed = lexicalise_marked(
        skeletal, entity, belief_top_values(belief, ontology), ontology)
    return TurnResponse(skeletal=skeletal, surface=surface,
                        entity=db.pointer, candidates=cands, belief=belief,
                        db_matches=db.matches, failed_tokens=failed,
                        truncated=top.truncated)


# ---------------------------------------------------------------------------
# corpus-mode decoding (each turn predicted from the gold prefix)


def decode_corpus(model: GenerationModel, data: list[DialogueData],
                  database: cp.Database, seed: int, width: int = 10,
                  n_candidates: int = 5, max_len: int = 30) -> list[dict]:
    """One dump row per turn: ranked candidates, the chosen skeletal form,
    its surface realisation, and the entity pointer state."""
    ontology = model.ontology
    rows = []
    for di, dd in enumerate(data):
        rng = Rng(seed, key=(2, di))
        pointer = None
        for t, td in enumerate(dd.turns):
            belief = td.belief
            db = db_query(belief, ontology, database, rng, pointer)
            pointer = db.pointer
            z, _ = model.intent.forward(td.user_ids, bos_id=model.vocab.EOS)
            cond = DecodeConditioning(model, z, td.bel, db.x)
            cands = beam_search(model.decoder, cond, model.vocab.BOS,
                                model.vocab.EOS, width=width,
                                n_candidates=n_candidates, max_len=max_len)
            top = cands[0]
            skeletal = model.vocab.decode(top.tokens)
            entity = database.by_name(db.pointer) if db.pointer else None
            surface, _ = lexicalise_marked(
                skeletal, entity, belief_top_values(belief, ontology),
                ontology)
            rows.append({
                "dialogueId": dd.dialogue.id,
                "turn": t,
                "candidates": [{"tokens": model.vocab.decode(c.tokens),
                                "score": c.score} for c in cands],
                "chosen": skeletal,
                "surface": surface,
                "offeredEntity": db.pointer,
                "dbMatch": len(db.matches),
                "truncated": top.truncated,
            })
    return rows


def write_dump(path, rows: list[dict]):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, separators=(",", ":")))
            f.write("\n")


def read_dump(path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
