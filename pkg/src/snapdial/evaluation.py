"""Corpus-based evaluation on skeletal forms: sentence BLEU with add-1
smoothing for higher-order n-grams, top-1/top-5 candidate scoring, slot
matching rate, objective task success, and the multi-seed results table.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter

import numpy as np

from . import corpus as cp


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: list[str], reference: list[str], max_n: int = 4) -> float:
    """Sentence BLEU: modified n-gram precision up to max_n with add-1
    smoothing on the counts for n >= 2, uniform geometric mean, brevity
    penalty. An empty candidate or zero unigram precision scores 0."""
    if not reference:
        raise ValueError("bleu needs a non-empty reference")
    c = len(candidate)
    if c == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand = _ngram_counts(candidate, n)
        ref = _ngram_counts(reference, n)
        total = sum(cand.values())
        clipped = sum(min(count, ref[g]) for g, count in cand.items())
        if n == 1:
            if clipped == 0:
                return 0.0
            p = clipped / total
        else:
            p = (clipped + 1) / (total + 1)
        log_sum += math.log(p) / max_n
    r = len(reference)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum)


def corpus_bleu(pairs: list[tuple[list[str], list[str]]],
                max_n: int = 4) -> float:
    """Corpus-level BLEU over (candidate, reference) pairs: counts pooled
    before taking precisions."""
    clipped = [0] * max_n
    totals = [0] * max_n
    c_len = 0
    r_len = 0
    for candidate, reference in pairs:
        c_len += len(candidate)
        r_len += len(reference)
        for n in range(1, max_n + 1):
            cand = _ngram_counts(candidate, n)
            ref = _ngram_counts(reference, n)
            totals[n - 1] += sum(cand.values())
            clipped[n - 1] += sum(min(count, ref[g])
                                  for g, count in cand.items())
    if c_len == 0 or clipped[0] == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        if n == 1:
            p = clipped[0] / totals[0]
        else:
            p = (clipped[n - 1] + 1) / (totals[n - 1] + 1)
        log_sum += math.log(p) / max_n
    bp = 1.0 if c_len > r_len else math.exp(1.0 - r_len / c_len)
    return bp * math.exp(log_sum)


def strip_eos(tokens: list[str]) -> list[str]:
    return [t for t in tokens if t != cp.EOS_TOKEN]


def evaluate_turn_bleu(candidates: list[list[str]],
                       reference: list[str],
                       t5_mode: str = "max") -> tuple[float, float]:
    """(top-1 BLEU, top-5 BLEU) for one turn's ranked candidate list; t5 is
    the best of the candidates by default, their mean with t5_mode="mean"."""
    if not candidates:
        return 0.0, 0.0
    ref = strip_eos(reference)
    scores = [bleu(strip_eos(c), ref) for c in candidates]
    t1 = scores[0]
    t5 = max(scores) if t5_mode == "max" else sum(scores) / len(scores)
    return t1, t5


def _delex_types(tokens: list[str]) -> set[str]:
    return {t for t in tokens
            if (t.startswith("[v.") or t.startswith("[s.")) and t.endswith("]")}


def slot_match_rate(candidate: list[str],
                    reference: list[str]) -> float | None:
    """Fraction of the candidate's placeholder token types that also occur
    in the reference; None when the candidate has no placeholders (such
    turns are excluded from corpus averages)."""
    cand = _delex_types(strip_eos(candidate))
    if not cand:
        return None
    ref = _delex_types(strip_eos(reference))
    return 100.0 * len(cand & ref) / len(cand)


def entity_satisfies(entity: dict, constraints: dict[str, str]) -> bool:
    for slot, val in constraints.items():
        if val == cp.DONTCARE:
            continue
        if entity.get(slot) != val:
            return False
    return True


def task_success(turn_rows: list[dict], goal_constraints: dict[str, str],
                 goal_requests: list[str], database: cp.Database) -> bool:
    """A dialogue succeeds when some predicted turn offers an entity (emits
    [v.name] with a pointer whose attributes satisfy the goal) and every
    requested slot's value token appears at or after that offer."""
    offers = []
    for i, row in enumerate(turn_rows):
        if "[v.name]" in row["chosen"] and row.get("offeredEntity"):
            entity = database.by_name(row["offeredEntity"])
            if entity is not None and entity_satisfies(entity,
                                                       goal_constraints):
                offers.append(i)
    for start in offers:
        ok = True
        for slot in goal_requests:
            tok = f"[v.{slot}]"
            if not any(tok in turn_rows[k]["chosen"]
                       for k in range(start, len(turn_rows))):
                ok = False
                break
        if ok:
            return True
    return False


def evaluate_dump(rows: list[dict], dialogues: list[cp.Dialogue],
                  database: cp.Database, t5_mode: str = "max") -> dict:
    """Per-seed metrics from one decode dump over the given split."""
    by_dialogue: dict[str, list[dict]] = {}
    for row in rows:
        by_dialogue.setdefault(row["dialogueId"], []).append(row)
    for turns in by_dialogue.values():
        turns.sort(key=lambda r: r["turn"])

    t1s, t5s, slot_rates = [], [], []
    successes = 0
    for d in dialogues:
        turns = by_dialogue.get(d.id, [])
        for row, gold in zip(turns, d.turns):
            cands = [c["tokens"] for c in row["candidates"]]
            t1, t5 = evaluate_turn_bleu(cands, gold.sys, t5_mode=t5_mode)
            t1s.append(t1)
            t5s.append(t5)
            rate = slot_match_rate(row["chosen"], gold.sys)
            if rate is not None:
                slot_rates.append(rate)
        if turns and task_success(turns, d.goal_constraints,
                                  d.goal_requests, database):
            successes += 1
    n_turns = max(len(t1s), 1)
    return {
        "success": 100.0 * successes / max(len(dialogues), 1),
        "slotMatch": sum(slot_rates) / max(len(slot_rates), 1),
        "t5Bleu": sum(t5s) / n_turns,
        "t1Bleu": sum(t1s) / n_turns,
    }


METRIC_KEYS = ("success", "slotMatch", "t5Bleu", "t1Bleu")


def evaluate_seeds(per_seed: list[dict | None]) -> dict:
    """Mean/std aggregation across seed runs, tolerating missing seeds."""
    rows = [r for r in per_seed if r is not None]
    out = {"seedCount": len(rows),
           "incomplete": len(per_seed) - len(rows)}
    for key in METRIC_KEYS:
        vals = np.array([r[key] for r in rows]) if rows else np.array([0.0])
        out[key] = {"mean": float(np.mean(vals)), "std": float(np.std(vals)),
                    "perSeed": [float(v) for v in vals]} if rows else None
    return out


def write_report(csv_path, json_path, rows: list[dict]):
    """rows: one entry per configuration with keys
    (arch, belief, snapshot, success, slotMatch, t5Bleu, t1Bleu, seedCount)."""
    cols = ["arch", "belief", "snapshot", "success", "slotMatch",
            "t5Bleu", "t1Bleu", "seedCount"]
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(cols)
        for row in rows:
            w.writerow([row[c] if not isinstance(row[c], float)
                        else repr(row[c]) for c in cols])
    with open(json_path, "w", encoding="utf-8") as f:
        f.write(json.dumps(rows, separators=(",", ":")))


def write_paired_table(path, rows: list[dict]):
    """Results-table layout: one row per (arch, belief) with
    "without / with snapshot" value pairs per metric column."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["arch", "belief", "success", "slotMatch",
                    "t5Bleu", "t1Bleu"])
        for row in rows:
            cells = []
            for key, digits in (("success", 1), ("slotMatch", 1),
                                ("t5Bleu", 3), ("t1Bleu", 3)):
                base = row["base"].get(key)
                snap = row["snap"].get(key) if row.get("snap") else None
                cell = f"{base:.{digits}f}"
                if snap is not None:
                    cell += f" / {snap:.{digits}f}"
                cells.append(cell)
            w.writerow([row["arch"], row["belief"]] + cells)
