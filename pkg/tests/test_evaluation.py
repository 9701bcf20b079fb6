import math
from fractions import Fraction

import numpy as np
import pytest

from snapdial import corpus as cp
from snapdial.evaluation import (bleu, corpus_bleu, evaluate_dump,
                                 evaluate_seeds, evaluate_turn_bleu,
                                 slot_match_rate, task_success, write_report,
                                 write_paired_table)
from snapdial.numerics import Rng


def oracle_bleu(candidate, reference, max_n=4):
    """Independent BLEU: exact rational n-gram arithmetic, add-1 smoothing
    for n >= 2, uniform geometric mean, brevity penalty."""
    c = len(candidate)
    if c == 0:
        return 0.0
    precisions = []
    for n in range(1, max_n + 1):
        cand = {}
        for i in range(len(candidate) - n + 1):
            g = tuple(candidate[i:i + n])
            cand[g] = cand.get(g, 0) + 1
        ref = {}
        for i in range(len(reference) - n + 1):
            g = tuple(reference[i:i + n])
            ref[g] = ref.get(g, 0) + 1
        total = sum(cand.values())
        clipped = sum(min(k, ref.get(g, 0)) for g, k in cand.items())
        if n == 1:
            if clipped == 0:
                return 0.0
            precisions.append(Fraction(clipped, total))
        else:
            precisions.append(Fraction(clipped + 1, total + 1))
    log_sum = sum(math.log(float(p)) for p in precisions) / max_n
    r = len(reference)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum)


def test_bleu_identity_and_edges():
    assert bleu(list("abcd"), list("abcd")) == pytest.approx(1.0, abs=1e-12)
    assert bleu([], ["a"]) == 0.0
    assert bleu(["x", "y"], ["a", "b"]) == 0.0
    with pytest.raises(ValueError):
        bleu(["a"], [])


def test_bleu_hand_case_brevity_penalty():
    got = bleu(["a", "b"], ["a", "b", "c"])
    assert got == pytest.approx(math.exp(1 - 3 / 2), abs=1e-12)


def test_bleu_matches_rational_oracle_on_random_cases():
    rng = Rng(23)
    words = list("abcdefg")
    for _ in range(60):
        cand = [words[rng.integers(0, len(words))]
                for _ in range(rng.integers(1, 12))]
        ref = [words[rng.integers(0, len(words))]
               for _ in range(rng.integers(1, 12))]
        assert bleu(cand, ref) == pytest.approx(oracle_bleu(cand, ref),
                                                abs=1e-12)


def test_corpus_bleu_pools_counts():
    pairs = [(list("abc"), list("abc")), (list("xy"), list("xz"))]
    val = corpus_bleu(pairs)
    assert 0.0 < val < 1.0
    assert corpus_bleu([(list("ab"), list("ab"))]) == pytest.approx(1.0)


def test_turn_bleu_top1_top5():
    ref = ["a", "b", "c", cp.EOS_TOKEN]
    cands = [["a", "x", cp.EOS_TOKEN], ["a", "b", "c", cp.EOS_TOKEN],
             ["z", cp.EOS_TOKEN]]
    t1, t5 = evaluate_turn_bleu(cands, ref)
    assert t5 == pytest.approx(1.0, abs=1e-12)
    assert t1 == pytest.approx(bleu(["a", "x"], ["a", "b", "c"]), abs=1e-12)
    same = [["a", "b", cp.EOS_TOKEN]] * 5
    t1s, t5s = evaluate_turn_bleu(same, ref)
    assert t1s == pytest.approx(t5s)
    _, t5m = evaluate_turn_bleu(cands, ref, t5_mode="mean")
    assert t5m <= t5


def test_t5_dominates_t1_over_random_decodes():
    rng = Rng(29)
    words = list("abcdef")
    for _ in range(200):
        ref = [words[rng.integers(0, len(words))]
               for _ in range(rng.integers(2, 9))]
        cands = [[words[rng.integers(0, len(words))]
                  for _ in range(rng.integers(1, 9))]
                 for _ in range(5)]
        t1, t5 = evaluate_turn_bleu(cands, ref)
        assert t5 >= t1 - 1e-15


def test_slot_match_rate_definition():
    cand = ["the", "[v.food]", "place", "in", "[v.area]", cp.EOS_TOKEN]
    ref = ["a", "[v.food]", "restaurant", cp.EOS_TOKEN]
    assert slot_match_rate(cand, ref) == pytest.approx(50.0)
    assert slot_match_rate(["[v.food]", cp.EOS_TOKEN], ref) == 100.0
    assert slot_match_rate(["no", "slots"], ref) is None
    # type-level: duplicated tokens do not change the rate
    dup = cand + cand
    assert slot_match_rate(dup, ref) == pytest.approx(50.0)


def _dump_row(did, turn, chosen, entity=None):
    return {"dialogueId": did, "turn": turn, "chosen": chosen,
            "candidates": [{"tokens": chosen, "score": 0.0}],
            "surface": " ".join(chosen), "offeredEntity": entity,
            "dbMatch": 1}


def _db():
    return cp.Database(entities=[
        {"name": "venue a", "food": "thai", "pricerange": "cheap",
         "area": "north", "address": "1 x road", "phone": "01 1",
         "postcode": "cb1"},
        {"name": "venue b", "food": "french", "pricerange": "expensive",
         "area": "south", "address": "2 y road", "phone": "01 2",
         "postcode": "cb2"},
    ])


def test_task_success_cases():
    db = _db()
    goal_c = {"food": "thai", "pricerange": cp.DONTCARE, "area": "north"}
    rows_ok = [
        _dump_row("d", 0, ["[v.name]", "serves", "[v.food]"], "venue a"),
        _dump_row("d", 1, ["the", "[s.phone]", "is", "[v.phone]"], "venue a"),
    ]
    assert task_success(rows_ok, goal_c, ["phone"], db)
    # unanswered request
    rows_missing = [rows_ok[0],
                    _dump_row("d", 1, ["you", "are", "welcome"], "venue a")]
    assert not task_success(rows_missing, goal_c, ["phone"], db)
    # no offer at all
    rows_no_offer = [_dump_row("d", 0, ["hello"], None)]
    assert not task_success(rows_no_offer, goal_c, ["phone"], db)
    # offered entity violates a constraint
    rows_wrong = [
        _dump_row("d", 0, ["[v.name]"], "venue b"),
        _dump_row("d", 1, ["[v.phone]"], "venue b"),
    ]
    assert not task_success(rows_wrong, goal_c, ["phone"], db)
    # request answered before the offer does not count
    rows_early = [
        _dump_row("d", 0, ["[v.phone]"], None),
        _dump_row("d", 1, ["[v.name]"], "venue a"),
    ]
    assert not task_success(rows_early, goal_c, ["phone"], db)


def test_task_success_is_monotone_in_extra_answers():
    db = _db()
    goal_c = {"food": "thai", "pricerange": cp.DONTCARE, "area": "north"}
    rows = [
        _dump_row("d", 0, ["[v.name]"], "venue a"),
        _dump_row("d", 1, ["[v.phone]"], "venue a"),
    ]
    assert task_success(rows, goal_c, ["phone"], db)
    extended = rows + [_dump_row("d", 2, ["[v.address]"], "venue a")]
    assert task_success(extended, goal_c, ["phone"], db)


def test_evaluate_dump_matches_brute_force_recount(small_world, mini_model,
                                                   mini_data):
    from snapdial.decoding import decode_corpus

    db = small_world["database"]
    dialogues = [dd.dialogue for dd in mini_data[:25]]
    rows = decode_corpus(mini_model["model"], mini_data[:25], db, seed=3)
    metrics = evaluate_dump(rows, dialogues, db)

    # independent recount
    by_d = {}
    for row in rows:
        by_d.setdefault(row["dialogueId"], []).append(row)
    gold = {d.id: d for d in dialogues}
    t1s, t5s, rates, succ = [], [], [], 0
    for did, turns in by_d.items():
        turns = sorted(turns, key=lambda r: r["turn"])
        d = gold[did]
        for row, gt in zip(turns, d.turns):
            ref = [t for t in gt.sys if t != cp.EOS_TOKEN]
            scores = [oracle_bleu([t for t in c["tokens"]
                                   if t != cp.EOS_TOKEN], ref)
                      for c in row["candidates"]]
            t1s.append(scores[0])
            t5s.append(max(scores))
            cand_types = {t for t in row["chosen"]
                          if t.startswith("[") and t != cp.EOS_TOKEN}
            if cand_types:
                ref_types = {t for t in ref if t.startswith("[")}
                rates.append(100.0 * len(cand_types & ref_types)
                             / len(cand_types))
        if task_success(turns, d.goal_constraints, d.goal_requests, db):
            succ += 1
    assert metrics["t1Bleu"] == pytest.approx(np.mean(t1s), abs=1e-12)
    assert metrics["t5Bleu"] == pytest.approx(np.mean(t5s), abs=1e-12)
    assert metrics["slotMatch"] == pytest.approx(np.mean(rates), abs=1e-12)
    assert metrics["success"] == pytest.approx(100.0 * succ / len(dialogues),
                                               abs=1e-12)


def test_evaluate_seeds_aggregation():
    rows = [{"success": 70.0, "slotMatch": 60.0, "t5Bleu": 0.5,
             "t1Bleu": 0.4}] * 10
    agg = evaluate_seeds(rows)
    assert agg["seedCount"] == 10
    assert agg["success"]["std"] == 0.0
    varied = [{"success": s, "slotMatch": 1.0, "t5Bleu": 0.1, "t1Bleu": 0.1}
              for s in (60.0, 80.0)]
    agg2 = evaluate_seeds(varied + [None])
    assert agg2["incomplete"] == 1
    assert agg2["success"]["mean"] == pytest.approx(70.0)
    assert agg2["success"]["std"] == pytest.approx(np.std([60.0, 80.0]))


def test_report_layout(tmp_path):
    rows = [{"arch": "lm", "belief": "summary", "snapshot": 0,
             "success": 72.5, "slotMatch": 61.2, "t5Bleu": 0.221,
             "t1Bleu": 0.227, "seedCount": 10}]
    write_report(tmp_path / "r.csv", tmp_path / "r.json", rows)
    header = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert header == "arch,belief,snapshot,success,slotMatch,t5Bleu,t1Bleu,seedCount"

    table_rows = [{"arch": "lm", "belief": "summary",
                   "base": {"success": 72.6, "slotMatch": 52.1,
                            "t5Bleu": 0.207, "t1Bleu": 0.216},
                   "snap": {"success": 74.5, "slotMatch": 60.3,
                            "t5Bleu": 0.229, "t1Bleu": 0.238}}]
    write_paired_table(tmp_path / "table.csv", table_rows)
    lines = (tmp_path / "table.csv").read_text().splitlines()
    assert lines[0] == "arch,belief,success,slotMatch,t5Bleu,t1Bleu"
    assert "72.6 / 74.5" in lines[1]
