import numpy as np
import pytest

from snapdial.analysis import (GateStats, UnsupportedConfigError,
                               attention_heatmap, collect_gate_traces,
                               gate_stats, heatmap_row_entropy,
                               snapshot_trace, write_gates_csv, write_json)
from snapdial.model import GenerationModel, TrainConfig
from snapdial.snapshot import IndicatorSpec


def test_zero_init_model_has_half_gates(small_world, mini_data):
    onto = small_world["ontology"]
    config = TrainConfig(variant="hybrid", belief="summary")
    model = GenerationModel(config, small_world["vocab"], onto,
                            IndicatorSpec.for_ontology(onto), rng=None)
    stats = gate_stats(model, mini_data[:5])
    assert stats.mean_i == 0.5
    assert stats.mean_f == 0.5
    assert stats.mean_o == 0.5
    assert stats.mean_r == 0.5
    assert stats.r_over_o == pytest.approx(1.0)


def test_gate_stats_match_trace_recount(mini_model, mini_data):
    model = mini_model["model"]
    stats = gate_stats(model, mini_data[:20])
    traces = collect_gate_traces(model, mini_data[:20])
    assert stats.mean_i == pytest.approx(float(np.mean(traces["i"])), abs=0)
    assert stats.mean_f == pytest.approx(float(np.mean(traces["f"])), abs=0)
    assert stats.mean_r is None  # lm variant has no reading gate
    total_steps = sum(len(td.target_ids) for dd in mini_data[:20]
                      for td in dd.turns)
    assert traces["i"].shape == (total_steps, model.config.hidden)


def test_gate_stats_invariant_to_dialogue_order(mini_model, mini_data):
    model = mini_model["model"]
    a = gate_stats(model, mini_data[:10])
    b = gate_stats(model, list(reversed(mini_data[:10])))
    assert a.mean_i == pytest.approx(b.mean_i, abs=1e-15)
    assert a.mean_f == pytest.approx(b.mean_f, abs=1e-15)


def test_gates_csv_layout(tmp_path, mini_model, mini_data, mini_att_model):
    rows = [
        ("lm,summary", gate_stats(mini_model["model"], mini_data[:5])),
        ("hybrid,summary,+att",
         gate_stats(mini_att_model["model"], mini_att_model["data"][:5])),
    ]
    path = tmp_path / "gates.csv"
    write_gates_csv(path, rows)
    import csv
    with open(path) as f:
        parsed = list(csv.reader(f))
    assert parsed[0] == ["config", "meanI", "meanF", "meanRoverO"]
    assert parsed[1][0] == "lm,summary"
    assert parsed[1][3] == ""  # lm has no reading gate
    assert parsed[2][0] == "hybrid,summary,+att"
    assert float(parsed[2][3]) > 0.0
    assert len(parsed) == 3


def test_attention_heatmap_contract(mini_att_model):
    model = mini_att_model["model"]
    data = mini_att_model["data"]
    hm = attention_heatmap(model, data[0], 0)
    assert len(hm.rows) == len(hm.tokens) > 0
    onto = model.ontology
    assert hm.trackers == (onto.informable_slots
                           + [f"req.{s}" for s in onto.requestable])
    for row in hm.rows:
        assert abs(sum(row) - 1.0) <= 1e-9
    assert heatmap_row_entropy(hm) >= 0.0


def test_attention_heatmap_requires_attention_model(mini_model, mini_data):
    with pytest.raises(UnsupportedConfigError):
        attention_heatmap(mini_model["model"], mini_data[0], 0)


def test_snapshot_trace_contract(mini_att_model):
    model = mini_att_model["model"]
    tr = snapshot_trace(model, mini_att_model["data"][0], 0)
    assert len(tr.values) == len(tr.tokens) > 0
    assert tr.indicators == list(model.indicators.ids)
    arr = np.asarray(tr.values)
    assert np.all(arr >= 0.0) and np.all(arr <= 1.0)


def test_snapshot_trace_requires_snapshot_model(mini_model, mini_data):
    with pytest.raises(UnsupportedConfigError):
        snapshot_trace(mini_model["model"], mini_data[0], 0)


def test_exports_regenerate_identically(tmp_path, mini_att_model):
    model = mini_att_model["model"]
    data = mini_att_model["data"]
    for run in ("a", "b"):
        hm = attention_heatmap(model, data[1], 0)
        write_json(tmp_path / f"hm_{run}.json", hm.to_json())
        tr = snapshot_trace(model, data[1], 0)
        write_json(tmp_path / f"tr_{run}.json", tr.to_json())
        write_gates_csv(tmp_path / f"g_{run}.csv",
                        [("hybrid", gate_stats(model, data[:5]))])
    for stem in ("hm", "tr", "g"):
        ext = "csv" if stem == "g" else "json"
        assert (tmp_path / f"{stem}_a.{ext}").read_bytes() == \
            (tmp_path / f"{stem}_b.{ext}").read_bytes()
