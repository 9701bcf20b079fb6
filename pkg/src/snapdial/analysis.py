"""Post-hoc model analyses: average gate activations over a test split,
attention heat maps over the tracker columns for decoded responses, and
squeezed snapshot-block traces aligned with emitted tokens. All exports
are machine-readable (CSV / JSON); rendering lives elsewhere.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .decoder import forward_teacher
from .decoding import DecodeConditioning, beam_search
from .model import DialogueData, GenerationModel, make_provider


class UnsupportedConfigError(ValueError):
    """The requested analysis needs a capability this model lacks."""


@dataclass
class GateStats:
    mean_i: float
    mean_f: float
    mean_o: float
    mean_r: float | None
    r_over_o: float | None
    mean_ratio: float | None


def collect_gate_traces(model: GenerationModel,
                        data: list[DialogueData]) -> dict[str, np.ndarray]:
    """Teacher-forced gate activations over every step of every turn,
    concatenated along the step axis."""
    acc: dict[str, list[np.ndarray]] = {}
    for dd in data:
        for td in dd.turns:
            z, _ = model.intent.forward(td.user_ids, bos_id=model.vocab.EOS)
            provider = make_provider(model, z, td)
            tape = forward_teacher(model.decoder, td.target_ids, provider,
                                   bos_id=model.vocab.BOS, keep_probs=False)
            for name, rows in tape.gates.items():
                acc.setdefault(name, []).append(rows)
    return {name: np.concatenate(rows) for name, rows in acc.items()}


def gate_stats(model: GenerationModel, data: list[DialogueData]) -> GateStats:
    """Elementwise gate means over the split. The reading/output ratio is
    reported as a ratio of means; the mean of per-element ratios is kept
    alongside for comparison. The lm variant has no reading gate."""
    traces = collect_gate_traces(model, data)
    mean_i = float(np.mean(traces["i"]))
    mean_f = float(np.mean(traces["f"]))
    mean_o = float(np.mean(traces["o"]))
    if "r" in traces:
        mean_r = float(np.mean(traces["r"]))
        r_over_o = mean_r / mean_o
        mean_ratio = float(np.mean(traces["r"] / traces["o"]))
    else:
        mean_r = r_over_o = mean_ratio = None
    return GateStats(mean_i=mean_i, mean_f=mean_f, mean_o=mean_o,
                     mean_r=mean_r, r_over_o=r_over_o,
                     mean_ratio=mean_ratio)


def write_gates_csv(path, rows: list[tuple[str, GateStats]]):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["config", "meanI", "meanF", "meanRoverO"])
        for config, st in rows:
            ratio = "" if st.r_over_o is None else repr(st.r_over_o)
            w.writerow([config, repr(st.mean_i), repr(st.mean_f), ratio])


# ---------------------------------------------------------------------------
# per-turn traced decoding


def _decode_turn(model: GenerationModel, td, width=10, max_len=30):
    z, _ = model.intent.forward(td.user_ids, bos_id=model.vocab.EOS)
    cond = DecodeConditioning(model, z, td.bel, td.x)
    cands = beam_search(model.decoder, cond, model.vocab.BOS,
                        model.vocab.EOS, width=width, n_candidates=1,
                        max_len=max_len)
    return z, cands[0].tokens


def _traced_teacher(model: GenerationModel, z, td, target_ids):
    provider = make_provider(model, z, td)
    tape = forward_teacher(model.decoder, target_ids, provider,
                           bos_id=model.vocab.BOS, keep_probs=False)
    return tape


@dataclass
class HeatMap:
    tokens: list[str]
    trackers: list[str]
    rows: list[list[float]]

    def to_json(self) -> dict:
        return {"tokens": self.tokens, "trackers": self.trackers,
                "rows": self.rows}


def attention_heatmap(model: GenerationModel, dd: DialogueData,
                      turn: int, width: int = 10,
                      max_len: int = 30) -> HeatMap:
    """Attention weights over the tracker columns (informable slots first)
    for the decoded top-1 response of the given turn."""
    if not model.config.attention:
        raise UnsupportedConfigError(
            "attention heat maps need an attention-trained model")
    td = dd.turns[turn]
    z, decoded = _decode_turn(model, td, width=width, max_len=max_len)
    tape = _traced_teacher(model, z, td, decoded)
    return HeatMap(tokens=model.vocab.decode(decoded),
                   trackers=[s for s, _ in td.bel],
                   rows=[[float(a) for a in row] for row in tape.alphas])


@dataclass
class NeuronTrace:
    tokens: list[str]
    indicators: list[str]
    values: list[list[float]]

    def to_json(self) -> dict:
        return {"tokens": self.tokens, "indicators": self.indicators,
                "values": self.values}


def snapshot_trace(model: GenerationModel, dd: DialogueData,
                   turn: int, width: int = 10,
                   max_len: int = 30) -> NeuronTrace:
    """Squeezed snapshot-block activations per generation step of the
    decoded top-1 response, aligned with the emitted tokens."""
    if not model.config.snapshot:
        raise UnsupportedConfigError(
            "snapshot traces need a snapshot-trained model")
    td = dd.turns[turn]
    z, decoded = _decode_turn(model, td, width=width, max_len=max_len)
    tape = _traced_teacher(model, z, td, decoded)
    d = model.indicators.d
    squeezed = (tape.m_rows[:, :d] + 1.0) / 2.0
    return NeuronTrace(tokens=model.vocab.decode(decoded),
                       indicators=list(model.indicators.ids),
                       values=[[float(v) for v in row] for row in squeezed])


def write_json(path, payload: dict):
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(payload, separators=(",", ":")))


def heatmap_row_entropy(hm: HeatMap) -> float:
    """Mean attention-row entropy; lower means more concentrated maps."""
    rows = np.asarray(hm.rows)
    eps = 1e-12
    ent = -(rows * np.log(rows + eps)).sum(axis=1)
    return float(ent.mean())
