"""Snapshot targets and the companion cross-entropy objective applied to
the leading block of the action vector: binary indicators for "a venue has
been offered" and "this placeholder token still lies ahead in the
response".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import corpus as cp


class AlignmentError(ValueError):
    """Trace and targets disagree about step counts."""


@dataclass(frozen=True)
class IndicatorSpec:
    """Ordered indicator ids: "offered" first, then one per tracked
    placeholder token. The list length d must stay below the action-vector
    size; the leading d components of the action vector carry the
    snapshot block."""
    ids: tuple[str, ...]

    @property
    def d(self) -> int:
        return len(self.ids)

    @property
    def tokens(self) -> tuple[str, ...]:
        return self.ids[1:]

    @classmethod
    def for_ontology(cls, ontology: cp.Ontology) -> "IndicatorSpec":
        ids = ["offered", "[v.name]"]
        ids += [f"[v.{slot}]" for slot in ontology.requestable]
        return cls(ids=tuple(ids))

    def to_json(self) -> list[str]:
        return list(self.ids)

    @classmethod
    def from_json(cls, obj) -> "IndicatorSpec":
        return cls(ids=tuple(obj))


def label_snapshots(dialogue: cp.Dialogue, spec: IndicatorSpec,
                    attention_enabled: bool) -> list[np.ndarray]:
    """Per turn, a (steps x d) binary target matrix. The offered indicator
    turns on at the first turn whose response contains [v.name] and stays
    on. A token indicator (with attention) is 1 while the token still
    occurs in the remaining response suffix, 0 once generated and 0 in
    turns that never produce it; without attention it is turn-constant."""
    offer_turn = len(dialogue.turns)
    for t, turn in enumerate(dialogue.turns):
        if "[v.name]" in turn.sys:
            offer_turn = t
            break
    out = []
    for t, turn in enumerate(dialogue.turns):
        steps = len(turn.sys)
        mat = np.zeros((steps, spec.d))
        mat[:, 0] = 1.0 if t >= offer_turn else 0.0
        for k, tok in enumerate(spec.tokens, start=1):
            if attention_enabled:
                remaining = 0.0
                for j in reversed(range(steps)):
                    if turn.sys[j] == tok:
                        remaining = 1.0
                    mat[j, k] = remaining
            else:
                mat[:, k] = 1.0 if tok in turn.sys else 0.0
        out.append(mat)
    return out


def snapshot_loss(m_hat_rows: np.ndarray, targets: np.ndarray,
                  clamp_eps: float = 1e-10) -> float:
    return snapshot_loss_grad(m_hat_rows, targets, clamp_eps)[0]


def snapshot_loss_grad(m_hat_rows: np.ndarray, targets: np.ndarray,
                       clamp_eps: float = 1e-10):
    """Squeeze tanh activations to (0,1) via (a+1)/2, take binary
    cross-entropy against the targets, summed over steps with the mean
    taken over the d indicator elements. Returns (loss, d_loss/d_m_hat)."""
    m_hat_rows = np.asarray(m_hat_rows, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if m_hat_rows.shape != targets.shape:
        raise AlignmentError(
            f"trace shape {m_hat_rows.shape} vs targets {targets.shape}")
    d = m_hat_rows.shape[1]
    raw = (m_hat_rows + 1.0) / 2.0
    v = np.clip(raw, clamp_eps, 1.0 - clamp_eps)
    loss = float(np.sum(-(targets * np.log(v)
                          + (1.0 - targets) * np.log(1.0 - v))) / d)
    inside = (raw > clamp_eps) & (raw < 1.0 - clamp_eps)
    dv = (-(targets / v) + (1.0 - targets) / (1.0 - v)) / d
    dm = np.where(inside, dv * 0.5, 0.0)
    return loss, dm
