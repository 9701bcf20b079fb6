"""Stage-2 optimization: per-dialogue SGD batches under the combined token
+ snapshot objective, gradient clipping, l2 decay, early stopping on
validation LM log-likelihood, and multi-seed orchestration.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import corpus as cp
from .model import (DialogueData, GenerationModel, TrainConfig,
                    compile_corpus, corpus_token_loglik, dialogue_loss)
from .numerics import Rng, TrainingError, clip_and_step
from .snapshot import IndicatorSpec
from .tracker import TrackerModel

__all__ = ["TrainConfig", "TrainHistory", "train", "run_seeds",
            "aggregate_metrics", "write_training_log"]


@dataclass
class TrainHistory:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_valid_ll: float = -math.inf
    stop_epoch: int = 0

    def append(self, **row):
        self.epochs.append(row)


def write_training_log(path, history: TrainHistory):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "trainLoss", "tokenLoss", "snapshotLoss",
                    "validLL", "seconds"])
        for row in history.epochs:
            w.writerow([row["epoch"], repr(row["trainLoss"]),
                        repr(row["tokenLoss"]), repr(row["snapshotLoss"]),
                        repr(row["validLL"]), f"{row['seconds']:.3f}"])


def train(config: TrainConfig,
          train_dialogues: list[cp.Dialogue],
          valid_dialogues: list[cp.Dialogue],
          trackers: TrackerModel,
          vocab: cp.Vocabulary,
          ontology: cp.Ontology,
          database: cp.Database,
          indicators: IndicatorSpec,
          log_path=None) -> tuple[GenerationModel, TrainHistory]:
    """Train one generation network with frozen trackers. Each dialogue is
    one SGD batch; training stops once validation log-likelihood has not
    improved for `patience` epochs and the best-validation parameters are
    restored."""
    if not train_dialogues or not valid_dialogues:
        raise cp.ConfigError("training needs non-empty train/valid splits")
    init_rng = Rng(config.seed, key=(0,))
    order_rng = Rng(config.seed, key=(1,))
    model = GenerationModel(config, vocab, ontology, indicators, rng=init_rng)
    train_data = compile_corpus(train_dialogues, vocab, trackers, ontology,
                                database, indicators, config)
    valid_data = compile_corpus(valid_dialogues, vocab, trackers, ontology,
                                database, indicators, config)

    tracker_bytes = trackers.param_bytes()
    history = TrainHistory()
    best_values = model.values_snapshot()
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = order_rng.shuffled(range(len(train_data)))
        token_sum = 0.0
        snap_sum = 0.0
        for pos, di in enumerate(order):
            dd: DialogueData = train_data[di]
            try:
                token, snap, _ = dialogue_loss(model, dd, accumulate=True)
                total = token + config.lam * snap
                if not math.isfinite(total):
                    raise TrainingError("non-finite loss")
                clip_and_step(model.params, config.lr, config.l2,
                              config.clip_norm, mode=config.clip_mode)
            except TrainingError as exc:
                raise TrainingError(
                    f"{exc} at epoch {epoch}, dialogue {dd.dialogue.id} "
                    f"(position {pos})") from exc
            token_sum += token
            snap_sum += snap
        valid_ll = corpus_token_loglik(model, valid_data)
        history.append(epoch=epoch,
                       trainLoss=token_sum + config.lam * snap_sum,
                       tokenLoss=token_sum, snapshotLoss=snap_sum,
                       validLL=valid_ll,
                       seconds=time.perf_counter() - t0)
        if valid_ll > history.best_valid_ll:
            history.best_valid_ll = valid_ll
            history.best_epoch = epoch
            best_values = model.values_snapshot()
        elif epoch - history.best_epoch >= config.patience:
            break
    history.stop_epoch = history.epochs[-1]["epoch"] if history.epochs else 0
    model.restore_values(best_values)
    model.zero_grads()

    if trackers.param_bytes() != tracker_bytes:
        raise TrainingError("tracker parameters changed during stage 2")
    if log_path is not None:
        write_training_log(log_path, history)
    return model, history


def aggregate_metrics(per_seed: list[dict]) -> dict:
    """Mean and population standard deviation per metric over seed runs;
    failed seeds (None entries) are skipped but counted."""
    rows = [r for r in per_seed if r is not None]
    out = {"seedCount": len(rows), "failures": len(per_seed) - len(rows)}
    if not rows:
        return out
    for key in rows[0]:
        vals = np.array([float(r[key]) for r in rows])
        out[key] = {"mean": float(np.mean(vals)),
                    "std": float(np.std(vals)),
                    "perSeed": vals.tolist()}
    return out


def run_seeds(config: TrainConfig,
              train_dialogues, valid_dialogues, trackers, vocab, ontology,
              database, indicators, n_seeds: int = 10,
              run_fn=None) -> tuple[list, dict]:
    """Train `n_seeds` independent networks with seeds base..base+n-1.
    `run_fn(model, seed) -> dict` computes per-seed metrics (decode +
    evaluate); per-seed failures are recorded without aborting the rest.

    Returns (per-seed results, aggregated metrics)."""
    results = []
    metrics = []
    for k in range(n_seeds):
        cfg = TrainConfig.from_json({**config.to_json(),
                                     "seed": config.seed + k})
        try:
            model, history = train(cfg, train_dialogues, valid_dialogues,
                                   trackers, vocab, ontology, database,
                                   indicators)
            row = run_fn(model, cfg.seed) if run_fn is not None else {}
            results.append({"seed": cfg.seed, "model": model,
                            "history": history, "metrics": row})
            metrics.append(row)
        except Exception as exc:  # noqa: BLE001 - per-seed isolation
            results.append({"seed": cfg.seed, "error": str(exc)})
            metrics.append(None)
    return results, aggregate_metrics(metrics)
