"""Command-line entry point: corpus generation, tracker pre-training,
generator training, corpus-mode decoding, evaluation across experiment
grids, analysis exports, an HTTP server, and a terminal chat loop.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import fields
from pathlib import Path

from . import corpus as cp
from . import evaluation as ev
from .analysis import (attention_heatmap, gate_stats, snapshot_trace,
                       write_gates_csv, write_json)
from .decoding import decode_corpus, respond, write_dump, read_dump
from .model import GenerationModel, TrainConfig, compile_corpus
from .numerics import Rng
from .snapshot import IndicatorSpec
from .tracker import TrackerHyper, TrackerModel, train_trackers
from .training import train, write_training_log

SPLITS = ("train", "valid", "test")


def _sha(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def _file_sha(path: Path) -> str:
    return _sha(path.read_bytes())


def _config_hash(config: TrainConfig) -> str:
    payload = {k: v for k, v in config.to_json().items() if k != "seed"}
    return _sha(json.dumps(payload, sort_keys=True).encode())[:12]


def corpus_hash(corpus_dir: Path) -> str:
    h = hashlib.sha256()
    for name in ("ontology.json", "database.json", "corpus_train.json",
                 "corpus_valid.json", "corpus_test.json", "vocab.json"):
        h.update(_file_sha(corpus_dir / name).encode())
    return h.hexdigest()[:12]


def load_corpus_dir(corpus_dir: Path):
    ontology = cp.load_ontology(corpus_dir / "ontology.json")
    database = cp.load_database(corpus_dir / "database.json")
    splits = {}
    for name in SPLITS:
        _, dialogues = cp.load_corpus(corpus_dir / f"corpus_{name}.json")
        splits[name] = dialogues
    with open(corpus_dir / "vocab.json", encoding="utf-8") as f:
        vocab = cp.Vocabulary.from_json(json.load(f))
    return ontology, database, splits, vocab


def _require(path: Path, what: str):
    if not path.exists():
        print(f"error: missing {what}: {path}", file=sys.stderr)
        sys.exit(2)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_corpus(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = Rng(args.seed, key=(10,))
    ontology = cp.default_ontology()
    database = cp.build_database(ontology, rng)
    dialogues = cp.generate_corpus(ontology, database, args.n, rng,
                                   no_match_rate=args.no_match_rate)
    train_d, valid_d, test_d = cp.split(dialogues, Rng(args.seed, key=(11,)))
    cp.save_ontology(out / "ontology.json", ontology)
    cp.save_database(out / "database.json", database)
    for name, ds in (("train", train_d), ("valid", valid_d), ("test", test_d)):
        cp.save_corpus(out / f"corpus_{name}.json", ontology, ds)
    vocab = cp.build_vocab(train_d, ontology, min_count=args.min_count)
    with open(out / "vocab.json", "w", encoding="utf-8") as f:
        f.write(json.dumps(vocab.to_json(), separators=(",", ":")))
    manifest = {
        "command": "gen-corpus",
        "seed": args.seed,
        "nDialogues": args.n,
        "splitSizes": {"train": len(train_d), "valid": len(valid_d),
                       "test": len(test_d)},
        "vocabSize": len(vocab),
        "vocabHash": vocab.hash(),
        "corpusHash": corpus_hash(out),
        "files": sorted(p.name for p in out.iterdir() if p.is_file()
                        and p.name != "manifest.json"),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        f.write(json.dumps(manifest, sort_keys=True, indent=1))
    print(f"wrote corpus ({len(dialogues)} dialogues, vocab {len(vocab)}) "
          f"to {out}")
    return 0


def cmd_train_trackers(args) -> int:
    corpus_dir = Path(args.corpus)
    _require(corpus_dir / "corpus_train.json", "corpus directory")
    ontology, _, splits, _ = load_corpus_dir(corpus_dir)
    hyper = TrackerHyper(max_epochs=args.max_epochs)
    model = train_trackers(splits["train"], splits["valid"], ontology, hyper)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    print(f"wrote tracker checkpoint to {out}")
    return 0


def _config_from_args(args) -> TrainConfig:
    base = {}
    if args.config:
        path = Path(args.config)
        _require(path, "config file")
        if path.suffix == ".toml":
            import tomli
            base = tomli.loads(path.read_text()).get("train", {})
        else:
            base = json.loads(path.read_text()).get("train", {})
    overrides = dict(
        variant=args.variant, attention=args.attention,
        belief=args.belief, snapshot=args.snapshot, lam=args.lam,
        lr=args.lr, l2=args.l2, clip_norm=args.clip_norm,
        clip_mode=args.clip_mode, hidden=args.hidden,
        init_range=args.init_range, patience=args.patience,
        max_epochs=args.max_epochs, seed=args.seed)
    merged = {**base, **{k: v for k, v in overrides.items() if v is not None}}
    valid_keys = {f.name for f in fields(TrainConfig)}
    unknown = set(merged) - valid_keys
    if unknown:
        print(f"error: unknown config keys {sorted(unknown)}", file=sys.stderr)
        sys.exit(2)
    return TrainConfig(**merged)


def cmd_train(args) -> int:
    corpus_dir = Path(args.corpus)
    _require(corpus_dir / "corpus_train.json", "corpus directory")
    _require(Path(args.trackers), "tracker checkpoint")
    ontology, database, splits, vocab = load_corpus_dir(corpus_dir)
    trackers = TrackerModel.load(args.trackers)
    indicators = IndicatorSpec.for_ontology(ontology)
    config = _config_from_args(args)
    chash = _config_hash(config)
    out_root = Path(args.out)
    seeds = [config.seed + k for k in range(args.seeds)]
    for seed in seeds:
        cfg = TrainConfig.from_json({**config.to_json(), "seed": seed})
        run_dir = out_root / "runs" / chash / str(seed)
        run_dir.mkdir(parents=True, exist_ok=True)
        model, history = train(cfg, splits["train"], splits["valid"],
                               trackers, vocab, ontology, database,
                               indicators)
        model.save(run_dir / "checkpoint.json")
        write_training_log(run_dir / "train_log.csv", history)
        manifest = {
            "command": "train",
            "config": cfg.to_json(),
            "configHash": chash,
            "corpusHash": corpus_hash(corpus_dir),
            "seed": seed,
            "vocabHash": vocab.hash(),
            "weightsHash": model.weights_hash(),
            "bestEpoch": history.best_epoch,
            "stopEpoch": history.stop_epoch,
            "artifacts": {"checkpoint": "checkpoint.json",
                          "trainLog": "train_log.csv"},
        }
        with open(run_dir / "manifest.json", "w", encoding="utf-8") as f:
            f.write(json.dumps(manifest, sort_keys=True, indent=1))
        print(f"seed {seed}: stopped at epoch {history.stop_epoch} "
              f"(best {history.best_epoch}), run dir {run_dir}")
    return 0


def cmd_decode(args) -> int:
    corpus_dir = Path(args.corpus)
    _require(corpus_dir / "corpus_test.json", "corpus directory")
    _require(Path(args.checkpoint), "model checkpoint")
    _require(Path(args.trackers), "tracker checkpoint")
    ontology, database, splits, vocab = load_corpus_dir(corpus_dir)
    model = GenerationModel.load(args.checkpoint)
    trackers = TrackerModel.load(args.trackers)
    data = compile_corpus(splits[args.split], vocab, trackers, ontology,
                          database, model.indicators, model.config)
    rows = decode_corpus(model, data, database, seed=model.config.seed,
                         width=args.width, n_candidates=args.candidates,
                         max_len=args.max_len)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dump(out, rows)
    print(f"wrote {len(rows)} decoded turns to {out}")
    return 0


def cmd_eval(args) -> int:
    corpus_dir = Path(args.corpus)
    _require(corpus_dir / "corpus_test.json", "corpus directory")
    ontology, database, splits, _ = load_corpus_dir(corpus_dir)
    dialogues = splits[args.split]
    runs_root = Path(args.runs)
    _require(runs_root, "runs directory")

    grouped: dict[tuple, dict] = {}
    for manifest_path in sorted(runs_root.glob("*/*/manifest.json")):
        run_dir = manifest_path.parent
        dump_path = run_dir / "dump.jsonl"
        if not dump_path.exists():
            continue
        manifest = json.loads(manifest_path.read_text())
        cfg = TrainConfig.from_json(manifest["config"])
        key = (cfg.arch_label, cfg.belief, cfg.snapshot)
        metrics = ev.evaluate_dump(read_dump(dump_path), dialogues, database,
                                   t5_mode=args.t5_mode)
        grouped.setdefault(key, {})[cfg.seed] = metrics

    rows = []
    for (arch, belief, snap), per_seed in sorted(grouped.items()):
        agg = ev.evaluate_seeds([per_seed[s] for s in sorted(per_seed)])
        rows.append({
            "arch": arch, "belief": belief, "snapshot": int(snap),
            "success": agg["success"]["mean"],
            "slotMatch": agg["slotMatch"]["mean"],
            "t5Bleu": agg["t5Bleu"]["mean"],
            "t1Bleu": agg["t1Bleu"]["mean"],
            "seedCount": agg["seedCount"],
            "std": {k: agg[k]["std"] for k in ev.METRIC_KEYS},
        })
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ev.write_report(out / "results.csv", out / "results.json", rows)

    paired = {}
    for row in rows:
        key = (row["arch"], row["belief"])
        slot = "snap" if row["snapshot"] else "base"
        paired.setdefault(key, {"arch": row["arch"],
                                "belief": row["belief"]})[slot] = row
    table_rows = [v for _, v in sorted(paired.items()) if "base" in v]
    ev.write_paired_table(out / "results_table.csv", table_rows)
    print(f"wrote evaluation over {len(rows)} configurations to {out}")
    return 0


def cmd_analyze(args) -> int:
    corpus_dir = Path(args.corpus)
    _require(corpus_dir / "corpus_test.json", "corpus directory")
    _require(Path(args.checkpoint), "model checkpoint")
    _require(Path(args.trackers), "tracker checkpoint")
    ontology, database, splits, vocab = load_corpus_dir(corpus_dir)
    model = GenerationModel.load(args.checkpoint)
    trackers = TrackerModel.load(args.trackers)
    data = compile_corpus(splits["test"], vocab, trackers, ontology,
                          database, model.indicators, model.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    label = (f"{model.config.arch_label},{model.config.belief}"
             + (",snapshot" if model.config.snapshot else ""))
    write_gates_csv(out / "gates.csv", [(label, gate_stats(model, data))])

    di = args.dialogue if args.dialogue is not None else 0
    ti = args.turn if args.turn is not None else 0
    wrote = ["gates.csv"]
    if model.config.attention:
        hm = attention_heatmap(model, data[di], ti)
        write_json(out / "heatmap.json", hm.to_json())
        wrote.append("heatmap.json")
    if model.config.snapshot:
        tr = snapshot_trace(model, data[di], ti)
        write_json(out / "trace.json", tr.to_json())
        wrote.append("trace.json")
    print(f"wrote {', '.join(wrote)} to {out}")
    return 0


def cmd_serve(args) -> int:
    from .server import Bundle, serve

    for path, what in ((args.checkpoint, "model checkpoint"),
                       (args.trackers, "tracker checkpoint"),
                       (args.db, "database file")):
        _require(Path(path), what)
    bundle = Bundle.load(args.checkpoint, args.trackers, args.db)
    print(f"serving {bundle.model.config.arch_label} on "
          f"{args.host}:{args.port}")
    serve(bundle, host=args.host, port=args.port, base_seed=args.seed,
          ui_dir=args.ui)
    return 0


def cmd_chat(args) -> int:
    from .server import Bundle

    for path, what in ((args.checkpoint, "model checkpoint"),
                       (args.trackers, "tracker checkpoint"),
                       (args.db, "database file")):
        _require(Path(path), what)
    bundle = Bundle.load(args.checkpoint, args.trackers, args.db)
    rng = Rng(args.seed, key=(99,))
    turns: list[list[str]] = []
    pointer = None
    print("type a message ('quit' to exit)")
    while True:
        try:
            line = input("you> ").strip().lower()
        except EOFError:
            break
        if not line or line in ("quit", "exit"):
            break
        turns.append(line.split())
        result = respond(bundle.model, bundle.trackers, turns,
                         bundle.database, rng, previous_pointer=pointer)
        pointer = result.entity
        print(f"sys> {result.surface}")
        if args.verbose:
            print(f"     skeletal: {' '.join(result.skeletal)}")
            print(f"     matches: {len(result.db_matches)}"
                  + (f", offered: {result.entity}" if result.entity else ""))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snapdial",
        description="conditional-LSTM dialogue generation testbed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate the synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--min-count", type=int, default=2)
    p.add_argument("--no-match-rate", type=float, default=0.06)
    p.set_defaults(fn=cmd_gen_corpus)

    p = sub.add_parser("train-trackers", help="pre-train belief trackers")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-epochs", type=int, default=50)
    p.set_defaults(fn=cmd_train_trackers)

    p = sub.add_parser("train", help="train a generation network")
    p.add_argument("--corpus", required=True)
    p.add_argument("--trackers", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON/TOML config file (train section)")
    p.add_argument("--variant", choices=["lm", "mem", "hybrid"])
    p.add_argument("--attention", action=argparse.BooleanOptionalAction)
    p.add_argument("--belief", choices=["full", "summary"])
    p.add_argument("--snapshot", action=argparse.BooleanOptionalAction)
    p.add_argument("--lam", type=float, help="snapshot loss weight")
    p.add_argument("--lr", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--clip-norm", type=float)
    p.add_argument("--clip-mode", choices=["norm", "element"])
    p.add_argument("--hidden", type=int)
    p.add_argument("--init-range", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, default=1,
                   help="train this many consecutive seeds")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("decode", help="decode a split with beam search")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--trackers", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=list(SPLITS), default="test")
    p.add_argument("--width", type=int, default=10)
    p.add_argument("--candidates", type=int, default=5)
    p.add_argument("--max-len", type=int, default=30)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("eval", help="evaluate decode dumps under runs/")
    p.add_argument("--corpus", required=True)
    p.add_argument("--runs", required=True,
                   help="directory holding <configHash>/<seed>/ run dirs")
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=list(SPLITS), default="test")
    p.add_argument("--t5-mode", choices=["max", "mean"], default="max")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("analyze", help="export gate stats, heat maps, traces")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--trackers", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dialogue", type=int)
    p.add_argument("--turn", type=int)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("serve", help="serve a checkpoint over HTTP")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--trackers", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ui", help="directory with the built web client")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("chat", help="terminal chat against a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--trackers", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_chat)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit:
        raise
    except Exception as exc:  # noqa: BLE001 - single reporting point
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
