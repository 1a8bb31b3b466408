"""Batch command-line interface: prepare, train, cvt-train, evaluate,
predict, gridsearch, crossval.

Every command reads ``--config`` (YAML over a preset), puts its artifacts
under one run directory, and exits nonzero with a JSON error line on
standard error when anything fails.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import corpus as corpus_mod
from . import trainer as trainer_mod
from .config import PRESETS, RunConfig, load_run_config
from .corpus import (
    PUNCTUATION_TAGS,
    TASK_TAGS,
    TaggedSequence,
    build_sequences_with_stats,
    parse_corpus_file,
    split_folds,
    write_corpus_file,
)
from .errors import ConfigError, SentsegError
from .metrics import paired_t_test
from .model import SegmenterModel, load_checkpoint, save_checkpoint


def _task_for_tags(tags) -> str:
    return "punctuation" if set(tags) == set(PUNCTUATION_TAGS) else "segmentation"


def _resolve_run_dir(args, cfg: RunConfig) -> Path:
    if args.run_dir:
        run_dir = Path(args.run_dir)
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        run_dir = Path("runs") / f"{stamp}-seed{cfg.seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _load_config(args) -> RunConfig:
    return load_run_config(args.config, preset=args.preset, seed=args.seed)


def _require_path(cfg: RunConfig, key: str) -> str:
    value = cfg.paths.get(key)
    if not value:
        raise ConfigError(f"this command needs data.{key} in the config")
    return value


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _epoch_logger(log_path: Path):
    def log(stats: trainer_mod.EpochStats):
        line = json.dumps(stats.to_dict(), sort_keys=True)
        print(line, flush=True)
        with open(log_path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    return log


# ---------------------------------------------------------------------------
# commands


def cmd_prepare(args) -> int:
    cfg = _load_config(args)
    run_dir = _resolve_run_dir(args, cfg)
    corpus_path = _require_path(cfg, "corpus")
    passages = parse_corpus_file(corpus_path, labeled=True, tag_set=TASK_TAGS[cfg.task])
    fold_split = split_folds(passages, cfg.folds, cfg.seed)
    folds_dir = run_dir / "folds"
    folds_dir.mkdir(exist_ok=True)

    manifest = {"folds": [], "seq_len": cfg.seq_len, "packing": cfg.packing, "seed": cfg.seed}
    for fold in range(cfg.folds):
        test_idx = set(fold_split.fold_indices(fold))
        dev_idx = set(fold_split.fold_indices((fold + 1) % cfg.folds))
        splits = {
            "train": [p for i, p in enumerate(passages) if i not in test_idx | dev_idx],
            "dev": [p for i, p in enumerate(passages) if i in dev_idx],
            "test": [p for i, p in enumerate(passages) if i in test_idx],
        }
        entry = {"fold": fold}
        for name, split in splits.items():
            seqs, dups = build_sequences_with_stats(split, cfg.packing, cfg.seq_len, cfg.task)
            path = folds_dir / f"fold{fold}_{name}.tsv"
            write_corpus_file(path, seqs)
            entry[name] = {
                "passages": len(split),
                "sequences": len(seqs),
                "tokens": sum(len(s) for s in seqs),
                "duplicated_prefix_tokens": sum(dups),
                "path": str(path),
            }
        manifest["folds"].append(entry)
    _write_json(run_dir / "manifest.json", manifest)
    print(json.dumps({"run_dir": str(run_dir), "folds": cfg.folds}))
    return 0


def _load_split(cfg: RunConfig, key: str) -> list[TaggedSequence]:
    path = _require_path(cfg, key)
    return parse_corpus_file(path, labeled=True, tag_set=TASK_TAGS[cfg.task])


def _finish_training(run_dir: Path, model: SegmenterModel, history, cfg: RunConfig) -> int:
    checkpoint = run_dir / "checkpoint.zip"
    save_checkpoint(checkpoint, model)
    (run_dir / "history.jsonl").write_text(history.to_jsonl(), encoding="utf-8")
    _write_json(run_dir / "config.json", cfg.to_dict())
    print(
        json.dumps(
            {
                "run_dir": str(run_dir),
                "checkpoint": str(checkpoint),
                "best_epoch": history.best_epoch,
                "best_metric": history.best_metric,
            }
        )
    )
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    run_dir = _resolve_run_dir(args, cfg)
    train_seqs = _load_split(cfg, "train")
    dev_seqs = _load_split(cfg, "dev")
    model, history = trainer_mod.fit_supervised(
        train_seqs, dev_seqs, cfg.model, cfg.optimizer, cfg.vocab, cfg.task,
        log_fn=_epoch_logger(run_dir / "train.log"),
    )
    return _finish_training(run_dir, model, history, cfg)


def cmd_cvt_train(args) -> int:
    cfg = _load_config(args)
    if args.unlabeled:
        cfg.paths["unlabeled"] = args.unlabeled
    if cfg.cvt is None:
        raise ConfigError(
            "cvt-train needs a cvt section (drop_rate, unlabeled_batches, "
            "unlabeled_input_dropout); the orchid preset has none"
        )
    run_dir = _resolve_run_dir(args, cfg)
    train_seqs = _load_split(cfg, "train")
    dev_seqs = _load_split(cfg, "dev")
    unlabeled_path = _require_path(cfg, "unlabeled")
    unlabeled_passages = parse_corpus_file(unlabeled_path, labeled=False)
    unlabeled_seqs = corpus_mod.build_sequences(unlabeled_passages, cfg.packing, cfg.seq_len)
    model, history = trainer_mod.fit_cvt(
        train_seqs, dev_seqs, unlabeled_seqs, cfg.model, cfg.optimizer,
        cfg.vocab, cfg.cvt, cfg.task,
        log_fn=_epoch_logger(run_dir / "train.log"),
    )
    return _finish_training(run_dir, model, history, cfg)


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    run_dir = _resolve_run_dir(args, cfg)
    model = load_checkpoint(args.checkpoint)
    task = _task_for_tags(model.config.tags)
    test_path = args.test or _require_path(cfg, "test")
    seqs = parse_corpus_file(test_path, labeled=True, tag_set=model.config.tags)
    reports = trainer_mod.evaluate_model(model, seqs, task)
    payload = {name: report.to_dict() for name, report in reports.items()}
    _write_json(run_dir / "metrics.json", payload)
    print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_predict(args) -> int:
    cfg = _load_config(args)
    run_dir = _resolve_run_dir(args, cfg)
    model = load_checkpoint(args.checkpoint)
    passages = parse_corpus_file(args.input, labeled=False)
    tagged = []
    for passage in passages:
        tags: list[str] = []
        # long passages are chunked for prediction and reassembled
        chunks = corpus_mod.build_sequences([passage], cfg.packing, cfg.seq_len)
        for chunk in chunks:
            tags.extend(model.predict_tags(chunk))
        tagged.append(TaggedSequence(passage.tokens, tuple(tags)))
    out_path = Path(args.output) if args.output else run_dir / "predictions.tsv"
    write_corpus_file(out_path, tagged)
    print(json.dumps({"predictions": str(out_path), "passages": len(tagged)}))
    return 0


def cmd_gridsearch(args) -> int:
    cfg = _load_config(args)
    run_dir = _resolve_run_dir(args, cfg)
    train_seqs = _load_split(cfg, "train")
    dev_seqs = _load_split(cfg, "dev")
    best, rows = trainer_mod.grid_search(
        train_seqs, dev_seqs, cfg.grid["c_word"], cfg.grid["c_ngram"],
        cfg.model, cfg.optimizer, cfg.task,
    )
    payload = {"best": {"c_word": best[0], "c_ngram": best[1]}, "cells": rows}
    _write_json(run_dir / "grid.json", payload)
    print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_crossval(args) -> int:
    cfg = _load_config(args)
    run_dir = _resolve_run_dir(args, cfg)
    corpus_path = _require_path(cfg, "corpus")
    passages = parse_corpus_file(corpus_path, labeled=True, tag_set=TASK_TAGS[cfg.task])
    fold_split = split_folds(passages, cfg.folds, cfg.seed)

    rows = []
    scores = []
    for fold in range(cfg.folds):
        test_idx = set(fold_split.fold_indices(fold))
        dev_idx = set(fold_split.fold_indices((fold + 1) % cfg.folds))
        train = [p for i, p in enumerate(passages) if i not in test_idx | dev_idx]
        dev = [p for i, p in enumerate(passages) if i in dev_idx]
        test = [p for i, p in enumerate(passages) if i in test_idx]
        pack = lambda split: corpus_mod.build_sequences(split, cfg.packing, cfg.seq_len, cfg.task)
        model, history = trainer_mod.fit_supervised(
            pack(train), pack(dev), cfg.model, cfg.optimizer, cfg.vocab, cfg.task
        )
        reports = trainer_mod.evaluate_model(model, pack(test), cfg.task)
        primary = "sentence_boundary" if cfg.task == "segmentation" else "overall"
        score = reports[primary].f1
        scores.append(score)
        rows.append(
            {
                "fold": fold,
                "test_f1": score,
                "best_epoch": history.best_epoch,
                "dev_f1": history.best_metric,
            }
        )
        print(json.dumps(rows[-1], sort_keys=True), flush=True)

    payload = {"folds": rows, "mean_test_f1": sum(scores) / len(scores)}
    if args.baseline:
        baseline = json.loads(Path(args.baseline).read_text(encoding="utf-8"))
        base_scores = [row["test_f1"] for row in baseline["folds"]]
        result = paired_t_test(scores, base_scores)
        payload["t_test_vs_baseline"] = result.to_dict()
    _write_json(run_dir / "crossval.json", payload)
    print(json.dumps(payload, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentseg",
        description="Sentence segmentation / punctuation restoration toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--run-dir", help="directory for artifacts (default runs/<timestamp>-seed<seed>)")
        p.add_argument("--preset", choices=sorted(PRESETS), help="hyperparameter preset")

    p = sub.add_parser("prepare", help="pack a raw corpus into per-fold sequence files")
    common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="supervised training")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cvt-train", help="semi-supervised cross-view training")
    common(p)
    p.add_argument("--unlabeled", help="unlabeled corpus TSV (two columns)")
    p.set_defaults(func=cmd_cvt_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a labeled test file")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", help="labeled test TSV (defaults to data.test)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="tag an unlabeled file with a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="unlabeled TSV")
    p.add_argument("--output", help="output TSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gridsearch", help="grid search over vocabulary cutoffs")
    common(p)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("crossval", help="k-fold cross-validation")
    common(p)
    p.add_argument("--baseline", help="crossval.json of a baseline for a paired t-test")
    p.set_defaults(func=cmd_crossval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SentsegError as err:
        print(
            json.dumps({"error": type(err).__name__, "message": str(err)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
