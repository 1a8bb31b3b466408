"""Run configuration: YAML files over per-dataset presets.

A config file is a key/value document with nested ``data``, ``vocab``,
``model``, ``optimizer``, ``cvt`` and ``grid`` sections.  Every key has a
default drawn from the selected ``preset`` (orchid, ugwc, iwslt); file
values override the preset, command-line flags override the file.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import yaml

from .corpus import TASK_TAGS
from .cvt import CvtConfig
from .errors import ConfigError
from .model import ModelConfig
from .trainer import OptimizerConfig
from .vocab import VocabConfig

_COMMON_MODEL = {
    "uni_word_dim": 64,
    "uni_pos_dim": 32,
    "uni_type_dim": 32,
    "ngram_word_dim": 16,
    "ngram_pos_dim": 8,
    "ngram_type_dim": 8,
    "hidden_size": 25,
    "lstm_layers": 2,
    "attn_out_dim": 50,
    "low_attn_proj": 64,
    "high_attn_proj": 25,
    "dropout_local": 0.30,
    "dropout_between": 0.15,
}

PRESETS: dict[str, dict] = {
    "orchid": {
        "task": "segmentation",
        "seq_len": 200,
        "packing": "orchid",
        "folds": 10,
        "vocab": {"c_word": 2, "c_ngram": 2},
        "model": dict(_COMMON_MODEL),
        "optimizer": {
            "kind": "adagrad",
            "learning_rate": 0.02,
            "l2_alpha": 0.01,
            "batch_size": 16,
            "patience": 5,
        },
        "cvt": None,  # no unlabeled data in this corpus
    },
    "ugwc": {
        "task": "segmentation",
        "seq_len": 200,
        "packing": "orchid",
        "folds": 5,
        "vocab": {"c_word": 2, "c_ngram": 2},
        "model": dict(_COMMON_MODEL),
        "optimizer": {
            "kind": "adagrad",
            "learning_rate": 0.02,
            "l2_alpha": 0.01,
            "batch_size": 16,
            "patience": 5,
        },
        "cvt": {
            "drop_rate": 0.30,
            "unlabeled_batches": 1,
            "unlabeled_input_dropout": 0.50,
        },
    },
    "iwslt": {
        "task": "punctuation",
        "seq_len": 200,
        "packing": "iwslt",
        "folds": 10,
        "vocab": {"c_word": 2, "c_ngram": 13},
        "model": {
            "uni_word_dim": 300,
            "uni_pos_dim": 300,
            "uni_type_dim": 300,
            "ngram_word_dim": 10,
            "ngram_pos_dim": 10,
            "ngram_type_dim": 10,
            "hidden_size": 256,
            "lstm_layers": 4,
            "attn_out_dim": 256,
            "low_attn_proj": 32,
            "high_attn_proj": 128,
            "dropout_local": 0.30,
            "dropout_between": 0.15,
        },
        "optimizer": {
            "kind": "adam",
            "learning_rate": 0.001,
            "l2_alpha": 0.01,
            "batch_size": 16,
            "patience": 5,
        },
        "cvt": {
            "drop_rate": 0.30,
            "unlabeled_batches": 2,
            "unlabeled_input_dropout": 0.30,
        },
    },
}

_PATH_KEYS = ("corpus", "train", "dev", "test", "unlabeled")
_TOP_KEYS = {
    "preset", "task", "seed", "seq_len", "packing", "folds",
    "data", "vocab", "model", "optimizer", "cvt", "grid",
}


@dataclass
class RunConfig:
    task: str
    preset: str
    seed: int
    seq_len: int
    packing: str
    folds: int
    paths: dict[str, str | None]
    grid: dict[str, list[int]]
    vocab: VocabConfig
    model: ModelConfig
    optimizer: OptimizerConfig
    cvt: CvtConfig | None

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "preset": self.preset,
            "seed": self.seed,
            "seq_len": self.seq_len,
            "packing": self.packing,
            "folds": self.folds,
            "data": {k: v for k, v in self.paths.items() if v is not None},
            "grid": self.grid,
            "vocab": {"c_word": self.vocab.c_word, "c_ngram": self.vocab.c_ngram},
            "model": self.model.to_dict(),
            "optimizer": {
                "kind": self.optimizer.kind,
                "learning_rate": self.optimizer.learning_rate,
                "l2_alpha": self.optimizer.l2_alpha,
                "batch_size": self.optimizer.batch_size,
                "patience": self.optimizer.patience,
                "max_epochs": self.optimizer.max_epochs,
            },
            "cvt": None
            if self.cvt is None
            else {
                "drop_rate": self.cvt.drop_rate,
                "unlabeled_batches": self.cvt.unlabeled_batches,
                "unlabeled_input_dropout": self.cvt.unlabeled_input_dropout,
            },
        }


def _merge_section(base: dict | None, override) -> dict | None:
    if override is None:
        return copy.deepcopy(base)
    if not isinstance(override, dict):
        raise ConfigError(f"expected a mapping, got {type(override).__name__}")
    merged = copy.deepcopy(base) if base else {}
    merged.update(override)
    return merged


def load_run_config(
    path=None,
    preset: str | None = None,
    seed: int | None = None,
) -> RunConfig:
    """Resolve preset defaults, an optional YAML file, and flag overrides."""
    raw = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    preset_name = preset or raw.get("preset") or "orchid"
    if preset_name not in PRESETS:
        raise ConfigError(
            f"unknown preset {preset_name!r}; choose from {sorted(PRESETS)}"
        )
    base = PRESETS[preset_name]

    task = raw.get("task", base["task"])
    if task not in TASK_TAGS:
        raise ConfigError(f"unknown task {task!r}")
    run_seed = seed if seed is not None else int(raw.get("seed", 0))

    data_raw = raw.get("data") or {}
    unknown = set(data_raw) - set(_PATH_KEYS) - {"folds"}
    if unknown:
        raise ConfigError(f"unknown data keys: {sorted(unknown)}")
    paths = {k: data_raw.get(k) for k in _PATH_KEYS}
    folds = int(data_raw.get("folds", raw.get("folds", base["folds"])))

    vocab_d = _merge_section(base["vocab"], raw.get("vocab"))
    model_d = _merge_section(base["model"], raw.get("model"))
    opt_d = _merge_section(base["optimizer"], raw.get("optimizer"))
    if raw.get("cvt") is None and "cvt" not in raw:
        cvt_d = copy.deepcopy(base["cvt"])
    else:
        cvt_d = _merge_section(base["cvt"] or {}, raw.get("cvt"))

    grid_raw = raw.get("grid") or {}
    grid = {
        "c_word": [int(v) for v in grid_raw.get("c_word", [vocab_d["c_word"]])],
        "c_ngram": [int(v) for v in grid_raw.get("c_ngram", [vocab_d["c_ngram"]])],
    }

    try:
        vocab_cfg = VocabConfig(**vocab_d)
        model_cfg = ModelConfig(tags=TASK_TAGS[task], **model_d)
        opt_cfg = OptimizerConfig(seed=run_seed, **opt_d)
        cvt_cfg = None if cvt_d is None else CvtConfig(**cvt_d)
    except TypeError as err:
        raise ConfigError(f"bad config value: {err}")

    return RunConfig(
        task=task,
        preset=preset_name,
        seed=run_seed,
        seq_len=int(raw.get("seq_len", base["seq_len"])),
        packing=raw.get("packing", base["packing"]),
        folds=folds,
        paths=paths,
        grid=grid,
        vocab=vocab_cfg,
        model=model_cfg,
        optimizer=opt_cfg,
        cvt=cvt_cfg,
    )
