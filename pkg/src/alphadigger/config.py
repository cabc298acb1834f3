"""Experiment configuration: TOML schema, validation with unknown-key
rejection, and dotted-key overrides."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dataset import SynthConfig
from .errors import ConfigError
from .tabular import MODEL_KINDS
from .pipeline import OPTIMIZERS

_SCHEMA = {
    "experiment": {"master_seed", "out_dir", "split_unit"},
    "data": {"mode", "n_posts", "n_days", "signal_strength", "shift_delta",
             "noise_rate", "before_fraction", "nlp_fraction",
             "prices", "posts_period1", "posts_period2", "posts_period3"},
    "text": {"tokenizer", "embedding", "embed_dim"},
    "sentiment": {"preset", "hidden_sizes", "n_heads", "train_embeddings",
                  "epochs", "batch_size", "learning_rate"},
    "phase2": {"train_fraction", "cv_k", "cells", "random_trials",
               "bo_budget", "bo_init"},
}

SENTIMENT_PRESETS = {
    "desk": (32, 16),
    "deep": (256, 128, 64, 32, 16, 8, 4),
}


@dataclass
class ExperimentConfig:
    master_seed: int = 0
    out_dir: str = "run"
    split_unit: str = "day"  # row | day

    data_mode: str = "synthetic"  # synthetic | files
    synth: SynthConfig = field(default_factory=SynthConfig)
    nlp_fraction: float = 0.5  # share of before-period days used as the NLP corpus
    prices_path: str | None = None
    posts_paths: tuple = (None, None, None)

    tokenizer: str = "whitespace"
    embedding: str = "random"  # "random" or a word2vec text file path
    embed_dim: int = 16

    hidden_sizes: tuple = (8, 4)
    n_heads: int = 2
    train_embeddings: bool = True
    epochs: int = 5
    batch_size: int = 32
    learning_rate: float = 1e-3

    train_fraction: float = 0.8
    cv_k: int = 3
    cells: tuple = (("gbdt-leaf", "random"), ("svm", "grid"))
    random_trials: int = 8
    bo_budget: int = 10
    bo_init: int = 4

    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.split_unit not in ("row", "day"):
            raise ConfigError(f"split_unit must be 'row' or 'day', got {self.split_unit!r}")
        if self.data_mode not in ("synthetic", "files"):
            raise ConfigError(f"data.mode must be 'synthetic' or 'files', got {self.data_mode!r}")
        if not (0.0 < self.nlp_fraction < 1.0):
            raise ConfigError("nlp_fraction must be in (0, 1)")
        for kind, opt in self.cells:
            if kind not in MODEL_KINDS:
                raise ConfigError(f"unknown model kind {kind!r} in cells")
            if opt not in OPTIMIZERS:
                raise ConfigError(f"unknown optimizer {opt!r} in cells")
        if self.data_mode == "files":
            if self.prices_path is None or any(p is None for p in self.posts_paths):
                raise ConfigError(
                    "files mode requires data.prices and data.posts_period1..3")


def _check_keys(doc: dict) -> None:
    for section, keys in doc.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(keys, dict):
            raise ConfigError(f"top-level key {section!r} must be a table")
        for key in keys:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key!r}")


def _parse_override_value(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply `section.key=value` overrides to the parsed document."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, value = item.split("=", 1)
        parts = dotted.split(".")
        if len(parts) != 2:
            raise ConfigError(f"override key {dotted!r} must be section.key")
        section, key = parts
        doc.setdefault(section, {})[key] = _parse_override_value(value)
    return doc


def config_from_doc(doc: dict) -> ExperimentConfig:
    _check_keys(doc)
    exp = doc.get("experiment", {})
    data = doc.get("data", {})
    text = doc.get("text", {})
    sent = doc.get("sentiment", {})
    ph2 = doc.get("phase2", {})

    synth_keys = {"n_posts", "n_days", "signal_strength", "shift_delta",
                  "noise_rate", "before_fraction"}
    synth = SynthConfig(**{k: v for k, v in data.items() if k in synth_keys})

    if "hidden_sizes" in sent:
        hidden = tuple(int(h) for h in sent["hidden_sizes"])
    else:
        preset = sent.get("preset", "desk")
        if preset not in SENTIMENT_PRESETS:
            raise ConfigError(f"unknown sentiment preset {preset!r}")
        hidden = SENTIMENT_PRESETS[preset]

    cells = tuple((str(k), str(o)) for k, o in ph2.get("cells",
                  [["gbdt-leaf", "random"], ["svm", "grid"]]))

    return ExperimentConfig(
        master_seed=int(exp.get("master_seed", 0)),
        out_dir=str(exp.get("out_dir", "run")),
        split_unit=str(exp.get("split_unit", "day")),
        data_mode=str(data.get("mode", "synthetic")),
        synth=synth,
        nlp_fraction=float(data.get("nlp_fraction", 0.5)),
        prices_path=data.get("prices"),
        posts_paths=(data.get("posts_period1"), data.get("posts_period2"),
                     data.get("posts_period3")),
        tokenizer=str(text.get("tokenizer", "whitespace")),
        embedding=str(text.get("embedding", "random")),
        embed_dim=int(text.get("embed_dim", 16)),
        hidden_sizes=hidden,
        n_heads=int(sent.get("n_heads", 2)),
        train_embeddings=bool(sent.get("train_embeddings", True)),
        epochs=int(sent.get("epochs", 5)),
        batch_size=int(sent.get("batch_size", 32)),
        learning_rate=float(sent.get("learning_rate", 1e-3)),
        train_fraction=float(ph2.get("train_fraction", 0.8)),
        cv_k=int(ph2.get("cv_k", 3)),
        cells=cells,
        random_trials=int(ph2.get("random_trials", 8)),
        bo_budget=int(ph2.get("bo_budget", 10)),
        bo_init=int(ph2.get("bo_init", 4)),
        raw=doc,
    )


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}")
    if overrides:
        doc = apply_overrides(doc, overrides)
    return config_from_doc(doc)
