"""Run configuration: defaults, a flat ``key = value`` file, and command-line overrides."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .data import SplitSpec
from .encoder import EncoderConfig
from .errors import ConfigError
from .model import MODES, ModelConfig
from .trainer import TrainConfig


@dataclass
class RunConfig:
    corpus: str | None = None
    split: str = "random"
    mode: str = "full"
    out_dir: str | None = None
    seed: int = 0
    threads: int = 1
    num_classes: int = 5
    T: int = 3
    N: int = 256
    max_candidate_tokens: int = 80
    min_count: int = 1
    hidden: int = 64
    layers: int = 2
    heads: int = 2
    ffn: int = 128
    gru_hidden: int = 64
    dropout: float = 0.1
    dtype: str = "float64"
    lam: float = 0.8
    episodes: int = 1
    epochs: int = 2
    lr: float = 1e-3
    batch_size: int = 32

    def validate(self) -> "RunConfig":
        SplitSpec.parse(self.split)
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.N < 8:
            raise ConfigError(f"N must be >= 8, got {self.N}")
        if self.max_candidate_tokens < 1 or self.min_count < 1:
            raise ConfigError("max_candidate_tokens and min_count must be positive")
        try:
            dt = np.dtype(self.dtype)
        except TypeError:
            raise ConfigError(f"unknown dtype {self.dtype!r}") from None
        if dt not in (np.float32, np.float64):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype}")
        # vocabulary size is only known after ingestion; validate the rest now
        self.model_config(vocab_size=1).validate()
        self.train_config().validate()
        return self

    def model_config(self, vocab_size: int) -> ModelConfig:
        enc = EncoderConfig(vocab_size, max_len=self.N, hidden=self.hidden, layers=self.layers,
                            heads=self.heads, ffn=self.ffn)
        return ModelConfig(enc, num_classes=self.num_classes, gru_hidden=self.gru_hidden, T=self.T,
                           dropout=self.dropout, dtype=self.dtype)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lam=self.lam, episodes=self.episodes, epochs=self.epochs, lr=self.lr,
                           batch_size=self.batch_size, seed=self.seed, threads=self.threads)

    def to_dict(self) -> dict:
        return asdict(self)


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key, value):
    kind = FIELD_TYPES[key]
    if value is None:
        return None
    if isinstance(value, str):
        value = value.strip()
        if kind.startswith("str") and "None" in kind and value.lower() in ("", "none"):
            return None
    try:
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind}") from None
    return str(value)


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment line."""
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    for key, value in parser["run"].items():
        key = key.replace("-", "_")
        if key not in FIELD_TYPES:
            raise ConfigError(f"{path}: unknown key {key!r}")
        out[key] = _convert(key, value)
    return out


def resolve(file_values: dict | None = None, cli_values: dict | None = None) -> RunConfig:
    """Defaults, overridden by file values, overridden by command-line values."""
    merged = {}
    for source in (file_values or {}, cli_values or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key not in FIELD_TYPES:
                raise ConfigError(f"unknown configuration key {key!r}")
            merged[key] = _convert(key, value)
    return RunConfig(**merged).validate()


def from_dict(d: dict) -> RunConfig:
    return resolve(d)
