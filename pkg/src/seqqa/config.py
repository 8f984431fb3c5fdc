"""Training configuration and the flat ``key=value`` config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from typing import Dict, Optional

from .numeric import ConfigError

# Keys that change parameter shapes or the forward computation; a checkpoint
# can only be loaded into a model that agrees on all of them.
ARCH_KEYS = ("H", "D", "D1", "D2", "decoder", "pooling", "n_layers", "cross_links",
             "candidate", "char_mode")


@dataclass
class TrainConfig:
    H: int = 64
    D: int = 64
    D1: int = 2
    D2: int = 2
    lr: float = 0.001
    batch_size: int = 120
    lam: float = 0.016
    l2_scale: str = "dataset"   # "dataset": lambda/N per step; "batch": full lambda per step
    dropout: float = 0.05
    question_dropout: bool = True
    noise: bool = True
    noise_rate: float = 0.2
    annotated_share: float = 0.25
    o_split: bool = True
    decoder: str = "crf"
    pooling: str = "attention"
    n_layers: int = 3
    cross_links: bool = True
    candidate: str = "sigmoid"
    rms_decay: float = 0.9
    rms_eps: float = 1e-8
    epochs: int = 30
    patience: int = 5
    seed: int = 1
    min_freq: int = 1
    freeze_embeddings: Optional[bool] = None   # None: freeze iff loaded from file
    char_mode: bool = False
    max_retrieved: int = 20

    def __post_init__(self):
        self.validate()

    def validate(self):
        for key in ("H", "D", "D1", "D2", "batch_size", "epochs", "max_retrieved", "min_freq"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive, got {getattr(self, key)}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be nonnegative, got {self.lam}")
        if self.patience < 0:
            raise ConfigError("patience must be nonnegative")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if not 0.0 <= self.noise_rate <= 1.0 or not 0.0 <= self.annotated_share <= 1.0:
            raise ConfigError("noise_rate and annotated_share must lie in [0, 1]")
        if not 0.0 <= self.rms_decay <= 1.0:
            raise ConfigError("rms_decay must lie in [0, 1]")
        choices = {"decoder": ("crf", "softmax", "softmax_prev"),
                   "pooling": ("attention", "max", "average"),
                   "candidate": ("sigmoid", "tanh"),
                   "l2_scale": ("dataset", "batch"),
                   "n_layers": (1, 2, 3)}
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {getattr(self, key)!r}")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def arch(self) -> Dict[str, object]:
        return {k: getattr(self, k) for k in ARCH_KEYS}


# config-file spellings that differ from attribute names
ALIASES = {"lambda": "lam", "hidden_width": "H", "pooling_mode": "pooling"}
FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def coerce(key: str, text: str):
    """Convert a string to the type of TrainConfig field ``key``."""
    typ = FIELD_TYPES[key]
    try:
        if typ == "int":
            return int(text)
        if typ == "float":
            return float(text)
        if typ == "bool":
            return parse_bool(text)
        if typ == "Optional[bool]":
            return None if text.strip().lower() in ("", "none", "auto") else parse_bool(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc
    return text.strip()


def read_config_file(path) -> Dict[str, str]:
    """Flat UTF-8 ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def config_from_pairs(pairs: Dict[str, str], base: Optional[TrainConfig] = None) -> TrainConfig:
    """Overlay string pairs on ``base``; unknown keys are rejected."""
    values = (base or TrainConfig()).to_dict()
    for key, text in pairs.items():
        name = ALIASES.get(key, key)
        if name not in FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[name] = coerce(name, text)
    return TrainConfig(**values)


def diff_arch(a: Dict[str, object], b: Dict[str, object]):
    """Human-readable differences between two architecture dicts."""
    keys = list(dict.fromkeys([*a, *b]))
    return [f"{k}: {a.get(k)} vs {b.get(k)}" for k in keys if a.get(k) != b.get(k)]
