"""Run configuration: typed records plus the ``key = value`` file grammar.

A config file is UTF-8 text, one ``key = value`` assignment per line, with
``#`` starting a comment and blank lines ignored.  Unknown keys are fatal.
Keys map one-to-one onto the fields of ModelConfig, TrainConfig, and the
experiment-level fields of ExperimentConfig; the README lists them all.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

SELECTION_STRATEGIES = ("hard", "soft", "gumbel")
SEQUENTIAL_VARIANTS = ("bilstm", "sinusoidal", "learned", "none")
DATA_FORMATS = ("tsv", "csv", "jsonl")


@dataclass
class ModelConfig:
    """Every architectural hyperparameter in one serializable record."""

    max_layers: int = 9            # layer budget L; word depths live in [1, L]
    hidden_size: int = 400         # word and sentence state width
    word_dim: int = 300
    char_dim: int = 50             # char-CNN output width
    char_embed_dim: int = 16       # per-character embedding fed to the CNN
    depth_embed_dim: int = 50      # depth embedding width, also the depth
                                   # classifier's inner layer width
    selection: str = "gumbel"      # hard | soft | gumbel
    tau: float = 0.001             # Gumbel temperature
    sequential: str = "bilstm"     # bilstm | sinusoidal | learned | none
    adaptive_depth: bool = True    # False runs the full-depth baseline
    embed_dropout: float = 0.3
    hidden_dropout: float = 0.2
    label_smoothing: float = 0.0
    precision: str = "float32"     # float32 | float64
    max_word_len: int = 16         # chars per word fed to the char CNN
    max_positions: int = 512       # learned position-embedding table size

    @property
    def token_dim(self) -> int:
        return self.word_dim + self.char_dim

    @property
    def refined_dim(self) -> int:
        """Width of the token fed to the sentence-state stack."""
        if self.adaptive_depth:
            return self.token_dim + self.depth_embed_dim
        return self.token_dim

    def validate(self) -> None:
        if self.max_layers < 1:
            raise ConfigError(f"max_layers must be >= 1, got {self.max_layers}")
        if self.hidden_size < 2 or self.hidden_size % 2:
            raise ConfigError(f"hidden_size must be even and >= 2, got {self.hidden_size}")
        if self.selection not in SELECTION_STRATEGIES:
            raise ConfigError(f"selection must be one of {SELECTION_STRATEGIES}, got {self.selection!r}")
        if self.sequential not in SEQUENTIAL_VARIANTS:
            raise ConfigError(f"sequential must be one of {SEQUENTIAL_VARIANTS}, got {self.sequential!r}")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        for name in ("embed_dropout", "hidden_dropout"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {v}")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError(f"label_smoothing must be in [0, 1), got {self.label_smoothing}")

    @property
    def np_dtype(self):
        import numpy as np

        return np.float32 if self.precision == "float32" else np.float64


@dataclass
class TrainConfig:
    """Optimization and data-handling knobs."""

    epochs: int = 30
    batch_size: int = 100
    seed: int = 13
    learning_rate: float = 0.001
    lr_decay: float = 0.97         # multiplier applied once per epoch's worth of steps
    clip_norm: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    min_freq: int = 1              # vocabulary frequency cutoff
    dev_fraction: float = 0.1      # carved from train when no dev set is given
    patience: int = 5              # early stopping, in eval rounds
    cv_folds: int = 0              # > 1 switches the train command to k-fold CV
    max_len: int = 0               # truncate sentences to this many tokens; 0 = off

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")
        if not 0.0 <= self.dev_fraction < 1.0:
            raise ConfigError(f"dev_fraction must be in [0, 1), got {self.dev_fraction}")
        if self.cv_folds == 1 or self.cv_folds < 0:
            raise ConfigError(f"cv_folds must be 0 or >= 2, got {self.cv_folds}")


@dataclass
class ExperimentConfig:
    """A full run: model, training, dataset locations, output directory."""

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    train_data: str = ""
    dev_data: str = ""
    test_data: str = ""
    data_format: str = "tsv"
    word_vectors: str = ""         # path to pretrained vectors; empty = random init
    output_dir: str = "runs/out"

    def validate(self) -> None:
        self.model.validate()
        self.train.validate()
        if self.data_format not in DATA_FORMATS:
            raise ConfigError(f"data_format must be one of {DATA_FORMATS}, got {self.data_format!r}")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("model", "train")}
        d.update(dataclasses.asdict(self.model))
        d.update(dataclasses.asdict(self.train))
        return d


def _field_index():
    """Flat key -> (section, field) map across the three config records."""
    index = {}
    for section, cls in (("model", ModelConfig), ("train", TrainConfig)):
        for f in fields(cls):
            index[f.name] = (section, f)
    for f in fields(ExperimentConfig):
        if f.name not in ("model", "train"):
            index[f.name] = ("top", f)
    return index


_FIELDS = _field_index()


def _coerce(key: str, raw: str, ftype) -> object:
    raw = raw.strip()
    try:
        if ftype == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r} is not a {ftype}")


def apply_settings(config: ExperimentConfig, settings: dict) -> ExperimentConfig:
    """Apply a flat key -> string (or typed) mapping onto a config."""
    for key, raw in settings.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        section, f = _FIELDS[key]
        value = _coerce(key, str(raw), f.type) if isinstance(raw, str) else raw
        target = config if section == "top" else getattr(config, section)
        setattr(target, key, value)
    return config


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse the flat grammar into a key -> raw-string dict."""
    settings = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in settings:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        settings[key] = raw.strip()
    return settings


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a config file, apply overrides, validate, and return the record."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    except UnicodeDecodeError as e:
        raise ConfigError(f"config {path} is not valid UTF-8: {e}")
    config = ExperimentConfig()
    apply_settings(config, parse_config_text(text, source=str(path)))
    if overrides:
        apply_settings(config, overrides)
    config.validate()
    return config


def config_from_dict(d: dict) -> ExperimentConfig:
    """Rebuild an ExperimentConfig from a flat dict (checkpoint metadata)."""
    config = ExperimentConfig()
    for key, value in d.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r} in stored config")
        section, _ = _FIELDS[key]
        target = config if section == "top" else getattr(config, section)
        setattr(target, key, value)
    config.validate()
    return config
