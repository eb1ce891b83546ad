"""Typed run configuration with a flat dotted-key surface.

Every knob has a documented default here.  Config files are flat JSON
objects keyed by the dotted names below; CLI flags override file values,
which override defaults.  Unknown keys are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class TrainingConfig:
    # data shapes
    S: int = 400                     # max sentences per document
    K: int = 25                      # max tokens per sentence
    # encoder
    encoder_backend: str = "recurrent"   # {recurrent, transformer}
    word_dim: int = 300
    encoder_hidden: int | None = None    # per direction; defaults to word_dim
    freeze_embeddings: bool = True
    embedding_file: str | None = None    # "token v1 ... v300" text format
    transformer_checkpoint: str = "bert-base-uncased"
    # mask network
    mask_hidden: int = 128
    temperature: float = 1.0
    temperature_end: float | None = None  # linear anneal target; None = constant
    keep_rate: float = 0.2
    harden_mode: str = "threshold"        # {threshold, top_n}
    top_n: int = 20
    infer_mask: str = "hard"              # inference path: {hard, none}
    # classifier head
    doc_hidden: int = 128
    # losses
    alpha: float = 1.0
    beta: float = 0.1
    warmup_epochs: int = 0                # initial epochs with alpha and beta forced to 0
    soft_teacher: bool = True             # False = hard pseudo-labels
    # trainer
    lr: float = 1e-3
    weight_decay: float = 0.0
    grad_clip: float = 5.0
    epochs: int = 30
    batch_labeled: int = 8
    batch_unlabeled: int = 8
    holdout_fraction: float = 0.1
    seed: int = 0
    threads: int = 1                      # torch CPU threads; 1 keeps runs replayable
    # bookkeeping (set during a run, not user config)
    vocab_size: int = field(default=2)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.S < 1 or self.K < 1:
            raise ConfigError(f"data.s and data.k must be >= 1 (got {self.S}, {self.K})")
        if self.encoder_backend not in ("recurrent", "transformer"):
            raise ConfigError(f"encoder.backend must be recurrent or transformer, "
                              f"got {self.encoder_backend!r}")
        if self.alpha < 0:
            raise ConfigError(f"loss.alpha must be >= 0, got {self.alpha}")
        if self.beta < 0:
            raise ConfigError(f"loss.beta must be >= 0, got {self.beta}")
        if not (0.0 < self.keep_rate < 1.0):
            raise ConfigError(f"mask.keep_rate must be in (0, 1), got {self.keep_rate}")
        if self.temperature <= 0:
            raise ConfigError(f"mask.temperature must be > 0, got {self.temperature}")
        if self.temperature_end is not None and self.temperature_end <= 0:
            raise ConfigError("mask.temperature_end must be > 0 when set")
        if self.harden_mode not in ("threshold", "top_n"):
            raise ConfigError(f"mask.harden_mode must be threshold or top_n, "
                              f"got {self.harden_mode!r}")
        if self.infer_mask not in ("hard", "none"):
            raise ConfigError(f"mask.infer must be hard or none, got {self.infer_mask!r}")
        if self.top_n < 1:
            raise ConfigError(f"mask.top_n must be >= 1, got {self.top_n}")
        if not (0.0 <= self.holdout_fraction < 1.0):
            raise ConfigError("train.holdout_fraction must be in [0, 1)")
        if self.epochs < 0:
            raise ConfigError("train.epochs must be >= 0")
        if self.warmup_epochs < 0:
            raise ConfigError("loss.warmup must be >= 0")

    @property
    def sentence_dim(self) -> int:
        """Width d of a sentence vector under the recurrent backend."""
        hidden = self.word_dim if self.encoder_hidden is None else self.encoder_hidden
        return 2 * hidden

    def temperature_at(self, epoch: int) -> float:
        """Relaxation temperature for a given epoch (linear anneal if configured)."""
        if self.temperature_end is None or self.epochs <= 1:
            return self.temperature
        frac = min(epoch, self.epochs - 1) / (self.epochs - 1)
        return self.temperature + frac * (self.temperature_end - self.temperature)

    def beta_at(self, epoch: int) -> float:
        """Sparsity weight for a given epoch: 0 during warmup, beta after."""
        return 0.0 if epoch < self.warmup_epochs else self.beta

    def alpha_at(self, epoch: int) -> float:
        """Consistency weight for a given epoch: 0 during warmup, alpha after."""
        return 0.0 if epoch < self.warmup_epochs else self.alpha


# dotted config key -> dataclass field
CONFIG_KEYS: dict[str, str] = {
    "data.s": "S",
    "data.k": "K",
    "data.vocab_size": "vocab_size",
    "encoder.backend": "encoder_backend",
    "encoder.word_dim": "word_dim",
    "encoder.hidden": "encoder_hidden",
    "encoder.freeze_embeddings": "freeze_embeddings",
    "encoder.embedding_file": "embedding_file",
    "encoder.transformer_checkpoint": "transformer_checkpoint",
    "mask.hidden": "mask_hidden",
    "mask.temperature": "temperature",
    "mask.temperature_end": "temperature_end",
    "mask.keep_rate": "keep_rate",
    "mask.harden_mode": "harden_mode",
    "mask.top_n": "top_n",
    "mask.infer": "infer_mask",
    "classifier.hidden": "doc_hidden",
    "loss.alpha": "alpha",
    "loss.beta": "beta",
    "loss.warmup": "warmup_epochs",
    "loss.soft_teacher": "soft_teacher",
    "train.lr": "lr",
    "train.weight_decay": "weight_decay",
    "train.grad_clip": "grad_clip",
    "train.epochs": "epochs",
    "train.batch_labeled": "batch_labeled",
    "train.batch_unlabeled": "batch_unlabeled",
    "train.holdout_fraction": "holdout_fraction",
    "train.seed": "seed",
    "train.threads": "threads",
}

_FIELD_TYPES = {f.name: f.type for f in fields(TrainingConfig)}

_OPTIONAL_INT = {"encoder_hidden"}
_OPTIONAL_FLOAT = {"temperature_end"}
_OPTIONAL_STR = {"embedding_file"}


def _coerce(field_name: str, value):
    """Coerce a JSON/flag value to the field's declared type, strictly."""
    if value is None or (isinstance(value, str) and value.lower() == "none"):
        if field_name in _OPTIONAL_INT | _OPTIONAL_FLOAT | _OPTIONAL_STR:
            return None
        raise ConfigError(f"{field_name} may not be null")
    ftype = _FIELD_TYPES[field_name]
    base = str(ftype)
    try:
        if "bool" in base:
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "false", "1", "0"):
                return value.lower() in ("true", "1")
            raise ValueError(value)
        if "int" in base and field_name not in _OPTIONAL_FLOAT:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if "float" in base:
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {field_name}: {value!r}") from exc


def config_from_keys(values: dict[str, object], base: TrainingConfig | None = None) -> TrainingConfig:
    """Build a config from dotted-key values on top of ``base`` (or defaults)."""
    cfg = TrainingConfig() if base is None else TrainingConfig(**vars(base))
    for key, value in values.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key: {key!r}")
        fname = CONFIG_KEYS[key]
        setattr(cfg, fname, _coerce(fname, value))
    cfg.validate()
    return cfg


def load_config_file(path: str | Path, base: TrainingConfig | None = None) -> TrainingConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config file {path}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return config_from_keys(raw, base=base)


def config_to_keys(cfg: TrainingConfig) -> dict[str, object]:
    """Flat dotted-key view of a config (inverse of ``config_from_keys``)."""
    return {key: getattr(cfg, fname) for key, fname in CONFIG_KEYS.items()}


def resolve_config(file_path: str | Path | None = None,
                   overrides: dict[str, object] | None = None) -> TrainingConfig:
    """Apply precedence flag > file > default."""
    cfg = TrainingConfig()
    if file_path is not None:
        cfg = load_config_file(file_path, base=cfg)
    if overrides:
        cfg = config_from_keys(overrides, base=cfg)
    return cfg
