"""Run configuration: nested dataclasses loaded from JSON, unknown keys rejected."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .augmentation import AUGMENT_OPS, default_probs
from .errors import ConfigError
from .io import config_hash


@dataclass
class DataConfig:
    c_max: int = 8
    crop: int = 64


@dataclass
class DegradeConfig:
    blur_prob: float = 0.8
    noise_prob: float = 0.8


@dataclass
class AugmentConfig:
    probs: dict = field(default_factory=default_probs)


@dataclass
class TrainConfig:
    batch_size: int = 12
    peak_lr: float = 1e-3
    epochs: int = 100
    warmup_epochs: int = 10
    weight_decay: float = 0.01
    val_fraction: float = 0.1
    grad_clip: float | None = None


@dataclass
class FinetuneConfig:
    lr: float = 1e-4
    epochs: int = 40
    warmup_epochs: int = 0


@dataclass
class EvalConfig:
    ratio: int = 4
    q_window: int = 32


@dataclass
class BenchConfig:
    n_tune: int = 10


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    degrade: DegradeConfig = field(default_factory=DegradeConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return config_hash(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = _build(cls, d, "")
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(d)

    def validate(self) -> None:
        t, f = self.train, self.finetune
        positive = {
            "data.c_max": self.data.c_max,
            "data.crop": self.data.crop,
            "train.batch_size": t.batch_size,
            "train.epochs": t.epochs,
            "finetune.epochs": f.epochs,
            "eval.ratio": self.eval.ratio,
            "eval.q_window": self.eval.q_window,
            "bench.n_tune": self.bench.n_tune,
        }
        for key, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{key} must be positive, got {value}")
        if self.data.c_max < 2:
            raise ConfigError("data.c_max must be at least 2")
        if t.peak_lr < 0 or f.lr < 0:
            raise ConfigError("learning rates must be non-negative")
        if not 0 <= t.warmup_epochs < t.epochs:
            raise ConfigError("train.warmup_epochs must lie in [0, epochs)")
        if not 0 <= f.warmup_epochs < f.epochs:
            raise ConfigError("finetune.warmup_epochs must lie in [0, epochs)")
        if not 0.0 <= t.val_fraction < 1.0:
            raise ConfigError("train.val_fraction must lie in [0, 1)")
        unknown = set(self.augment.probs) - set(AUGMENT_OPS)
        if unknown:
            raise ConfigError(f"augment.probs has unknown ops {sorted(unknown)}")
        for op, p in self.augment.probs.items():
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"augment.probs.{op} must be a probability")
        for name in ("blur_prob", "noise_prob"):
            if not 0.0 <= getattr(self.degrade, name) <= 1.0:
                raise ConfigError(f"degrade.{name} must be a probability")


def _build(cls, d, prefix):
    if not isinstance(d, dict):
        raise ConfigError(f"{prefix or 'config'} must be a JSON object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(d) - set(fields)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(prefix + k for k in unknown)}")
    kwargs = {}
    for name, value in d.items():
        sub = _SECTIONS.get((cls, name))
        if sub is not None:
            kwargs[name] = _build(sub, value, f"{prefix}{name}.")
        elif name == "probs":
            merged = default_probs()
            merged.update(value)
            kwargs[name] = merged
        else:
            kwargs[name] = value
    return cls(**kwargs)


_SECTIONS = {
    (RunConfig, "data"): DataConfig,
    (RunConfig, "degrade"): DegradeConfig,
    (RunConfig, "augment"): AugmentConfig,
    (RunConfig, "train"): TrainConfig,
    (RunConfig, "finetune"): FinetuneConfig,
    (RunConfig, "eval"): EvalConfig,
    (RunConfig, "bench"): BenchConfig,
}
