"""Model and training configuration."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

MODALITIES = ("t", "v", "a")

ABLATIONS = {
    "A0": "full model",
    "A1": "S + M",
    "A2": "S + I",
    "A3": "M + I",
    "A4": "S only",
    "A5": "M only",
    "A6": "I only",
    "A7": "w/o text",
    "A8": "w/o visual",
    "A9": "w/o acoustic",
    "A10": "orthogonality constraint",
    "A11": "w/o hierarchical fusion",
    "A12": "w/o outer product",
    "A13": "w/o text-dominated fusion",
    "A14": "co-attention",
    "A15": "visual-dominated fusion",
    "A16": "acoustic-dominated fusion",
}
UNSUPPORTED_ABLATIONS = {"A10", "A14"}
_ABLATION_DROPS = {"A7": "t", "A8": "v", "A9": "a"}

# one seed fans out into independent streams; ids are part of the reproducibility contract
STREAM_IDS = {
    "enc_t": 0, "enc_v": 1, "enc_a": 2,
    "spec_t": 3, "spec_v": 4, "spec_a": 5,
    "full_t": 6, "full_v": 7, "full_a": 8,
    "thhf_specific": 9, "thhf_full": 10,
    "head_hidden": 11, "head_out": 12,
    "shuffle": 100,
    "synthetic": 200,
}


def derived_rng(seed: int, stream: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(STREAM_IDS[stream],)))


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    d_text: int = 16
    d_visual: int = 12
    d_acoustic: int = 8
    gru_hidden: int = 32
    rep_dim: int = 64
    compact_dim: int = 16
    head_hidden: int = 32
    task: str = "regression"
    n_classes: int = 1
    ablation: str = "A0"
    drop_modalities: list[str] = field(default_factory=list)
    lr: float = 1e-4
    batch_size: int = 64
    patience: int = 10
    max_epochs: int = 100
    grad_clip: float = 5.0
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("d_text", "d_visual", "d_acoustic", "gru_hidden", "rep_dim",
                     "compact_dim", "head_hidden", "batch_size", "max_epochs"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
                raise ConfigError(f"field '{name}': expected a positive integer, got {value!r}")
        if self.compact_dim % 2:
            raise ConfigError(f"field 'compact_dim': must be even for 2x2 pooling, got {self.compact_dim}")
        if self.task not in ("regression", "classification"):
            raise ConfigError(f"field 'task': expected 'regression' or 'classification', got {self.task!r}")
        if self.task == "classification" and self.n_classes < 2:
            raise ConfigError("field 'n_classes': classification needs at least 2 classes")
        if self.task == "regression" and self.n_classes != 1:
            raise ConfigError("field 'n_classes': regression uses n_classes = 1")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"field 'ablation': unknown ablation id {self.ablation!r}")
        bad = [m for m in self.drop_modalities if m not in MODALITIES]
        if bad:
            raise ConfigError(f"field 'drop_modalities': unknown modalities {bad}")
        if not self.lr > 0:
            raise ConfigError(f"field 'lr': must be positive, got {self.lr}")
        if not isinstance(self.patience, int) or self.patience < 1:
            raise ConfigError(f"field 'patience': must be a positive integer, got {self.patience!r}")
        if not self.grad_clip > 0:
            raise ConfigError(f"field 'grad_clip': must be positive, got {self.grad_clip}")

    @property
    def input_dims(self) -> dict[str, int]:
        return {"t": self.d_text, "v": self.d_visual, "a": self.d_acoustic}

    @property
    def output_dim(self) -> int:
        return 1 if self.task == "regression" else self.n_classes

    @property
    def dropped(self) -> frozenset[str]:
        extra = _ABLATION_DROPS.get(self.ablation)
        return frozenset(self.drop_modalities) | ({extra} if extra else set())

    @property
    def dominant(self) -> str:
        return {"A15": "v", "A16": "a"}.get(self.ablation, "t")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["drop_modalities"] = sorted(self.drop_modalities)
        return d

    def replace(self, **changes) -> ModelConfig:
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str, source: str = "<config>") -> ModelConfig:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{source}: top level must be a JSON object")
        return cls.from_dict(d)
