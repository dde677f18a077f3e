"""Run configuration: training hyperparameters plus data/backbone paths.

The run config file is a flat JSON document. Unknown keys are rejected so
typos fail loudly; command-line flags override file values.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .common import ConfigError


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 64
    epochs: int = 7
    prompt_depth: int = 9
    context_tokens: int = 5
    beta1: float = 1.0   # weight of the raster-to-vector auxiliary loss
    beta2: float = 1.0   # weight of the codebook classification loss
    beta3: float = 1.0   # weight of the mixup loss
    alpha: float = 1.0   # Dirichlet concentration for mixup draws
    seed: int = 0
    # ablation switches
    meta_net: bool = True
    layer_norm: bool = True
    codebook: bool = True
    mixup: bool = True
    sketch2vec: bool = True
    # secondary knobs
    decoder_hidden: int = 256
    max_points: int = 196
    init_text: str | None = None
    teacher_force_abstraction: bool = False
    mixup_stop_gradient: bool = False
    layer_norm_vision: bool | None = None  # None -> follow layer_norm
    layer_norm_text: bool | None = None
    joint_eval_space: bool = False
    checkpoint_every: int = 1

    def validate(self) -> None:
        positive = {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "prompt_depth": self.prompt_depth,
            "context_tokens": self.context_tokens,
            "alpha": self.alpha,
            "decoder_hidden": self.decoder_hidden,
            "max_points": self.max_points,
            "checkpoint_every": self.checkpoint_every,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        for name in ("beta1", "beta2", "beta3"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.mixup and not self.codebook:
            raise ConfigError("mixup requires the codebook to be enabled")

    def tune_layernorm(self, encoder: str) -> bool:
        override = {"vision": self.layer_norm_vision, "text": self.layer_norm_text}[encoder]
        return self.layer_norm if override is None else override

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown train-config keys: {sorted(unknown)}")
        cfg = cls(**payload)
        cfg.validate()
        return cfg


@dataclass
class RunConfig:
    """Flat document: training knobs + dataset paths + adapter + outputs."""

    train: TrainConfig = field(default_factory=TrainConfig)
    adapter: str = "toy"
    adapter_seed: int = 0
    weights_path: str | None = None
    out_dir: str = "runs/default"
    # data preparation inputs
    source_high: str | None = None     # NDJSON of doodle-style strokes
    source_medium: str | None = None   # NDJSON of freehand-sketch strokes
    source_low_dir: str | None = None  # directory of edge-map images
    stroke_format: str = "stroke3-delta"
    seen: list[str] = field(default_factory=list)
    unseen: list[str] = field(default_factory=list)
    shots: int = 10
    em_keep_fraction: float = 0.5
    stroke_width: float = 2.0
    render_side: int | None = None     # None -> derived from the adapter
    # artifacts consumed by train/eval
    manifest: str | None = None
    split: str | None = None

    _OWN_KEYS = ("adapter", "adapter_seed", "weights_path", "out_dir",
                 "source_high", "source_medium", "source_low_dir", "stroke_format",
                 "seen", "unseen", "shots", "em_keep_fraction", "stroke_width",
                 "render_side", "manifest", "split")

    def to_dict(self) -> dict:
        flat = dict(self.train.to_dict())
        for key in self._OWN_KEYS:
            flat[key] = getattr(self, key)
        return flat

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        payload = dict(payload)
        own = {k: payload.pop(k) for k in cls._OWN_KEYS if k in payload}
        train = TrainConfig.from_dict(payload)  # rejects leftovers it can't claim
        cfg = cls(train=train, **own)
        if cfg.shots < 1:
            raise ConfigError("shots must be positive")
        if not 0.0 < cfg.em_keep_fraction <= 1.0:
            raise ConfigError("em_keep_fraction must lie in (0, 1]")
        return cfg

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def load_run_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Read a JSON run config and apply overrides (overrides win)."""
    payload: dict = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
    for key, value in (overrides or {}).items():
        if value is not None:
            payload[key] = value
    return RunConfig.from_dict(payload)
