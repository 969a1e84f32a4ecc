"""Pipeline configuration: one YAML document with a section per stage.

Example::

    seed: 0
    synth: {n_train_videos: 4, height: 64, width: 96}
    model: {encoder_widths: [64, 128, 256]}
    train: {epochs: 5, batch_size: 8}
    score: {method: patch, lambda_s: 0.2}

Unknown keys are rejected. The top-level ``seed`` feeds every random source.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .losses import LossWeights
from .model import GeneratorConfig
from .scoring import METHODS
from .synthetic import SynthSpec
from .training import TrainConfig


@dataclass
class ScoreOptions:
    method: str = "patch"
    patch: int = 16
    lambda_s: float = 0.2
    normalization: str = "minmax"
    batch_size: int = 16

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"score.method must be one of {METHODS}, got {self.method!r}")
        if self.normalization not in ("minmax", "literal"):
            raise ConfigError(f"score.normalization must be minmax or literal, got {self.normalization!r}")
        if self.patch < 1 or self.lambda_s < 0:
            raise ConfigError("score.patch must be >= 1 and score.lambda_s >= 0")


@dataclass
class EvalOptions:
    persistence_threshold: float = 0.2
    merge_distance: int = 50

    def __post_init__(self):
        if self.persistence_threshold < 0 or self.merge_distance < 0:
            raise ConfigError("eval.persistence_threshold and eval.merge_distance must be >= 0")


SECTIONS = {
    "synth": SynthSpec,
    "model": GeneratorConfig,
    "loss": LossWeights,
    "train": TrainConfig,
    "score": ScoreOptions,
    "eval": EvalOptions,
}
SEEDED = ("synth", "train")


@dataclass
class PipelineConfig:
    seed: int = 0
    synth: SynthSpec = field(default_factory=SynthSpec)
    model: GeneratorConfig = field(default_factory=GeneratorConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)
    score: ScoreOptions = field(default_factory=ScoreOptions)
    eval: EvalOptions = field(default_factory=EvalOptions)

    def __post_init__(self):
        self.synth.seed = self.seed
        self.train.seed = self.seed

    def to_dict(self) -> dict:
        out = {"seed": self.seed}
        for name in SECTIONS:
            section = asdict(getattr(self, name))
            section.pop("seed", None)
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
        return out

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def config_from_dict(data: dict | None) -> PipelineConfig:
    data = dict(data or {})
    unknown = set(data) - {"seed", *SECTIONS}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    seed = data.pop("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    kwargs = {}
    for name, cls in SECTIONS.items():
        section = data.get(name) or {}
        if not isinstance(section, dict):
            raise ConfigError(f"config section {name!r} must be a mapping")
        allowed = {f.name for f in fields(cls)} - ({"seed"} if name in SEEDED else set())
        bad = set(section) - allowed
        if bad:
            raise ConfigError(f"unknown keys in section {name!r}: {sorted(bad)}")
        try:
            kwargs[name] = cls(**section)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value in section {name!r}: {exc}") from None
    return PipelineConfig(seed=seed, **kwargs)


def parse_override(text: str) -> tuple[list[str], object]:
    """``section.key=value`` with a YAML-typed value."""
    if "=" not in text:
        raise ConfigError(f"override must look like section.key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from None
    return key.strip().split("."), value


def load_config(path=None, overrides=(), base: dict | None = None) -> PipelineConfig:
    """Resolve a config: ``base`` dict, then the YAML file, then overrides."""
    data: dict = _deep_copy(base or {})
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            loaded = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must be a mapping at top level")
        _merge(data, loaded)
    for text in overrides:
        keys, value = parse_override(text)
        node = data
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {text!r} descends into a non-section")
        node[keys[-1]] = value
    return config_from_dict(data)


def _merge(dst: dict, src: dict) -> None:
    for k, v in src.items():
        if isinstance(v, dict) and isinstance(dst.get(k), dict):
            _merge(dst[k], v)
        else:
            dst[k] = v


def _deep_copy(d: dict) -> dict:
    return {k: _deep_copy(v) if isinstance(v, dict) else v for k, v in d.items()}
