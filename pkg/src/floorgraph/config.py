"""Run configuration: built-in defaults, then a JSON file, then flags.

A configuration file mirrors :meth:`RunConfig.to_dict`: one object per
section plus a few top-level keys. Any key that is not a known field is
rejected, both in files and in dotted overrides such as ``train.lr_g``.
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .discriminator import CriticConfig
from .generator import GeneratorConfig
from .pretraining import PretrainConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """Unknown key or ill-typed value in a configuration source."""


@dataclass
class DataConfig:
    count: int = 1000
    min_rooms: int = 1
    max_rooms: int = 15


@dataclass
class EvalConfig:
    n_samples: int = 64
    feature_dim: int = 32
    extractor_seed: int = 0


SECTIONS = {
    "generator": GeneratorConfig,
    "critic": CriticConfig,
    "train": TrainConfig,
    "pretrain": PretrainConfig,
    "eval": EvalConfig,
    "data": DataConfig,
}


@dataclass
class RunConfig:
    seed: int = 0
    use_pretrain: bool = True
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    critic: CriticConfig = field(default_factory=CriticConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def to_dict(self):
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, data):
        return cls().merged(data)

    @classmethod
    def load(cls, path):
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def merged(self, overrides):
        """New config with nested or dotted ``overrides`` applied on top."""
        flat = {}
        _flatten(overrides, "", flat)
        top = {f.name for f in fields(self)}
        out = {name: getattr(self, name) for name in top}
        pending = {name: {} for name in SECTIONS}
        for key, value in flat.items():
            head, _, rest = key.partition(".")
            if head not in top:
                raise ConfigError(f"unknown config key {key!r}")
            if head in SECTIONS:
                known = {f.name for f in fields(SECTIONS[head])}
                if rest not in known:
                    raise ConfigError(f"unknown config key {key!r}")
                pending[head][rest] = value
            elif rest:
                raise ConfigError(f"unknown config key {key!r}")
            else:
                out[head] = value
        for name, values in pending.items():
            if values:
                try:
                    out[name] = replace(out[name], **values)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{name}: {exc}") from exc
        return RunConfig(**out)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _flatten(obj, prefix, out):
    for key, value in obj.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict) and name in SECTIONS:
            _flatten(value, name + ".", out)
        else:
            out[name] = value


def resolve(config_path=None, overrides=None):
    """Defaults < file at ``config_path`` < ``overrides``."""
    cfg = RunConfig.load(config_path) if config_path else RunConfig()
    return cfg.merged(overrides or {})
