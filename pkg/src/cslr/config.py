"""Flat key/value configuration files (TOML syntax) with a mandatory version."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

CONFIG_VERSION = 1


def load_flat_config(path):
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if cfg.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config {path} must set version = {CONFIG_VERSION}")
    nested = [k for k, v in cfg.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat; found tables {nested}")
    return cfg


@dataclass
class TrainConfig:
    lr: float = 1e-4
    lr_min: float = 1e-6
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    epochs: int = 60
    seed: int = 0
    grad_clip_norm: float = 5.0
    eval_every: int = 1

    def __post_init__(self):
        if self.lr <= 0 or self.lr_min < 0:
            raise ConfigError("learning rates must be positive")
        if self.batch_size < 1 or self.epochs < 1 or self.eval_every < 1:
            raise ConfigError("batch_size, epochs and eval_every must be >= 1")

    def to_dict(self):
        return asdict(self)


def split_train_config(cfg):
    """Split a flat mapping into ``(TrainConfig, model overrides)``.

    Keys prefixed ``model_`` go to the model config with the prefix removed.
    """
    cfg = dict(cfg)
    cfg.pop("version", None)
    model = {k[len("model_"):]: cfg.pop(k) for k in list(cfg) if k.startswith("model_")}
    known = {f.name for f in fields(TrainConfig)}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise ConfigError(f"unknown training keys: {unknown}")
    return TrainConfig(**cfg), model
