from .base import SequenceModel, pad_batch
from .conformer import ConformerConfig, ConformerModel
from .fusion import FusionConfig, FusionModel

MODEL_KINDS = {
    "conformer_si": (ConformerModel, ConformerConfig),
    "fusion_us": (FusionModel, FusionConfig),
}


def build_model(kind, cfg=None, vocab_size=1, seed=0):
    from ..errors import ConfigError

    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}")
    model_cls, cfg_cls = MODEL_KINDS[kind]
    if cfg is None:
        cfg = cfg_cls()
    elif isinstance(cfg, dict):
        from dataclasses import fields

        unknown = sorted(set(cfg) - {f.name for f in fields(cfg_cls)})
        if unknown:
            raise ConfigError(f"unknown {kind} model keys: {unknown}")
        cfg = cfg_cls(**cfg)
    return model_cls(cfg, vocab_size, seed=seed)


__all__ = ["ConformerConfig", "ConformerModel", "FusionConfig", "FusionModel", "MODEL_KINDS",
           "SequenceModel", "build_model", "pad_batch"]
