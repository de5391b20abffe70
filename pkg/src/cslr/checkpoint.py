"""Checkpoint directories: ``manifest.json`` plus a little-endian float64 ``params.bin``.

The manifest echoes the model kind and config, the gloss vocabulary, and a
registry of ``{name, shape, offset}`` entries (offsets in float64 elements)
covering every parameter followed by every batch-norm buffer.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ctc import GlossVocabulary
from .errors import ConfigError
from .models import MODEL_KINDS, build_model

FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")


def _entries(model):
    for name, p in model.named_parameters():
        yield name, p.data, None
    for name, state, attr in model.named_buffers():
        yield name, np.atleast_1d(np.asarray(getattr(state, attr), dtype=np.float64)), (state, attr)


def state_arrays(model):
    """Snapshot of every parameter and buffer, keyed by registry name."""
    return {name: np.array(arr, copy=True) for name, arr, _ in _entries(model)}


def load_state_arrays(model, arrays):
    for name, arr, target in _entries(model):
        if name not in arrays:
            raise ConfigError(f"checkpoint is missing {name}")
        src = np.asarray(arrays[name], dtype=np.float64)
        if src.shape != arr.shape:
            raise ConfigError(f"shape mismatch for {name}: checkpoint {src.shape}, model {arr.shape}")
        if target is None:
            arr[...] = src
        else:
            state, attr = target
            value = int(src[0]) if attr == "num_batches" else src.copy()
            setattr(state, attr, value)


def save_checkpoint(path, model, vocab, extra=None):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    registry, chunks, offset = [], [], 0
    for name, arr, _ in _entries(model):
        registry.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(np.ascontiguousarray(arr, dtype=_DTYPE).ravel())
        offset += arr.size
    manifest = {
        "format_version": FORMAT_VERSION,
        "model_kind": model.kind,
        "config": model.cfg.to_dict(),
        "vocab": list(vocab.tokens),
        "registry": registry,
        "total": offset,
    }
    if extra:
        manifest.update(extra)
    (path / "params.bin").write_bytes(np.concatenate(chunks).astype(_DTYPE).tobytes())
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return path


def read_manifest(path):
    try:
        manifest = json.loads((Path(path) / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read checkpoint manifest: {exc}") from None
    if manifest.get("model_kind") not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {manifest.get('model_kind')!r}")
    return manifest


def load_checkpoint(path, expect_kind=None):
    """Rebuild ``(model, vocab, manifest)``; the model is left in eval mode."""
    path = Path(path)
    manifest = read_manifest(path)
    kind = manifest["model_kind"]
    if expect_kind is not None and kind != expect_kind:
        raise ConfigError(f"checkpoint holds a {kind} model, expected {expect_kind}")
    vocab = GlossVocabulary(tuple(manifest["vocab"]))
    model = build_model(kind, manifest["config"], len(vocab))
    flat = np.frombuffer((path / "params.bin").read_bytes(), dtype=_DTYPE)
    if flat.size != manifest["total"]:
        raise ConfigError("parameter blob size does not match the registry")
    arrays = {}
    for entry in manifest["registry"]:
        n = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arrays[entry["name"]] = flat[entry["offset"]:entry["offset"] + n].reshape(entry["shape"])
    load_state_arrays(model, arrays)
    model.eval()
    return model, vocab, manifest
