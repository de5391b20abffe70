"""Dataset manifests and landmark blobs.

A manifest is line-delimited JSON. Line 1 is the header and must carry
``"schema_version": 1``; it may list the gloss vocabulary under
``"glosses"``. Every further line is one record::

    {"id": ..., "signer_id": ..., "glosses": [...], "frames": T,
     "landmarks": 86, "blob": "relative/path.f32"}

Blobs hold little-endian float32 values laid out ``T x 86 x 3`` as
``(x, y, validity)`` with validity in {0, 1}. Blob paths are relative to
the manifest's directory.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ctc import GlossVocabulary
from .errors import ParseError, VocabularyError
from .pose import NUM_LANDMARKS, KeypointSequence

SCHEMA_VERSION = 1
SPLITS = ("train", "dev", "test")
_BLOB_DTYPE = np.dtype("<f4")


def write_blob(path, seq):
    arr = np.empty(seq.coords.shape[:2] + (3,), dtype=_BLOB_DTYPE)
    arr[..., :2] = np.where(seq.valid[..., None], seq.coords, 0.0)
    arr[..., 2] = seq.valid
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(arr.tobytes())


def read_blob(path, frames, index=None):
    raw = np.frombuffer(Path(path).read_bytes(), dtype=_BLOB_DTYPE)
    per_frame = raw.size / frames if frames else 0
    if frames < 1 or raw.size % (frames * 3) or per_frame != NUM_LANDMARKS * 3:
        k = raw.size / (3 * frames) if frames else 0
        raise ParseError(f"expected K={NUM_LANDMARKS} landmarks per frame, blob has {k:g}", index)
    arr = raw.reshape(frames, NUM_LANDMARKS, 3).astype(np.float64)
    flags = arr[..., 2]
    if not np.all((flags == 0) | (flags == 1)):
        raise ParseError("validity flags must be 0 or 1", index)
    return arr[..., :2], flags.astype(bool)


def save_manifest(path, sequences, glosses=None, blob_dir="blobs"):
    """Write ``sequences`` and their blobs; returns the manifest path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"schema_version": SCHEMA_VERSION}
    if glosses is not None:
        header["glosses"] = list(glosses)
    lines = [json.dumps(header)]
    for seq in sequences:
        rel = f"{blob_dir}/{seq.id}.f32"
        write_blob(path.parent / rel, seq)
        lines.append(json.dumps({
            "id": seq.id, "signer_id": seq.signer_id, "glosses": list(seq.glosses),
            "frames": seq.num_frames, "landmarks": seq.num_landmarks, "blob": rel,
        }))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_header(path):
    with open(path) as fh:
        first = fh.readline()
    if not first.strip():
        # a zero-byte file is an empty manifest
        return {"schema_version": SCHEMA_VERSION}
    try:
        header = json.loads(first)
    except json.JSONDecodeError:
        raise ParseError("header line is not valid JSON") from None
    if not isinstance(header, dict) or header.get("schema_version") != SCHEMA_VERSION:
        raise ParseError(f"manifest header must declare schema_version {SCHEMA_VERSION}")
    return header


def manifest_vocabulary(path):
    glosses = read_header(path).get("glosses")
    return GlossVocabulary(tuple(glosses)) if glosses else None


def load_manifest(path, vocab=None):
    """Parse a manifest into :class:`KeypointSequence` objects, in file order.

    Gloss tokens are checked against ``vocab`` (or the header's gloss list).
    """
    path = Path(path)
    header = read_header(path)
    if vocab is None and header.get("glosses"):
        vocab = GlossVocabulary(tuple(header["glosses"]))
    known = set(vocab.tokens) if vocab is not None else None
    out = []
    lines = path.read_text().splitlines()[1:]
    for index, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            rid, frames, blob = str(rec["id"]), int(rec["frames"]), rec["blob"]
            glosses = tuple(rec.get("glosses", ()))
            signer = str(rec.get("signer_id", ""))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed record ({exc})", index) from None
        if "landmarks" in rec and rec["landmarks"] != NUM_LANDMARKS:
            raise ParseError(f"expected K={NUM_LANDMARKS} landmarks, record declares {rec['landmarks']}",
                             index)
        if known is not None:
            unknown = [g for g in glosses if g not in known]
            if unknown:
                raise VocabularyError(f"record {index}: unknown gloss token {unknown[0]!r}")
        try:
            coords, valid = read_blob(path.parent / blob, frames, index)
        except OSError as exc:
            raise ParseError(f"cannot read blob {blob}: {exc}", index) from None
        out.append(KeypointSequence(coords, valid, signer_id=signer, glosses=glosses, id=rid))
    return out


def load_dataset(root, split):
    """Sequences of one split from a dataset directory holding ``<split>.jsonl``."""
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}")
    return load_manifest(Path(root) / f"{split}.jsonl")


def dataset_vocabulary(root):
    vocab = None
    for split in SPLITS:
        p = Path(root) / f"{split}.jsonl"
        if p.exists():
            vocab = manifest_vocabulary(p)
            if vocab is not None:
                return vocab
    return vocab
