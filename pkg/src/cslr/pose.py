"""Keypoint preprocessing: gap imputation, torso-box normalisation, flattening."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractViolation, DegeneratePoseError, ImputationError

NUM_LANDMARKS = 86
FEATURE_DIM = 2 * NUM_LANDMARKS

# 86-point layout: 25 upper-body pose points (MediaPipe pose numbering),
# two 21-point hands, and a 19-point face subset.
POSE = range(0, 25)
LEFT_HAND = range(25, 46)
RIGHT_HAND = range(46, 67)
FACE = range(67, 86)
# shoulders and hips
DEFAULT_TORSO = (11, 12, 23, 24)


@dataclass
class KeypointSequence:
    """Per-frame landmark sets with a validity mask.

    ``coords`` is ``(T, K, 2)``; ``valid`` is ``(T, K)`` bool. Coordinates of
    invalid landmarks are meaningless and never read.
    """

    coords: np.ndarray
    valid: np.ndarray
    signer_id: str = ""
    glosses: tuple = ()
    id: str = ""

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.valid is None:
            self.valid = np.ones(self.coords.shape[:2], dtype=bool)
        self.valid = np.asarray(self.valid, dtype=bool)
        self.glosses = tuple(self.glosses)
        if self.coords.ndim != 3 or self.coords.shape[2] != 2:
            raise ContractViolation(f"coords must be (T, K, 2), got {self.coords.shape}")
        if self.coords.shape[0] < 1:
            raise ContractViolation("a keypoint sequence needs at least one frame")
        if self.valid.shape != self.coords.shape[:2]:
            raise ContractViolation("validity mask must be (T, K)")

    @property
    def num_frames(self):
        return self.coords.shape[0]

    @property
    def num_landmarks(self):
        return self.coords.shape[1]

    def with_data(self, coords, valid=None):
        return replace(self, coords=coords, valid=self.valid.copy() if valid is None else valid)

    def __eq__(self, other):
        if not isinstance(other, KeypointSequence):
            return NotImplemented
        return (self.id == other.id and self.signer_id == other.signer_id
                and self.glosses == other.glosses
                and np.array_equal(self.valid, other.valid)
                and np.array_equal(np.where(self.valid[..., None], self.coords, 0.0),
                                   np.where(other.valid[..., None], other.coords, 0.0)))


@dataclass
class FeatureSequence:
    data: np.ndarray
    source_len: int = field(default=0)
    id: str = ""
    glosses: tuple = ()
    signer_id: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if not self.source_len:
            self.source_len = self.data.shape[0]
        if not np.all(np.isfinite(self.data)):
            raise ContractViolation("feature sequence contains non-finite values")


def interpolate_missing(seq):
    """Fill invalid landmarks: linear between valid neighbours, hold at the ends."""
    T, K = seq.valid.shape
    coords = seq.coords.copy()
    t = np.arange(T)
    for k in range(K):
        ok = seq.valid[:, k]
        if ok.all():
            continue
        if not ok.any():
            raise ImputationError(k)
        for axis in range(2):
            coords[:, k, axis] = np.interp(t, t[ok], seq.coords[ok, k, axis])
    return seq.with_data(coords, np.ones((T, K), dtype=bool))


def torso_boxes(coords, torso_indices=DEFAULT_TORSO):
    """Per-frame ``(center, size)`` of the axis-aligned torso bounding box."""
    torso = coords[:, list(torso_indices), :]
    lo, hi = torso.min(axis=1), torso.max(axis=1)
    return (lo + hi) / 2.0, (hi - lo).max(axis=1)


def normalize_torso(seq, torso_indices=DEFAULT_TORSO):
    """Centre each frame on its torso box and scale by 1 / max(width, height)."""
    idx = list(torso_indices)
    if not seq.valid[:, idx].all():
        raise ContractViolation("torso landmarks must be valid; interpolate first")
    center, size = torso_boxes(seq.coords, idx)
    bad = np.flatnonzero(size <= 0)
    if bad.size:
        raise DegeneratePoseError(f"torso box has zero extent in frame {bad[0]}")
    coords = (seq.coords - center[:, None, :]) / size[:, None, None]
    return seq.with_data(coords)


def flatten(seq):
    """(T, K, 2) -> (T, 2K) rows ordered x_1, y_1, ..., x_K, y_K."""
    if not seq.valid.all():
        t, k = np.argwhere(~seq.valid)[0]
        raise ContractViolation(f"landmark {k} still invalid in frame {t}")
    T, K, _ = seq.coords.shape
    return FeatureSequence(seq.coords.reshape(T, 2 * K), T, seq.id, seq.glosses, seq.signer_id)


def unflatten(features, signer_id=None, glosses=None, id=None):
    data = features.data
    T = data.shape[0]
    return KeypointSequence(
        data.reshape(T, -1, 2).copy(), np.ones((T, data.shape[1] // 2), dtype=bool),
        signer_id=features.signer_id if signer_id is None else signer_id,
        glosses=features.glosses if glosses is None else glosses,
        id=features.id if id is None else id)


def preprocess(seq, torso_indices=DEFAULT_TORSO):
    """Full pipeline: interpolate -> normalise -> flatten."""
    return flatten(normalize_torso(interpolate_missing(seq), torso_indices))


def similarity_transform(seq, scale=1.0, shift=(0.0, 0.0)):
    """Uniformly scale then translate every landmark (validity untouched)."""
    return seq.with_data(seq.coords * scale + np.asarray(shift, dtype=np.float64))
