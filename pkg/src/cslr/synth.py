"""Synthetic signing corpus with signer-independent and unseen-sentence splits.

Each gloss is a smooth motion template over a small set of articulation
parameters (hand positions, hand rotation and openness, head nod), rendered
onto the 86-point landmark layout. A sentence concatenates its gloss
templates with a linear cross-fade at every boundary. Each signer applies a
fixed per-axis scale and translation, a temporal speed factor, and Gaussian
jitter. Everything is driven by one seeded generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import save_manifest
from .errors import SpecError
from .pose import FACE, LEFT_HAND, NUM_LANDMARKS, RIGHT_HAND, KeypointSequence

N_PARAMS = 9  # Lx, Ly, Rx, Ry, rotL, rotR, openL, openR, nod


@dataclass
class SynthCorpusSpec:
    n_glosses: int
    n_signers: int
    sentences: list
    frames_per_gloss: tuple = (6, 10)
    scale_range: tuple = (0.9, 1.1)
    speed_range: tuple = (0.8, 1.25)
    translation: float = 60.0
    noise_sigma: float = 1.5
    repetitions: int = 2
    coarticulation: int = 2
    missing_rate: float = 0.02
    n_test_signers: int = 2
    dev_fraction: float = 0.1
    test_sentence_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        self.sentences = [tuple(int(g) for g in s) for s in self.sentences]
        if self.n_glosses < 1 or self.n_signers < 1 or self.repetitions < 1:
            raise SpecError("n_glosses, n_signers and repetitions must be >= 1")
        if not self.sentences:
            raise SpecError("at least one sentence is required")
        if len(set(self.sentences)) != len(self.sentences):
            raise SpecError("sentences must be distinct")
        for s in self.sentences:
            if not s or min(s) < 0 or max(s) >= self.n_glosses:
                raise SpecError(f"sentence {s} uses gloss ids outside [0, {self.n_glosses})")
        seen = {g for s in self.sentences for g in s}
        missing = sorted(set(range(self.n_glosses)) - seen)
        if missing:
            raise SpecError(f"glosses {missing} appear in no sentence")
        lo, hi = self.frames_per_gloss
        if lo < 1 or hi < lo:
            raise SpecError("frames_per_gloss must be a range with 1 <= lo <= hi")
        if self.coarticulation >= lo:
            raise SpecError("cross-fade must be shorter than the shortest gloss")

    @property
    def gloss_names(self):
        return [f"g{i:03d}" for i in range(self.n_glosses)]


def random_sentences(n, n_glosses, length=(2, 5), seed=0):
    """``n`` distinct gloss-id tuples covering every gloss, no immediate repeats."""
    rng = np.random.default_rng(seed)
    lo, hi = length
    out, seen = [], set()
    order = list(rng.permutation(n_glosses))
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 1000 * n:
            raise SpecError("cannot draw enough distinct sentences; widen the length range")
        size = int(rng.integers(lo, hi + 1))
        sent = []
        while len(sent) < size:
            g = order.pop() if order else int(rng.integers(n_glosses))
            if sent and sent[-1] == g:
                if not order:
                    continue
                order.insert(0, g)
                continue
            sent.append(int(g))
        sent = tuple(sent)
        if sent not in seen:
            seen.add(sent)
            out.append(sent)
    return out


@dataclass
class _GlossTemplate:
    duration: int
    static: np.ndarray          # (N_PARAMS,)
    amps: np.ndarray            # (2, N_PARAMS)
    phases: np.ndarray          # (2, N_PARAMS)

    def render(self, n):
        u = np.linspace(0.0, 1.0, n)[:, None]
        out = np.repeat(self.static[None], n, axis=0)
        for m in range(2):
            out += self.amps[m] * np.sin(2 * math.pi * (m + 1) * u * 0.5 + self.phases[m])
        return out


@dataclass
class _Signer:
    scale: np.ndarray           # (2,) per-axis
    shift: np.ndarray           # (2,)
    speed: float


def _make_templates(spec, rng):
    lo, hi = spec.frames_per_gloss
    templates = []
    amp = np.array([35, 30, 45, 40, 0.5, 0.6, 0.3, 0.3, 6.0])
    for _ in range(spec.n_glosses):
        static = np.array([
            rng.uniform(-80, 10), rng.uniform(-60, 80),     # left hand centre offset
            rng.uniform(-10, 80), rng.uniform(-60, 80),     # right hand
            rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
            rng.uniform(0.3, 1.2), rng.uniform(0.3, 1.2),
            0.0,
        ])
        templates.append(_GlossTemplate(
            duration=int(rng.integers(lo, hi + 1)), static=static,
            amps=rng.uniform(0.3, 1.0, size=(2, N_PARAMS)) * amp * rng.choice([-1, 1], size=(2, N_PARAMS)),
            phases=rng.uniform(0, 2 * math.pi, size=(2, N_PARAMS))))
    return templates


def _make_signers(spec, rng):
    signers = []
    for _ in range(spec.n_signers):
        signers.append(_Signer(
            scale=rng.uniform(*spec.scale_range, size=2),
            shift=rng.uniform(-spec.translation, spec.translation, size=2),
            speed=float(rng.uniform(*spec.speed_range))))
    return signers


def _base_pose():
    """Canonical upper body, pixels, y down, torso centred near the origin."""
    pose = np.zeros((25, 2))
    pose[0] = (0, -150)
    for i, (dx, dy) in enumerate([(-12, -160), (-18, -160), (-24, -160), (12, -160), (18, -160),
                                  (24, -160), (-35, -150), (35, -150), (-8, -130), (8, -130)], start=1):
        pose[i] = (dx, dy)
    pose[11], pose[12] = (-70, -60), (70, -60)
    pose[23], pose[24] = (-50, 120), (50, 120)
    return pose


def _hand(center, rot, openness, mirror):
    pts = np.zeros((21, 2))
    pts[0] = center
    for f in range(5):
        ang = rot + (f - 2) * 0.35 * (0.5 + openness) + (math.pi if mirror else 0.0)
        direction = np.array([math.sin(ang), -math.cos(ang)])
        for j in range(4):
            pts[1 + 4 * f + j] = center + direction * (j + 1) * 9.0 * (0.4 + openness)
    return pts


def _render_frames(params):
    """Articulation parameters ``(T, N_PARAMS)`` to ``(T, 86, 2)`` landmarks."""
    T = params.shape[0]
    base = _base_pose()
    out = np.zeros((T, NUM_LANDMARKS, 2))
    rest_l, rest_r = np.array([-40.0, 40.0]), np.array([40.0, 40.0])
    for t in range(T):
        p = params[t]
        lc, rc = rest_l + p[0:2], rest_r + p[2:4]
        pose = base.copy()
        pose[:11] += (0.0, p[8])
        pose[15], pose[16] = lc, rc
        pose[13] = (pose[11] + lc) / 2 + (-25, 15)
        pose[14] = (pose[12] + rc) / 2 + (25, 15)
        pose[17], pose[19], pose[21] = lc + (-6, -10), lc + (0, -14), lc + (6, -8)
        pose[18], pose[20], pose[22] = rc + (6, -10), rc + (0, -14), rc + (-6, -8)
        out[t, :25] = pose
        out[t, LEFT_HAND.start:LEFT_HAND.stop] = _hand(lc, p[4], p[6], mirror=False)
        out[t, RIGHT_HAND.start:RIGHT_HAND.stop] = _hand(rc, p[5], p[7], mirror=True)
        ang = np.linspace(0, 2 * math.pi, len(FACE), endpoint=False)
        out[t, FACE.start:FACE.stop] = np.stack(
            [28 * np.cos(ang), -150 + p[8] + 34 * np.sin(ang)], axis=1)
    return out


def render_sentence(sentence, templates, signer, spec, rng):
    """Landmarks and validity for one performance of ``sentence``."""
    pieces = []
    for g in sentence:
        tpl = templates[g]
        n = max(spec.coarticulation + 1,
                int(round(tpl.duration / signer.speed)) + int(rng.integers(-1, 2)))
        pieces.append(tpl.render(n))
    params = pieces[0]
    c = spec.coarticulation
    for nxt in pieces[1:]:
        if c:
            w = np.linspace(0, 1, c + 2)[1:-1, None]
            blend = (1 - w) * params[-c:] + w * nxt[:c]
            params = np.concatenate([params[:-c], blend, nxt[c:]])
        else:
            params = np.concatenate([params, nxt])
    coords = _render_frames(params)
    coords = coords * signer.scale + signer.shift + (320.0, 260.0)
    coords += rng.normal(0.0, spec.noise_sigma, size=coords.shape)
    valid = rng.random(coords.shape[:2]) >= spec.missing_rate
    valid[0, ~valid.any(axis=0)] = True
    return coords, valid


def _assign_dev(indices, fraction, rng, eligible=None):
    """Draw ``floor(fraction * len(indices))`` dev samples from ``eligible`` (default: all)."""
    eligible = indices if eligible is None else eligible
    n_dev = min(int(math.floor(fraction * len(indices))), len(eligible))
    return set(rng.choice(eligible, size=n_dev, replace=False).tolist()) if n_dev else set()


def _choose_unseen(spec, rng):
    """Held-out sentence indices: train keeps every gloss, test covers every gloss."""
    n = len(spec.sentences)
    target = int(round(spec.test_sentence_fraction * n))
    if target == 0:
        return []
    counts = np.zeros(spec.n_glosses, dtype=int)
    for s in spec.sentences:
        for g in set(s):
            counts[g] += 1
    test, covered = [], set()
    for i in rng.permutation(n):
        if len(test) >= target and len(covered) == spec.n_glosses:
            break
        glosses = set(spec.sentences[i])
        if all(counts[g] >= 2 for g in glosses):
            if len(test) >= target and glosses <= covered:
                continue
            for g in glosses:
                counts[g] -= 1
            test.append(int(i))
            covered |= glosses
    if test and len(covered) != spec.n_glosses:
        raise SpecError("cannot hold out sentences that cover every gloss while training keeps all")
    return sorted(test)


def generate_synthetic_corpus(spec, split):
    """Generate ``{"train": [...], "dev": [...], "test": [...]}`` keypoint sequences.

    ``split="si"`` holds out whole signers for test; dev is drawn from the
    training signers. ``split="us"`` holds out whole sentences for test; dev
    holds out later repetitions of training sentences, so with one repetition
    per sentence the US dev split is empty.
    """
    if split not in ("si", "us"):
        raise SpecError(f"split must be 'si' or 'us', got {split!r}")
    rng = np.random.default_rng(spec.seed)
    templates = _make_templates(spec, rng)
    signers = _make_signers(spec, rng)
    names = spec.gloss_names

    n_test_signers = min(spec.n_test_signers, spec.n_signers - 1) if split == "si" else 0
    signer_order = rng.permutation(spec.n_signers)
    test_signers = set(signer_order[spec.n_signers - n_test_signers:].tolist())
    unseen = set(_choose_unseen(spec, rng)) if split == "us" else set()

    samples, is_test, first_rep = [], [], []
    for si, sent in enumerate(spec.sentences):
        for rep in range(spec.repetitions):
            signer = int(rng.integers(spec.n_signers))
            coords, valid = render_sentence(sent, templates, signers[signer], spec, rng)
            seq = KeypointSequence(coords, valid, signer_id=f"s{signer:02d}",
                                   glosses=tuple(names[g] for g in sent),
                                   id=f"u{si:04d}_s{signer:02d}_r{rep}")
            samples.append(seq)
            is_test.append(signer in test_signers if split == "si" else si in unseen)
            first_rep.append(rep == 0)
    pool = [i for i, t in enumerate(is_test) if not t]
    # US dev must be seen sentences: the first repetition always stays in train
    eligible = [i for i in pool if not first_rep[i]] if split == "us" else None
    dev = _assign_dev(pool, spec.dev_fraction, rng, eligible)
    return {
        "train": [samples[i] for i in pool if i not in dev],
        "dev": [samples[i] for i in pool if i in dev],
        "test": [samples[i] for i, t in enumerate(is_test) if t],
    }


def write_corpus(corpus, out_dir, gloss_names):
    out_dir = Path(out_dir)
    paths = {}
    for split, seqs in corpus.items():
        paths[split] = save_manifest(out_dir / f"{split}.jsonl", seqs, glosses=gloss_names,
                                     blob_dir=f"blobs/{split}")
    return paths


def spec_from_mapping(cfg):
    """Build a spec from flat config keys; sentences are drawn when not listed."""
    cfg = dict(cfg)
    cfg.pop("version", None)
    split = cfg.pop("split", "si")
    required = ["n_glosses", "n_signers"] + ([] if "sentences" in cfg else ["n_sentences"])
    missing = [k for k in required if k not in cfg]
    if missing:
        raise SpecError(f"synth spec is missing {missing}")
    n_glosses = int(cfg.pop("n_glosses"))
    seed = int(cfg.get("seed", 0))
    if "sentences" not in cfg:
        n_sent = int(cfg.pop("n_sentences"))
        length = (int(cfg.pop("sentence_length_min", 2)), int(cfg.pop("sentence_length_max", 5)))
        cfg["sentences"] = random_sentences(n_sent, n_glosses, length, seed)
    for key in ("frames_per_gloss", "scale_range", "speed_range"):
        lo, hi = cfg.pop(f"{key}_min", None), cfg.pop(f"{key}_max", None)
        if lo is not None and hi is not None:
            cfg[key] = (lo, hi)
    try:
        return SynthCorpusSpec(n_glosses=n_glosses, **cfg), split
    except TypeError as exc:
        raise SpecError(str(exc)) from None
