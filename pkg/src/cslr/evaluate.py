"""Corpus evaluation: decode, align against references, pool WER."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .checkpoint import load_checkpoint
from .data import load_manifest, read_header
from .errors import ConfigError, VocabularyError
from .metrics import EditOps, edit_ops
from .train import decode_samples, prepare_samples


def parse_decoder(spec):
    """``"greedy"`` -> None; ``"beam:K"`` -> K."""
    if spec in (None, "greedy"):
        return None
    if isinstance(spec, int):
        return spec
    kind, _, width = str(spec).partition(":")
    if kind != "beam" or not width.isdigit() or int(width) < 1:
        raise ConfigError(f"decoder must be 'greedy' or 'beam:K', got {spec!r}")
    return int(width)


@dataclass
class Report:
    decoder: str
    records: list = field(default_factory=list)
    totals: EditOps = field(default_factory=EditOps)

    @property
    def wer(self):
        return self.totals.rate

    def summary(self):
        t = self.totals
        return {"summary": True, "decoder": self.decoder, "samples": len(self.records),
                "wer": self.wer, "S": t.S, "I": t.I, "D": t.D, "N": t.N}

    def to_jsonl(self):
        lines = [json.dumps(r) for r in self.records] + [json.dumps(self.summary())]
        return "\n".join(lines) + "\n"

    def table(self):
        rows = [f"{'id':<24} {'N':>3} {'S':>3} {'I':>3} {'D':>3} {'WER':>7}"]
        for r in self.records:
            rows.append(f"{r['id']:<24} {r['N']:>3} {r['S']:>3} {r['I']:>3} {r['D']:>3} {r['wer']:>7.2%}")
        t = self.totals
        rows.append(f"{'pooled (' + self.decoder + ')':<24} {t.N:>3} {t.S:>3} {t.I:>3} {t.D:>3} "
                    f"{self.wer:>7.2%}")
        return "\n".join(rows)


def score(ids, references, hypotheses, decoder="greedy"):
    """Per-sample EditOps plus pooled totals (sum of edits over sum of N)."""
    report = Report(decoder)
    for sid, ref, hyp in zip(ids, references, hypotheses):
        ops = edit_ops(ref, hyp)
        report.records.append({"id": sid, "ref": list(ref), "hyp": list(hyp), "S": ops.S,
                               "I": ops.I, "D": ops.D, "N": ops.N, "wer": ops.rate})
        report.totals = report.totals + ops
    return report


def evaluate_samples(model, vocab, samples, decode="greedy"):
    beam = parse_decoder(decode)
    hyps = decode_samples(model, samples, beam=beam)
    label = "greedy" if beam is None else f"beam:{beam}"
    return score([s.id for s in samples], [s.glosses for s in samples],
                 [vocab.decode(h) for h in hyps], label)


def evaluate(checkpoint, manifest, decode="greedy", expect_kind=None):
    """Evaluate a checkpoint directory on a manifest file."""
    model, vocab, _ = load_checkpoint(checkpoint, expect_kind)
    header_glosses = read_header(manifest).get("glosses")
    if header_glosses is not None and tuple(header_glosses) != vocab.tokens:
        raise ConfigError("manifest vocabulary differs from the checkpoint vocabulary")
    try:
        sequences = load_manifest(manifest, vocab)
    except VocabularyError as exc:
        raise ConfigError(f"vocabulary mismatch: {exc}") from None
    return evaluate_samples(model, vocab, prepare_samples(sequences, vocab), decode)
