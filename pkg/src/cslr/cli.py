"""``cslr`` command line. Exit codes: 0 ok, 2 config, 3 data, 4 numeric."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import CSLRError, ConfigError, DataError


def _torso(arg):
    if arg is None:
        from .pose import DEFAULT_TORSO
        return DEFAULT_TORSO
    try:
        return tuple(int(x) for x in arg.split(","))
    except ValueError:
        raise ConfigError(f"--torso-indices expects comma-separated integers, got {arg!r}") from None


def cmd_preprocess(args):
    from .data import load_manifest
    from .pose import preprocess

    torso = _torso(args.torso_indices)
    arrays, meta = {}, []
    for seq in load_manifest(args.manifest):
        feats = preprocess(seq, torso)
        arrays[seq.id] = feats.data
        meta.append({"id": seq.id, "signer_id": seq.signer_id, "glosses": list(seq.glosses),
                     "frames": feats.source_len})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps({"torso_indices": list(torso), "records": meta})),
                 **arrays)
    print(f"wrote {len(arrays)} feature sequences to {out}")


def cmd_synth(args):
    from .config import load_flat_config
    from .synth import generate_synthetic_corpus, spec_from_mapping, write_corpus

    spec, split = spec_from_mapping(load_flat_config(args.spec))
    corpus = generate_synthetic_corpus(spec, split)
    write_corpus(corpus, args.out, spec.gloss_names)
    counts = ", ".join(f"{k}={len(v)}" for k, v in corpus.items())
    print(f"{split} corpus written to {args.out}: {counts}")


def cmd_train(args):
    from .config import load_flat_config, split_train_config
    from .data import dataset_vocabulary, load_dataset
    from .train import prepare_samples, train

    train_cfg, model_cfg = split_train_config(load_flat_config(args.config))
    vocab = dataset_vocabulary(args.data)
    if vocab is None:
        raise DataError("dataset manifests do not declare a gloss vocabulary")
    train_set = prepare_samples(load_dataset(args.data, "train"), vocab)
    dev_path = Path(args.data) / "dev.jsonl"
    dev_set = prepare_samples(load_dataset(args.data, "dev"), vocab) if dev_path.exists() else []
    result = train(args.model, train_cfg, train_set, dev_set, vocab, model_cfg or None,
                   out_dir=args.out)
    print(f"best epoch {result.best_epoch} dev WER {result.best_dev_wer:.4f} -> {result.checkpoint}")


def cmd_eval(args):
    from .evaluate import evaluate

    report = evaluate(args.checkpoint, args.manifest, args.decode)
    if args.report:
        Path(args.report).write_text(report.to_jsonl())
    print(report.table())


def cmd_decode(args):
    from .checkpoint import load_checkpoint
    from .data import load_manifest
    from .errors import VocabularyError
    from .train import decode_samples, prepare_samples

    model, vocab, _ = load_checkpoint(args.checkpoint)
    try:
        samples = prepare_samples(load_manifest(args.manifest, vocab), vocab)
    except VocabularyError as exc:
        raise ConfigError(f"vocabulary mismatch: {exc}") from None
    beam = args.beam if args.beam and args.beam > 1 else None
    for s, hyp in zip(samples, decode_samples(model, samples, beam=beam)):
        print(f"{s.id}\t{' '.join(vocab.decode(hyp))}")


def _read_tsv(path):
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        sid, _, text = line.partition("\t")
        if sid in out:
            raise DataError(f"{path}:{n + 1}: duplicate id {sid!r}")
        out[sid] = text.split()
    return out


def cmd_wer(args):
    from .evaluate import score

    refs, hyps = _read_tsv(args.ref), _read_tsv(args.hyp)
    missing = sorted(set(refs) - set(hyps))
    if missing:
        raise DataError(f"no hypothesis for ids {missing[:5]}")
    ids = list(refs)
    report = score(ids, [refs[i] for i in ids], [hyps[i] for i in ids], "external")
    t = report.totals
    print(f"WER {report.wer:.4f} (S={t.S} I={t.I} D={t.D} N={t.N})")


def build_parser():
    p = argparse.ArgumentParser(prog="cslr", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("preprocess", help="normalise a manifest into feature arrays (.npz)")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--torso-indices")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("synth", help="generate a synthetic SI or US corpus")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train a model with CTC")
    s.add_argument("--model", required=True, choices=["conformer_si", "fusion_us"])
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="pooled WER of a checkpoint on a manifest")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--decode", default="greedy")
    s.add_argument("--report")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("decode", help="print one hypothesis per input id")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--beam", type=int, default=1)
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("wer", help="WER between two id<TAB>tokens files")
    s.add_argument("--ref", required=True)
    s.add_argument("--hyp", required=True)
    s.set_defaults(func=cmd_wer)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CSLRError as exc:
        print(f"cslr {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"cslr {args.command}: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
