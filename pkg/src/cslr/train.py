"""CTC training loop: AdamW, per-epoch cosine annealing, global-norm clipping."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import functional as F
from .checkpoint import load_state_arrays, save_checkpoint, state_arrays
from .config import TrainConfig
from .ctc import ctc_loss_batch, required_length
from .errors import DivergenceError, InfeasibleAlignmentError, NumericError
from .metrics import corpus_wer
from .models import build_model
from .pose import DEFAULT_TORSO, preprocess

log = logging.getLogger(__name__)


def cosine_lr(step, total, lr_max, lr_min):
    """Cosine annealing from ``lr_max`` at step 0 to ``lr_min`` at step ``total``."""
    if step <= 0 or total <= 0:
        return lr_max
    if step >= total:
        return lr_min
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total))


class AdamW:
    """Adam with decoupled weight decay, applied to matrices and kernels only."""

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1 - b1 ** self.t, 1 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            if self.weight_decay and p.data.ndim >= 2:
                p.data *= 1 - self.lr * self.weight_decay
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def clip_grad_norm(params, max_norm):
    """Scale gradients in place so their global L2 norm is at most ``max_norm``."""
    grads = [p.grad for p in params if p.grad is not None]
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


@dataclass
class Sample:
    id: str
    features: np.ndarray
    target: tuple
    glosses: tuple = ()
    signer_id: str = ""


def prepare_samples(sequences, vocab, torso_indices=DEFAULT_TORSO):
    """Preprocess keypoint sequences and encode their gloss labels."""
    out = []
    for seq in sequences:
        feats = preprocess(seq, torso_indices)
        out.append(Sample(seq.id, feats.data, vocab.encode(seq.glosses), seq.glosses, seq.signer_id))
    return out


def check_feasible(model, samples):
    lengths = model.output_lengths(np.array([s.features.shape[0] for s in samples]))
    for s, n in zip(samples, lengths):
        need = required_length(s.target)
        if n < need:
            raise InfeasibleAlignmentError(
                f"sample {s.id}: {n} output frames but target needs {need}; "
                "shorten the target or reduce temporal downsampling")


def decode_samples(model, samples, beam=None, batch_size=32):
    model.eval()
    hyps = []
    for i in range(0, len(samples), batch_size):
        hyps.extend(model.decode([s.features for s in samples[i:i + batch_size]], beam=beam))
    return hyps


def greedy_wer(model, samples):
    if not samples:
        return None
    hyps = decode_samples(model, samples)
    rate, _ = corpus_wer((s.target, h) for s, h in zip(samples, hyps))
    return rate


@dataclass
class TrainResult:
    model: object
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_dev_wer: float = math.inf
    checkpoint: Path = None
    steps: int = 0


def train(model_kind, train_cfg, train_samples, dev_samples=(), vocab=None, model_cfg=None,
          out_dir=None, on_epoch=None):
    """Fit a model with CTC; keep the parameters with the best dev WER.

    Without dev samples the final epoch is kept. When ``out_dir`` is given,
    the best checkpoint is written there along with ``metrics.jsonl``.
    """
    train_cfg = train_cfg or TrainConfig()
    if not train_samples:
        raise ValueError("training set is empty")
    model = build_model(model_kind, model_cfg, len(vocab), seed=train_cfg.seed)
    check_feasible(model, list(train_samples))
    if dev_samples:
        check_feasible(model, list(dev_samples))
    rng = np.random.default_rng(train_cfg.seed)
    opt = AdamW(model.parameters(), train_cfg.lr, (train_cfg.beta1, train_cfg.beta2),
                train_cfg.eps, train_cfg.weight_decay)
    result = TrainResult(model)
    best_state = state_arrays(model)
    last_good = best_state
    metrics_fh = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_fh = open(out_dir / "metrics.jsonl", "w")
    extra = {"train_config": train_cfg.to_dict()}
    try:
        for epoch in range(train_cfg.epochs):
            lr = cosine_lr(epoch, train_cfg.epochs - 1, train_cfg.lr, train_cfg.lr_min)
            opt.lr = lr
            model.train()
            order = rng.permutation(len(train_samples))
            total_loss, seen = 0.0, 0
            try:
                for start in range(0, len(order), train_cfg.batch_size):
                    batch = [train_samples[i] for i in order[start:start + train_cfg.batch_size]]
                    logits, lengths = model([s.features for s in batch])
                    loss = ctc_loss_batch(F.log_softmax(logits, axis=-1),
                                          [s.target for s in batch], lengths)
                    opt.zero_grad()
                    loss.backward()
                    clip_grad_norm(opt.params, train_cfg.grad_clip_norm)
                    opt.step()
                    result.steps += 1
                    total_loss += float(loss.data) * len(batch)
                    seen += len(batch)
                    if not all(np.all(np.isfinite(p.data)) for p in opt.params):
                        raise NumericError("non-finite parameters after update")
            except NumericError as exc:
                load_state_arrays(model, last_good)
                if out_dir is not None:
                    result.checkpoint = save_checkpoint(out_dir / "last_good", model, vocab, extra)
                raise DivergenceError(f"training diverged in epoch {epoch}: {exc}") from exc
            last_good = state_arrays(model)
            record = {"epoch": epoch, "loss": total_loss / seen, "lr": lr, "steps": result.steps}
            evaluate_now = dev_samples and (epoch % train_cfg.eval_every == 0
                                            or epoch == train_cfg.epochs - 1)
            if evaluate_now:
                dev_wer = greedy_wer(model, list(dev_samples))
                record["dev_wer"] = dev_wer
                record["decoder"] = "greedy"
                if dev_wer < result.best_dev_wer:
                    result.best_dev_wer, result.best_epoch = dev_wer, epoch
                    best_state = state_arrays(model)
                    if out_dir is not None:
                        result.checkpoint = save_checkpoint(out_dir / "best", model, vocab,
                                                            dict(extra, epoch=epoch))
            elif not dev_samples:
                result.best_epoch = epoch
                best_state = last_good
            result.history.append(record)
            log.info("epoch %d loss %.4f lr %.2e dev_wer %s", epoch, record["loss"], lr,
                     record.get("dev_wer"))
            if metrics_fh:
                metrics_fh.write(json.dumps(record) + "\n")
                metrics_fh.flush()
            if on_epoch:
                on_epoch(record, model)
    finally:
        if metrics_fh:
            metrics_fh.close()
    load_state_arrays(model, best_state)
    model.eval()
    if out_dir is not None and not dev_samples:
        result.checkpoint = save_checkpoint(out_dir / "best", model, vocab,
                                            dict(extra, epoch=result.best_epoch))
    return result
