import json

import numpy as np
import pytest

from cslr.checkpoint import load_checkpoint, read_manifest, save_checkpoint, state_arrays
from cslr.config import TrainConfig, load_flat_config, split_train_config
from cslr.ctc import GlossVocabulary
from cslr.errors import ConfigError, DivergenceError, InfeasibleAlignmentError, NumericError
from cslr.models import ConformerConfig, FusionConfig, build_model
from cslr.train import AdamW, Sample, clip_grad_norm, cosine_lr, train
from cslr.tensor import Tensor
import cslr.train as train_mod

TINY = dict(d_model=16, n_blocks=1, n_heads=4, conv_kernel=7, encoder_channels=(16, 16))


def test_cosine_schedule_points():
    assert cosine_lr(0, 59, 1e-4, 1e-6) == 1e-4
    assert cosine_lr(59, 59, 1e-4, 1e-6) == 1e-6
    mid = cosine_lr(1, 2, 1e-4, 1e-6)
    assert mid == pytest.approx((1e-4 + 1e-6) / 2, rel=1e-12)
    lrs = [cosine_lr(e, 59, 1e-4, 1e-6) for e in range(60)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))


def test_adamw_decays_matrices_only():
    w, b = Tensor(np.ones((2, 2)), requires_grad=True), Tensor(np.ones(2), requires_grad=True)
    w.grad, b.grad = np.zeros((2, 2)), np.zeros(2)
    opt = AdamW([w, b], lr=0.1, weight_decay=0.5)
    opt.step()
    np.testing.assert_allclose(w.data, 0.95)
    np.testing.assert_array_equal(b.data, 1.0)


def test_clip_grad_norm():
    a = Tensor(np.zeros(2), requires_grad=True)
    a.grad = np.array([3.0, 4.0])
    assert clip_grad_norm([a], 1.0) == 5.0
    np.testing.assert_allclose(np.linalg.norm(a.grad), 1.0)


def fake_samples(n, vocab_size=3, T=12, seed=0):
    rng = np.random.default_rng(seed)
    return [Sample(f"x{i}", rng.normal(size=(T, 172)), (1 + i % vocab_size, 1 + (i + 1) % vocab_size))
            for i in range(n)]


def test_one_epoch_two_steps():
    vocab = GlossVocabulary(("a", "b", "c"))
    res = train("conformer_si", TrainConfig(epochs=1, batch_size=16), fake_samples(32), (), vocab,
                ConformerConfig(**TINY))
    assert res.steps == 2 and res.history[0]["steps"] == 2


def test_history_and_checkpoint(tmp_path):
    vocab = GlossVocabulary(("a", "b", "c"))
    res = train("fusion_us", TrainConfig(epochs=3, batch_size=4, lr=1e-3), fake_samples(8),
                fake_samples(4, seed=1), vocab, FusionConfig.desk(n_transformer_blocks=1),
                out_dir=tmp_path)
    lines = [json.loads(x) for x in (tmp_path / "metrics.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in lines] == [0, 1, 2]
    assert {"loss", "lr", "dev_wer", "decoder"} <= set(lines[0])
    assert lines[0]["lr"] == 1e-3 and lines[-1]["lr"] == 1e-6
    assert res.best_dev_wer == min(r["dev_wer"] for r in lines)
    assert read_manifest(tmp_path / "best")["epoch"] == res.best_epoch


def test_training_is_deterministic():
    vocab = GlossVocabulary(("a", "b", "c"))
    runs = [train("conformer_si", TrainConfig(epochs=2, batch_size=4, seed=7), fake_samples(8), (),
                  vocab, ConformerConfig(**TINY)) for _ in range(2)]
    assert runs[0].history == runs[1].history
    a, b = state_arrays(runs[0].model), state_arrays(runs[1].model)
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_infeasible_target_names_sample():
    vocab = GlossVocabulary(("a", "b"))
    bad = Sample("too_short", np.zeros((3, 172)), (1, 1, 2, 2))
    with pytest.raises(InfeasibleAlignmentError, match="too_short"):
        train("conformer_si", TrainConfig(epochs=1), [bad], (), vocab, ConformerConfig(**TINY))


def test_divergence_saves_last_good(tmp_path, monkeypatch):
    vocab = GlossVocabulary(("a", "b", "c"))
    calls = {"n": 0}
    real = train_mod.clip_grad_norm

    def poisoned(params, max_norm):
        calls["n"] += 1
        if calls["n"] == 3:
            raise NumericError("loss became NaN")
        return real(params, max_norm)

    monkeypatch.setattr(train_mod, "clip_grad_norm", poisoned)
    with pytest.raises(DivergenceError) as err:
        train("conformer_si", TrainConfig(epochs=3, batch_size=4), fake_samples(8), (), vocab,
              ConformerConfig(**TINY), out_dir=tmp_path)
    assert err.value.exit_code == 4
    model, _, _ = load_checkpoint(tmp_path / "last_good")
    assert all(np.all(np.isfinite(p.data)) for p in model.parameters())


# -- checkpoints / config --------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    vocab = GlossVocabulary(("a", "b", "c"))
    res = train("conformer_si", TrainConfig(epochs=1, batch_size=4), fake_samples(8), (), vocab,
                ConformerConfig(**TINY))
    path = save_checkpoint(tmp_path / "ck", res.model, vocab)
    model, vocab2, manifest = load_checkpoint(path, "conformer_si")
    assert vocab2 == vocab and manifest["model_kind"] == "conformer_si"
    a, b = state_arrays(res.model), state_arrays(model)
    assert a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)
    x = [np.random.default_rng(0).normal(size=(10, 172))]
    np.testing.assert_array_equal(res.model.predict_log_probs(x)[0], model.predict_log_probs(x)[0])
    with pytest.raises(ConfigError):
        load_checkpoint(path, "fusion_us")


def test_checkpoint_shape_mismatch(tmp_path):
    vocab = GlossVocabulary(("a", "b", "c"))
    path = save_checkpoint(tmp_path / "ck", build_model("conformer_si", ConformerConfig(**TINY), 3), vocab)
    m = json.loads((path / "manifest.json").read_text())
    m["vocab"] = ["a", "b"]
    (path / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(ConfigError, match="shape mismatch"):
        load_checkpoint(path)


def test_flat_config(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("version = 1\nlr = 0.003\nepochs = 5\nmodel_d_model = 32\n")
    cfg, model = split_train_config(load_flat_config(p))
    assert cfg.lr == 0.003 and cfg.epochs == 5 and model == {"d_model": 32}
    p.write_text("lr = 0.1\n")
    with pytest.raises(ConfigError, match="version"):
        load_flat_config(p)
    p.write_text("version = 1\n[model]\nx = 1\n")
    with pytest.raises(ConfigError, match="flat"):
        load_flat_config(p)
    with pytest.raises(ConfigError, match="unknown"):
        split_train_config({"version": 1, "learning_rate": 1})


def test_unknown_model_key_is_config_error():
    with pytest.raises(ConfigError, match="n_blocks"):
        build_model("fusion_us", {"n_blocks": 2}, 3)
