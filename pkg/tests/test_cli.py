import json

import numpy as np
import pytest

from cslr.cli import main

SPEC = """version = 1
split = "{split}"
n_glosses = 4
n_signers = 3
n_sentences = 10
repetitions = 2
dev_fraction = 0.2
frames_per_gloss_min = 4
frames_per_gloss_max = 5
seed = 3
"""

TRAIN = """version = 1
epochs = 2
batch_size = 8
lr = 0.003
seed = 1
model_d_model = 16
model_n_blocks = 1
model_conv_kernel = 7
model_encoder_channels = [16, 16]
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "spec.toml").write_text(SPEC.format(split="si"))
    (root / "train.toml").write_text(TRAIN)
    assert main(["synth", "--spec", str(root / "spec.toml"), "--out", str(root / "data")]) == 0
    assert main(["train", "--model", "conformer_si", "--config", str(root / "train.toml"),
                 "--data", str(root / "data"), "--out", str(root / "ck")]) == 0
    return root


def test_synth_writes_splits(workspace):
    for split in ("train", "dev", "test"):
        assert (workspace / "data" / f"{split}.jsonl").exists()


def test_train_outputs(workspace):
    assert (workspace / "ck" / "best" / "params.bin").exists()
    assert len((workspace / "ck" / "metrics.jsonl").read_text().splitlines()) == 2


def test_eval_report(workspace, capsys):
    report = workspace / "report.jsonl"
    assert main(["eval", "--checkpoint", str(workspace / "ck" / "best"), "--manifest",
                 str(workspace / "data" / "test.jsonl"), "--decode", "beam:2",
                 "--report", str(report)]) == 0
    lines = [json.loads(x) for x in report.read_text().splitlines()]
    assert lines[-1]["summary"] and lines[-1]["decoder"] == "beam:2"
    assert "pooled (beam:2)" in capsys.readouterr().out


def test_decode_then_wer(workspace, capsys, tmp_path):
    capsys.readouterr()
    assert main(["decode", "--checkpoint", str(workspace / "ck" / "best"), "--manifest",
                 str(workspace / "data" / "test.jsonl"), "--beam", "1"]) == 0
    hyps = capsys.readouterr().out
    (tmp_path / "hyp.tsv").write_text(hyps)
    refs = []
    for line in (workspace / "data" / "test.jsonl").read_text().splitlines()[1:]:
        rec = json.loads(line)
        refs.append(f"{rec['id']}\t{' '.join(rec['glosses'])}")
    (tmp_path / "ref.tsv").write_text("\n".join(refs) + "\n")
    assert main(["wer", "--ref", str(tmp_path / "ref.tsv"), "--hyp", str(tmp_path / "hyp.tsv")]) == 0
    assert capsys.readouterr().out.startswith("WER ")
    assert main(["wer", "--ref", str(tmp_path / "ref.tsv"), "--hyp", str(tmp_path / "ref.tsv")]) == 0
    assert "WER 0.0000" in capsys.readouterr().out


def test_preprocess(workspace, tmp_path):
    out = tmp_path / "feats.npz"
    assert main(["preprocess", "--manifest", str(workspace / "data" / "train.jsonl"),
                 "--out", str(out)]) == 0
    with np.load(out) as z:
        meta = json.loads(str(z["__meta__"]))
        assert meta["torso_indices"] == [11, 12, 23, 24]
        first = meta["records"][0]["id"]
        assert z[first].shape[1] == 172


def test_exit_code_config_error(workspace, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("epochs = 2\n")
    assert main(["train", "--model", "conformer_si", "--config", str(bad),
                 "--data", str(workspace / "data"), "--out", str(tmp_path / "x")]) == 2
    assert main(["eval", "--checkpoint", str(workspace / "ck" / "best"), "--manifest",
                 str(workspace / "data" / "test.jsonl"), "--decode", "beam"]) == 2
    spec = tmp_path / "spec.toml"
    spec.write_text("version = 1\nn_signers = 2\n")
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "d")]) == 2


def test_exit_code_data_error(workspace, tmp_path):
    manifest = tmp_path / "m.jsonl"
    manifest.write_text('{"schema_version": 1}\n{"id": "a", "frames": 2, "blob": "a.f32"}\n')
    (tmp_path / "a.f32").write_bytes(np.zeros((2, 85, 3), dtype="<f4").tobytes())
    assert main(["preprocess", "--manifest", str(manifest), "--out", str(tmp_path / "f.npz")]) == 3
    (tmp_path / "r.tsv").write_text("a\tx y\n")
    (tmp_path / "h.tsv").write_text("b\tx\n")
    assert main(["wer", "--ref", str(tmp_path / "r.tsv"), "--hyp", str(tmp_path / "h.tsv")]) == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_exit_code_numeric_failure(workspace, tmp_path):
    cfg = tmp_path / "explode.toml"
    cfg.write_text(TRAIN.replace("lr = 0.003", "lr = 1e300"))
    out = tmp_path / "ck"
    assert main(["train", "--model", "conformer_si", "--config", str(cfg),
                 "--data", str(workspace / "data"), "--out", str(out)]) == 4
    assert (out / "last_good" / "params.bin").exists()


def test_console_script_entry_point():
    from importlib.metadata import entry_points
    eps = [e for e in entry_points(group="console_scripts") if e.name == "cslr"]
    assert eps and eps[0].value == "cslr.cli:main"
