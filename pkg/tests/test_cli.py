import csv
import json
from pathlib import Path

import numpy as np
import pytest

from enftamper.cli import main
from enftamper.config import PipelineConfig, config_hash, load_config
from enftamper.pipeline import sequence_lengths_for_samples

MICRO_OVERRIDES = {
    "conv_filters": [2, 3, 4],
    "branch_dense": 8,
    "classifier_dense": [8, 4],
    "epochs": 2,
    "batch_size": 8,
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Tiny end-to-end workspace: corpus -> features -> checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "micro.json"
    cfg_path.write_text(json.dumps(MICRO_OVERRIDES))
    corpus = root / "corpus"
    feats = root / "features"
    run = root / "run"
    assert main(["gen-corpus", "--out", str(corpus), "--genuine", "6",
                 "--tampered", "6", "--seed", "11"]) == 0
    assert main(["extract", "--manifest-dir", str(corpus), "--out", str(feats),
                 "--config", str(cfg_path)]) == 0
    assert main(["train", "--features", str(feats), "--out", str(run),
                 "--config", str(cfg_path)]) == 0
    return {"root": root, "cfg": cfg_path, "corpus": corpus,
            "features": feats, "run": run}


def test_unknown_subcommand_exits_nonzero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code != 0
    assert "usage" in capsys.readouterr().err.lower()


def test_extract_requires_source(capsys):
    with pytest.raises(SystemExit):
        main(["extract", "--out", "/tmp/x"])


def test_sequence_length_arithmetic():
    cfg = PipelineConfig()
    # 10.5 s at 8 kHz -> 10500 analysis samples -> 516 frames, 8500 IF samples
    lp, lf = sequence_lengths_for_samples(84000, 8000, cfg)
    assert (lp, lf) == (515, 8500)


def test_gen_corpus_writes_manifest(workspace):
    manifest = json.loads((workspace["corpus"] / "manifest.json").read_text())
    assert len(manifest["entries"]) == 12


def test_extract_cache_and_idempotency(workspace, capsys):
    feats = workspace["features"]
    index = json.loads((feats / "index.json").read_text())
    assert len(index["entries"]) == 12
    assert index["m_phase"] == 23 and index["m_freq"] == 93
    bundle_path = feats / index["entries"][0]["bundle"]
    mtime = bundle_path.stat().st_mtime_ns
    # second run reuses every cached bundle
    assert main(["extract", "--manifest-dir", str(workspace["corpus"]),
                 "--out", str(feats), "--config", str(workspace["cfg"])]) == 0
    assert bundle_path.stat().st_mtime_ns == mtime


def test_extract_rejects_unknown_profile():
    with pytest.raises(SystemExit):
        main(["extract", "--manifest-dir", "x", "--out", "y",
              "--profile", "galactic"])


def test_train_artifacts(workspace):
    run = workspace["run"]
    assert (run / "model.ckpt").exists()
    with open(run / "history.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    assert set(rows[0]) == {"epoch", "lr", "train_loss", "val_loss",
                            "val_accuracy"}
    split = json.loads((run / "split.json").read_text())
    assert len(split["train"]) == 8 and len(split["val"]) == 2
    assert len(split["test"]) == 2


def test_eval_subset_and_schema(workspace, tmp_path, capsys):
    out = tmp_path / "metrics.json"
    rc = main(["eval", "--features", str(workspace["features"]),
               "--checkpoint", str(workspace["run"] / "model.ckpt"),
               "--subset", "test", "--out", str(out)])
    assert rc == 0
    payload = json.loads(out.read_text())
    for key in ("accuracy", "f1", "confusion", "precision", "recall"):
        assert key in payload
    assert payload["n"] == 2
    capsys.readouterr()  # flush the first eval's stdout
    rc = main(["eval", "--features", str(workspace["features"]),
               "--checkpoint", str(workspace["run"] / "model.ckpt"),
               "--subset", "all"])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["n"] == 12


def test_eval_refuses_config_mismatch(workspace, tmp_path, capsys):
    other_cfg = tmp_path / "other.json"
    other_cfg.write_text(json.dumps({**MICRO_OVERRIDES, "n_dft": 16384}))
    feats2 = tmp_path / "f2"
    assert main(["extract", "--manifest-dir", str(workspace["corpus"]),
                 "--out", str(feats2), "--config", str(other_cfg)]) == 0
    rc = main(["eval", "--features", str(feats2),
               "--checkpoint", str(workspace["run"] / "model.ckpt")])
    assert rc != 0
    assert "config" in capsys.readouterr().err


def test_predict_verdict(workspace, tmp_path, capsys):
    manifest = json.loads((workspace["corpus"] / "manifest.json").read_text())
    wav = workspace["corpus"] / manifest["entries"][0]["path"]
    out = tmp_path / "verdict.json"
    rc = main(["predict", "--input", str(wav),
               "--checkpoint", str(workspace["run"] / "model.ckpt"),
               "--config", str(workspace["cfg"]), "--out", str(out)])
    assert rc == 0
    verdict = json.loads(out.read_text())
    assert verdict["label"] in ("genuine", "tampered")
    assert 0.5 <= verdict["probability"] <= 1.0
    assert "p_tampered" in verdict


def test_extract_single_file_dumps(workspace, tmp_path):
    manifest = json.loads((workspace["corpus"] / "manifest.json").read_text())
    wav = workspace["corpus"] / manifest["entries"][1]["path"]
    out = tmp_path / "dump"
    rc = main(["extract", "--input", str(wav), "--out", str(out),
               "--config", str(workspace["cfg"])])
    assert rc == 0
    stem = Path(wav).stem
    sidecar = json.loads((out / f"{stem}.enf.json").read_text())
    raw = np.fromfile(out / f"{stem}.enf.f64", dtype="<f8")
    assert sidecar["length"] == len(raw) == 10500
    assert sidecar["sample_rate"] == 1000
    with open(out / f"{stem}.phase.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 516
    with open(out / f"{stem}.freq.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8500


def test_report_outputs(workspace, tmp_path):
    manifest = json.loads((workspace["corpus"] / "manifest.json").read_text())
    wav = workspace["corpus"] / manifest["entries"][2]["path"]
    out = tmp_path / "report"
    rc = main(["report", "--input", str(wav), "--out", str(out),
               "--checkpoint", str(workspace["run"] / "model.ckpt"),
               "--config", str(workspace["cfg"])])
    assert rc == 0
    stem = Path(wav).stem
    for suffix in ("_phase.csv", "_freq.csv", "_attention.csv",
                   "_phase.png", "_freq.png", "_attention.png"):
        assert (out / f"{stem}{suffix}").stat().st_size > 0
    with open(out / f"{stem}_attention.csv") as fh:
        rows = list(csv.DictReader(fh))
    weights = np.array([float(r["weight"]) for r in rows])
    assert np.all((weights > 0) & (weights < 1))


def test_report_without_checkpoint(workspace, tmp_path):
    manifest = json.loads((workspace["corpus"] / "manifest.json").read_text())
    wav = workspace["corpus"] / manifest["entries"][3]["path"]
    out = tmp_path / "r2"
    rc = main(["report", "--input", str(wav), "--out", str(out),
               "--config", str(workspace["cfg"])])
    assert rc == 0
    stem = Path(wav).stem
    assert (out / f"{stem}_phase.png").exists()
    assert not (out / f"{stem}_attention.csv").exists()


def test_config_roundtrip(tmp_path):
    from enftamper.config import save_config
    cfg = load_config(profile="desk", seed=5)
    p = tmp_path / "cfg.json"
    save_config(cfg, p)
    back = load_config(path=p)
    assert back == cfg
    assert config_hash(back) == config_hash(cfg)


def test_missing_file_is_one_line_error(capsys):
    rc = main(["predict", "--input", "/nonexistent.wav",
               "--checkpoint", "/nonexistent.ckpt"])
    assert rc == 1
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert len(err.strip().splitlines()) == 1
