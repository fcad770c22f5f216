"""CLI exit codes, manifests, and reproducible outputs."""

import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from tsception.cli import main
from tsception.fileio import read_eege, write_eegc, write_eege, write_label_track


def digest(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "data"
    code = main(["synth", "--profile", "demo2class", "--out", str(out),
                 "--seed", "7", "--epochs-per-class", "12", "--continuous"])
    assert code == 0
    return out


class TestSynthCommand:
    def test_outputs_and_manifest(self, synth_dir):
        assert (synth_dir / "demo2class.eege").exists()
        assert (synth_dir / "demo2class.eegc").exists()
        assert (synth_dir / "demo2class.labels.csv").exists()
        manifest = json.loads((synth_dir / "demo2class.eege.manifest.json").read_text())
        assert manifest["seed"] == 7
        assert len(manifest["config_digest"]) == 64

    def test_repeat_identical_digests(self, tmp_path):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        for d in (d1, d2):
            assert main(["synth", "--out", str(d), "--seed", "3",
                         "--epochs-per-class", "8"]) == 0
        assert digest(d1 / "demo2class.eege") == digest(d2 / "demo2class.eege")

    def test_invalid_band_exits_2(self, tmp_path, capsys):
        code = main(["synth", "--profile", "demo3class", "--out", str(tmp_path),
                     "--amplitude", "-1"])
        assert code == 2
        assert "amplitude" in capsys.readouterr().err

    def test_continuous_sidecar_feeds_preprocess(self, synth_dir, tmp_path):
        # the emitted EEGC + label track must round-trip through preprocess
        out = tmp_path / "pp.eege"
        code = main(["preprocess", "--profile", "custom",
                     "--in", str(synth_dir / "demo2class.eegc"),
                     "--labels", str(synth_dir / "demo2class.labels.csv"),
                     "--out", str(out), "--window", "1", "--step", "1",
                     "--label-mode", "perclos"])
        assert code == 0
        epochs, labels, fs, k = read_eege(out)
        direct, dlabels, _, _ = read_eege(synth_dir / "demo2class.eege")
        assert epochs.shape == direct.shape
        np.testing.assert_array_equal(labels, dlabels)


class TestPreprocessCommand:
    def test_custom_profile(self, tmp_path, rng):
        src = tmp_path / "rec.eegc"
        write_eegc(src, rng.normal(size=(4, 4000)), 200)
        write_label_track(tmp_path / "t.csv", [0.0, 20.0], [0.2, 0.2])
        out = tmp_path / "out.eege"
        code = main(["preprocess", "--profile", "custom", "--in", str(src),
                     "--labels", str(tmp_path / "t.csv"), "--out", str(out),
                     "--low", "1", "--high", "40", "--window", "1", "--step", "1",
                     "--label-mode", "perclos"])
        assert code == 0
        epochs, labels, fs, k = read_eege(out)
        assert epochs.shape == (20, 4, 200) and fs == 200 and k == 2

    def test_seedvig_channel_mismatch_exits_2(self, tmp_path, rng):
        src = tmp_path / "rec.eegc"
        write_eegc(src, rng.normal(size=(14, 4000)), 1000)
        code = main(["preprocess", "--profile", "seedvig", "--in", str(src),
                     "--out", str(tmp_path / "x.eege")])
        assert code == 2

    def test_missing_labels_exits_3(self, tmp_path, rng):
        src = tmp_path / "rec.eegc"
        write_eegc(src, rng.normal(size=(17, 4000)), 1000)
        code = main(["preprocess", "--profile", "seedvig", "--in", str(src),
                     "--out", str(tmp_path / "x.eege")])
        assert code == 3

    def test_missing_input_exits_3(self, tmp_path):
        code = main(["preprocess", "--profile", "custom",
                     "--in", str(tmp_path / "absent.eegc"),
                     "--out", str(tmp_path / "x.eege")])
        assert code == 3


def small_eege(path, rng, n_per_class=10, channels=6, fs=32):
    t = np.arange(fs) / fs
    epochs, labels = [], []
    for cls in (0, 1):
        for _ in range(n_per_class):
            x = rng.normal(size=(channels, fs)) * 0.5
            if cls:
                x += 2.5 * np.sin(2 * np.pi * 8 * t)
            epochs.append(x)
            labels.append(cls)
    write_eege(path, np.stack(epochs), np.array(labels), fs, 2)


class TestTrainEvalKfold:
    def test_train_eval_roundtrip(self, tmp_path, rng):
        data = tmp_path / "d.eege"
        small_eege(data, rng)
        ckpt = tmp_path / "m.tsck"
        code = main(["train", "--in", str(data), "--out", str(ckpt),
                     "--epochs", "2", "--batch", "8", "--seed", "1"])
        assert code == 0
        assert ckpt.exists() and (tmp_path / "m.tsck.report.json").exists()
        assert main(["eval", "--ckpt", str(ckpt), "--in", str(data)]) == 0

    def test_zero_lr_checkpoint_matches_init(self, tmp_path, rng):
        data = tmp_path / "d.eege"
        small_eege(data, rng)
        c1, c2 = tmp_path / "a.tsck", tmp_path / "b.tsck"
        for out, lr in ((c1, "0"), (c2, "0")):
            assert main(["train", "--in", str(data), "--out", str(out),
                         "--epochs", "2", "--batch", "8", "--lr", lr,
                         "--seed", "4"]) == 0
        assert digest(c1) == digest(c2)
        report = json.loads((c1.parent / "a.tsck.report.json").read_text())
        assert len(set(report["history"]["val_accuracy"])) == 1

    def test_kfold_report(self, tmp_path, rng):
        data = tmp_path / "d.eege"
        small_eege(data, rng, n_per_class=15)
        out = tmp_path / "report.json"
        code = main(["kfold", "--in", str(data), "--out", str(out),
                     "--epochs", "1", "--batch", "8", "--folds", "3", "--seed", "2"])
        assert code == 0
        report = json.loads(out.read_text())
        assert len(report["per_fold_accuracy"]) == 3
        assert report["ci95_half_width"] >= 0
        assert "config_digest" in report

    def test_kfold_deterministic(self, tmp_path, rng):
        data = tmp_path / "d.eege"
        small_eege(data, rng, n_per_class=15)
        outs = []
        for name in ("r1.json", "r2.json"):
            out = tmp_path / name
            assert main(["kfold", "--in", str(data), "--out", str(out),
                         "--epochs", "1", "--batch", "8", "--folds", "3",
                         "--seed", "2"]) == 0
            outs.append(digest(out))
        assert outs[0] == outs[1]

    def test_eval_geometry_mismatch_exits_2(self, tmp_path, rng):
        data = tmp_path / "d.eege"
        small_eege(data, rng)
        ckpt = tmp_path / "m.tsck"
        assert main(["train", "--in", str(data), "--out", str(ckpt),
                     "--epochs", "1", "--batch", "8", "--seed", "1"]) == 0
        other = tmp_path / "other.eege"
        small_eege(other, rng, channels=8)
        assert main(["eval", "--ckpt", str(ckpt), "--in", str(other)]) == 2


class TestGradcheckCommand:
    def test_default_passes(self, capsys):
        assert main(["gradcheck", "--seed", "11"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out and "PASS" in out

    def test_absurd_tolerance_fails(self, capsys):
        assert main(["gradcheck", "--seed", "11", "--tol", "1e-13"]) == 1
        assert "FAIL" in capsys.readouterr().out


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tsception.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
