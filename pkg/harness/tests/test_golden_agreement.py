"""Cross-implementation acceptance: the primary must match the reference.

Talks to the primary only through its external surfaces: the TSCK/EEGE
files and the ``tsception`` CLI invoked as a subprocess.
"""

import re
import subprocess
import sys

import numpy as np
import pytest

from oracle_harness.fixtures import compare, emit_fixtures
from oracle_harness.formats import read_checkpoint, write_eege
from oracle_harness.reference import model_logits


def run_primary(*argv):
    return subprocess.run([sys.executable, "-m", "tsception.cli", *argv],
                          capture_output=True, text=True)


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("golden")
    emit_fixtures(str(out), seed=0)
    return out


def test_acceptance_golden_agreement(fixture_dir):
    """[SECONDARY] every emitted case passes in the primary at 1e-5/1e-4."""
    proc = run_primary("gradcheck", "--golden", str(fixture_dir))
    print(proc.stdout)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert "FAIL" not in proc.stdout
    passes = re.findall(r"^PASS ", proc.stdout, flags=re.M)
    assert len(passes) == 10  # 3 conv + 2 pool + 2 bn + ce + 2 full forwards
    print("ACCEPTANCE golden-agreement: PASS "
          f"({len(passes)} cases at 1e-5 forward / 1e-4 gradient tolerance)")


def test_emit_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for d in (a, b):
        emit_fixtures(str(d), seed=4)
    for name in sorted(p.name for p in a.iterdir()):
        with open(a / name, "rb") as fa, open(b / name, "rb") as fb:
            da, db = fa.read(), fb.read()
        if name.endswith(".tsck"):
            assert da == db, name
        else:  # npz members are deterministic; zip timestamps are fixed by numpy
            za = dict(np.load(a / name, allow_pickle=False))
            zb = dict(np.load(b / name, allow_pickle=False))
            assert sorted(za) == sorted(zb)
            for key in za:
                np.testing.assert_array_equal(za[key], zb[key], err_msg=f"{name}:{key}")


def test_primary_checkpoint_readable_and_matches(tmp_path, rng):
    """Primary-trained TSCK -> harness reference -> primary comparison."""
    # build a small labeled dataset and have the primary train 0 epochs on it
    t = np.arange(200) / 200.0
    epochs, labels = [], []
    for cls in (0, 1):
        for _ in range(6):
            x = rng.normal(size=(17, 200)) * 0.5
            if cls:
                x += 2.0 * np.sin(2 * np.pi * 10 * t)
            epochs.append(x)
            labels.append(cls)
    data = tmp_path / "d.eege"
    write_eege(data, np.stack(epochs), np.array(labels), 200, 2)
    ckpt_path = tmp_path / "m.tsck"
    proc = run_primary("train", "--in", str(data), "--out", str(ckpt_path),
                       "--epochs", "0", "--batch", "4", "--seed", "3")
    assert proc.returncode == 0, proc.stdout + proc.stderr

    ckpt = read_checkpoint(ckpt_path)
    assert ckpt.config["num_channels"] == 17
    x = rng.normal(size=(3, 1, 17, 200))
    expect = model_logits(ckpt, x)

    # wrap as a fixture and let the primary verify itself against it
    fix_dir = tmp_path / "fix"
    fix_dir.mkdir()
    np.savez(fix_dir / "primary_ckpt_forward.npz",
             case="model_forward/primary-trained", kind="model_forward",
             tol_forward=np.float64(1e-5), tol_grad=np.float64(1e-4),
             input=x, checkpoint="../m.tsck", expect_logits=expect)
    proc = run_primary("gradcheck", "--golden", str(fix_dir))
    assert proc.returncode == 0, proc.stdout + proc.stderr


def test_compare_reports_perturbation(fixture_dir, tmp_path):
    fixture = str(fixture_dir / "softmax_ce.npz")
    with np.load(fixture, allow_pickle=False) as archive:
        actual = {"expect_loss": archive["expect_loss"],
                  "expect_grad_logits": archive["expect_grad_logits"].copy()}
    report = compare(fixture, actual)
    assert report["passed"] and report["max_rel"] == 0.0

    actual["expect_grad_logits"][0, 0] += 1e-3
    report = compare(fixture, actual)
    assert not report["passed"]
    assert "expect_grad_logits" in report["worst"]
