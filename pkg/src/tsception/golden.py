"""Golden-fixture comparison: replay externally generated cases.

A fixture is an ``.npz`` archive holding float64 little-endian arrays with
a ``kind`` tag, inputs, expected outputs, expected gradients under a given
upstream ``grad_output``, and tolerances.  This module runs the local
implementation on the fixture inputs and reports elementwise agreement;
the relative error metric is symmetric in the two arrays.

Fixture kinds and their keys are documented in docs/FORMATS.md; the
generator lives in the separate oracle harness package.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import DataError, DimensionError
from .fileio import load_checkpoint
from .model import model_forward
from .tensor import (
    BatchNormState,
    Tensor,
    adaptive_avg_pool_time,
    avg_pool_time,
    backward,
    batch_norm,
    conv2d,
    mul,
    softmax_cross_entropy_ls,
    tensor_sum,
)

REL_FLOOR = 1e-6


def error_stats(actual: np.ndarray, expected: np.ndarray):
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    if actual.shape != expected.shape:
        raise DimensionError(f"shape mismatch: {actual.shape} vs {expected.shape}")
    diff = np.abs(actual - expected)
    denom = np.maximum(np.maximum(np.abs(actual), np.abs(expected)), REL_FLOOR)
    return float(diff.max(initial=0.0)), float((diff / denom).max(initial=0.0))


def _vjp(output: Tensor, grad_output: np.ndarray, leaves):
    """Backward pass seeded with ``grad_output`` via a weighted-sum loss."""
    loss = tensor_sum(mul(output, Tensor(grad_output)))
    backward(loss)
    return [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
            for leaf in leaves]


def _run_case(fix: dict, fixture_dir: str):
    """Returns list of (label, actual, expected) array triples."""
    kind = str(fix["kind"])
    pairs = []
    if kind == "conv2d":
        x = Tensor(fix["input"], requires_grad=True)
        k = Tensor(fix["kernel"], requires_grad=True)
        b = Tensor(fix["bias"], requires_grad=True)
        out = conv2d(x, k, b, stride=tuple(fix["stride"]), padding=tuple(fix["padding"]))
        pairs.append(("output", out.data, fix["expect_output"]))
        gx, gk, gb = _vjp(out, fix["grad_output"], [x, k, b])
        pairs.append(("grad_input", gx, fix["expect_grad_input"]))
        pairs.append(("grad_kernel", gk, fix["expect_grad_kernel"]))
        pairs.append(("grad_bias", gb, fix["expect_grad_bias"]))
    elif kind == "avg_pool":
        x = Tensor(fix["input"], requires_grad=True)
        out = avg_pool_time(x, int(fix["pool"]), int(fix["stride"]))
        pairs.append(("output", out.data, fix["expect_output"]))
        (gx,) = _vjp(out, fix["grad_output"], [x])
        pairs.append(("grad_input", gx, fix["expect_grad_input"]))
    elif kind == "adaptive_avg_pool":
        x = Tensor(fix["input"], requires_grad=True)
        out = adaptive_avg_pool_time(x, int(fix["out_w"]))
        pairs.append(("output", out.data, fix["expect_output"]))
        (gx,) = _vjp(out, fix["grad_output"], [x])
        pairs.append(("grad_input", gx, fix["expect_grad_input"]))
    elif kind in ("batch_norm_train", "batch_norm_eval"):
        x = Tensor(fix["input"], requires_grad=True)
        gamma = Tensor(fix["gamma"], requires_grad=True)
        beta = Tensor(fix["beta"], requires_grad=True)
        state = BatchNormState(fix["running_mean"].copy(), fix["running_var"].copy())
        mode = "train" if kind.endswith("train") else "eval"
        out = batch_norm(x, gamma, beta, state, mode,
                         float(fix["momentum"]), float(fix["epsilon"]))
        pairs.append(("output", out.data, fix["expect_output"]))
        if mode == "train":
            pairs.append(("running_mean", state.running_mean, fix["expect_running_mean"]))
            pairs.append(("running_var", state.running_var, fix["expect_running_var"]))
        gx, ggamma, gbeta = _vjp(out, fix["grad_output"], [x, gamma, beta])
        pairs.append(("grad_input", gx, fix["expect_grad_input"]))
        pairs.append(("grad_gamma", ggamma, fix["expect_grad_gamma"]))
        pairs.append(("grad_beta", gbeta, fix["expect_grad_beta"]))
    elif kind == "softmax_ce":
        logits = Tensor(fix["logits"], requires_grad=True)
        loss = softmax_cross_entropy_ls(logits, fix["targets"], float(fix["eps_ls"]))
        pairs.append(("loss", loss.data, fix["expect_loss"]))
        backward(loss)
        pairs.append(("grad_logits", logits.grad, fix["expect_grad_logits"]))
    elif kind == "model_forward":
        ckpt_path = os.path.join(fixture_dir, str(fix["checkpoint"]))
        params, config = load_checkpoint(ckpt_path)
        _, logits = model_forward(Tensor(fix["input"]), params, config, "eval")
        pairs.append(("logits", logits.data, fix["expect_logits"]))
    else:
        raise DataError(f"unknown fixture kind {kind!r}")
    return pairs


def compare_fixture(path: str) -> dict:
    """Run one fixture; returns a report dict with the worst-case errors."""
    with np.load(path, allow_pickle=False) as archive:
        fix = {key: archive[key] for key in archive.files}
    fixture_dir = os.path.dirname(os.path.abspath(path))
    kind = str(fix["kind"])
    tol_forward = float(fix["tol_forward"])
    tol_grad = float(fix["tol_grad"])
    worst_abs = worst_rel = 0.0
    passed = True
    worst_label = ""
    for label, actual, expected in _run_case(fix, fixture_dir):
        abs_err, rel_err = error_stats(actual, expected)
        tol = tol_grad if label.startswith("grad") else tol_forward
        if rel_err > worst_rel:
            worst_label = label
        worst_abs = max(worst_abs, abs_err)
        worst_rel = max(worst_rel, rel_err)
        if rel_err > tol:
            passed = False
    return {
        "case": str(fix.get("case", os.path.basename(path))),
        "kind": kind,
        "max_abs": worst_abs,
        "max_rel": worst_rel,
        "worst": worst_label,
        "tol": tol_grad,
        "passed": passed,
    }


def compare_fixture_dir(directory: str):
    paths = sorted(
        os.path.join(directory, f) for f in os.listdir(directory) if f.endswith(".npz"))
    return [compare_fixture(p) for p in paths]
