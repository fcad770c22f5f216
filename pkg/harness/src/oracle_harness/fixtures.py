"""Golden fixture emission and comparison.

Fixtures are ``.npz`` archives (see docs/FORMATS.md in the primary repo).
``emit_fixtures`` covers convolution, both pooling modes, batch
normalization in both modes, the label-smoothed cross-entropy, and full
eval-mode forwards at both target geometries, each against a checkpoint
written by this package's own TSCK writer.
"""

from __future__ import annotations

import os

import numpy as np

from . import reference
from .formats import write_checkpoint

TOL_FORWARD = 1e-5
TOL_GRAD = 1e-4
REL_FLOOR = 1e-6

SEEDVIG_CONFIG = {
    "num_channels": 17, "sampling_rate": 200, "num_classes": 2,
    "variant": "modified", "inception_windows": (0.5, 0.25, 0.125),
    "num_temporal_filters": 15, "num_spatial_filters": 15, "hidden_units": 64,
    "dropout_p": 0.5, "adp_temporal_out": 16, "adp_spatial_out": 16,
    "adp_fusion_out": 8, "fusion2_pool": 2, "pool_size": 8, "leaky_alpha": 0.01,
}
STEW_CONFIG = {**SEEDVIG_CONFIG, "num_channels": 14, "sampling_rate": 128,
               "num_classes": 3}


def _save(directory, name, payload: dict):
    path = os.path.join(directory, f"{name}.npz")
    np.savez(path, **payload)
    return path


def _base(case: str, kind: str) -> dict:
    return {"case": case, "kind": kind,
            "tol_forward": np.float64(TOL_FORWARD), "tol_grad": np.float64(TOL_GRAD)}


def emit_fixtures(out_dir: str, seed: int = 0):
    """Write every fixture case; returns the list of file paths."""
    os.makedirs(out_dir, exist_ok=True)
    root = np.random.SeedSequence(seed)
    rngs = iter(np.random.default_rng(s) for s in root.spawn(16))
    paths = []

    # conv2d: generic strided case and a long-kernel 1-D case
    rng = next(rngs)
    for tag, xshape, kshape, stride, padding in (
            ("small", (2, 1, 4, 8), (3, 1, 1, 5), (1, 1), (0, 0)),
            ("strided", (2, 2, 5, 9), (4, 2, 3, 3), (2, 2), (1, 1)),
            ("temporal", (2, 1, 6, 64), (5, 1, 1, 25), (1, 1), (0, 0))):
        x = rng.normal(size=xshape)
        k = rng.normal(size=kshape)
        b = rng.normal(size=kshape[0])
        fix = _base(f"conv2d/{tag}", "conv2d")
        fix.update(input=x, kernel=k, bias=b,
                   stride=np.array(stride, dtype=np.int64),
                   padding=np.array(padding, dtype=np.int64))
        ph, pw = padding
        ho = (xshape[2] + 2 * ph - kshape[2]) // stride[0] + 1
        wo = (xshape[3] + 2 * pw - kshape[3]) // stride[1] + 1
        g = rng.normal(size=(xshape[0], kshape[0], ho, wo))
        fix["grad_output"] = g
        fix.update(reference.conv2d_case(x, k, b, stride, padding, g))
        paths.append(_save(out_dir, f"conv2d_{tag}", fix))

    # fixed average pooling, remainder dropped
    rng = next(rngs)
    x = rng.normal(size=(2, 3, 4, 21))
    g = rng.normal(size=(2, 3, 4, 2))
    fix = _base("avg_pool/pool8", "avg_pool")
    fix.update(input=x, pool=np.int64(8), stride=np.int64(8), grad_output=g)
    fix.update(reference.avg_pool_case(x, 8, 8, g))
    paths.append(_save(out_dir, "avg_pool_pool8", fix))

    # adaptive pooling with uneven bins
    rng = next(rngs)
    x = rng.normal(size=(2, 3, 4, 29))
    g = rng.normal(size=(2, 3, 4, 8))
    fix = _base("adaptive_avg_pool/uneven", "adaptive_avg_pool")
    fix.update(input=x, out_w=np.int64(8), grad_output=g)
    fix.update(reference.adaptive_avg_pool_case(x, 8, g))
    paths.append(_save(out_dir, "adaptive_avg_pool_uneven", fix))

    # batch norm, both modes
    for mode in ("train", "eval"):
        rng = next(rngs)
        x = rng.normal(size=(4, 3, 2, 6)) * 1.5 + 0.3
        g = rng.normal(size=(4, 3, 2, 6))
        fix = _base(f"batch_norm/{mode}", f"batch_norm_{mode}")
        fix.update(input=x, gamma=rng.uniform(0.5, 1.5, 3), beta=rng.normal(size=3),
                   running_mean=rng.normal(scale=0.3, size=3),
                   running_var=rng.uniform(0.5, 2.0, 3),
                   momentum=np.float64(0.1), epsilon=np.float64(1e-5), grad_output=g)
        fix.update(reference.batch_norm_case(
            x, fix["gamma"], fix["beta"], fix["running_mean"], fix["running_var"],
            0.1, 1e-5, mode == "train", g))
        paths.append(_save(out_dir, f"batch_norm_{mode}", fix))

    # label-smoothed cross entropy
    rng = next(rngs)
    logits = rng.normal(size=(6, 3)) * 2.0
    targets = rng.integers(0, 3, 6)
    fix = _base("softmax_ce/ls0.1", "softmax_ce")
    fix.update(logits=logits, targets=targets.astype(np.int64), eps_ls=np.float64(0.1))
    fix.update(reference.softmax_ce_case(logits, targets, 0.1))
    paths.append(_save(out_dir, "softmax_ce", fix))

    # full modified-variant forwards at both geometries, from shared checkpoints
    for tag, config, batch in (("seedvig", SEEDVIG_CONFIG, 4), ("stew", STEW_CONFIG, 4)):
        rng = next(rngs)
        ckpt = reference.random_checkpoint(config, seed + 17)
        ckpt_name = f"model_forward_{tag}.tsck"
        write_checkpoint(os.path.join(out_dir, ckpt_name), ckpt.config, ckpt.entries)
        length = config["sampling_rate"]
        x = rng.normal(size=(batch, 1, config["num_channels"], length))
        fix = _base(f"model_forward/{tag}", "model_forward")
        fix.update(input=x, checkpoint=ckpt_name,
                   expect_logits=reference.model_logits(ckpt, x))
        # forward-only case: gradient tolerance unused but kept for uniformity
        paths.append(_save(out_dir, f"model_forward_{tag}", fix))

    return paths


def error_stats(a: np.ndarray, b: np.ndarray):
    """Symmetric (max_abs, max_rel) elementwise disagreement."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = np.abs(a - b)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), REL_FLOOR)
    return float(diff.max(initial=0.0)), float((diff / denom).max(initial=0.0))


def compare(fixture_path: str, actual: dict) -> dict:
    """Compare externally produced arrays against a fixture's expectations.

    ``actual`` maps expectation keys (``expect_output``, ...) to arrays.
    Returns per-key stats plus the overall verdict; flags the location of
    the worst element.
    """
    with np.load(fixture_path, allow_pickle=False) as archive:
        fix = {k: archive[k] for k in archive.files}
    tol_forward = float(fix["tol_forward"])
    tol_grad = float(fix["tol_grad"])
    per_key = {}
    passed = True
    worst = ("", 0.0)
    for key, arr in actual.items():
        expected = fix[key]
        max_abs, max_rel = error_stats(arr, expected)
        tol = tol_grad if "grad" in key else tol_forward
        ok = max_rel <= tol
        if max_rel > worst[1]:
            diff = np.abs(np.asarray(arr) - expected)
            worst = (f"{key}[{np.unravel_index(diff.argmax(), diff.shape) if diff.size else ()}]",
                     max_rel)
        per_key[key] = {"max_abs": max_abs, "max_rel": max_rel, "tol": tol, "passed": ok}
        passed = passed and ok
    return {"case": str(fix["case"]), "passed": passed, "per_key": per_key,
            "worst": worst[0], "max_rel": worst[1]}
