"""Command-line front door: synth, preprocess, train, eval, kfold, gradcheck.

Every command is a pure function of its flags, input files, and seed, and
writes a manifest (resolved configuration + digest) beside its outputs.
Exit codes: 0 success, 1 check failure, 2 configuration error, 3 data or
format error, 4 training divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from ._tuning import tune_allocator
from .errors import (
    ConfigurationError,
    DataError,
    DimensionError,
    DivergenceError,
    ShapeError,
    TsceptionError,
)
from . import dsp, fileio, synth
from .gradcheck import grad_check, sample_away_from_kinks
from .model import ModelConfig, build_model, model_forward
from .tensor import (
    BatchNormState,
    Tensor,
    adaptive_avg_pool_time,
    avg_pool_time,
    batch_norm,
    conv2d,
    global_avg_pool,
    leaky_relu,
    linear,
    mul,
    softmax_cross_entropy_ls,
    tensor_sum,
)
from .train import TrainConfig, evaluate, run_kfold, split_train_val_test, train

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


def _json_dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _config_digest(resolved: dict) -> str:
    return hashlib.sha256(_json_dumps(resolved).encode("utf-8")).hexdigest()


def write_manifest(out_path: str, command: str, resolved: dict, inputs: list,
                   outputs: list, seed: int):
    manifest = {
        "command": command,
        "tool_version": __version__,
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "config": resolved,
        "config_digest": _config_digest(resolved),
    }
    path = f"{out_path}.manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_json_dumps(manifest))
    return path


def _default_out_dir() -> str:
    return os.environ.get("TSCEPTION_OUT", ".")


def _model_config_from_args(args, channels: int, fs: int, classes: int) -> ModelConfig:
    return ModelConfig(
        num_channels=channels, sampling_rate=fs, num_classes=classes,
        variant=args.variant,
    )


def _load_dataset(path):
    epochs, labels, fs, k = fileio.read_eege(path)
    return epochs, labels, int(fs), int(k)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.profile == "demo2class":
        cfg = synth.demo_two_class(seed=args.seed, epochs_per_class=args.epochs_per_class,
                                   amplitude=args.amplitude)
    elif args.profile == "demo3class":
        cfg = synth.SynthConfig(
            channels=14, fs=128.0, epoch_len=128, epochs_per_class=args.epochs_per_class,
            classes=(synth.BandProfile(6.0, 2.0, args.amplitude),
                     synth.BandProfile(12.0, 2.0, args.amplitude),
                     synth.BandProfile(24.0, 2.0, args.amplitude)),
            seed=args.seed)
    else:
        raise ConfigurationError(f"unknown synth profile {args.profile!r}")

    os.makedirs(args.out, exist_ok=True)
    ds, rec = synth.generate(cfg, emit_continuous=args.continuous)
    outputs = []
    eege_path = os.path.join(args.out, f"{args.profile}.eege")
    fileio.write_eege(eege_path, ds.epochs, ds.labels, int(ds.sampling_rate), ds.class_count)
    outputs.append(eege_path)
    if rec is not None:
        eegc_path = os.path.join(args.out, f"{args.profile}.eegc")
        fileio.write_eegc(eegc_path, rec.samples, int(rec.sampling_rate))
        track_path = os.path.join(args.out, f"{args.profile}.labels.csv")
        fileio.write_label_track(track_path, rec.label_times, rec.label_values)
        outputs.extend([eegc_path, track_path])
    resolved = {
        "profile": args.profile, "channels": cfg.channels, "fs": cfg.fs,
        "epoch_len": cfg.epoch_len, "epochs_per_class": cfg.epochs_per_class,
        "amplitude": args.amplitude, "seed": args.seed,
    }
    write_manifest(eege_path, "synth", resolved, [], outputs, args.seed)
    print(f"wrote {', '.join(outputs)}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    if args.profile in dsp.PROFILES:
        profile = dsp.PROFILES[args.profile]
    elif args.profile == "custom":
        thresholds = tuple(float(v) for v in args.thresholds.split(",")) \
            if args.thresholds else None
        profile = dsp.PipelineProfile(
            name="custom", channels=None,
            band=(args.low, args.high) if args.low is not None else None,
            filter_order=args.order,
            target_fs=args.decimate_to,
            window_s=args.window, step_s=args.step,
            scale=args.scale,
            label_mode=args.label_mode,
            thresholds=thresholds,
            reject_mad=args.reject_mad,
        )
    else:
        raise ConfigurationError(f"unknown preprocess profile {args.profile!r}")

    samples, fs = fileio.read_eegc(args.input)
    if profile.channels is not None and samples.shape[0] != profile.channels:
        raise ConfigurationError(
            f"profile {profile.name!r} expects {profile.channels} channels, "
            f"file has {samples.shape[0]}")
    label_times = label_values = None
    if args.labels:
        if not os.path.exists(args.labels):
            raise DataError(f"label sidecar {args.labels!r} does not exist")
        label_times, label_values = fileio.read_label_track(args.labels)
    elif profile.label_mode is not None:
        raise DataError(f"profile {profile.name!r} needs --labels to attach classes")
    rec = dsp.ContinuousRecording(samples, fs, label_times, label_values)
    ds = dsp.preprocess_pipeline(rec, profile)
    labels = ds.labels if ds.labels is not None else np.zeros(ds.n_epochs, dtype=np.int64)
    class_count = ds.class_count if ds.labels is not None else 1
    fileio.write_eege(args.out, ds.epochs, labels, int(ds.sampling_rate), class_count)
    resolved = {
        "profile": profile.name, "band": list(profile.band) if profile.band else None,
        "filter_order": profile.filter_order, "target_fs": profile.target_fs,
        "window_s": profile.window_s, "step_s": profile.step_s,
        "scale": profile.scale, "label_mode": profile.label_mode,
        "thresholds": list(profile.thresholds) if profile.thresholds else None,
        "reject_mad": profile.reject_mad,
    }
    write_manifest(args.out, "preprocess", resolved,
                   [args.input] + ([args.labels] if args.labels else []),
                   [args.out], seed=0)
    print(f"wrote {args.out}: {ds.n_epochs} epochs of "
          f"{ds.n_channels}x{ds.epoch_len} at {ds.sampling_rate:g} Hz")
    return EXIT_OK


def _train_config_from_args(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, batch_size=args.batch,
                       learning_rate=args.lr, seed=args.seed,
                       folds=getattr(args, "folds", 5))


def cmd_train(args) -> int:
    tune_allocator()
    epochs, labels, fs, k = _load_dataset(args.input)
    mcfg = _model_config_from_args(args, epochs.shape[1], fs, k)
    tcfg = _train_config_from_args(args)
    tr, va, te = split_train_val_test(labels, tcfg.split_ratios, tcfg.seed)
    params = build_model(mcfg, tcfg.seed)
    best, history = train(mcfg, params, epochs[tr], labels[tr],
                          epochs[va], labels[va], tcfg)
    fileio.save_checkpoint(best, mcfg, args.out)
    test_acc, confusion = evaluate(mcfg, best, epochs[te], labels[te]) \
        if te.size else (float("nan"), None)
    report = {
        "history": history.to_dict(),
        "test_accuracy": test_acc,
        "confusion": confusion.tolist() if confusion is not None else None,
        "model_config": mcfg.to_dict(),
        "train_config": tcfg.to_dict(),
    }
    report_path = f"{args.out}.report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(_json_dumps(report))
    resolved = {"model": mcfg.to_dict(), "train": tcfg.to_dict()}
    write_manifest(args.out, "train", resolved, [args.input],
                   [args.out, report_path], tcfg.seed)
    print(f"best val accuracy {history.best_val_accuracy:.4f} "
          f"(epoch {history.best_epoch}); test accuracy {test_acc:.4f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    params, mcfg = fileio.load_checkpoint(args.ckpt)
    epochs, labels, fs, k = _load_dataset(args.input)
    if epochs.shape[1] != mcfg.num_channels or fs != mcfg.sampling_rate:
        raise DimensionError(
            f"dataset geometry {epochs.shape[1]} ch @ {fs} Hz does not match "
            f"checkpoint {mcfg.num_channels} ch @ {mcfg.sampling_rate} Hz")
    if k > mcfg.num_classes:
        raise DimensionError(f"dataset has {k} classes, checkpoint {mcfg.num_classes}")
    acc, confusion = evaluate(mcfg, params, epochs, labels)
    print(f"accuracy {acc:.4f} over {labels.size} epochs")
    print("confusion (rows true, cols predicted):")
    for row in confusion:
        print("  " + " ".join(f"{v:6d}" for v in row))
    return EXIT_OK


def cmd_kfold(args) -> int:
    tune_allocator()
    epochs, labels, fs, k = _load_dataset(args.input)
    mcfg = _model_config_from_args(args, epochs.shape[1], fs, k)
    tcfg = _train_config_from_args(args)
    report = run_kfold(mcfg, epochs, labels, tcfg)
    resolved = {"model": mcfg.to_dict(), "train": tcfg.to_dict()}
    payload = report.to_dict()
    payload["config_digest"] = _config_digest(resolved)
    payload["epochs"] = tcfg.epochs
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(_json_dumps(payload))
    write_manifest(args.out, "kfold", resolved, [args.input], [args.out], tcfg.seed)
    accs = ", ".join(f"{a:.4f}" for a in report.per_fold_accuracy)
    print(f"fold accuracies: {accs}")
    print(f"mean {report.mean * 100:.2f} +- {report.ci95_half_width * 100:.2f} (95% CI)")
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def _gradcheck_cases(seed: int):
    """Finite-difference cases for every differentiable operation."""
    root = np.random.SeedSequence(seed)
    rngs = [np.random.default_rng(s) for s in root.spawn(10)]

    def conv_case(rng):
        x = rng.normal(size=(2, 1, 4, 8))
        k = rng.normal(size=(3, 1, 2, 3))
        b = rng.normal(size=3)
        w = rng.normal(size=(2, 3, 3, 3))
        return lambda ts: tensor_sum(mul(
            conv2d(ts[0], ts[1], ts[2], stride=(1, 2), padding=(0, 0)),
            Tensor(w))), [x, k, b]

    def conv_fft_case(rng):
        x = rng.normal(size=(2, 1, 3, 40))
        k = rng.normal(size=(3, 1, 1, 18))
        b = rng.normal(size=3)
        w = rng.normal(size=(2, 3, 3, 23))
        return lambda ts: tensor_sum(mul(conv2d(ts[0], ts[1], ts[2]), Tensor(w))), [x, k, b]

    def leaky_case(rng):
        x = sample_away_from_kinks(rng, (4, 6))
        w = rng.normal(size=(4, 6))
        return lambda ts: tensor_sum(mul(leaky_relu(ts[0], 0.01), Tensor(w))), [x]

    def avg_pool_case(rng):
        x = rng.normal(size=(2, 2, 3, 9))
        w = rng.normal(size=(2, 2, 3, 4))
        return lambda ts: tensor_sum(mul(avg_pool_time(ts[0], 3, 2), Tensor(w))), [x]

    def adp_case(rng):
        x = rng.normal(size=(2, 2, 3, 11))
        w = rng.normal(size=(2, 2, 3, 4))
        return lambda ts: tensor_sum(mul(adaptive_avg_pool_time(ts[0], 4), Tensor(w))), [x]

    def gap_case(rng):
        x = rng.normal(size=(3, 4, 2, 5))
        w = rng.normal(size=(3, 4))
        return lambda ts: tensor_sum(mul(global_avg_pool(ts[0]), Tensor(w))), [x]

    def bn_train_case(rng):
        x = rng.normal(size=(4, 3, 1, 6))
        gamma = rng.normal(size=3) + 1.5
        beta = rng.normal(size=3)
        w = rng.normal(size=(4, 3, 1, 6))

        def build(ts):
            state = BatchNormState.fresh(3)
            return tensor_sum(mul(batch_norm(ts[0], ts[1], ts[2], state, "train"), Tensor(w)))
        return build, [x, gamma, beta]

    def bn_eval_case(rng):
        x = rng.normal(size=(2, 3, 2, 4))
        gamma = rng.normal(size=3) + 1.5
        beta = rng.normal(size=3)
        w = rng.normal(size=(2, 3, 2, 4))
        state = BatchNormState(rng.normal(size=3) * 0.1, rng.uniform(0.5, 2.0, 3))

        def build(ts):
            st = BatchNormState(state.running_mean.copy(), state.running_var.copy())
            return tensor_sum(mul(batch_norm(ts[0], ts[1], ts[2], st, "eval"), Tensor(w)))
        return build, [x, gamma, beta]

    def linear_case(rng):
        x = rng.normal(size=(3, 5))
        w = rng.normal(size=(4, 5))
        b = rng.normal(size=4)
        ww = rng.normal(size=(3, 4))
        return lambda ts: tensor_sum(mul(linear(ts[0], ts[1], ts[2]), Tensor(ww))), [x, w, b]

    def ce_case(rng):
        logits = rng.normal(size=(4, 3))
        targets = rng.integers(0, 3, 4)
        return lambda ts: softmax_cross_entropy_ls(ts[0], targets, 0.1), [logits]

    builders = [
        ("conv2d", conv_case), ("conv2d_fft", conv_fft_case),
        ("leaky_relu", leaky_case), ("avg_pool_time", avg_pool_case),
        ("adaptive_avg_pool_time", adp_case), ("global_avg_pool", gap_case),
        ("batch_norm_train", bn_train_case), ("batch_norm_eval", bn_eval_case),
        ("linear", linear_case), ("softmax_cross_entropy_ls", ce_case),
    ]
    return [(name, *fn(rng)) for (name, fn), rng in zip(builders, rngs)]


def end_to_end_param_check(seed: int, n_params: int = 50, h: float = 1e-5,
                           tol: float = 1e-3):
    """Central differences on a random sample of model parameters.

    Runs a small train-mode graph (dropout off: it is not differentiable
    through its random mask re-draw) and compares the recorded gradients of
    ``n_params`` sampled parameter elements against finite differences.
    """
    from .tensor import backward as tensor_backward

    config = ModelConfig(num_channels=6, sampling_rate=32, num_classes=2,
                         num_temporal_filters=4, num_spatial_filters=4,
                         hidden_units=12, dropout_p=0.0,
                         adp_temporal_out=8, adp_spatial_out=8, adp_fusion_out=4)
    rng = np.random.default_rng(seed)
    params = build_model(config, seed)
    x = rng.normal(size=(3, 1, 6, 32))
    targets = rng.integers(0, 2, 3)

    def loss_value() -> float:
        for bn in params.bn_states.values():
            bn.running_mean[:] = 0.0
            bn.running_var[:] = 1.0
        _, logits = model_forward(Tensor(x), params, config, "train")
        return softmax_cross_entropy_ls(logits, targets, 0.1)

    loss = loss_value()
    params.zero_grad()
    tensor_backward(loss)

    flat = []
    for name, tensor in params.trainable():
        for j in range(tensor.data.size):
            flat.append((name, j))
    picks = rng.choice(len(flat), size=min(n_params, len(flat)), replace=False)

    max_rel = 0.0
    for p in picks:
        name, j = flat[p]
        tensor = params.tensors[name]
        analytic = tensor.grad.reshape(-1)[j] if tensor.grad is not None else 0.0
        view = tensor.data.reshape(-1)
        orig = view[j]
        view[j] = orig + h
        up = float(loss_value().data)
        view[j] = orig - h
        down = float(loss_value().data)
        view[j] = orig
        numeric = (up - down) / (2 * h)
        denom = max(abs(analytic), abs(numeric), 1e-6)
        max_rel = max(max_rel, abs(analytic - numeric) / denom)
    return max_rel, max_rel < tol


def _run_golden(golden_dir: str) -> int:
    from .golden import compare_fixture_dir
    results = compare_fixture_dir(golden_dir)
    failures = 0
    for r in results:
        status = "PASS" if r["passed"] else "FAIL"
        print(f"{status} {r['case']}: max_abs={r['max_abs']:.3e} "
              f"max_rel={r['max_rel']:.3e} (tol {r['tol']:.1e})")
        failures += 0 if r["passed"] else 1
    if not results:
        print(f"no fixtures found in {golden_dir}")
        return EXIT_DATA
    print(f"{len(results) - failures}/{len(results)} golden cases passed")
    return EXIT_OK if failures == 0 else EXIT_CHECK_FAILED


def cmd_gradcheck(args) -> int:
    if args.golden:
        return _run_golden(args.golden)
    failures = 0
    for offset in range(args.seeds):
        cases = _gradcheck_cases(args.seed + offset)
        for name, build, inputs in cases:
            report = grad_check(build, inputs, h=args.h, tol=args.tol)
            ok = report.passed
            failures += 0 if ok else 1
            print(f"{'PASS' if ok else 'FAIL'} {name} (seed {args.seed + offset}): "
                  f"max {report.max_rel_error:.3e} mean {report.mean_rel_error:.3e}")
    max_rel, ok = end_to_end_param_check(args.seed)
    failures += 0 if ok else 1
    print(f"{'PASS' if ok else 'FAIL'} end_to_end_params: max {max_rel:.3e} (tol 1e-3)")
    return EXIT_OK if failures == 0 else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsception",
        description="Deterministic EEG spatiotemporal classifier toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--profile", default="demo2class",
                   choices=["demo2class", "demo3class"])
    p.add_argument("--out", default=_default_out_dir())
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs-per-class", type=int, default=1000)
    p.add_argument("--amplitude", type=float, default=3.0)
    p.add_argument("--continuous", action="store_true",
                   help="also emit an EEGC stream with a label track")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="condition an EEGC recording into EEGE epochs")
    p.add_argument("--profile", default="custom")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--labels", default=None, help="label track sidecar (time_s,value)")
    p.add_argument("--out", required=True)
    p.add_argument("--low", type=float, default=None)
    p.add_argument("--high", type=float, default=None)
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--decimate-to", type=float, default=None)
    p.add_argument("--window", type=float, default=1.0)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--scale", action="store_true")
    p.add_argument("--label-mode", choices=["perclos", "rating"], default=None)
    p.add_argument("--thresholds", default=None, help="comma-separated rating bounds")
    p.add_argument("--reject-mad", type=float, default=None)
    p.set_defaults(func=cmd_preprocess)

    for name, fn in (("train", cmd_train), ("kfold", cmd_kfold)):
        p = sub.add_parser(name)
        p.add_argument("--variant", choices=["original", "modified"], default="modified")
        p.add_argument("--in", dest="input", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--epochs", type=int, default=100)
        p.add_argument("--batch", type=int, default=16)
        p.add_argument("--lr", type=float, default=1e-4)
        p.add_argument("--seed", type=int, default=0)
        if name == "kfold":
            p.add_argument("--folds", type=int, default=5)
        p.set_defaults(func=fn)

    p = sub.add_parser("eval", help="evaluate a checkpoint on an EEGE dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference and golden-fixture checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--golden", default=None, help="directory of golden fixture files")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError,) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DimensionError, ShapeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TsceptionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
