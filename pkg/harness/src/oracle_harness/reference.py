"""PyTorch reference implementation of the checked operations and model.

Everything runs in float64 on CPU.  The model forward consumes a parsed
TSCK checkpoint (see formats.py) and mirrors the documented architecture:
parallel temporal branches (fixed or adaptive pooling), full- and
half-channel spatial branches, two-stage fusion, and the two-hidden-layer
classifier, evaluated in eval mode with the stored running statistics.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F

from .formats import Checkpoint

torch.set_grad_enabled(False)

BN_EPS = 1e-5


def _t(x) -> torch.Tensor:
    return torch.as_tensor(np.asarray(x), dtype=torch.float64)


# ---------------------------------------------------------------------------
# op-level references with VJPs
# ---------------------------------------------------------------------------

def conv2d_case(x, kernel, bias, stride, padding, grad_output):
    with torch.enable_grad():
        xt = _t(x).requires_grad_(True)
        kt = _t(kernel).requires_grad_(True)
        bt = _t(bias).requires_grad_(True)
        out = F.conv2d(xt, kt, bt, stride=tuple(int(s) for s in stride),
                       padding=tuple(int(p) for p in padding))
        out.backward(_t(grad_output))
    return {
        "expect_output": out.detach().numpy(),
        "expect_grad_input": xt.grad.numpy(),
        "expect_grad_kernel": kt.grad.numpy(),
        "expect_grad_bias": bt.grad.numpy(),
    }


def avg_pool_case(x, pool, stride, grad_output):
    with torch.enable_grad():
        xt = _t(x).requires_grad_(True)
        out = F.avg_pool2d(xt, kernel_size=(1, int(pool)), stride=(1, int(stride)))
        out.backward(_t(grad_output))
    return {"expect_output": out.detach().numpy(), "expect_grad_input": xt.grad.numpy()}


def adaptive_avg_pool_case(x, out_w, grad_output):
    with torch.enable_grad():
        xt = _t(x).requires_grad_(True)
        out = F.adaptive_avg_pool2d(xt, (x.shape[2], int(out_w)))
        out.backward(_t(grad_output))
    return {"expect_output": out.detach().numpy(), "expect_grad_input": xt.grad.numpy()}


def batch_norm_case(x, gamma, beta, running_mean, running_var, momentum, epsilon,
                    train: bool, grad_output):
    rm = _t(running_mean).clone()
    rv = _t(running_var).clone()
    with torch.enable_grad():
        xt = _t(x).requires_grad_(True)
        gt = _t(gamma).requires_grad_(True)
        bt = _t(beta).requires_grad_(True)
        out = F.batch_norm(xt, rm, rv, gt, bt, training=train,
                           momentum=float(momentum), eps=float(epsilon))
        out.backward(_t(grad_output))
    result = {
        "expect_output": out.detach().numpy(),
        "expect_grad_input": xt.grad.numpy(),
        "expect_grad_gamma": gt.grad.numpy(),
        "expect_grad_beta": bt.grad.numpy(),
    }
    if train:
        result["expect_running_mean"] = rm.numpy()
        result["expect_running_var"] = rv.numpy()
    return result


def softmax_ce_case(logits, targets, eps_ls):
    with torch.enable_grad():
        lt = _t(logits).requires_grad_(True)
        loss = F.cross_entropy(lt, torch.as_tensor(np.asarray(targets), dtype=torch.long),
                               label_smoothing=float(eps_ls))
        loss.backward()
    return {"expect_loss": np.asarray(loss.detach().numpy()),
            "expect_grad_logits": lt.grad.numpy()}


# ---------------------------------------------------------------------------
# reference model forward from a checkpoint
# ---------------------------------------------------------------------------

def temporal_kernel_widths(config: dict):
    fs = config["sampling_rate"]
    windows = config["inception_windows"]
    widths = [math.floor(w * fs) for w in windows]
    if config["variant"] == "modified":
        widths += [math.floor(w * fs / 2) for w in windows[1:]]
    return widths


def _bn_eval(x, entries, name):
    return F.batch_norm(
        x, _t(entries[f"{name}.running_mean"]), _t(entries[f"{name}.running_var"]),
        _t(entries[f"{name}.gamma"]), _t(entries[f"{name}.beta"]),
        training=False, eps=BN_EPS)


def model_logits(ckpt: Checkpoint, x) -> np.ndarray:
    """Eval-mode logits for input (B, 1, C, L)."""
    cfg = ckpt.config
    entries = ckpt.entries
    alpha = cfg["leaky_alpha"]
    xt = _t(x)

    branches = []
    n_branches = 5 if cfg["variant"] == "modified" else 3
    for i in range(n_branches):
        z = F.conv2d(xt, _t(entries[f"temporal.{i}.weight"]),
                     _t(entries[f"temporal.{i}.bias"]))
        z = F.leaky_relu(z, alpha)
        if cfg["variant"] == "modified" and i == 2:
            z = F.adaptive_avg_pool2d(z, (z.shape[2], cfg["adp_temporal_out"]))
        else:
            p = cfg["pool_size"]
            z = F.avg_pool2d(z, kernel_size=(1, p), stride=(1, p))
        branches.append(z)
    y = _bn_eval(torch.cat(branches, dim=3), entries, "temporal.bn")

    kb = cfg["num_channels"] // 2
    za = F.conv2d(y, _t(entries["spatial.a.weight"]), _t(entries["spatial.a.bias"]))
    za = F.adaptive_avg_pool2d(F.leaky_relu(za, alpha), (za.shape[2], cfg["adp_spatial_out"]))
    zb = F.conv2d(y, _t(entries["spatial.b.weight"]), _t(entries["spatial.b.bias"]),
                  stride=(kb, 1))
    zb = F.adaptive_avg_pool2d(F.leaky_relu(zb, alpha), (zb.shape[2], cfg["adp_spatial_out"]))
    y = _bn_eval(torch.cat([za, zb], dim=2), entries, "spatial.bn")

    z = F.conv2d(y, _t(entries["fusion1.weight"]), _t(entries["fusion1.bias"]))
    z = F.adaptive_avg_pool2d(F.leaky_relu(z, alpha), (1, cfg["adp_fusion_out"]))
    m = _bn_eval(z, entries, "fusion1.bn")

    z2 = F.conv2d(m, _t(entries["fusion2.weight"]), _t(entries["fusion2.bias"]))
    z2 = F.leaky_relu(z2, alpha)
    p2 = cfg["fusion2_pool"]
    z2 = F.avg_pool2d(z2, kernel_size=(1, p2), stride=(1, p2))
    z2 = _bn_eval(z2, entries, "fusion2.bn")
    feat = z2.mean(dim=(2, 3))

    h = F.relu(F.linear(feat, _t(entries["fc1.weight"]), _t(entries["fc1.bias"])))
    h = F.relu(F.linear(h, _t(entries["fc2.weight"]), _t(entries["fc2.bias"])))
    logits = F.linear(h, _t(entries["out.weight"]), _t(entries["out.bias"]))
    return logits.numpy()


def random_checkpoint(config: dict, seed: int) -> Checkpoint:
    """Seeded random parameters (f32-quantized) in the documented entry layout.

    Running statistics are randomized too, so eval-mode batch norm is
    exercised with non-trivial state.
    """
    rng = np.random.default_rng(seed)
    T = config["num_temporal_filters"]
    S = config["num_spatial_filters"]
    C = config["num_channels"]
    h = config["hidden_units"]
    K = config["num_classes"]
    kb = C // 2
    rows = 1 + (C - kb) // kb + 1

    entries = {}

    def tensor(name, shape, scale=0.3):
        entries[name] = rng.normal(scale=scale, size=shape)

    for i, width in enumerate(temporal_kernel_widths(config)):
        tensor(f"temporal.{i}.weight", (T, 1, 1, width))
        tensor(f"temporal.{i}.bias", (T,))
    for bn, dim in (("temporal.bn", T), ("spatial.bn", S),
                    ("fusion1.bn", S), ("fusion2.bn", S)):
        entries[f"{bn}.gamma"] = rng.uniform(0.5, 1.5, dim)
        entries[f"{bn}.beta"] = rng.normal(scale=0.2, size=dim)
    tensor("spatial.a.weight", (S, T, C, 1))
    tensor("spatial.a.bias", (S,))
    tensor("spatial.b.weight", (S, T, kb, 1))
    tensor("spatial.b.bias", (S,))
    tensor("fusion1.weight", (S, S, rows, 1))
    tensor("fusion1.bias", (S,))
    tensor("fusion2.weight", (S, S, 1, 1))
    tensor("fusion2.bias", (S,))
    tensor("fc1.weight", (h, S))
    tensor("fc1.bias", (h,))
    tensor("fc2.weight", (h, h))
    tensor("fc2.bias", (h,))
    tensor("out.weight", (K, h))
    tensor("out.bias", (K,))
    for bn in ("temporal.bn", "spatial.bn", "fusion1.bn", "fusion2.bn"):
        dim = T if bn == "temporal.bn" else S
        entries[f"{bn}.running_mean"] = rng.normal(scale=0.2, size=dim)
        entries[f"{bn}.running_var"] = rng.uniform(0.5, 2.0, dim)

    # quantize exactly as the format stores values
    entries = {k: v.astype(np.float32).astype(np.float64) for k, v in entries.items()}
    return Checkpoint(config=dict(config), entries=entries)
