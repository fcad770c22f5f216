"""Minimal dense tensor library with reverse-mode automatic differentiation.

Every operation the network needs is implemented here, nothing more: 2-D
cross-correlation, leaky ReLU, three flavours of average pooling, batch
normalization, affine layers, dropout, and a label-smoothed softmax
cross-entropy.  Arithmetic is double precision throughout; long 1-D
temporal kernels take an FFT path, everything else a windowed-matmul path.

Gradients are recorded as closures on the output tensor.  ``backward`` on a
scalar walks the graph once in reverse topological order and accumulates
into every ``requires_grad`` leaf additively, so repeated calls without
``zero_grad`` sum their contributions.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    LabelError,
    ParameterError,
    StatisticsError,
    UsageError,
)

# Kernels at least this wide (1-D, stride 1, unpadded, single input channel)
# run through the FFT correlation path.
_FFT_MIN_WIDTH = 16

# per-thread so concurrent inference over frozen weights cannot race
_grad_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference fast path)."""
    prev = _grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = prev


class Tensor:
    """Dense float64 array plus an optional slot in the backward graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_cache")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._cache = None  # memo for derived transforms (data is immutable)

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray, own: bool = False):
        """Add ``g`` into the gradient buffer.

        ``own=True`` promises the caller holds no other reference to ``g``
        (a freshly allocated array), letting the first accumulation adopt
        it without a copy.
        """
        if self.grad is None:
            if own:
                self.grad = g
            else:
                self.grad = np.array(g, dtype=np.float64)
                if self.grad.shape != self.data.shape:
                    self.grad = np.broadcast_to(self.grad, self.data.shape).copy()
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _result(data: np.ndarray, parents, backward_fn) -> Tensor:
    """Wrap an op result, recording the backward closure only when needed."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents) and _grad_enabled():
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def backward(loss: Tensor):
    """Reverse-mode sweep from a scalar loss.

    Visits each recorded node exactly once in reverse topological order and
    adds each node's contribution into its parents' gradient buffers.
    """
    if loss.data.ndim != 0:
        raise UsageError(f"backward requires a scalar, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    # Interior grads are scratch space for this sweep; only leaves accumulate
    # across repeated backward calls.
    for node in order:
        if node._backward is not None:
            node.grad = None

    loss.accumulate_grad(np.asarray(1.0))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise and reduction ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"add: shapes {a.data.shape} and {b.data.shape} differ")

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    return _result(a.data + b.data, (a, b), bwd)


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product; ``b`` may be a Tensor of identical shape or a scalar."""
    if isinstance(b, Tensor):
        if a.data.shape != b.data.shape:
            raise DimensionError(f"mul: shapes {a.data.shape} and {b.data.shape} differ")

        def bwd(g):
            if a.requires_grad:
                a.accumulate_grad(g * b.data, own=True)
            if b.requires_grad:
                b.accumulate_grad(g * a.data, own=True)

        return _result(a.data * b.data, (a, b), bwd)

    c = float(b)

    def bwd_scalar(g):
        if a.requires_grad:
            a.accumulate_grad(g * c, own=True)

    return _result(a.data * c, (a,), bwd_scalar)


def tensor_sum(x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, float(g)), own=True)

    return _result(np.asarray(x.data.sum()), (x,), bwd)


def concat(tensors, axis: int) -> Tensor:
    """Concatenate along ``axis``; all other extents must agree."""
    datas = [t.data for t in tensors]
    ndim = datas[0].ndim
    for d in datas[1:]:
        if d.ndim != ndim:
            raise DimensionError("concat: rank mismatch")
        for ax in range(ndim):
            if ax != axis % ndim and d.shape[ax] != datas[0].shape[ax]:
                raise DimensionError(f"concat: extent mismatch on axis {ax}")
    sizes = [d.shape[axis] for d in datas]
    bounds = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * ndim
                sl[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(sl)])

    return _result(np.concatenate(datas, axis=axis), tuple(tensors), bwd)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def leaky_relu(x: Tensor, alpha: float = 0.01) -> Tensor:
    """y = x for x >= 0, alpha * x otherwise."""
    if alpha < 0:
        raise ParameterError(f"leaky_relu: alpha must be >= 0, got {alpha}")

    if x.requires_grad and _grad_enabled():
        # keep the slope array: one multiply instead of a select in backward
        slope = np.where(x.data >= 0, 1.0, alpha)

        def bwd(g):
            x.accumulate_grad(g * slope, own=True)

        return _result(x.data * slope, (x,), bwd)

    # elementwise extremum of x and alpha*x is exactly leaky relu
    pick = np.maximum if alpha <= 1.0 else np.minimum
    return _result(pick(x.data, x.data * alpha), (x,), None)


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _conv_windows(x: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    """Strided view (B, Cin, Ho, Wo, kh, kw) of all kernel placements."""
    view = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    return view[:, :, ::sh, ::sw]


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor,
           stride=(1, 1), padding=(0, 0)) -> Tensor:
    """2-D cross-correlation (no kernel flip) with optional zero padding.

    x: (B, Cin, H, W), kernel: (Cout, Cin, kh, kw), bias: (Cout,).
    Output spatial extents follow floor((ext + 2*pad - k) / stride) + 1.
    """
    if x.data.ndim != 4:
        raise DimensionError(f"conv2d: input must be 4-D, got {x.data.ndim}-D")
    if kernel.data.ndim != 4:
        raise DimensionError(f"conv2d: kernel must be 4-D, got {kernel.data.ndim}-D")
    B, Cin, H, W = x.data.shape
    Cout, KCin, kh, kw = kernel.data.shape
    sh, sw = int(stride[0]), int(stride[1])
    ph, pw = int(padding[0]), int(padding[1])
    if KCin != Cin:
        raise DimensionError(
            f"conv2d: kernel expects {KCin} input channels on axis 1, input has {Cin}")
    if bias.data.shape != (Cout,):
        raise DimensionError(f"conv2d: bias must have shape ({Cout},), got {bias.data.shape}")
    if sh < 1 or sw < 1:
        raise ParameterError("conv2d: stride components must be >= 1")
    if kh > H + 2 * ph:
        raise DimensionError(f"conv2d: kernel height {kh} exceeds padded input height {H + 2 * ph}")
    if kw > W + 2 * pw:
        raise DimensionError(f"conv2d: kernel width {kw} exceeds padded input width {W + 2 * pw}")

    xp = x.data
    if ph or pw:
        xp = np.pad(xp, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    Hp, Wp = xp.shape[2], xp.shape[3]
    Ho = (Hp - kh) // sh + 1
    Wo = (Wp - kw) // sw + 1

    use_fft = (Cin == 1 and kh == 1 and sh == 1 and sw == 1
               and ph == 0 and pw == 0 and kw >= _FFT_MIN_WIDTH)

    if use_fft:
        # Valid 1-D correlation along the last axis via circular FFT
        # correlation; nfft = W keeps all valid lags wrap-free.  The input
        # spectrum is memoized on the tensor: parallel branches share it.
        if x._cache is None:
            x._cache = {}
        key = ("rfft", Wp)
        xf = x._cache.get(key)
        if xf is None:
            xf = np.fft.rfft(xp[:, 0], n=Wp, axis=-1)             # (B, H, F)
            x._cache[key] = xf
        kf = np.fft.rfft(kernel.data[:, 0, 0, :], n=Wp, axis=-1)  # (Cout, F)
        prod = xf[:, None, :, :] * np.conj(kf)[None, :, None, :]
        out = np.fft.irfft(prod, n=Wp, axis=-1)[..., :Wo]
        out = out + bias.data[None, :, None, None]

        def bwd_fft(g):
            gyf = np.fft.rfft(g, n=Wp, axis=-1)                   # (B, Cout, H, F)
            if kernel.requires_grad:
                # conj the small factor, then conj the tiny result
                pk = np.conj(np.einsum("bhf,bchf->cf", np.conj(xf), gyf))
                gk = np.fft.irfft(pk, n=Wp, axis=-1)[:, :kw]
                kernel.accumulate_grad(gk[:, None, None, :], own=True)
            if x.requires_grad:
                pg = np.einsum("bchf,cf->bhf", gyf, kf)
                gx = np.fft.irfft(pg, n=Wp, axis=-1)
                x.accumulate_grad(gx[:, None, :, :], own=True)
            if bias.requires_grad:
                bias.accumulate_grad(g.sum(axis=(0, 2, 3)), own=True)

        return _result(out, (x, kernel, bias), bwd_fft)

    if kh == Hp and kw == 1 and sh == 1 and sw == 1:
        # full-height column kernel: one contraction, no window views
        out = np.tensordot(xp, kernel.data[:, :, :, 0], axes=([1, 2], [1, 2]))
        out = np.ascontiguousarray(out.transpose(0, 2, 1))[:, :, None, :]
    else:
        cols = _conv_windows(xp, kh, kw, sh, sw)
        out = np.tensordot(cols, kernel.data, axes=([1, 4, 5], [1, 2, 3]))
        out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    out += bias.data[None, :, None, None]

    def bwd_direct(g):
        if kh == Hp and kw == 1 and sh == 1 and sw == 1 and not (ph or pw):
            g2 = g[:, :, 0, :]
            if kernel.requires_grad:
                gk = np.tensordot(g2, xp, axes=([0, 2], [0, 3]))      # (Co, Ci, H)
                kernel.accumulate_grad(gk[:, :, :, None], own=True)
            if x.requires_grad:
                gx = np.tensordot(g2, kernel.data[:, :, :, 0], axes=([1], [0]))
                x.accumulate_grad(np.ascontiguousarray(gx.transpose(0, 2, 3, 1)), own=True)
            if bias.requires_grad:
                bias.accumulate_grad(g.sum(axis=(0, 2, 3)), own=True)
            return
        if kernel.requires_grad:
            c = _conv_windows(xp, kh, kw, sh, sw)
            kernel.accumulate_grad(np.tensordot(g, c, axes=([0, 2, 3], [0, 2, 3])), own=True)
        if x.requires_grad:
            gxp = np.zeros((B, Cin, Hp, Wp))
            for ih in range(kh):
                for iw in range(kw):
                    contrib = np.tensordot(g, kernel.data[:, :, ih, iw], axes=([1], [0]))
                    gxp[:, :, ih:ih + sh * Ho:sh, iw:iw + sw * Wo:sw] += \
                        contrib.transpose(0, 3, 1, 2)
            if ph or pw:
                gxp = gxp[:, :, ph:ph + H, pw:pw + W]
            x.accumulate_grad(gxp, own=True)
        if bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)), own=True)

    return _result(out, (x, kernel, bias), bwd_direct)


# ---------------------------------------------------------------------------
# pooling
# ---------------------------------------------------------------------------

def avg_pool_time(x: Tensor, pool: int, stride: int) -> Tensor:
    """Fixed average pooling along the last axis; trailing remainder dropped."""
    if x.data.ndim != 4:
        raise DimensionError("avg_pool_time: input must be 4-D")
    pool, stride = int(pool), int(stride)
    if pool < 1 or stride < 1:
        raise ParameterError("avg_pool_time: pool and stride must be >= 1")
    W = x.data.shape[3]
    if pool > W:
        raise DimensionError(f"avg_pool_time: pool {pool} exceeds time extent {W}")
    Wo = (W - pool) // stride + 1
    if stride == pool:
        out = x.data[:, :, :, :Wo * pool] \
            .reshape(x.data.shape[:3] + (Wo, pool)).mean(axis=-1)
    else:
        view = np.lib.stride_tricks.sliding_window_view(x.data, pool, axis=3)
        out = view[:, :, :, ::stride, :].mean(axis=-1)

    def bwd(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            if stride == pool:
                # non-overlapping windows: single broadcast fill
                gx[:, :, :, :Wo * pool].reshape(x.data.shape[:3] + (Wo, pool))[:] = \
                    (g / pool)[:, :, :, :, None]
            else:
                gshare = g / pool
                for off in range(pool):
                    gx[:, :, :, off:off + stride * Wo:stride] += gshare
            x.accumulate_grad(gx, own=True)

    return _result(out, (x,), bwd)


def adaptive_avg_pool_time(x: Tensor, out_w: int) -> Tensor:
    """Adaptive average pooling along the last axis to exactly ``out_w`` bins.

    Bin i averages input indices [floor(i*W/out_w), ceil((i+1)*W/out_w));
    together the bins cover every input sample.
    """
    if x.data.ndim != 4:
        raise DimensionError("adaptive_avg_pool_time: input must be 4-D")
    out_w = int(out_w)
    W = x.data.shape[3]
    if out_w < 1:
        raise ParameterError("adaptive_avg_pool_time: out_w must be >= 1")
    if out_w > W:
        raise DimensionError(f"adaptive_avg_pool_time: out_w {out_w} exceeds time extent {W}")
    if W % out_w == 0:
        # equal bins [i*w, (i+1)*w): same floor/ceil boundaries, one reshape
        w = W // out_w
        out = x.data.reshape(x.data.shape[:3] + (out_w, w)).mean(axis=-1)

        def bwd_even(g):
            if x.requires_grad:
                gx = np.empty_like(x.data)
                gx.reshape(x.data.shape[:3] + (out_w, w))[:] = (g / w)[:, :, :, :, None]
                x.accumulate_grad(gx, own=True)

        return _result(out, (x,), bwd_even)

    bounds = [(int(np.floor(i * W / out_w)), int(np.ceil((i + 1) * W / out_w)))
              for i in range(out_w)]
    out = np.empty(x.data.shape[:3] + (out_w,))
    for i, (lo, hi) in enumerate(bounds):
        out[:, :, :, i] = x.data[:, :, :, lo:hi].mean(axis=-1)

    def bwd(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for i, (lo, hi) in enumerate(bounds):
                gx[:, :, :, lo:hi] += g[:, :, :, i:i + 1] / (hi - lo)
            x.accumulate_grad(gx, own=True)

    return _result(out, (x,), bwd)


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over both trailing axes: (B, C, H, W) -> (B, C)."""
    if x.data.ndim != 4:
        raise DimensionError("global_avg_pool: input must be 4-D")
    B, C, H, W = x.data.shape
    out = x.data.mean(axis=(2, 3))

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(g[:, :, None, None] / (H * W), x.data.shape).copy(),
                              own=True)

    return _result(out, (x,), bwd)


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------

@dataclass
class BatchNormState:
    """Per-channel running statistics, updated only in train mode."""

    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def fresh(cls, channels: int) -> "BatchNormState":
        return cls(np.zeros(channels), np.ones(channels))

    def copy(self) -> "BatchNormState":
        return BatchNormState(self.running_mean.copy(), self.running_var.copy())


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
               mode: str, momentum: float = 0.1, epsilon: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over (B, H, W).

    Train mode normalizes by the batch statistics (population variance) and
    blends them into the running statistics (unbiased variance, exponential
    momentum); eval mode normalizes by the running statistics.
    """
    if x.data.ndim != 4:
        raise DimensionError("batch_norm: input must be 4-D")
    B, C, H, W = x.data.shape
    if gamma.data.shape != (C,) or beta.data.shape != (C,):
        raise DimensionError(f"batch_norm: gamma/beta must have shape ({C},)")
    if mode not in ("train", "eval"):
        raise ParameterError(f"batch_norm: mode must be 'train' or 'eval', got {mode!r}")

    if mode == "eval":
        inv_std = 1.0 / np.sqrt(state.running_var + epsilon)
        xhat = (x.data - state.running_mean[None, :, None, None]) \
            * inv_std[None, :, None, None]
        out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

        def bwd_eval(g):
            if x.requires_grad:
                x.accumulate_grad(g * (gamma.data * inv_std)[None, :, None, None], own=True)
            if gamma.requires_grad:
                gamma.accumulate_grad((g * xhat).sum(axis=(0, 2, 3)), own=True)
            if beta.requires_grad:
                beta.accumulate_grad(g.sum(axis=(0, 2, 3)), own=True)

        return _result(out, (x, gamma, beta), bwd_eval)

    n = B * H * W
    if n < 2:
        raise StatisticsError(f"batch_norm: train mode needs >= 2 values per channel, got {n}")
    mu = x.data.mean(axis=(0, 2, 3))
    xhat = x.data - mu[None, :, None, None]
    var = np.einsum("bchw,bchw->c", xhat, xhat) / n
    inv_std = 1.0 / np.sqrt(var + epsilon)
    xhat *= inv_std[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    state.running_mean = (1.0 - momentum) * state.running_mean + momentum * mu
    unbiased = var * (n / (n - 1))
    state.running_var = (1.0 - momentum) * state.running_var + momentum * unbiased

    def bwd_train(g):
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xhat).sum(axis=(0, 2, 3)), own=True)
        if beta.requires_grad:
            beta.accumulate_grad(g.sum(axis=(0, 2, 3)), own=True)
        if x.requires_grad:
            gxhat = g * gamma.data[None, :, None, None]
            sum_gxhat = gxhat.sum(axis=(0, 2, 3))
            sum_gxhat_xhat = (gxhat * xhat).sum(axis=(0, 2, 3))
            gx = (inv_std[None, :, None, None] / n) * (
                n * gxhat
                - sum_gxhat[None, :, None, None]
                - xhat * sum_gxhat_xhat[None, :, None, None]
            )
            x.accumulate_grad(gx, own=True)

    return _result(out, (x, gamma, beta), bwd_train)


# ---------------------------------------------------------------------------
# affine, dropout, loss
# ---------------------------------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """y = x @ weight.T + bias with x: (B, n), weight: (m, n), bias: (m,)."""
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise DimensionError("linear: x and weight must be 2-D")
    if x.data.shape[1] != weight.data.shape[1]:
        raise DimensionError(
            f"linear: inner dimensions differ ({x.data.shape[1]} vs {weight.data.shape[1]})")
    if bias.data.shape != (weight.data.shape[0],):
        raise DimensionError("linear: bias shape does not match weight rows")
    out = x.data @ weight.data.T + bias.data

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(g @ weight.data, own=True)
        if weight.requires_grad:
            weight.accumulate_grad(g.T @ x.data, own=True)
        if bias.requires_grad:
            bias.accumulate_grad(g.sum(axis=0), own=True)

    return _result(out, (x, weight, bias), bwd)


def dropout(x: Tensor, p: float, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: train zeroes with probability p and rescales by 1/(1-p)."""
    if not (0.0 <= p < 1.0):
        raise ParameterError(f"dropout: p must satisfy 0 <= p < 1, got {p}")
    if mode not in ("train", "eval"):
        raise ParameterError(f"dropout: mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or p == 0.0:

        def bwd_id(g):
            if x.requires_grad:
                x.accumulate_grad(g)

        return _result(x.data.copy(), (x,), bwd_id)

    if rng is None:
        raise ParameterError("dropout: train mode with p > 0 requires a seeded rng")
    scale = 1.0 / (1.0 - p)
    mask = (rng.random(x.data.shape) >= p) * scale

    def bwd(g):
        if x.requires_grad:
            x.accumulate_grad(g * mask, own=True)

    return _result(x.data * mask, (x,), bwd)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax with max-shift stabilization (plain ndarray helper)."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax (plain ndarray helper)."""
    return np.exp(log_softmax(logits))


def softmax_cross_entropy_ls(logits: Tensor, targets, eps_ls: float) -> Tensor:
    """Mean label-smoothed cross-entropy over the batch.

    The target distribution puts (1 - eps_ls) on the true class plus
    eps_ls / K on every class; computed via log-sum-exp.
    """
    if logits.data.ndim != 2:
        raise DimensionError("softmax_cross_entropy_ls: logits must be (B, K)")
    B, K = logits.data.shape
    if K < 2:
        raise ParameterError(f"softmax_cross_entropy_ls: need K >= 2 classes, got {K}")
    if not (0.0 <= eps_ls < 1.0):
        raise ParameterError(f"softmax_cross_entropy_ls: eps_ls must be in [0, 1), got {eps_ls}")
    t = np.asarray(targets, dtype=np.int64)
    if t.shape != (B,):
        raise DimensionError(f"softmax_cross_entropy_ls: targets must have shape ({B},)")
    if t.min() < 0 or t.max() >= K:
        raise LabelError(f"softmax_cross_entropy_ls: class index outside [0, {K})")

    logp = log_softmax(logits.data)
    q = np.full((B, K), eps_ls / K)
    q[np.arange(B), t] += 1.0 - eps_ls
    loss = -(q * logp).sum(axis=1).mean()

    def bwd(g):
        if logits.requires_grad:
            logits.accumulate_grad((np.exp(logp) - q) * (float(g) / B), own=True)

    return _result(np.asarray(loss), (logits,), bwd)
