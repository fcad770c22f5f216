"""Configuration-driven inception-style EEG classifier.

Two variants share one code path: ``modified`` runs five temporal branches
(the last two at half the sampling rate) with an adaptive-pool bottleneck
on branch 3, ``original`` runs the first three branches with fixed pooling
only.  Both feed a full-channel + half-channel spatial stage, a two-stage
fusion block, and a two-hidden-layer classifier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import ConfigurationError, DimensionError
from .tensor import (
    BatchNormState,
    Tensor,
    adaptive_avg_pool_time,
    avg_pool_time,
    batch_norm,
    concat,
    conv2d,
    dropout,
    global_avg_pool,
    leaky_relu,
    linear,
    relu,
    softmax,
)

VARIANTS = ("original", "modified")

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.1


@dataclass(frozen=True)
class ModelConfig:
    """All architectural hyperparameters; every shape derives from these."""

    num_channels: int
    sampling_rate: int
    num_classes: int = 2
    variant: str = "modified"
    inception_windows: tuple = (0.5, 0.25, 0.125)
    num_temporal_filters: int = 15
    num_spatial_filters: int = 15
    hidden_units: int = 64
    dropout_p: float = 0.5
    adp_temporal_out: int = 16
    adp_spatial_out: int = 16
    adp_fusion_out: int = 8
    fusion2_pool: int = 2
    pool_size: int = 8
    leaky_alpha: float = 0.01

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.num_channels < 4:
            raise ConfigurationError(f"num_channels must be >= 4, got {self.num_channels}")
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")
        if not (0.0 <= self.dropout_p < 1.0):
            raise ConfigurationError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if len(self.inception_windows) != 3:
            raise ConfigurationError("inception_windows must list exactly three window lengths")
        ws = self.inception_windows
        if any(w <= 0 for w in ws) or list(ws) != sorted(ws, reverse=True):
            raise ConfigurationError("inception_windows must be positive and descending")
        if self.sampling_rate <= 0:
            raise ConfigurationError("sampling_rate must be positive")
        # smallest kernel (at the halved rate) must still be a valid convolution
        if math.floor(ws[-1] * self.sampling_rate / 2) < 2:
            raise ConfigurationError(
                f"smallest window {ws[-1]}s at half of {self.sampling_rate} Hz gives a kernel < 2")
        if self.adp_fusion_out < self.fusion2_pool:
            raise ConfigurationError("adp_fusion_out must be >= fusion2_pool")
        for name in ("num_temporal_filters", "num_spatial_filters", "hidden_units",
                     "adp_temporal_out", "adp_spatial_out", "adp_fusion_out",
                     "fusion2_pool", "pool_size"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.leaky_alpha < 0:
            raise ConfigurationError("leaky_alpha must be >= 0")

    # -- derived geometry ---------------------------------------------------

    def temporal_branches(self):
        """(kernel_width, pooling) per branch; pooling is 'avg' or 'adaptive'."""
        fs = self.sampling_rate
        branches = [
            (temporal_kernel_size(self.inception_windows[0], fs), "avg"),
            (temporal_kernel_size(self.inception_windows[1], fs), "avg"),
            (temporal_kernel_size(self.inception_windows[2], fs),
             "adaptive" if self.variant == "modified" else "avg"),
        ]
        if self.variant == "modified":
            # refinement branches: the two smallest windows at half rate
            branches.append((temporal_kernel_size(self.inception_windows[1], fs / 2), "avg"))
            branches.append((temporal_kernel_size(self.inception_windows[2], fs / 2), "avg"))
        return branches

    @property
    def spatial_kernel_a(self) -> int:
        return self.num_channels

    @property
    def spatial_kernel_b(self) -> int:
        return self.num_channels // 2

    @property
    def spatial_rows(self) -> int:
        b = self.spatial_kernel_b
        return 1 + ((self.num_channels - b) // b + 1)

    def temporal_output_length(self, n_samples: int) -> int:
        total = 0
        for width, pooling in self.temporal_branches():
            conv_len = n_samples - width + 1
            if conv_len < 1:
                raise ConfigurationError(
                    f"input of {n_samples} samples too short for kernel width {width}")
            if pooling == "avg":
                if conv_len < self.pool_size:
                    raise ConfigurationError(
                        f"branch output {conv_len} shorter than pool size {self.pool_size}")
                total += (conv_len - self.pool_size) // self.pool_size + 1
            else:
                if conv_len < self.adp_temporal_out:
                    raise ConfigurationError(
                        f"branch output {conv_len} shorter than adaptive target "
                        f"{self.adp_temporal_out}")
                total += self.adp_temporal_out
        return total

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = list(v) if isinstance(v, tuple) else v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "inception_windows" in d:
            d["inception_windows"] = tuple(d["inception_windows"])
        return cls(**d)

    def with_overrides(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


def temporal_kernel_size(window: float, rate: float) -> int:
    """Kernel width floor(window * rate), in samples."""
    if window <= 0 or rate <= 0:
        raise ConfigurationError("window and rate must be positive")
    k = math.floor(window * rate)
    if k < 2:
        raise ConfigurationError(
            f"window {window}s at {rate} Hz gives kernel width {k} (< 2)")
    return k


@dataclass
class ModelParams:
    """Named trainable tensors plus batch-norm running statistics."""

    tensors: dict = field(default_factory=dict)
    bn_states: dict = field(default_factory=dict)

    def trainable(self):
        return self.tensors.items()

    def copy(self) -> "ModelParams":
        return ModelParams(
            tensors={k: Tensor(v.data.copy(), requires_grad=v.requires_grad)
                     for k, v in self.tensors.items()},
            bn_states={k: s.copy() for k, s in self.bn_states.items()},
        )

    def zero_grad(self):
        for t in self.tensors.values():
            t.zero_grad()

    def entries(self):
        """Flat name -> ndarray view of everything a checkpoint stores."""
        out = {}
        for name, t in self.tensors.items():
            out[name] = t.data
        for name, s in self.bn_states.items():
            out[f"{name}.running_mean"] = s.running_mean
            out[f"{name}.running_var"] = s.running_var
        return out


def _parameter_specs(config: ModelConfig):
    """Ordered (name, shape, fan_in) for every trainable tensor.

    fan_in of None marks batch-norm affine parameters (gamma=1, beta=0).
    """
    T = config.num_temporal_filters
    S = config.num_spatial_filters
    C = config.num_channels
    specs = []
    for i, (width, _) in enumerate(config.temporal_branches()):
        specs.append((f"temporal.{i}.weight", (T, 1, 1, width), width))
        specs.append((f"temporal.{i}.bias", (T,), 0))
    specs.append(("temporal.bn.gamma", (T,), None))
    specs.append(("temporal.bn.beta", (T,), None))
    kb = config.spatial_kernel_b
    specs.append(("spatial.a.weight", (S, T, C, 1), T * C))
    specs.append(("spatial.a.bias", (S,), 0))
    specs.append(("spatial.b.weight", (S, T, kb, 1), T * kb))
    specs.append(("spatial.b.bias", (S,), 0))
    specs.append(("spatial.bn.gamma", (S,), None))
    specs.append(("spatial.bn.beta", (S,), None))
    rows = config.spatial_rows
    specs.append(("fusion1.weight", (S, S, rows, 1), S * rows))
    specs.append(("fusion1.bias", (S,), 0))
    specs.append(("fusion1.bn.gamma", (S,), None))
    specs.append(("fusion1.bn.beta", (S,), None))
    specs.append(("fusion2.weight", (S, S, 1, 1), S))
    specs.append(("fusion2.bias", (S,), 0))
    specs.append(("fusion2.bn.gamma", (S,), None))
    specs.append(("fusion2.bn.beta", (S,), None))
    h = config.hidden_units
    specs.append(("fc1.weight", (h, S), S))
    specs.append(("fc1.bias", (h,), 0))
    specs.append(("fc2.weight", (h, h), h))
    specs.append(("fc2.bias", (h,), 0))
    specs.append(("out.weight", (config.num_classes, h), h))
    specs.append(("out.bias", (config.num_classes,), 0))
    return specs


BN_NAMES = ("temporal.bn", "spatial.bn", "fusion1.bn", "fusion2.bn")


def parameter_count(config: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape, _ in _parameter_specs(config))


def build_model(config: ModelConfig, seed: int) -> ModelParams:
    """Seeded deterministic initialization of every parameter tensor.

    Weights are uniform in +-sqrt(6 / fan_in), biases zero, batch-norm
    gamma 1 / beta 0.  Each parameter draws from its own child stream of
    the seed, so values depend only on (seed, name, shape).
    """
    specs = _parameter_specs(config)
    streams = np.random.SeedSequence(seed).spawn(len(specs))
    params = ModelParams()
    for (name, shape, fan_in), ss in zip(specs, streams):
        if fan_in is None:
            data = np.ones(shape) if name.endswith("gamma") else np.zeros(shape)
        elif fan_in == 0:
            data = np.zeros(shape)
        else:
            limit = math.sqrt(6.0 / fan_in)
            data = np.random.Generator(np.random.PCG64(ss)).uniform(-limit, limit, shape)
        params.tensors[name] = Tensor(data, requires_grad=True)
    for bn in BN_NAMES:
        rows = {"temporal.bn": config.num_temporal_filters}.get(bn, config.num_spatial_filters)
        params.bn_states[bn] = BatchNormState.fresh(rows)
    return params


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def _bn(x, params, name, mode):
    return batch_norm(x, params.tensors[f"{name}.gamma"], params.tensors[f"{name}.beta"],
                      params.bn_states[name], mode, BN_MOMENTUM, BN_EPSILON)


def tception_forward(x: Tensor, params: ModelParams, config: ModelConfig,
                     mode: str = "eval") -> Tensor:
    """Parallel temporal branches, concatenated along time, batch-normalized."""
    if x.data.ndim != 4 or x.data.shape[1] != 1 or x.data.shape[2] != config.num_channels:
        raise DimensionError(
            f"tception_forward: expected (B, 1, {config.num_channels}, T), got {x.data.shape}")
    n_samples = x.data.shape[3]
    config.temporal_output_length(n_samples)  # raises on any too-short branch
    outs = []
    for i, (width, pooling) in enumerate(config.temporal_branches()):
        z = conv2d(x, params.tensors[f"temporal.{i}.weight"], params.tensors[f"temporal.{i}.bias"])
        z = leaky_relu(z, config.leaky_alpha)
        if pooling == "avg":
            z = avg_pool_time(z, config.pool_size, config.pool_size)
        else:
            z = adaptive_avg_pool_time(z, config.adp_temporal_out)
        outs.append(z)
    y = concat(outs, axis=3)
    return _bn(y, params, "temporal.bn", mode)


def sception_forward(y_t: Tensor, params: ModelParams, config: ModelConfig,
                     mode: str = "eval") -> Tensor:
    """Full-channel and half-channel spatial branches, stacked on the row axis."""
    if y_t.data.shape[2] != config.num_channels:
        raise DimensionError(
            f"sception_forward: expected {config.num_channels} channel rows, "
            f"got {y_t.data.shape[2]}")
    kb = config.spatial_kernel_b
    za = conv2d(y_t, params.tensors["spatial.a.weight"], params.tensors["spatial.a.bias"])
    za = adaptive_avg_pool_time(leaky_relu(za, config.leaky_alpha), config.adp_spatial_out)
    zb = conv2d(y_t, params.tensors["spatial.b.weight"], params.tensors["spatial.b.bias"],
                stride=(kb, 1))
    zb = adaptive_avg_pool_time(leaky_relu(zb, config.leaky_alpha), config.adp_spatial_out)
    y = concat([za, zb], axis=2)
    if y.data.shape[2] != config.spatial_rows:
        raise ConfigurationError(
            f"spatial stage produced {y.data.shape[2]} rows, expected {config.spatial_rows}")
    return _bn(y, params, "spatial.bn", mode)


def fusion_forward(y_s: Tensor, params: ModelParams, config: ModelConfig,
                   mode: str = "eval"):
    """Two-stage fusion.

    Stage 1 collapses the spatial rows with a (rows, 1) conv and adaptively
    pools time; its normalized map M yields the diagnostic y_f1 = GAP(M).
    Stage 2 mixes channels of M with a pointwise conv, average-pools, and
    normalizes; y_f2 = GAP of that, and is what the classifier consumes.
    """
    rows = config.spatial_rows
    if y_s.data.shape[2] != rows:
        raise DimensionError(f"fusion_forward: expected {rows} spatial rows, got {y_s.data.shape[2]}")
    z = conv2d(y_s, params.tensors["fusion1.weight"], params.tensors["fusion1.bias"])
    z = leaky_relu(z, config.leaky_alpha)
    z = adaptive_avg_pool_time(z, config.adp_fusion_out)
    m = _bn(z, params, "fusion1.bn", mode)
    y_f1 = global_avg_pool(m)

    z2 = conv2d(m, params.tensors["fusion2.weight"], params.tensors["fusion2.bias"])
    z2 = leaky_relu(z2, config.leaky_alpha)
    z2 = avg_pool_time(z2, config.fusion2_pool, config.fusion2_pool)
    z2 = _bn(z2, params, "fusion2.bn", mode)
    y_f2 = global_avg_pool(z2)
    return y_f1, y_f2


def classifier_forward(y_f2: Tensor, params: ModelParams, config: ModelConfig,
                       mode: str = "eval", rng: np.random.Generator | None = None) -> Tensor:
    h = relu(linear(y_f2, params.tensors["fc1.weight"], params.tensors["fc1.bias"]))
    h = dropout(h, config.dropout_p, mode, rng)
    h = relu(linear(h, params.tensors["fc2.weight"], params.tensors["fc2.bias"]))
    h = dropout(h, config.dropout_p, mode, rng)
    return linear(h, params.tensors["out.weight"], params.tensors["out.bias"])


def model_forward(x: Tensor, params: ModelParams, config: ModelConfig,
                  mode: str = "eval", rng: np.random.Generator | None = None):
    """Full forward pass; returns (probabilities, logits)."""
    y_t = tception_forward(x, params, config, mode)
    y_s = sception_forward(y_t, params, config, mode)
    _, y_f2 = fusion_forward(y_s, params, config, mode)
    logits = classifier_forward(y_f2, params, config, mode, rng)
    return Tensor(softmax(logits.data)), logits
