"""Binary interchange formats and text sidecars.

All multi-byte values are little-endian.

EEGC (continuous): magic "EEGC", u32 version=1, u32 channels, u32 fs,
u64 n_samples, then channels x n_samples float32, channel-major.  The
label track travels as a separate text sidecar of ``time_s,value`` lines.

EEGE (epochs): magic "EEGE", u32 version=1, u32 epochs, u32 channels,
u32 epoch_len, u32 fs, u32 classes, u8 labels[epochs], then
epochs x channels x epoch_len float32, epoch-major.

TSCK (checkpoint): magic "TSCK", u32 version=1, u32-length-prefixed
``key=value`` config text, u32 n_entries, then per entry u16 name length,
name bytes, u8 rank, u32 dims[rank], float32 payload.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError, ShapeError
from .model import ModelConfig, ModelParams, _parameter_specs
from .tensor import BatchNormState, Tensor

EEGC_MAGIC = b"EEGC"
EEGE_MAGIC = b"EEGE"
TSCK_MAGIC = b"TSCK"
FORMAT_VERSION = 1


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file: wanted {n} bytes, got {len(buf)}")
    return buf


def _read_struct(fh, fmt: str):
    return struct.unpack(fmt, _read_exact(fh, struct.calcsize(fmt)))


def _check_magic(fh, expected: bytes):
    magic = _read_exact(fh, 4)
    if magic != expected:
        raise FormatError(f"bad magic {magic!r}, expected {expected!r}")
    (version,) = _read_struct(fh, "<I")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}")


# ---------------------------------------------------------------------------
# EEGC
# ---------------------------------------------------------------------------

def write_eegc(path, samples: np.ndarray, fs: int):
    samples = np.asarray(samples)
    if samples.ndim != 2:
        raise FormatError("EEGC payload must be a (C, N) matrix")
    c, n = samples.shape
    with open(path, "wb") as fh:
        fh.write(EEGC_MAGIC)
        fh.write(struct.pack("<IIIQ", FORMAT_VERSION, c, int(fs), n))
        fh.write(np.ascontiguousarray(samples, dtype="<f4").tobytes())


def read_eegc(path):
    """Returns (samples (C, N) float64, fs)."""
    with open(path, "rb") as fh:
        _check_magic(fh, EEGC_MAGIC)
        c, fs, n = _read_struct(fh, "<IIQ")
        raw = _read_exact(fh, 4 * c * n)
    samples = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(c, n)
    return samples, fs


def write_label_track(path, times, values):
    with open(path, "w", encoding="utf-8") as fh:
        for t, v in zip(times, values):
            fh.write(f"{float(t)!r},{float(v)!r}\n")


def read_label_track(path):
    times, values = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                t, v = line.split(",")
                times.append(float(t))
                values.append(float(v))
            except ValueError as exc:
                raise FormatError(f"bad label track line {lineno}: {line!r}") from exc
    return np.array(times), np.array(values)


# ---------------------------------------------------------------------------
# EEGE
# ---------------------------------------------------------------------------

def write_eege(path, epochs: np.ndarray, labels: np.ndarray, fs: int, class_count: int):
    epochs = np.asarray(epochs)
    labels = np.asarray(labels)
    if epochs.ndim != 3:
        raise FormatError("EEGE payload must be (E, C, L)")
    e, c, length = epochs.shape
    if labels.shape != (e,):
        raise FormatError(f"labels must have shape ({e},)")
    if labels.size and (labels.min() < 0 or labels.max() >= class_count):
        raise FormatError("labels outside [0, class_count)")
    if labels.size and labels.max() > 255:
        raise FormatError("labels exceed u8 range")
    with open(path, "wb") as fh:
        fh.write(EEGE_MAGIC)
        fh.write(struct.pack("<IIIIII", FORMAT_VERSION, e, c, length, int(fs), class_count))
        fh.write(labels.astype(np.uint8).tobytes())
        fh.write(np.ascontiguousarray(epochs, dtype="<f4").tobytes())


def read_eege(path):
    """Returns (epochs (E, C, L) float64, labels (E,) int64, fs, class_count)."""
    with open(path, "rb") as fh:
        _check_magic(fh, EEGE_MAGIC)
        e, c, length, fs, k = _read_struct(fh, "<IIIII")
        labels = np.frombuffer(_read_exact(fh, e), dtype=np.uint8).astype(np.int64)
        raw = _read_exact(fh, 4 * e * c * length)
    if labels.size and k and labels.max() >= k:
        raise FormatError("stored labels exceed the declared class count")
    epochs = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(e, c, length)
    return epochs, labels, fs, k


# ---------------------------------------------------------------------------
# TSCK checkpoints
# ---------------------------------------------------------------------------

def _config_to_text(config: ModelConfig) -> str:
    lines = []
    for key, value in config.to_dict().items():
        text = ",".join(repr(v) for v in value) if isinstance(value, list) else str(value)
        lines.append(f"{key}={text}")
    return "\n".join(lines)


def _config_from_text(text: str) -> ModelConfig:
    d = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        if key == "inception_windows":
            d[key] = tuple(float(v) for v in value.split(","))
        elif key == "variant":
            d[key] = value
        elif key in ("dropout_p", "leaky_alpha"):
            d[key] = float(value)
        else:
            d[key] = int(value)
    try:
        return ModelConfig.from_dict(d)
    except TypeError as exc:
        raise FormatError(f"checkpoint config block is incomplete: {exc}") from exc


def checkpoint_entry_names(config: ModelConfig):
    """Canonical entry order: trainables first, then running statistics."""
    names = [name for name, _, _ in _parameter_specs(config)]
    from .model import BN_NAMES
    for bn in BN_NAMES:
        names.append(f"{bn}.running_mean")
        names.append(f"{bn}.running_var")
    return names


def save_checkpoint(params: ModelParams, config: ModelConfig, path):
    """Write all parameters and running stats as float32 entries.

    Values quantize to 32 bits on disk; one save/load round trip therefore
    normalizes parameters so later round trips reproduce forwards exactly.
    """
    entries = params.entries()
    names = checkpoint_entry_names(config)
    config_text = _config_to_text(config).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(TSCK_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(config_text)))
        fh.write(config_text)
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            data = entries[name]
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def load_checkpoint(path, expect_config: ModelConfig | None = None):
    """Read (params, config); every shape is validated against the config.

    ``expect_config``, when given, must match the stored architecture
    exactly, otherwise a ShapeError is raised.
    """
    with open(path, "rb") as fh:
        _check_magic(fh, TSCK_MAGIC)
        (config_len,) = _read_struct(fh, "<I")
        config = _config_from_text(_read_exact(fh, config_len).decode("utf-8"))
        (n_entries,) = _read_struct(fh, "<I")
        stored = {}
        for _ in range(n_entries):
            (name_len,) = _read_struct(fh, "<H")
            name = _read_exact(fh, name_len).decode("utf-8")
            (rank,) = _read_struct(fh, "<B")
            shape = _read_struct(fh, f"<{rank}I")
            count = int(np.prod(shape)) if rank else 1
            raw = _read_exact(fh, 4 * count)
            stored[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)

    if expect_config is not None and config.to_dict() != expect_config.to_dict():
        raise ShapeError("checkpoint was built for a different model configuration")

    expected_names = checkpoint_entry_names(config)
    if sorted(stored) != sorted(expected_names):
        raise ShapeError("checkpoint entry names do not match the stored configuration")
    spec_shapes = {name: shape for name, shape, _ in _parameter_specs(config)}
    params = ModelParams()
    for name, shape in spec_shapes.items():
        if stored[name].shape != tuple(shape):
            raise ShapeError(
                f"entry {name!r} has shape {stored[name].shape}, config implies {tuple(shape)}")
        params.tensors[name] = Tensor(stored[name], requires_grad=True)
    from .model import BN_NAMES
    for bn in BN_NAMES:
        params.bn_states[bn] = BatchNormState(
            running_mean=stored[f"{bn}.running_mean"].copy(),
            running_var=stored[f"{bn}.running_var"].copy(),
        )
    return params, config
