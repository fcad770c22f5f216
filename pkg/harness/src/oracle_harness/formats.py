"""Independent readers/writers for the TSCK and EEGE interchange formats.

Implemented from docs/FORMATS.md alone; deliberately shares no code with
the primary package so that a round trip through these functions is a real
cross-implementation check.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

TSCK_MAGIC = b"TSCK"
EEGE_MAGIC = b"EEGE"
VERSION = 1

_FLOAT_KEYS = {"dropout_p", "leaky_alpha"}
_STR_KEYS = {"variant"}


class FormatError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: dict
    entries: dict = field(default_factory=dict)  # name -> float64 ndarray


def _need(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated: wanted {n} bytes, got {len(buf)}")
    return buf


def parse_config(text: str) -> dict:
    config = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        if key == "inception_windows":
            config[key] = tuple(float(v) for v in value.split(","))
        elif key in _STR_KEYS:
            config[key] = value
        elif key in _FLOAT_KEYS:
            config[key] = float(value)
        else:
            config[key] = int(value)
    return config


def config_text(config: dict) -> str:
    lines = []
    for key, value in config.items():
        if key == "inception_windows":
            lines.append(f"{key}={','.join(repr(float(v)) for v in value)}")
        else:
            lines.append(f"{key}={value}")
    return "\n".join(lines)


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        if _need(fh, 4) != TSCK_MAGIC:
            raise FormatError("bad TSCK magic")
        (version,) = struct.unpack("<I", _need(fh, 4))
        if version != VERSION:
            raise FormatError(f"unsupported TSCK version {version}")
        (cfg_len,) = struct.unpack("<I", _need(fh, 4))
        config = parse_config(_need(fh, cfg_len).decode("utf-8"))
        (n_entries,) = struct.unpack("<I", _need(fh, 4))
        entries = {}
        for _ in range(n_entries):
            (name_len,) = struct.unpack("<H", _need(fh, 2))
            name = _need(fh, name_len).decode("utf-8")
            (rank,) = struct.unpack("<B", _need(fh, 1))
            dims = struct.unpack(f"<{rank}I", _need(fh, 4 * rank))
            count = int(np.prod(dims)) if rank else 1
            payload = np.frombuffer(_need(fh, 4 * count), dtype="<f4")
            entries[name] = payload.astype(np.float64).reshape(dims)
    return Checkpoint(config=config, entries=entries)


def write_checkpoint(path, config: dict, entries: dict):
    text = config_text(config).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(TSCK_MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(text)))
        fh.write(text)
        fh.write(struct.pack("<I", len(entries)))
        for name, data in entries.items():
            data = np.asarray(data)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def read_eege(path):
    with open(path, "rb") as fh:
        if _need(fh, 4) != EEGE_MAGIC:
            raise FormatError("bad EEGE magic")
        (version,) = struct.unpack("<I", _need(fh, 4))
        if version != VERSION:
            raise FormatError(f"unsupported EEGE version {version}")
        e, c, length, fs, k = struct.unpack("<IIIII", _need(fh, 20))
        labels = np.frombuffer(_need(fh, e), dtype=np.uint8).astype(np.int64)
        data = np.frombuffer(_need(fh, 4 * e * c * length), dtype="<f4")
    return data.astype(np.float64).reshape(e, c, length), labels, fs, k


def write_eege(path, epochs, labels, fs: int, classes: int):
    epochs = np.asarray(epochs)
    labels = np.asarray(labels)
    e, c, length = epochs.shape
    with open(path, "wb") as fh:
        fh.write(EEGE_MAGIC)
        fh.write(struct.pack("<IIIIII", VERSION, e, c, length, int(fs), classes))
        fh.write(labels.astype(np.uint8).tobytes())
        fh.write(np.ascontiguousarray(epochs, dtype="<f4").tobytes())
