"""Deterministic class-separable EEG-like data for end-to-end checks.

Each epoch mixes 1/f-shaped noise across channels and adds a class-specific
narrowband burst with seeded random phase and center jitter.  Labels are
exact by construction, the whole dataset a pure function of the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import ContinuousRecording, EpochDataset
from .errors import ConfigurationError


@dataclass(frozen=True)
class BandProfile:
    center_hz: float
    bandwidth_hz: float
    amplitude: float  # burst peak amplitude in units of noise RMS


@dataclass(frozen=True)
class SynthConfig:
    channels: int
    fs: float
    epoch_len: int
    epochs_per_class: int
    classes: tuple  # of BandProfile
    noise_exponent: float = 1.0
    noise_level: float = 1.0
    mixing: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.epochs_per_class < 1:
            raise ConfigurationError("epochs_per_class must be >= 1")
        if self.channels < 1 or self.epoch_len < 2:
            raise ConfigurationError("channels must be >= 1 and epoch_len >= 2")
        if not (0.0 <= self.mixing <= 1.0):
            raise ConfigurationError("mixing strength must lie in [0, 1]")
        if len(self.classes) < 2:
            raise ConfigurationError("need at least two class band profiles")
        for i, band in enumerate(self.classes):
            if band.amplitude < 0:
                raise ConfigurationError(f"classes[{i}].amplitude must be >= 0")
            if band.center_hz + band.bandwidth_hz / 2 >= self.fs / 2:
                raise ConfigurationError(
                    f"classes[{i}].center_hz {band.center_hz} Hz (+bandwidth) reaches "
                    f"Nyquist {self.fs / 2} Hz")


def demo_two_class(seed: int = 0, epochs_per_class: int = 1000,
                   channels: int = 17, fs: float = 200.0, epoch_len: int = 200,
                   amplitude: float = 3.0) -> SynthConfig:
    """10 Hz vs 20 Hz bursts at ``amplitude`` x noise RMS."""
    return SynthConfig(
        channels=channels, fs=fs, epoch_len=epoch_len,
        epochs_per_class=epochs_per_class,
        classes=(BandProfile(10.0, 2.0, amplitude), BandProfile(20.0, 2.0, amplitude)),
        seed=seed,
    )


def _pink_noise(rng: np.random.Generator, channels: int, length: int,
                exponent: float, level: float) -> np.ndarray:
    """Spectrally shaped Gaussian noise, RMS ``level`` per channel, zero DC."""
    white = rng.standard_normal((channels, length))
    spec = np.fft.rfft(white, axis=-1)
    freqs = np.fft.rfftfreq(length)
    shape = np.zeros_like(freqs)
    shape[1:] = freqs[1:] ** (-exponent / 2.0)
    x = np.fft.irfft(spec * shape[None, :], n=length, axis=-1)
    rms = np.sqrt((x * x).mean(axis=-1, keepdims=True))
    return x * (level / np.maximum(rms, 1e-30))


def _mixing_matrix(rng: np.random.Generator, channels: int, strength: float) -> np.ndarray:
    """Identity blended with a seeded orthonormal rotation."""
    q, r = np.linalg.qr(rng.standard_normal((channels, channels)))
    q = q * np.sign(np.diag(r))[None, :]  # fix the sign convention
    return (1.0 - strength) * np.eye(channels) + strength * q


def generate(config: SynthConfig, emit_continuous: bool = False):
    """Build the dataset; optionally also a continuous stream + label track.

    Returns (EpochDataset, ContinuousRecording | None).  Epoch i belongs to
    class i // epochs_per_class; per-epoch randomness comes from child
    streams of the seed, so any epoch regenerates independently.
    """
    k = len(config.classes)
    n_epochs = k * config.epochs_per_class
    master = np.random.SeedSequence(config.seed)
    mix_stream, *epoch_streams = master.spawn(n_epochs + 1)
    mix = _mixing_matrix(np.random.default_rng(mix_stream), config.channels, config.mixing)

    t = np.arange(config.epoch_len) / config.fs
    epochs = np.empty((n_epochs, config.channels, config.epoch_len))
    labels = np.empty(n_epochs, dtype=np.int64)
    for i, stream in enumerate(epoch_streams):
        cls = i // config.epochs_per_class
        band = config.classes[cls]
        rng = np.random.default_rng(stream)
        noise = mix @ _pink_noise(rng, config.channels, config.epoch_len,
                                  config.noise_exponent, config.noise_level)
        f = band.center_hz + rng.uniform(-0.5, 0.5) * band.bandwidth_hz
        phase = rng.uniform(0.0, 2.0 * np.pi)
        burst = (band.amplitude * config.noise_level) * np.sin(2.0 * np.pi * f * t + phase)
        epochs[i] = noise + burst[None, :]
        labels[i] = cls

    ds = EpochDataset(epochs, config.fs, labels, class_count=k,
                      start_samples=np.arange(n_epochs) * config.epoch_len)
    if not emit_continuous:
        return ds, None

    continuous = epochs.transpose(1, 0, 2).reshape(config.channels, -1)
    # one track point per epoch start, a closing point at the end; values
    # encode the class at (c + 0.5) / K so a 0.5 threshold recovers 2-class labels
    times = np.append(np.arange(n_epochs) * (config.epoch_len / config.fs),
                      n_epochs * config.epoch_len / config.fs)
    values = np.append((labels + 0.5) / k, (labels[-1] + 0.5) / k)
    rec = ContinuousRecording(continuous, config.fs, times, values)
    return ds, rec
