"""Continuous-recording conditioning: filters, decimation, epochs, labels.

The Butterworth designs are built from first principles: analog low-pass
prototype poles, frequency pre-warping, the band transform, and the
bilinear map into stable second-order sections.  Zero-phase filtering runs
each section forward and backward over an odd-reflection-padded signal.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AlignmentError,
    ConfigurationError,
    DataError,
    EmptyInputError,
    LabelError,
    LengthError,
    NyquistError,
    ParameterError,
)


# ---------------------------------------------------------------------------
# filter design
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Biquad:
    """One normalized second-order section: b0 + b1 z^-1 + b2 z^-2 over
    1 + a1 z^-1 + a2 z^-2."""

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float

    def poles(self):
        return np.roots([1.0, self.a1, self.a2])

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0))


@dataclass(frozen=True)
class BiquadCascade:
    sections: tuple

    @property
    def order(self) -> int:
        return 2 * len(self.sections)

    def is_stable(self) -> bool:
        return all(s.is_stable() for s in self.sections)

    def response(self, freqs_hz, fs: float) -> np.ndarray:
        """Complex single-pass frequency response at the given frequencies."""
        w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=np.float64) / fs
        z1 = np.exp(-1j * w)
        z2 = z1 * z1
        h = np.ones_like(z1)
        for s in self.sections:
            h = h * (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2)
        return h


def _prototype_poles(n: int):
    """Poles of the unit-cutoff analog Butterworth low-pass of order n."""
    return [cmath.exp(1j * math.pi * (2 * k + n + 1) / (2 * n)) for k in range(n)]


def _bilinear_pole(s: complex, fs: float) -> complex:
    return (2.0 * fs + s) / (2.0 * fs - s)


def _pair_conjugates(poles, tol=1e-8):
    """Group a conjugate-closed pole list into (p, q) pairs per section."""
    complex_poles = sorted(
        (p for p in poles if p.imag > tol),
        key=lambda p: (round(p.real, 10), round(p.imag, 10)),
    )
    real_poles = sorted(
        (p.real for p in poles if abs(p.imag) <= tol))
    pairs = [(p, p.conjugate()) for p in complex_poles]
    for i in range(0, len(real_poles), 2):
        pairs.append((complex(real_poles[i]), complex(real_poles[i + 1])))
    if 2 * len(pairs) != len(poles):
        raise ConfigurationError("pole set is not conjugate-closed")
    return pairs


def butter_bandpass_design(low: float, high: float, fs: float, order: int) -> BiquadCascade:
    """Butterworth band-pass with ``order`` poles total (order/2 sections).

    Analog prototype of order/2, pre-warped band edges, low-pass-to-band-pass
    transform, bilinear map.  Each section carries one zero at z=+1 and one
    at z=-1; the design gain splits evenly across sections.
    """
    if order < 2 or order % 2 != 0:
        raise ParameterError(f"band-pass order must be even and >= 2, got {order}")
    if not (0.0 < low < high):
        raise ParameterError(f"need 0 < low < high, got low={low}, high={high}")
    if high >= fs / 2.0:
        raise NyquistError(f"high edge {high} Hz >= Nyquist {fs / 2.0} Hz")
    n = order // 2

    w1 = 2.0 * fs * math.tan(math.pi * low / fs)
    w2 = 2.0 * fs * math.tan(math.pi * high / fs)
    bw = w2 - w1
    w0sq = w1 * w2

    analog_poles = []
    for p in _prototype_poles(n):
        pb = p * bw
        disc = cmath.sqrt(pb * pb - 4.0 * w0sq)
        analog_poles.append(0.5 * (pb + disc))
        analog_poles.append(0.5 * (pb - disc))

    digital_poles = [_bilinear_pole(s, fs) for s in analog_poles]
    # gain: k_a * prod(2fs - s_zero) / prod(2fs - s_pole), zeros: n at s=0
    num = (bw ** n) * ((2.0 * fs) ** n)
    den = 1.0
    for s in analog_poles:
        den *= (2.0 * fs - s)
    gain = (num / den).real
    section_gain = gain ** (1.0 / n)

    sections = []
    for p, q in _pair_conjugates(digital_poles):
        a1 = -(p + q).real
        a2 = (p * q).real
        sections.append(Biquad(section_gain, 0.0, -section_gain, a1, a2))
    cascade = BiquadCascade(tuple(sections))
    if not cascade.is_stable():
        raise ConfigurationError("band-pass design produced an unstable section")
    return cascade


def butter_lowpass_design(cutoff: float, fs: float, order: int) -> BiquadCascade:
    """Butterworth low-pass with ``order`` poles (order even, order/2 sections)."""
    if order < 2 or order % 2 != 0:
        raise ParameterError(f"low-pass order must be even and >= 2, got {order}")
    if not (0.0 < cutoff < fs / 2.0):
        raise NyquistError(f"cutoff {cutoff} Hz outside (0, Nyquist {fs / 2.0})")

    wc = 2.0 * fs * math.tan(math.pi * cutoff / fs)
    analog_poles = [p * wc for p in _prototype_poles(order)]
    digital_poles = [_bilinear_pole(s, fs) for s in analog_poles]
    num = wc ** order
    den = 1.0
    for s in analog_poles:
        den *= (2.0 * fs - s)
    gain = (num / den).real
    section_gain = gain ** (2.0 / order)  # each section soaks up two zeros at z=-1

    sections = []
    for p, q in _pair_conjugates(digital_poles):
        a1 = -(p + q).real
        a2 = (p * q).real
        sections.append(Biquad(section_gain, 2.0 * section_gain, section_gain, a1, a2))
    cascade = BiquadCascade(tuple(sections))
    if not cascade.is_stable():
        raise ConfigurationError("low-pass design produced an unstable section")
    return cascade


# ---------------------------------------------------------------------------
# zero-phase filtering
# ---------------------------------------------------------------------------

def _sos_pass(cascade: BiquadCascade, x: np.ndarray) -> np.ndarray:
    """Single forward pass of the cascade over the last axis.

    Uses transposed direct form II per section with steady-state initial
    conditions scaled to the first sample, so step inputs start settled.
    """
    y = x
    for s in cascade.sections:
        y = _biquad_pass(s, y)
    return y


def _biquad_pass(s: Biquad, x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    y = np.empty_like(x)
    denom = 1.0 + s.a1 + s.a2
    if abs(denom) > 1e-12:
        # state for a unit DC input held forever, scaled by x[0]
        yss = (s.b0 + s.b1 + s.b2) / denom
        z1 = (yss - s.b0) * x[..., 0]
        z2 = (s.b2 - s.a2 * yss) * x[..., 0]
    else:
        z1 = np.zeros_like(x[..., 0])
        z2 = np.zeros_like(x[..., 0])
    for i in range(n):
        xi = x[..., i]
        yi = s.b0 * xi + z1
        y[..., i] = yi
        z1 = s.b1 * xi - s.a1 * yi + z2
        z2 = s.b2 * xi - s.a2 * yi
    return y


def filtfilt(cascade: BiquadCascade, signal: np.ndarray) -> np.ndarray:
    """Forward-backward application: zero net phase, squared magnitude.

    The signal (last axis) is padded with odd reflections of length
    3 * filter order, filtered, reversed, filtered again, reversed, and
    trimmed.  Accepts (N,) or (C, N).
    """
    x = np.asarray(signal, dtype=np.float64)
    pad = 3 * cascade.order
    n = x.shape[-1]
    if n <= pad:
        raise LengthError(f"signal length {n} must exceed 3 * order = {pad}")
    head = 2.0 * x[..., :1] - x[..., pad:0:-1]
    tail = 2.0 * x[..., -1:] - x[..., -2:-pad - 2:-1]
    ext = np.concatenate([head, x, tail], axis=-1)

    y = _sos_pass(cascade, ext)
    y = _sos_pass(cascade, y[..., ::-1])
    y = y[..., ::-1]
    return np.ascontiguousarray(y[..., pad:pad + n])


def decimate(signal: np.ndarray, fs: float, factor: int):
    """Anti-aliased downsampling: zero-phase low-pass, then every factor-th sample.

    The guard filter is an order-8 Butterworth at 0.8 x the target Nyquist.
    Returns (decimated_signal, new_fs).
    """
    if int(factor) != factor or factor < 2:
        raise ParameterError(f"decimation factor must be an integer >= 2, got {factor}")
    factor = int(factor)
    cutoff = 0.8 * (fs / (2.0 * factor))
    guard = butter_lowpass_design(cutoff, fs, order=8)
    smoothed = filtfilt(guard, signal)
    return np.ascontiguousarray(smoothed[..., ::factor]), fs / factor


# ---------------------------------------------------------------------------
# recordings, epochs, labels
# ---------------------------------------------------------------------------

@dataclass
class ContinuousRecording:
    """Multi-channel raw signal with an optional (time, value) label track."""

    samples: np.ndarray          # (C, N)
    sampling_rate: float
    label_times: np.ndarray | None = None
    label_values: np.ndarray | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[1] == 0:
            raise DataError("recording must be a (C, N) matrix with N > 0")
        if self.label_times is not None:
            if self.label_values is None:
                raise DataError("label track has times but no values")
            self.label_times = np.asarray(self.label_times, dtype=np.float64)
            self.label_values = np.asarray(self.label_values, dtype=np.float64)
            if np.any(np.diff(self.label_times) < 0):
                raise DataError("label track times must be non-decreasing")
            if self.label_times.size and (
                    self.label_times[0] < 0 or self.label_times[-1] > self.duration + 1e-9):
                raise DataError("label track times must lie within [0, duration]")

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sampling_rate


@dataclass
class EpochDataset:
    """Segmented (epoch, channel, sample) examples with integer labels."""

    epochs: np.ndarray                 # (E, C, L)
    sampling_rate: float
    labels: np.ndarray | None = None   # (E,) ints in [0, K)
    class_count: int = 0
    start_samples: np.ndarray | None = None  # segment origins, for labeling

    def __post_init__(self):
        self.epochs = np.asarray(self.epochs, dtype=np.float64)
        if self.epochs.ndim != 3:
            raise DataError("epochs must be a (E, C, L) array")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)

    @property
    def n_epochs(self) -> int:
        return self.epochs.shape[0]

    @property
    def n_channels(self) -> int:
        return self.epochs.shape[1]

    @property
    def epoch_len(self) -> int:
        return self.epochs.shape[2]

    def label_histogram(self) -> np.ndarray:
        if self.labels is None:
            raise DataError("dataset is unlabeled")
        return np.bincount(self.labels, minlength=self.class_count)


def segment_epochs(rec: ContinuousRecording, window: float, step: float) -> EpochDataset:
    """Cut [i*step, i*step + window) windows; count = floor((dur - win)/step) + 1."""
    if step <= 0:
        raise ParameterError(f"step must be positive, got {step}")
    fs = rec.sampling_rate
    length = int(round(window * fs))
    step_samples = int(round(step * fs))
    if length < 1 or step_samples < 1:
        raise ParameterError("window and step must each cover at least one sample")
    if length > rec.n_samples:
        raise EmptyInputError(
            f"window of {length} samples exceeds recording of {rec.n_samples}")
    count = (rec.n_samples - length) // step_samples + 1
    starts = np.arange(count) * step_samples
    epochs = np.stack([rec.samples[:, s:s + length] for s in starts])
    return EpochDataset(epochs, fs, start_samples=starts)


def minmax_scale(epoch: np.ndarray) -> np.ndarray:
    """Affine map of one epoch onto [0, 1]; a constant epoch maps to all 0.5."""
    epoch = np.asarray(epoch, dtype=np.float64)
    if not np.all(np.isfinite(epoch)):
        raise DataError("epoch contains non-finite values")
    lo = epoch.min()
    hi = epoch.max()
    if hi == lo:
        return np.full_like(epoch, 0.5)
    return (epoch - lo) / (hi - lo)


def scale_dataset(ds: EpochDataset) -> EpochDataset:
    scaled = np.stack([minmax_scale(e) for e in ds.epochs])
    return EpochDataset(scaled, ds.sampling_rate, ds.labels, ds.class_count,
                        ds.start_samples)


def perclos_label(value: float) -> int:
    """Threshold at 0.5: below is awake (0), at or above is drowsy (1)."""
    if not (0.0 <= value <= 1.0):
        raise LabelError(f"perclos value must lie in [0, 1], got {value}")
    return 1 if value >= 0.5 else 0


def rating_label(value: float, thresholds) -> int:
    """Class index = number of thresholds strictly below the rating."""
    return int(sum(1 for t in thresholds if value > t))


def reject_epochs_mad(ds: EpochDataset, mad_multiple: float) -> EpochDataset:
    """Drop epochs whose amplitude exceeds mad_multiple x the channel MAD.

    Stand-in for manual artifact review: per channel, the median absolute
    deviation is estimated over the whole dataset; any epoch containing a
    sample beyond the threshold on any channel is discarded.
    """
    if mad_multiple <= 0:
        raise ParameterError("mad_multiple must be positive")
    flat = ds.epochs.transpose(1, 0, 2).reshape(ds.n_channels, -1)
    med = np.median(flat, axis=1)
    mad = np.maximum(np.median(np.abs(flat - med[:, None]), axis=1), 1e-12)
    hi = (med + mad_multiple * mad)[None, :, None]
    lo = (med - mad_multiple * mad)[None, :, None]
    keep = ~((ds.epochs > hi) | (ds.epochs < lo)).any(axis=(1, 2))
    return EpochDataset(
        ds.epochs[keep], ds.sampling_rate,
        None if ds.labels is None else ds.labels[keep],
        ds.class_count,
        None if ds.start_samples is None else ds.start_samples[keep],
    )


def attach_labels(ds: EpochDataset, label_times: np.ndarray, label_values: np.ndarray,
                  mode: str = "perclos", thresholds=None) -> EpochDataset:
    """Label each epoch from the track value preceding its midpoint.

    The track must cover every midpoint: first sample at or before it, last
    sample at or after it.  ``perclos`` thresholds at 0.5 into two classes;
    ``rating`` maps through the ordered thresholds into len+1 classes.
    """
    if ds.start_samples is None:
        raise AlignmentError("dataset carries no segment origins to align labels to")
    times = np.asarray(label_times, dtype=np.float64)
    values = np.asarray(label_values, dtype=np.float64)
    if times.size == 0:
        raise AlignmentError("label track is empty")
    if mode == "perclos":
        class_count = 2
    elif mode == "rating":
        if not thresholds:
            raise ParameterError("rating mode requires ordered thresholds")
        thresholds = sorted(thresholds)
        class_count = len(thresholds) + 1
    else:
        raise ParameterError(f"unknown label mode {mode!r}")

    mids = (ds.start_samples + ds.epoch_len / 2.0) / ds.sampling_rate
    labels = np.empty(ds.n_epochs, dtype=np.int64)
    for i, t in enumerate(mids):
        if t < times[0] or t > times[-1]:
            raise AlignmentError(
                f"epoch midpoint {t:.3f}s outside label track "
                f"[{times[0]:.3f}, {times[-1]:.3f}]s")
        j = int(np.searchsorted(times, t, side="right")) - 1
        v = values[j]
        labels[i] = perclos_label(v) if mode == "perclos" else rating_label(v, thresholds)
    return EpochDataset(ds.epochs, ds.sampling_rate, labels, class_count,
                        ds.start_samples)


# ---------------------------------------------------------------------------
# profiles and the pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineProfile:
    """One named preprocessing recipe; stages run in listed order."""

    name: str
    channels: int | None
    band: tuple | None            # (low, high) Hz, None to skip filtering
    filter_order: int = 4
    target_fs: float | None = None
    window_s: float = 1.0
    step_s: float = 1.0
    scale: bool = False
    label_mode: str | None = None  # perclos | rating | None
    thresholds: tuple | None = None
    reject_mad: float | None = None


# The two dataset geometries the architecture targets.  The workload
# profile band-limits to 45 Hz (headset Nyquist is 64) and bins the 1-9
# rating at {<=3, 4-6, >=7}; both are overridable via a custom profile.
SEEDVIG_PROFILE = PipelineProfile(
    name="seedvig", channels=17, band=(1.0, 75.0), filter_order=4,
    target_fs=200.0, window_s=1.0, step_s=1.0, scale=False,
    label_mode="perclos",
)
STEW_PROFILE = PipelineProfile(
    name="stew", channels=14, band=(1.0, 45.0), filter_order=4,
    target_fs=None, window_s=1.0, step_s=0.5, scale=True,
    label_mode="rating", thresholds=(3, 6),
)

PROFILES = {p.name: p for p in (SEEDVIG_PROFILE, STEW_PROFILE)}


def preprocess_pipeline(rec: ContinuousRecording, profile: PipelineProfile) -> EpochDataset:
    """Filter -> decimate -> segment -> (reject) -> scale -> label."""
    if profile.channels is not None and rec.channels != profile.channels:
        raise ConfigurationError(
            f"profile {profile.name!r} expects {profile.channels} channels, "
            f"recording has {rec.channels}")
    samples = rec.samples
    fs = rec.sampling_rate
    if profile.band is not None:
        band = butter_bandpass_design(profile.band[0], profile.band[1], fs,
                                      profile.filter_order)
        samples = filtfilt(band, samples)
    if profile.target_fs is not None and fs != profile.target_fs:
        ratio = fs / profile.target_fs
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 2:
            raise ConfigurationError(
                f"cannot decimate {fs} Hz to {profile.target_fs} Hz by an integer factor")
        samples, fs = decimate(samples, fs, int(round(ratio)))

    conditioned = ContinuousRecording(samples, fs, rec.label_times, rec.label_values)
    ds = segment_epochs(conditioned, profile.window_s, profile.step_s)
    if profile.reject_mad is not None:
        ds = reject_epochs_mad(ds, profile.reject_mad)
    if profile.scale:
        ds = scale_dataset(ds)
    if profile.label_mode is not None:
        if rec.label_times is None:
            raise AlignmentError(
                f"profile {profile.name!r} labels epochs but the recording has no label track")
        ds = attach_labels(ds, conditioned.label_times, conditioned.label_values,
                           profile.label_mode, profile.thresholds)
    return ds
