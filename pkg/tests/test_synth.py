"""Synthetic generator: balance, spectral separation, determinism, roundtrip."""

import numpy as np
import pytest

from tsception.dsp import attach_labels, segment_epochs
from tsception.errors import ConfigurationError
from tsception.synth import BandProfile, SynthConfig, demo_two_class, generate


def band_power(ds, f0, bw=2.0):
    freqs = np.fft.rfftfreq(ds.epoch_len, 1.0 / ds.sampling_rate)
    sel = (freqs >= f0 - bw / 2) & (freqs <= f0 + bw / 2)
    spectra = np.abs(np.fft.rfft(ds.epochs, axis=-1)) ** 2
    return spectra[:, :, sel].mean(axis=(1, 2))


class TestGenerate:
    def test_label_balance_exact(self):
        ds, _ = generate(demo_two_class(seed=0, epochs_per_class=37))
        assert ds.label_histogram().tolist() == [37, 37]

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_spectral_separation_6db(self, seed):
        ds, _ = generate(demo_two_class(seed=seed, epochs_per_class=40))
        c0, c1 = ds.labels == 0, ds.labels == 1
        p10 = band_power(ds, 10.0)
        p20 = band_power(ds, 20.0)
        sep10 = 10 * np.log10(p10[c0].mean() / p10[c1].mean())
        sep20 = 10 * np.log10(p20[c1].mean() / p20[c0].mean())
        assert sep10 >= 6.0 and sep20 >= 6.0

    def test_deterministic(self):
        cfg = demo_two_class(seed=5, epochs_per_class=10)
        a, _ = generate(cfg)
        b, _ = generate(cfg)
        assert np.array_equal(a.epochs, b.epochs)
        assert np.array_equal(a.labels, b.labels)

    def test_zero_amplitude_removes_separation(self):
        ds, _ = generate(demo_two_class(seed=3, epochs_per_class=40, amplitude=0.0))
        p10 = band_power(ds, 10.0)
        sep = abs(10 * np.log10(p10[ds.labels == 0].mean() / p10[ds.labels == 1].mean()))
        assert sep < 1.5

    def test_band_above_nyquist_rejected(self):
        with pytest.raises(ConfigurationError):
            SynthConfig(channels=4, fs=100, epoch_len=100, epochs_per_class=2,
                        classes=(BandProfile(10, 2, 1), BandProfile(49.5, 2, 1)))

    def test_continuous_roundtrip(self):
        ds, rec = generate(demo_two_class(seed=8, epochs_per_class=20), emit_continuous=True)
        seg = segment_epochs(rec, 1.0, 1.0)
        assert seg.n_epochs == ds.n_epochs
        np.testing.assert_allclose(seg.epochs, ds.epochs)
        labeled = attach_labels(seg, rec.label_times, rec.label_values, "perclos")
        assert np.array_equal(labeled.labels, ds.labels)

    def test_mixing_correlates_channels(self):
        # identity-orthonormal blend correlates most at strength 0.5: the
        # cross terms carry c(1-c)(Q + Q^T)
        plain = SynthConfig(channels=8, fs=100, epoch_len=200, epochs_per_class=20,
                            classes=(BandProfile(10, 2, 0.0), BandProfile(20, 2, 0.0)),
                            mixing=0.0, seed=4)
        mixed = SynthConfig(channels=8, fs=100, epoch_len=200, epochs_per_class=20,
                            classes=(BandProfile(10, 2, 0.0), BandProfile(20, 2, 0.0)),
                            mixing=0.5, seed=4)
        def mean_abs_corr(ds):
            total = 0.0
            for e in ds.epochs:
                c = np.corrcoef(e)
                total += np.abs(c[np.triu_indices(8, 1)]).mean()
            return total / ds.n_epochs
        ds_plain, _ = generate(plain)
        ds_mixed, _ = generate(mixed)
        assert mean_abs_corr(ds_mixed) > mean_abs_corr(ds_plain)
