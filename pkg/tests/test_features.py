import math

import numpy as np
import pytest

from seizchmm.errors import InputError
from seizchmm.features import (
    FRAME_LEN_S,
    FRAME_STEP_S,
    LOG_FLOOR,
    FeatureSeries,
    Recording,
    band_power_features,
    bandpass_filter,
    extract_features,
    frame_count,
    log_line_length,
    notch_filter,
)
from seizchmm.montage import MontageGraph, build_standard_montage

FS = 200.0


def sinusoid(freq, fs=FS, seconds=12.0, amp=1.0):
    t = np.arange(int(round(fs * seconds))) / fs
    return amp * np.sin(2.0 * np.pi * freq * t)


def tail_amplitude(x, freq, fs=FS, tail_s=2.0):
    """Steady-state amplitude of a sinusoid at `freq`, by least squares on the tail."""
    n_tail = int(round(fs * tail_s))
    seg = x[-n_tail:]
    t = np.arange(len(x))[-n_tail:] / fs
    design = np.column_stack([np.sin(2 * np.pi * freq * t), np.cos(2 * np.pi * freq * t)])
    coef, *_ = np.linalg.lstsq(design, seg, rcond=None)
    return float(np.hypot(*coef))


class TestLogLineLength:
    def test_hand_sum(self):
        # |1-0| + |0-1| + |1-0| = 3
        assert log_line_length([0.0, 1.0, 0.0, 1.0]) == pytest.approx(math.log(3 + LOG_FLOOR))

    def test_constant_window_hits_floor(self):
        assert log_line_length([2.5] * 10) == pytest.approx(math.log(LOG_FLOOR))

    def test_single_difference(self):
        assert log_line_length([0.0, 5.0]) == pytest.approx(math.log(5 + LOG_FLOOR))

    def test_too_short(self):
        with pytest.raises(InputError):
            log_line_length([1.0])


class TestBandpass:
    def test_passband_10hz_gain(self):
        out = bandpass_filter(sinusoid(10.0), FS)
        assert 0.9 <= tail_amplitude(out, 10.0) <= 1.0

    def test_dc_rejected(self):
        out = bandpass_filter(np.ones(int(FS * 12)), FS)
        assert np.max(np.abs(out[-400:])) < 1e-3

    def test_zeros_in_zeros_out(self):
        out = bandpass_filter(np.zeros(64), FS)
        assert np.array_equal(out, np.zeros(64))

    def test_output_length_preserved(self):
        assert bandpass_filter(np.random.default_rng(0).normal(size=333), FS).shape == (333,)

    def test_low_rate_rejected(self):
        with pytest.raises(InputError, match="100"):
            bandpass_filter(np.zeros(64), 100.0)

    def test_nonfinite_rejected(self):
        x = np.zeros(64)
        x[10] = np.nan
        with pytest.raises(InputError):
            bandpass_filter(x, FS)

    def test_linearity(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=500)
        lhs = bandpass_filter(7.0 * x, FS)
        rhs = 7.0 * bandpass_filter(x, FS)
        assert np.linalg.norm(lhs - rhs) <= 1e-9 * np.linalg.norm(rhs)


class TestNotch:
    def test_60hz_attenuated_20db(self):
        out = notch_filter(sinusoid(60.0), FS)
        assert tail_amplitude(out, 60.0) <= 0.1

    def test_10hz_nearly_untouched(self):
        out = notch_filter(sinusoid(10.0), FS)
        assert 0.95 <= tail_amplitude(out, 10.0) <= 1.05

    def test_skipped_below_nyquist_margin(self):
        x = sinusoid(30.0, fs=100.0, seconds=2.0)
        assert np.array_equal(notch_filter(x, 100.0), x)


class TestBandPowerFeatures:
    def test_alpha_dominates_for_10hz(self):
        window = sinusoid(10.0, seconds=1.0)
        theta, delta, alpha, beta = band_power_features(window, FS)
        assert alpha > theta and alpha > delta and alpha > beta

    def test_zero_window_floors(self):
        out = band_power_features(np.zeros(200), FS)
        assert np.allclose(out, math.log(LOG_FLOOR))

    def test_scaling_shifts_by_log10(self):
        rng = np.random.default_rng(2)
        w = rng.normal(size=200)
        diff = band_power_features(10.0 * w, FS) - band_power_features(w, FS)
        assert np.allclose(diff, math.log(10.0), atol=1e-9)

    def test_wrong_length_rejected(self):
        with pytest.raises(InputError, match="window length"):
            band_power_features(np.zeros(150), FS)


def ten_second_recording(channels=("A", "B"), seconds=10.0, fs=FS, seed=3):
    rng = np.random.default_rng(seed)
    samples = rng.normal(size=(len(channels), int(round(fs * seconds))))
    return Recording(fs, tuple(channels), samples)


@pytest.fixture(scope="module")
def pair_montage():
    return MontageGraph(("A", "B"), (("A", "B", "neighbor"),))


class TestExtractFeatures:

    def test_frame_count_ten_seconds(self, pair_montage):
        feats = extract_features(ten_second_recording(), pair_montage)
        assert feats.n_frames == 13
        assert feats.frame_starts_s[-1] == pytest.approx(9.0)

    def test_single_window(self, pair_montage):
        feats = extract_features(ten_second_recording(seconds=1.0), pair_montage)
        assert feats.n_frames == 1

    def test_frame_count_formula(self):
        for seconds in (1.0, 1.74, 1.76, 2.5, 3.1, 4.0, 5.5, 7.3, 9.9, 12.0):
            n = int(round(FS * seconds))
            expected = math.floor((seconds - FRAME_LEN_S) / FRAME_STEP_S) + 1
            assert frame_count(n, FS) == expected, seconds

    def test_missing_channel_named(self):
        rec = ten_second_recording(channels=("A",))
        with pytest.raises(InputError, match="Cz"):
            extract_features(rec, build_standard_montage())

    def test_too_short_recording(self, pair_montage):
        with pytest.raises(InputError):
            extract_features(ten_second_recording(seconds=0.5), pair_montage)

    def test_montage_order_and_subset(self):
        rec = ten_second_recording(channels=("X", "B", "A"))
        montage = MontageGraph(("A", "B"), (("A", "B", "neighbor"),))
        feats = extract_features(rec, montage)
        assert feats.channels == ("A", "B")

    def test_deterministic(self, pair_montage):
        rec = ten_second_recording()
        a = extract_features(rec, pair_montage)
        b = extract_features(rec, pair_montage)
        assert np.array_equal(a.values, b.values)

    def test_silent_channel_stays_finite(self, pair_montage):
        rec = Recording(FS, ("A", "B"), np.zeros((2, 2000)))
        feats = extract_features(rec, pair_montage)
        assert np.all(np.isfinite(feats.values))

    def test_feature_series_rejects_nonfinite(self):
        with pytest.raises(InputError):
            FeatureSeries(("A",), np.full((1, 2, 5), np.inf))
