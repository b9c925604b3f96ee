"""Preprocessing filters and per-frame feature extraction.

The pipeline per channel: fourth-order Butterworth high-pass at 1.6 Hz,
fourth-order Butterworth low-pass at 50 Hz, then a Q=20 notch at 60 Hz
(skipped when the sampling rate puts 60 Hz at or above Nyquist).  Features
are computed on 1 s windows advancing by 750 ms: four log band-magnitude
sums (1-4, 4-8, 8-13, 13-30 Hz, labeled theta/delta/alpha/beta) from a
Tukey-tapered DFT, plus the log line length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import InputError
from .montage import MontageGraph

HIGHPASS_HZ = 1.6
LOWPASS_HZ = 50.0
NOTCH_HZ = 60.0
NOTCH_Q = 20.0
FRAME_LEN_S = 1.0
FRAME_STEP_S = 0.75
LOG_FLOOR = 1e-10

# (label, low, high); bins with low <= f < high are summed.  Band labels
# follow the source convention even where theta/delta swap the usual order.
BANDS = (
    ("theta", 1.0, 4.0),
    ("delta", 4.0, 8.0),
    ("alpha", 8.0, 13.0),
    ("beta", 13.0, 30.0),
)

FEATURE_NAMES = tuple(b[0] for b in BANDS) + ("loglinelength",)
N_FEATURES = len(FEATURE_NAMES)


@dataclass
class Recording:
    """Raw multichannel samples at a fixed rate, with optional seizure labels.

    ``labels`` maps a channel name (or ``"*"`` for all channels) to a tuple
    of (onset_s, offset_s) intervals.
    """

    sample_rate: float
    channels: tuple[str, ...]
    samples: np.ndarray  # (n_channels, n_samples) float64, microvolts
    labels: dict[str, tuple[tuple[float, float], ...]] | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise InputError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 2 or self.samples.shape[0] != len(self.channels):
            raise InputError(
                f"samples shape {self.samples.shape} does not match {len(self.channels)} channels"
            )
        if self.labels:
            dur = self.duration_s
            for ch, intervals in self.labels.items():
                for onset, offset in intervals:
                    if not (0.0 <= onset < offset <= dur + 1e-9):
                        raise InputError(
                            f"label interval [{onset}, {offset}) for channel {ch!r} "
                            f"outside recording of {dur:.3f} s"
                        )

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass
class FeatureSeries:
    """Per-channel, per-frame feature vectors with frame timing metadata."""

    channels: tuple[str, ...]
    values: np.ndarray  # (n_channels, n_frames, N_FEATURES)
    frame_step_s: float = FRAME_STEP_S
    frame_len_s: float = FRAME_LEN_S

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[0] != len(self.channels):
            raise InputError(
                f"feature array shape {self.values.shape} does not match "
                f"{len(self.channels)} channels"
            )
        if self.values.shape[2] != N_FEATURES:
            raise InputError(f"expected {N_FEATURES} features, got {self.values.shape[2]}")
        if not np.all(np.isfinite(self.values)):
            raise InputError("feature values must be finite")

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]

    @property
    def frame_starts_s(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.frame_step_s


def _check_finite(samples: np.ndarray) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InputError("input samples contain non-finite values")
    return x


def bandpass_filter(samples, sample_rate: float) -> np.ndarray:
    """High-pass at 1.6 Hz then low-pass at 50 Hz, both 4th-order Butterworth.

    Causal (forward-only) filtering with zero initial conditions; both
    stages are bilinear-transform discretizations with prewarping.
    """
    x = _check_finite(samples)
    if sample_rate <= 100.0:
        raise InputError(
            f"sample_rate {sample_rate} Hz unsupported: the 50 Hz low-pass needs rate > 100 Hz"
        )
    if x.shape[-1] < 16:
        raise InputError("need at least 16 samples to filter")
    b_hi, a_hi = sps.butter(4, HIGHPASS_HZ, btype="highpass", fs=sample_rate)
    b_lo, a_lo = sps.butter(4, LOWPASS_HZ, btype="lowpass", fs=sample_rate)
    return sps.lfilter(b_lo, a_lo, sps.lfilter(b_hi, a_hi, x))


def notch_filter(samples, sample_rate: float) -> np.ndarray:
    """Second-order 60 Hz notch with Q=20; identity when 60 Hz >= Nyquist."""
    x = _check_finite(samples)
    if sample_rate <= 2 * NOTCH_HZ:
        return x.copy()
    b, a = sps.iirnotch(NOTCH_HZ, NOTCH_Q, fs=sample_rate)
    return sps.lfilter(b, a, x)


def log_line_length(window) -> float:
    """log of the summed absolute first differences, floored at 1e-10."""
    w = np.asarray(window, dtype=np.float64)
    if w.shape[-1] < 2:
        raise InputError("line length needs at least 2 samples")
    return float(np.log(LOG_FLOOR + np.sum(np.abs(np.diff(w)))))


def _tukey_taper(n: int) -> np.ndarray:
    return sps.windows.tukey(n, alpha=0.25)


def band_power_features(window, sample_rate: float) -> np.ndarray:
    """Log band-magnitude sums of the Tukey-tapered DFT for the four bands."""
    w = np.asarray(window, dtype=np.float64)
    if sample_rate < 60.0:
        raise InputError(f"sample_rate {sample_rate} Hz too low for the 13-30 Hz band")
    expected = int(round(sample_rate * FRAME_LEN_S))
    if w.shape[-1] != expected:
        raise InputError(f"window length {w.shape[-1]} != round(sample_rate * 1 s) = {expected}")
    mags = np.abs(np.fft.rfft(w * _tukey_taper(expected)))
    freqs = np.fft.rfftfreq(expected, d=1.0 / sample_rate)
    out = np.empty(len(BANDS))
    for k, (_, lo, hi) in enumerate(BANDS):
        out[k] = np.log(LOG_FLOOR + mags[(freqs >= lo) & (freqs < hi)].sum())
    return out


def frame_count(n_samples: int, sample_rate: float) -> int:
    """Number of full 1 s windows advancing by 750 ms; trailing partial frames drop."""
    win = int(round(sample_rate * FRAME_LEN_S))
    step = int(round(sample_rate * FRAME_STEP_S))
    if n_samples < win:
        return 0
    return (n_samples - win) // step + 1


def extract_features(rec: Recording, montage: MontageGraph) -> FeatureSeries:
    """Filter every montage channel and compute framewise feature vectors.

    Channels are returned in montage order; recording channels outside the
    montage are dropped.
    """
    missing = [c for c in montage.channels if c not in rec.channels]
    if missing:
        raise InputError(f"recording is missing montage channel(s): {', '.join(missing)}")
    n_frames = frame_count(rec.n_samples, rec.sample_rate)
    if n_frames == 0:
        raise InputError(
            f"recording of {rec.duration_s:.3f} s is shorter than one {FRAME_LEN_S} s window"
        )
    win = int(round(rec.sample_rate * FRAME_LEN_S))
    step = int(round(rec.sample_rate * FRAME_STEP_S))
    taper = _tukey_taper(win)
    freqs = np.fft.rfftfreq(win, d=1.0 / rec.sample_rate)
    band_masks = [(freqs >= lo) & (freqs < hi) for _, lo, hi in BANDS]

    pos = {c: i for i, c in enumerate(rec.channels)}
    values = np.empty((montage.n_channels, n_frames, N_FEATURES))
    for i, ch in enumerate(montage.channels):
        filtered = notch_filter(bandpass_filter(rec.samples[pos[ch]], rec.sample_rate), rec.sample_rate)
        for t in range(n_frames):
            seg = filtered[t * step : t * step + win]
            mags = np.abs(np.fft.rfft(seg * taper))
            for k, mask in enumerate(band_masks):
                values[i, t, k] = np.log(LOG_FLOOR + mags[mask].sum())
            values[i, t, 4] = np.log(LOG_FLOOR + np.sum(np.abs(np.diff(seg))))
    return FeatureSeries(montage.channels, values)
