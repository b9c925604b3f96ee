"""Plain-text file formats: recordings, labels, features, posteriors, traces.

All writers go through a temp-file-plus-rename so partially written
outputs never appear under the target name.
"""

from __future__ import annotations

import csv
import io as _io
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import InputError
from .features import FEATURE_NAMES, FeatureSeries, Recording
from .learning import EmConfig

POSTERIOR_FIELDS = ("channel", "frame", "start_s", "p_pre", "p_seizure", "p_post")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return repr(float(x))


def _read_text(path) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


# --- recordings ---------------------------------------------------------------

def parse_recording_csv(text: str, labels=None) -> Recording:
    """Recording CSV: header ``time_s,<ch1>,...``, one row per sample.

    The sample rate is inferred from the first two time stamps.
    """
    reader = csv.reader(_io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("line 1: recording file is empty") from None
    if len(header) < 2 or header[0].strip() != "time_s":
        raise InputError("line 1: recording header must be 'time_s,<channel>,...'")
    channels = tuple(c.strip() for c in header[1:])
    times, rows = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(channels) + 1:
            raise InputError(f"line {lineno}: expected {len(channels) + 1} fields, got {len(row)}")
        try:
            times.append(float(row[0]))
            rows.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise InputError(f"line {lineno}: {exc}") from None
    if len(rows) < 2:
        raise InputError("recording needs at least 2 samples to infer the rate")
    dt = times[1] - times[0]
    if dt <= 0:
        raise InputError("line 3: time stamps must increase")
    sample_rate = round(1.0 / dt, 6)
    return Recording(sample_rate, channels, np.asarray(rows).T, labels)


def read_recording(path, labels_path=None) -> Recording:
    labels = read_labels(labels_path) if labels_path else None
    return parse_recording_csv(_read_text(path), labels)


def write_recording(path, rec: Recording) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time_s", *rec.channels])
    dt = 1.0 / rec.sample_rate
    for s in range(rec.n_samples):
        w.writerow([_fmt(s * dt), *(_fmt(v) for v in rec.samples[:, s])])
    atomic_write_text(path, buf.getvalue())


# --- label intervals -----------------------------------------------------------

def parse_labels_csv(text: str) -> dict[str, tuple[tuple[float, float], ...]]:
    """Label CSV: ``channel,onset_s,offset_s``; channel ``*`` means all."""
    out: dict[str, list[tuple[float, float]]] = {}
    reader = csv.reader(_io.StringIO(text))
    for lineno, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if lineno == 1 and row[0].strip() == "channel":
            continue
        if len(row) != 3:
            raise InputError(f"line {lineno}: expected 'channel,onset_s,offset_s'")
        ch = row[0].strip()
        try:
            onset, offset = float(row[1]), float(row[2])
        except ValueError as exc:
            raise InputError(f"line {lineno}: {exc}") from None
        if not onset < offset:
            raise InputError(f"line {lineno}: need onset < offset, got [{onset}, {offset})")
        out.setdefault(ch, []).append((onset, offset))
    return {ch: tuple(v) for ch, v in out.items()}


def read_labels(path) -> dict[str, tuple[tuple[float, float], ...]]:
    return parse_labels_csv(_read_text(path))


def write_labels(path, intervals: dict[str, tuple[tuple[float, float], ...]]) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["channel", "onset_s", "offset_s"])
    for ch in sorted(intervals):
        for onset, offset in intervals[ch]:
            w.writerow([ch, _fmt(onset), _fmt(offset)])
    atomic_write_text(path, buf.getvalue())


# --- features -------------------------------------------------------------------

def write_features(path, feats: FeatureSeries) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["channel", "frame", "start_s", *FEATURE_NAMES])
    starts = feats.frame_starts_s
    for i, ch in enumerate(feats.channels):
        for t in range(feats.n_frames):
            w.writerow([ch, t, _fmt(starts[t]), *(_fmt(v) for v in feats.values[i, t])])
    atomic_write_text(path, buf.getvalue())


def parse_features_csv(text: str) -> FeatureSeries:
    reader = csv.reader(_io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("line 1: feature file is empty") from None
    expected = ["channel", "frame", "start_s", *FEATURE_NAMES]
    if [h.strip() for h in header] != expected:
        raise InputError(f"line 1: feature header must be {','.join(expected)}")
    per_channel: dict[str, dict[int, list[float]]] = {}
    starts: dict[int, float] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(expected):
            raise InputError(f"line {lineno}: expected {len(expected)} fields, got {len(row)}")
        ch = row[0].strip()
        try:
            frame = int(row[1])
            start = float(row[2])
            vals = [float(v) for v in row[3:]]
        except ValueError as exc:
            raise InputError(f"line {lineno}: {exc}") from None
        per_channel.setdefault(ch, {})[frame] = vals
        starts.setdefault(frame, start)
    if not per_channel:
        raise InputError("feature file has no data rows")
    channels = tuple(per_channel)
    n_frames = len(starts)
    if sorted(starts) != list(range(n_frames)):
        raise InputError("feature frames must be 0..T without gaps")
    values = np.empty((len(channels), n_frames, len(FEATURE_NAMES)))
    for i, ch in enumerate(channels):
        frames = per_channel[ch]
        if len(frames) != n_frames:
            raise InputError(f"channel {ch!r} has {len(frames)} frames, expected {n_frames}")
        for t in range(n_frames):
            values[i, t] = frames[t]
    if n_frames > 1:
        step = starts[1] - starts[0]
        diffs = np.diff([starts[t] for t in range(n_frames)])
        if np.any(np.abs(diffs - step) > 1e-9):
            raise InputError("feature frame start times must be arithmetic")
    else:
        step = 0.75
    return FeatureSeries(channels, values, frame_step_s=step)


def read_features(path) -> FeatureSeries:
    return parse_features_csv(_read_text(path))


# --- states, posteriors, traces --------------------------------------------------

def write_states(path, channels, states: np.ndarray, frame_step_s: float) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["channel", "frame", "start_s", "state"])
    for i, ch in enumerate(channels):
        for t in range(states.shape[1]):
            w.writerow([ch, t, _fmt(t * frame_step_s), int(states[i, t])])
    atomic_write_text(path, buf.getvalue())


def write_posteriors(path, channels, frame_starts_s, probs: np.ndarray) -> None:
    """Posterior CSV with one row per channel and frame; probs is (N, F, 3)."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(POSTERIOR_FIELDS)
    for i, ch in enumerate(channels):
        for t in range(probs.shape[1]):
            w.writerow(
                [ch, t, _fmt(frame_starts_s[t]), *(_fmt(v) for v in probs[i, t])]
            )
    atomic_write_text(path, buf.getvalue())


def read_posteriors(path):
    """Returns (channels, frame_starts_s, probs) from a posterior CSV."""
    reader = csv.reader(_io.StringIO(_read_text(path)))
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("line 1: posterior file is empty") from None
    if [h.strip() for h in header] != list(POSTERIOR_FIELDS):
        raise InputError(f"line 1: posterior header must be {','.join(POSTERIOR_FIELDS)}")
    data: dict[str, dict[int, list[float]]] = {}
    starts: dict[int, float] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 6:
            raise InputError(f"line {lineno}: expected 6 fields, got {len(row)}")
        try:
            frame = int(row[1])
            data.setdefault(row[0].strip(), {})[frame] = [float(v) for v in row[3:]]
            starts.setdefault(frame, float(row[2]))
        except ValueError as exc:
            raise InputError(f"line {lineno}: {exc}") from None
    if not data:
        raise InputError("posterior file has no data rows")
    channels = tuple(data)
    n_frames = len(starts)
    probs = np.empty((len(channels), n_frames, 3))
    for i, ch in enumerate(channels):
        if len(data[ch]) != n_frames:
            raise InputError(f"channel {ch!r} has {len(data[ch])} frames, expected {n_frames}")
        for t in range(n_frames):
            probs[i, t] = data[ch][t]
    start_arr = np.array([starts[t] for t in range(n_frames)])
    return channels, start_arr, probs


def write_fe_trace(path, trace) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sweep", "channel", "free_energy"])
    for entry in trace:
        w.writerow([entry.sweep, entry.channel or "init", _fmt(entry.free_energy)])
    atomic_write_text(path, buf.getvalue())


def write_em_trace(path, trace) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iter", "total_free_energy"])
    for iteration, fe in trace:
        w.writerow([iteration, _fmt(fe)])
    atomic_write_text(path, buf.getvalue())


def write_metrics(path, rows) -> None:
    """Rows of (fold, model, tpr, tnr, auc)."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["fold", "model", "tpr", "tnr", "auc"])
    for fold, model, tpr, tnr, auc_val in rows:
        w.writerow([fold, model, _fmt(tpr), _fmt(tnr), _fmt(auc_val)])
    atomic_write_text(path, buf.getvalue())


def write_roc(path, fpr, tpr) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["fpr", "tpr"])
    for f, t in zip(fpr, tpr):
        w.writerow([_fmt(f), _fmt(t)])
    atomic_write_text(path, buf.getvalue())


# --- manifest and config ----------------------------------------------------------

def read_manifest(path) -> list[tuple[Path, Path]]:
    """Training manifest: one ``<recording.csv> <labels.csv>`` pair per line.

    Relative paths resolve against the manifest's directory.
    """
    base = Path(path).parent
    pairs = []
    for lineno, raw in enumerate(_read_text(path).splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InputError(f"line {lineno}: manifest lines are '<recording> <labels>'")
        pairs.append((base / parts[0], base / parts[1]))
    if not pairs:
        raise InputError("manifest lists no recordings")
    return pairs


_CONFIG_TYPES = {
    "mixtures": int,
    "estep_tol": float,
    "estep_max_sweeps": int,
    "em_max_iters": int,
    "em_tol": float,
    "newton_max_iters": int,
    "newton_grad_tol": float,
    "variance_floor": float,
    "seed": int,
    "freeze_emissions": lambda s: s.lower() in ("1", "true", "yes"),
}


def parse_config(text: str) -> EmConfig:
    """Key-value config mirroring the EmConfig fields, one ``key = value`` per line."""
    kwargs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_TYPES:
            raise InputError(f"line {lineno}: unknown config key {key!r}")
        try:
            kwargs[key] = _CONFIG_TYPES[key](value.strip())
        except ValueError as exc:
            raise InputError(f"line {lineno}: {exc}") from None
    return EmConfig(**kwargs)


def read_config(path) -> EmConfig:
    return parse_config(_read_text(path))
