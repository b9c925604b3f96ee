"""Detection metrics and the cross-validation split.

Sensitivity and specificity are confidence-weighted: each positive frame
contributes its posterior seizure probability to the TPR and each negative
frame contributes its posterior non-seizure probability to the TNR. The
AUC is the Mann-Whitney rank statistic with ties counted one half.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import InputError


@dataclass
class FrameLabels:
    """Binary seizure indicator per channel and frame."""

    channels: tuple[str, ...]
    values: np.ndarray  # (N, F) 0/1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.uint8)
        if self.values.ndim != 2 or self.values.shape[0] != len(self.channels):
            raise InputError(f"label array shape {self.values.shape} does not match channels")


def frame_labels(
    channels: tuple[str, ...],
    frame_starts_s: np.ndarray,
    intervals: dict[str, tuple[tuple[float, float], ...]] | None,
) -> FrameLabels:
    """Label a frame seizure iff its start time lies inside [onset, offset).

    The interval key ``"*"`` applies to every channel.
    """
    starts = np.asarray(frame_starts_s, dtype=np.float64)
    values = np.zeros((len(channels), starts.size), dtype=np.uint8)
    if intervals:
        for key, spans in intervals.items():
            if key == "*":
                rows = range(len(channels))
            else:
                if key not in channels:
                    raise InputError(f"label references unknown channel {key!r}")
                rows = [channels.index(key)]
            for onset, offset in spans:
                mask = (starts >= onset) & (starts < offset)
                for r in rows:
                    values[r, mask] = 1
    return FrameLabels(tuple(channels), values)


def _as_arrays(posteriors, labels):
    p = np.asarray(posteriors, dtype=np.float64).ravel()
    y = labels.values if isinstance(labels, FrameLabels) else np.asarray(labels)
    y = y.ravel().astype(bool)
    if p.shape != y.shape:
        raise InputError(f"posteriors {p.shape} and labels {y.shape} disagree")
    return p, y


def weighted_rates(posteriors, labels) -> tuple[float, float]:
    """Confidence-weighted (TPR, TNR) pooled over channels and frames."""
    p, y = _as_arrays(posteriors, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0:
        raise InputError("no positive frames: TPR undefined")
    if n_neg == 0:
        raise InputError("no negative frames: TNR undefined")
    tpr = float(p[y].sum() / n_pos)
    tnr = float((1.0 - p[~y]).sum() / n_neg)
    return tpr, tnr


def auc(scores, labels) -> float:
    """Area under the ROC curve by the rank statistic; ties count 0.5."""
    s, y = _as_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        missing = "positive" if n_pos == 0 else "negative"
        raise InputError(f"no {missing} frames: AUC undefined")
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_points(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """ROC curve as (fpr, tpr) arrays, one point per distinct threshold."""
    s, y = _as_arrays(scores, labels)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    distinct = np.nonzero(np.diff(s))[0]
    idx = np.concatenate([distinct, [y.size - 1]])
    tps = np.cumsum(y)[idx]
    fps = np.cumsum(~y)[idx]
    n_pos = max(int(y.sum()), 1)
    n_neg = max(int((~y).sum()), 1)
    fpr = np.concatenate([[0.0], fps / n_neg])
    tpr = np.concatenate([[0.0], tps / n_pos])
    return fpr, tpr


def kfold_split(ids: list, k: int = 5, seed: int = 0) -> list[tuple[list, list]]:
    """Seeded random partition into k near-equal held-out folds."""
    if k < 2:
        raise InputError("k must be >= 2")
    if len(ids) < k:
        raise InputError(f"need at least {k} recordings for {k} folds, got {len(ids)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    folds = np.array_split(order, k)
    out = []
    for fold in folds:
        test = [ids[i] for i in fold]
        test_set = set(fold.tolist())
        train = [ids[i] for i in range(len(ids)) if i not in test_set]
        out.append((train, test))
    return out
