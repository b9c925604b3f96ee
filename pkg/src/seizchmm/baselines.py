"""Framewise, channelwise reference classifiers.

Both baselines score each frame independently: a class-conditional GMM
likelihood ratio per channel, and a logistic regression on the feature
vector (globally shared by default).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InputError
from .features import FeatureSeries, N_FEATURES
from .gmm import DiagGmm, diag_gmm_logpdf, fit_diag_gmm
from .learning import EmConfig
from .logistic import fit_weighted_logistic
from .model import MODEL_HEADER

BASELINE_KINDS = ("gmm-lr", "logreg")


@dataclass
class GmmClassifier:
    """Per-channel seizure and non-seizure GMMs with a class prior."""

    channels: tuple[str, ...]
    seizure: list[DiagGmm]
    background: list[DiagGmm]
    prior_seizure: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.prior_seizure < 1.0):
            raise InputError("prior_seizure must be strictly inside (0, 1)")
        if len(self.seizure) != len(self.channels) or len(self.background) != len(self.channels):
            raise InputError("need one GMM pair per channel")


@dataclass
class LogRegClassifier:
    """Logistic scorer; per-channel coefficients when ``per_channel`` is set."""

    channels: tuple[str, ...]
    weights: np.ndarray  # (n_features,) global or (N, n_features) per channel
    bias: np.ndarray  # scalar array or (N,)
    per_channel: bool = False

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise InputError("classifier parameters must be finite")


def _pooled_frames(labeled_sets, channel_index=None):
    xs, ys = [], []
    for feats, labels in labeled_sets:
        labels = np.asarray(labels)
        if labels.shape != feats.values.shape[:2]:
            raise InputError("label array does not match the feature dimensions")
        if channel_index is None:
            xs.append(feats.values.reshape(-1, N_FEATURES))
            ys.append(labels.reshape(-1))
        else:
            xs.append(feats.values[channel_index])
            ys.append(labels[channel_index])
    return np.vstack(xs), np.concatenate(ys).astype(bool)


def train_gmm_classifier(
    labeled_sets: list[tuple[FeatureSeries, np.ndarray]],
    config: EmConfig = EmConfig(),
    prevalence_priors: bool = False,
) -> GmmClassifier:
    """Fit class-conditional GMMs per channel from labeled frames."""
    if not labeled_sets:
        raise InputError("need at least one labeled feature set")
    channels = labeled_sets[0][0].channels
    rng = np.random.default_rng(config.seed)
    seizure, background = [], []
    total_pos = total = 0
    for i, ch in enumerate(channels):
        x, y = _pooled_frames(labeled_sets, i)
        for label, mask in (("seizure", y), ("non-seizure", ~y)):
            if mask.sum() < config.mixtures:
                raise InputError(
                    f"channel {ch!r} has only {int(mask.sum())} {label}-labeled frames; "
                    f"need >= {config.mixtures}"
                )
        seizure.append(fit_diag_gmm(x[y], config.mixtures, rng, var_floor=config.variance_floor)[0])
        background.append(fit_diag_gmm(x[~y], config.mixtures, rng, var_floor=config.variance_floor)[0])
        total_pos += int(y.sum())
        total += y.size
    prior = total_pos / total if prevalence_priors else 0.5
    return GmmClassifier(channels, seizure, background, prior)


def gmm_posterior(clf: GmmClassifier, y, channel: str) -> float:
    """Posterior seizure probability from the class likelihood ratio."""
    i = channel if isinstance(channel, int) else clf.channels.index(channel)
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise InputError("feature vector must be finite")
    log_ratio = float(diag_gmm_logpdf(clf.seizure[i], y) - diag_gmm_logpdf(clf.background[i], y))
    prior_logit = float(np.log(clf.prior_seizure) - np.log1p(-clf.prior_seizure))
    return float(expit(log_ratio + prior_logit))


def score_gmm(clf: GmmClassifier, feats: FeatureSeries) -> np.ndarray:
    """Framewise seizure posteriors for all channels, shape (N, T+1)."""
    if feats.channels != clf.channels:
        raise InputError("feature channels do not match the classifier")
    prior_logit = float(np.log(clf.prior_seizure) - np.log1p(-clf.prior_seizure))
    out = np.empty(feats.values.shape[:2])
    for i in range(len(clf.channels)):
        lr = diag_gmm_logpdf(clf.seizure[i], feats.values[i]) - diag_gmm_logpdf(
            clf.background[i], feats.values[i]
        )
        out[i] = expit(lr + prior_logit)
    return out


def train_logreg(
    labeled_sets: list[tuple[FeatureSeries, np.ndarray]],
    config: EmConfig = EmConfig(),
    per_channel: bool = False,
) -> LogRegClassifier:
    """Maximum-likelihood logistic regression on the five features."""
    if not labeled_sets:
        raise InputError("need at least one labeled feature set")
    channels = labeled_sets[0][0].channels
    if per_channel:
        weights = np.empty((len(channels), N_FEATURES))
        bias = np.empty(len(channels))
        for i, ch in enumerate(channels):
            x, y = _pooled_frames(labeled_sets, i)
            if y.all() or not y.any():
                raise InputError(f"channel {ch!r} is missing one class")
            beta = fit_weighted_logistic(
                x, y.astype(float), np.ones(y.size),
                grad_tol=config.newton_grad_tol, max_iters=config.newton_max_iters,
            )
            bias[i], weights[i] = beta[0], beta[1:]
        return LogRegClassifier(channels, weights, bias, per_channel=True)
    x, y = _pooled_frames(labeled_sets)
    if y.all() or not y.any():
        raise InputError("training data is missing one class")
    beta = fit_weighted_logistic(
        x, y.astype(float), np.ones(y.size),
        grad_tol=config.newton_grad_tol, max_iters=config.newton_max_iters,
    )
    return LogRegClassifier(channels, beta[1:], np.asarray(beta[0]), per_channel=False)


def logreg_posterior(clf: LogRegClassifier, y, channel: str | None = None) -> float:
    y = np.asarray(y, dtype=np.float64)
    if clf.per_channel:
        if channel is None:
            raise InputError("per-channel classifier needs a channel")
        i = channel if isinstance(channel, int) else clf.channels.index(channel)
        return float(expit(clf.weights[i] @ y + clf.bias[i]))
    return float(expit(clf.weights @ y + float(clf.bias)))


def score_logreg(clf: LogRegClassifier, feats: FeatureSeries) -> np.ndarray:
    if feats.channels != clf.channels:
        raise InputError("feature channels do not match the classifier")
    if clf.per_channel:
        z = np.einsum("itd,id->it", feats.values, clf.weights) + clf.bias[:, None]
    else:
        z = feats.values @ clf.weights + float(clf.bias)
    return expit(z)


# --- baseline model files ----------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def gmm_classifier_to_text(clf: GmmClassifier) -> str:
    lines = [
        MODEL_HEADER,
        "kind: gmm-lr",
        "channels: " + ",".join(clf.channels),
        f"mixtures: {clf.seizure[0].n_components}",
        f"prior_seizure = {_fmt(clf.prior_seizure)}",
    ]
    for i, ch in enumerate(clf.channels):
        lines.append(f"channel: {ch}")
        for tag, gmm in (("bg", clf.background[i]), ("sz", clf.seizure[i])):
            for j in range(gmm.n_components):
                lines.append(f"{tag} mean {j} = " + ",".join(_fmt(v) for v in gmm.means[j]))
                lines.append(f"{tag} var {j} = " + ",".join(_fmt(v) for v in gmm.variances[j]))
                lines.append(f"{tag} weight {j} = {_fmt(gmm.weights[j])}")
    return "\n".join(lines) + "\n"


def logreg_to_text(clf: LogRegClassifier) -> str:
    lines = [
        MODEL_HEADER,
        "kind: logreg",
        "channels: " + ",".join(clf.channels),
        f"per_channel: {'true' if clf.per_channel else 'false'}",
    ]
    if clf.per_channel:
        for i, ch in enumerate(clf.channels):
            lines.append(f"channel: {ch}")
            lines.append(f"bias = {_fmt(clf.bias[i])}")
            lines.append("weights = " + ",".join(_fmt(v) for v in clf.weights[i]))
    else:
        lines.append(f"bias = {_fmt(float(clf.bias))}")
        lines.append("weights = " + ",".join(_fmt(v) for v in clf.weights))
    return "\n".join(lines) + "\n"


def baseline_from_text(text: str):
    """Parse either baseline file; returns a GmmClassifier or LogRegClassifier."""
    from .model import _ModelParser, _parse_floats

    parser = _ModelParser(text)
    header = parser.take()
    if header != MODEL_HEADER:
        raise InputError(f"not a model file (header {header!r})")
    kind = parser.expect("kind:")
    channels = tuple(c.strip() for c in parser.expect("channels:").split(",") if c.strip())
    if kind == "gmm-lr":
        j = int(parser.expect("mixtures:"))
        prior = float(parser.expect("prior_seizure ="))
        seizure, background = [], []
        for ch in channels:
            got = parser.expect("channel:")
            if got != ch:
                raise InputError(f"baseline file: expected channel {ch!r}, got {got!r}")
            gmms = {}
            for tag in ("bg", "sz"):
                means = np.empty((j, N_FEATURES))
                variances = np.empty((j, N_FEATURES))
                weights = np.empty(j)
                for k in range(j):
                    means[k] = _parse_floats(parser.expect(f"{tag} mean {k} ="), N_FEATURES)
                    variances[k] = _parse_floats(parser.expect(f"{tag} var {k} ="), N_FEATURES)
                    weights[k] = float(parser.expect(f"{tag} weight {k} ="))
                gmms[tag] = DiagGmm(means, variances, weights)
            background.append(gmms["bg"])
            seizure.append(gmms["sz"])
        return GmmClassifier(channels, seizure, background, prior)
    if kind == "logreg":
        per_channel = parser.expect("per_channel:") == "true"
        if per_channel:
            weights = np.empty((len(channels), N_FEATURES))
            bias = np.empty(len(channels))
            for i, ch in enumerate(channels):
                got = parser.expect("channel:")
                if got != ch:
                    raise InputError(f"baseline file: expected channel {ch!r}, got {got!r}")
                bias[i] = float(parser.expect("bias ="))
                weights[i] = _parse_floats(parser.expect("weights ="), N_FEATURES)
            return LogRegClassifier(channels, weights, bias, per_channel=True)
        bias = float(parser.expect("bias ="))
        weights = _parse_floats(parser.expect("weights ="), N_FEATURES)
        return LogRegClassifier(channels, weights, np.asarray(bias), per_channel=False)
    raise InputError(f"unknown baseline kind {kind!r}")
