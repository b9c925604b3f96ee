"""Generative coupled HMM: state space, transitions, emissions, sampling.

Each channel carries a three-state progression chain (0 baseline,
1 seizure, 2 post-seizure, absorbing).  Onset and offset probabilities are
logistic in the number of coupled channels that were seizing one frame
earlier, with globally shared parameters.  Emissions are per-channel
diagonal Gaussian mixtures whose component weights depend on the state;
baseline and post-seizure share one weight vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .errors import InputError
from .features import FEATURE_NAMES, N_FEATURES, FeatureSeries
from .montage import MontageGraph, aunt_indices, aunts, load_montage, serialize_montage

N_STATES = 3
STATE_PRE, STATE_SEIZURE, STATE_POST = 0, 1, 2

VAR_FLOOR = 1e-6
WEIGHT_SUM_TOL = 1e-12
PROB_LO = 1e-300
PROB_HI = 1.0 - 1e-15

MODEL_HEADER = "chmm-model v1"


def clamp_prob(p):
    """Clamp probabilities away from exact 0 and 1 before logs/logits."""
    return np.clip(p, PROB_LO, PROB_HI)


@dataclass(frozen=True)
class TransitionParams:
    """Global onset/offset logistic coefficients, in log-odds units."""

    rho0: float
    rho1: float
    phi0: float
    phi1: float

    def __post_init__(self):
        vals = (self.rho0, self.rho1, self.phi0, self.phi1)
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"transition parameters must be finite, got {vals}")


@dataclass
class EmissionModel:
    """Per-channel diagonal GMMs with state-dependent, tied mixture weights.

    ``weights_base`` serves both the pre- and post-seizure states;
    ``weights_seizure`` serves the seizure state.
    """

    channels: tuple[str, ...]
    means: np.ndarray  # (N, J, n_features)
    variances: np.ndarray  # (N, J, n_features), diagonal entries
    weights_base: np.ndarray  # (N, J)
    weights_seizure: np.ndarray  # (N, J)

    def __post_init__(self):
        n = len(self.channels)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        self.weights_base = np.asarray(self.weights_base, dtype=np.float64)
        self.weights_seizure = np.asarray(self.weights_seizure, dtype=np.float64)
        j = self.means.shape[1] if self.means.ndim == 3 else -1
        if self.means.shape != (n, j, N_FEATURES) or self.variances.shape != self.means.shape:
            raise InputError("means/variances must have shape (n_channels, n_mixtures, n_features)")
        if self.weights_base.shape != (n, j) or self.weights_seizure.shape != (n, j):
            raise InputError("mixture weights must have shape (n_channels, n_mixtures)")
        if np.any(self.variances < VAR_FLOOR):
            raise InputError(f"variances must be >= {VAR_FLOOR}")
        for name, w in (("base", self.weights_base), ("seizure", self.weights_seizure)):
            if np.any(w < 0):
                raise InputError(f"{name} mixture weights must be nonnegative")
            err = np.abs(w.sum(axis=1) - 1.0)
            if np.any(err > WEIGHT_SUM_TOL):
                raise InputError(f"{name} mixture weights must sum to 1 (max error {err.max():.2e})")

    @property
    def n_mixtures(self) -> int:
        return self.means.shape[1]

    def state_weights(self, state: int) -> np.ndarray:
        return self.weights_seizure if state == STATE_SEIZURE else self.weights_base


@dataclass
class ChmmModel:
    montage: MontageGraph
    trans: TransitionParams
    emit: EmissionModel

    def __post_init__(self):
        if self.emit.channels != self.montage.channels:
            raise InputError("emission model channels must match the montage channels")


@dataclass
class StateSequences:
    """Latent state per channel and frame.

    Frame 0 must be baseline everywhere.  Sampled sequences are always
    monotone (states never decrease along a chain); hand-built sequences
    may violate monotonicity, which the joint likelihood scores as -inf.
    """

    channels: tuple[str, ...]
    states: np.ndarray  # (N, T+1) small ints in {0, 1, 2}

    def __post_init__(self):
        self.states = np.asarray(self.states)
        if self.states.ndim != 2 or self.states.shape[0] != len(self.channels):
            raise InputError(f"states shape {self.states.shape} does not match channels")
        if not np.isin(self.states, (STATE_PRE, STATE_SEIZURE, STATE_POST)).all():
            raise InputError("states must lie in {0, 1, 2}")
        if self.states.shape[1] > 0 and np.any(self.states[:, 0] != STATE_PRE):
            raise InputError("all chains must start in the baseline state")

    @property
    def n_frames(self) -> int:
        return self.states.shape[1]

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.states.astype(np.int64), axis=1) >= 0))


def onset_offset_probs(trans: TransitionParams, eta) -> tuple[float, float]:
    """Onset and offset probabilities given ``eta`` seizing coupled channels."""
    g = float(clamp_prob(expit(trans.rho0 + trans.rho1 * eta)))
    h = float(clamp_prob(expit(trans.phi0 + trans.phi1 * eta)))
    return g, h


def transition_matrix(trans: TransitionParams, eta) -> np.ndarray:
    """Row-stochastic 3x3 progression matrix for a given aunt count."""
    g, h = onset_offset_probs(trans, eta)
    return np.array(
        [
            [1.0 - g, g, 0.0],
            [0.0, 1.0 - h, h],
            [0.0, 0.0, 1.0],
        ]
    )


def count_seizure_aunts(montage: MontageGraph, states: StateSequences, channel: str, t: int) -> int:
    """Number of aunts of ``channel`` in the seizure state at frame t-1."""
    if t < 1:
        raise ValueError("aunt counts are defined for t >= 1 (there is no previous frame)")
    prev = states.states[:, t - 1]
    pos = {c: i for i, c in enumerate(states.channels)}
    return int(sum(prev[pos[a]] == STATE_SEIZURE for a in aunts(montage, channel)))


def _component_logpdfs(emit: EmissionModel, i: int, y: np.ndarray) -> np.ndarray:
    """Log N(y; mu_j, diag var_j) for every mixture j of channel i.

    ``y`` may be a single feature vector or an array (..., n_features);
    returns shape (..., J).
    """
    mu = emit.means[i]  # (J, D)
    var = emit.variances[i]
    y = np.asarray(y, dtype=np.float64)
    z = (y[..., None, :] - mu) ** 2 / var
    return -0.5 * (np.sum(np.log(2.0 * np.pi * var), axis=-1) + np.sum(z, axis=-1))


def emission_loglik(emit: EmissionModel, y, channel: str, state: int) -> float:
    """log p(y | state) for one channel, marginalized over the mixture."""
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise InputError("feature vector must be finite")
    i = channel if isinstance(channel, int) else emit.channels.index(channel)
    logw = np.log(clamp_prob(emit.state_weights(state)[i]))
    return float(logsumexp(logw + _component_logpdfs(emit, i, y)))


def emission_logliks(emit: EmissionModel, feats: FeatureSeries) -> tuple[np.ndarray, np.ndarray]:
    """Framewise log-likelihoods for all channels.

    Returns ``(ll_base, ll_seizure)``, each (N, T+1); the base array covers
    both the pre- and post-seizure states through the weight tie.
    """
    if feats.channels != emit.channels:
        raise InputError("feature channels do not match the emission model")
    n, f = feats.values.shape[:2]
    ll0 = np.empty((n, f))
    ll1 = np.empty((n, f))
    for i in range(n):
        comp = _component_logpdfs(emit, i, feats.values[i])  # (T+1, J)
        ll0[i] = logsumexp(np.log(clamp_prob(emit.weights_base[i])) + comp, axis=-1)
        ll1[i] = logsumexp(np.log(clamp_prob(emit.weights_seizure[i])) + comp, axis=-1)
    return ll0, ll1


def joint_loglik(model: ChmmModel, states: StateSequences, feats: FeatureSeries) -> float:
    """Complete-data log-likelihood log p(states, features)."""
    if states.channels != model.montage.channels or feats.channels != model.montage.channels:
        raise InputError("states/features channels must match the model montage")
    if states.n_frames != feats.n_frames:
        raise InputError("states and features disagree on frame count")
    x = states.states
    ll0, ll1 = emission_logliks(model.emit, feats)
    total = 0.0
    for i in range(model.montage.n_channels):
        emis = np.where(x[i] == STATE_SEIZURE, ll1[i], ll0[i])
        total += float(emis.sum())
    neighbors = aunt_indices(model.montage)
    for t in range(1, states.n_frames):
        prev = x[:, t - 1]
        for i in range(model.montage.n_channels):
            eta = int(np.sum(prev[neighbors[i]] == STATE_SEIZURE))
            p = transition_matrix(model.trans, eta)[prev[i], x[i, t]]
            if p <= 0.0:
                return float("-inf")
            total += math.log(p)
    return total


def sample_states(model: ChmmModel, n_frames_after_start: int, rng: np.random.Generator) -> StateSequences:
    """Ancestral state sampling: frame 0 is baseline, then T coupled steps."""
    if n_frames_after_start < 0:
        raise InputError("frame count must be nonnegative")
    n = model.montage.n_channels
    neighbors = aunt_indices(model.montage)
    x = np.zeros((n, n_frames_after_start + 1), dtype=np.int8)
    for t in range(1, n_frames_after_start + 1):
        prev = x[:, t - 1]
        seizing = prev == STATE_SEIZURE
        u = rng.random(n)
        for i in range(n):
            eta = int(np.sum(seizing[neighbors[i]]))
            if prev[i] == STATE_PRE:
                g, _ = onset_offset_probs(model.trans, eta)
                x[i, t] = STATE_SEIZURE if u[i] < g else STATE_PRE
            elif prev[i] == STATE_SEIZURE:
                _, h = onset_offset_probs(model.trans, eta)
                x[i, t] = STATE_POST if u[i] < h else STATE_SEIZURE
            else:
                x[i, t] = STATE_POST
    return StateSequences(model.montage.channels, x)


def sample_recording(model: ChmmModel, n_frames_after_start: int, seed: int) -> tuple[StateSequences, FeatureSeries]:
    """Sample states then per-frame emissions; deterministic given ``seed``."""
    rng = np.random.default_rng(seed)
    states = sample_states(model, n_frames_after_start, rng)
    n, f = states.states.shape
    emit = model.emit
    values = np.empty((n, f, N_FEATURES))
    for i in range(n):
        for state in (STATE_PRE, STATE_SEIZURE, STATE_POST):
            idx = np.nonzero(states.states[i] == state)[0]
            if idx.size == 0:
                continue
            w = emit.state_weights(state)[i]
            comps = rng.choice(emit.n_mixtures, size=idx.size, p=w / w.sum())
            noise = rng.standard_normal((idx.size, N_FEATURES))
            values[i, idx] = emit.means[i, comps] + noise * np.sqrt(emit.variances[i, comps])
    return states, FeatureSeries(model.montage.channels, values)


def seizure_intervals(states: StateSequences, frame_step_s: float) -> dict[str, tuple[tuple[float, float], ...]]:
    """Per-channel [onset, offset) intervals, in seconds, from a state raster."""
    out = {}
    for i, ch in enumerate(states.channels):
        runs = []
        x = states.states[i]
        start = None
        for t in range(len(x)):
            if x[t] == STATE_SEIZURE and start is None:
                start = t
            elif x[t] != STATE_SEIZURE and start is not None:
                runs.append((start * frame_step_s, t * frame_step_s))
                start = None
        if start is not None:
            runs.append((start * frame_step_s, len(x) * frame_step_s))
        if runs:
            out[ch] = tuple(runs)
    return out


# --- model file format ------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def model_to_text(model: ChmmModel) -> str:
    lines = [MODEL_HEADER, "kind: chmm", "[montage]"]
    lines += serialize_montage(model.montage).rstrip("\n").splitlines()
    lines += [
        "[transitions]",
        f"rho0 = {_fmt(model.trans.rho0)}",
        f"rho1 = {_fmt(model.trans.rho1)}",
        f"phi0 = {_fmt(model.trans.phi0)}",
        f"phi1 = {_fmt(model.trans.phi1)}",
        "[emissions]",
    ]
    emit = model.emit
    for i, ch in enumerate(emit.channels):
        lines.append(f"channel: {ch}")
        lines.append(f"mixtures: {emit.n_mixtures}")
        for j in range(emit.n_mixtures):
            lines.append(f"mean {j} = " + ",".join(_fmt(v) for v in emit.means[i, j]))
            lines.append(f"var {j} = " + ",".join(_fmt(v) for v in emit.variances[i, j]))
            lines.append(f"weight_base {j} = {_fmt(emit.weights_base[i, j])}")
            lines.append(f"weight_seizure {j} = {_fmt(emit.weights_seizure[i, j])}")
    return "\n".join(lines) + "\n"


class _ModelParser:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def peek(self):
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            if line and not line.startswith("#"):
                return line
            self.pos += 1
        return None

    def take(self):
        line = self.peek()
        if line is not None:
            self.pos += 1
        return line

    def expect(self, prefix: str) -> str:
        line = self.take()
        if line is None or not line.startswith(prefix):
            raise InputError(f"model file: expected {prefix!r}, got {line!r}")
        return line[len(prefix):].strip()


def _parse_floats(payload: str, n: int) -> np.ndarray:
    parts = [p for p in payload.split(",") if p.strip()]
    if len(parts) != n:
        raise InputError(f"model file: expected {n} comma-separated values, got {len(parts)}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise InputError(f"model file: bad float in {payload!r}") from exc


def model_from_text(text: str) -> ChmmModel:
    parser = _ModelParser(text)
    header = parser.take()
    if header != MODEL_HEADER:
        raise InputError(f"not a model file (header {header!r}, expected {MODEL_HEADER!r})")
    kind = parser.expect("kind:")
    if kind != "chmm":
        raise InputError(f"model file has kind {kind!r}, expected 'chmm'")
    if parser.take() != "[montage]":
        raise InputError("model file: missing [montage] section")
    montage_lines = []
    while parser.peek() is not None and not parser.peek().startswith("["):
        montage_lines.append(parser.take())
    graph = load_montage("\n".join(montage_lines))
    if parser.take() != "[transitions]":
        raise InputError("model file: missing [transitions] section")
    tvals = {}
    for _ in range(4):
        line = parser.take()
        try:
            key, val = (s.strip() for s in line.split("="))
            tvals[key] = float(val)
        except (AttributeError, ValueError) as exc:
            raise InputError(f"model file: bad transition line {line!r}") from exc
    try:
        trans = TransitionParams(tvals["rho0"], tvals["rho1"], tvals["phi0"], tvals["phi1"])
    except KeyError as exc:
        raise InputError(f"model file: missing transition parameter {exc}") from exc
    if parser.take() != "[emissions]":
        raise InputError("model file: missing [emissions] section")
    means, variances, w0, w1 = [], [], [], []
    for ch in graph.channels:
        got = parser.expect("channel:")
        if got != ch:
            raise InputError(f"model file: expected emissions for channel {ch!r}, got {got!r}")
        j = int(parser.expect("mixtures:"))
        m = np.empty((j, N_FEATURES))
        v = np.empty((j, N_FEATURES))
        wb = np.empty(j)
        ws = np.empty(j)
        for k in range(j):
            m[k] = _parse_floats(parser.expect(f"mean {k} ="), N_FEATURES)
            v[k] = _parse_floats(parser.expect(f"var {k} ="), N_FEATURES)
            wb[k] = float(parser.expect(f"weight_base {k} ="))
            ws[k] = float(parser.expect(f"weight_seizure {k} ="))
        means.append(m)
        variances.append(v)
        w0.append(wb)
        w1.append(ws)
    emit = EmissionModel(graph.channels, np.array(means), np.array(variances), np.array(w0), np.array(w1))
    return ChmmModel(graph, trans, emit)


def save_model(model: ChmmModel, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, model_to_text(model))


def load_model(path) -> ChmmModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return model_from_text(fh.read())
    except OSError as exc:
        raise InputError(f"cannot read model file {path}: {exc}") from exc
