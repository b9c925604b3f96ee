"""Structured variational E-step for the coupled model.

The intractable coupled posterior is approximated by independent
per-channel chains, each an HMM whose transition probabilities are
logistic in the expected number of seizing coupled channels and whose
data terms are the state-conditional GMM log-likelihoods.  Chains are
refit one at a time (coordinate updates in montage order) while the free
energy of the approximation is tracked after every chain update.

The free energy is the exact variational objective: the expectation of
each log-transition term under the factored posterior is computed from
the distribution of the seizing-aunt count (a Poisson-binomial over the
aunts' independent marginals) whenever a channel has at most
``MAX_EXACT_AUNTS`` aunts, and from the mean count otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit, log_expit, logsumexp

from ._backend import FB_BACKEND, chain_forward_backward
from .errors import InputError, NumericalError
from .features import FeatureSeries
from .model import (
    ChmmModel,
    EmissionModel,
    TransitionParams,
    clamp_prob,
    emission_logliks,
)
from .montage import MontageGraph, aunt_indices

MAX_EXACT_AUNTS = 6


@dataclass
class VariationalChains:
    """Per-channel chain parameters of the factored approximation."""

    channels: tuple[str, ...]
    onset: np.ndarray  # (N, T) variational onset probabilities, frames 1..T
    offset: np.ndarray  # (N, T) variational offset probabilities
    logw0: np.ndarray  # (N, T+1) log data weights, states 0 and 2
    logw1: np.ndarray  # (N, T+1) log data weights, state 1
    log_z: np.ndarray  # (N,) per-chain log normalizers


@dataclass
class PosteriorStats:
    """Posterior expectations extracted from the factored approximation."""

    channels: tuple[str, ...]
    gamma: np.ndarray  # (N, T+1, 3) state marginals
    xi: np.ndarray  # (N, T, 3, 3) pairwise marginals between frames t-1, t
    log_z: np.ndarray  # (N,)
    expected_aunts: np.ndarray  # (N, T) expected seizing-aunt counts, frames 1..T


class FeTraceEntry(NamedTuple):
    sweep: int
    channel: str | None  # None for the entry recorded after initialization
    free_energy: float


@dataclass
class EStepResult:
    stats: PosteriorStats
    chains: VariationalChains
    fe_trace: list[FeTraceEntry]

    @property
    def free_energy(self) -> float:
        return self.fe_trace[-1].free_energy


def set_data_weights(emit: EmissionModel, feats: FeatureSeries) -> tuple[np.ndarray, np.ndarray]:
    """Log-domain data weights per chain: the state-conditional GMM logliks."""
    return emission_logliks(emit, feats)


def forward_backward(logw0, logw1, onset, offset):
    """Exact smoothed marginals of one chain; see the kernel contract.

    Returns ``(gamma, xi, log_z)``.  Dispatches to the compiled kernel when
    available (``FB_BACKEND`` names the active implementation).
    """
    return chain_forward_backward(logw0, logw1, onset, offset)


def expected_seizure_aunts(gamma: np.ndarray, neighbor_idx: list[list[int]]) -> np.ndarray:
    """Expected seizing-aunt count per channel and step, from state marginals."""
    n, t1 = gamma.shape[:2]
    out = np.zeros((n, t1 - 1))
    for i, idx in enumerate(neighbor_idx):
        if idx:
            out[i] = gamma[idx, : t1 - 1, 1].sum(axis=0)
    return out


def _chain_transition_probs(trans: TransitionParams, ebar: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    onset = clamp_prob(expit(trans.rho0 + trans.rho1 * ebar))
    offset = clamp_prob(expit(trans.phi0 + trans.phi1 * ebar))
    return onset, offset


def update_chain_transitions(
    trans: TransitionParams, stats: PosteriorStats, montage: MontageGraph, channel: str
) -> tuple[np.ndarray, np.ndarray]:
    """Variational onset/offset probabilities for one chain.

    Logistic in the expected seizing-aunt count under the other chains'
    current marginals.
    """
    i = montage.index(channel)
    idx = aunt_indices(montage)[i]
    t1 = stats.gamma.shape[1]
    ebar = stats.gamma[idx, : t1 - 1, 1].sum(axis=0) if idx else np.zeros(t1 - 1)
    return _chain_transition_probs(trans, ebar)


def _poisson_binomial_pmf(probs: np.ndarray) -> np.ndarray:
    """Distribution of a sum of independent Bernoullis.

    ``probs`` has shape (d, T): d independent success probabilities per
    column.  Returns (T, d+1) with row t the pmf over counts 0..d.
    """
    d, t = probs.shape
    cur = np.zeros((t, d + 1))
    cur[:, 0] = 1.0
    for j in range(d):
        p = probs[j][:, None]
        nxt = cur * (1.0 - p)
        nxt[:, 1:] += cur[:, :-1] * p
        cur = nxt
    return cur


def _chain_fe_component(
    trans: TransitionParams,
    aunt_seizure_probs: np.ndarray,  # (d, T) aunts' seizure marginals at frames 0..T-1
    onset: np.ndarray,
    offset: np.ndarray,
    xi: np.ndarray,
    log_z: float,
) -> float:
    """One chain's free-energy contribution.

    The data terms cancel between the energy and the entropy because the
    chain's data weights equal the model's emission log-likelihoods, so
    the component reduces to the log-normalizer plus the gap between the
    chain's log-transitions and their expectations under the coupled
    model.
    """
    t_steps = onset.shape[0]
    if t_steps == 0:
        return -float(log_z)
    d = aunt_seizure_probs.shape[0]
    counts = np.arange(d + 1)
    if d <= MAX_EXACT_AUNTS:
        pmf = _poisson_binomial_pmf(aunt_seizure_probs)  # (T, d+1)
        on_lo = pmf @ log_expit(trans.rho0 + trans.rho1 * counts)
        on_stay = pmf @ log_expit(-(trans.rho0 + trans.rho1 * counts))
        off_lo = pmf @ log_expit(trans.phi0 + trans.phi1 * counts)
        off_stay = pmf @ log_expit(-(trans.phi0 + trans.phi1 * counts))
    else:
        ebar = aunt_seizure_probs.sum(axis=0)
        on_lo = log_expit(trans.rho0 + trans.rho1 * ebar)
        on_stay = log_expit(-(trans.rho0 + trans.rho1 * ebar))
        off_lo = log_expit(trans.phi0 + trans.phi1 * ebar)
        off_stay = log_expit(-(trans.phi0 + trans.phi1 * ebar))
    gap = (
        xi[:, 0, 0] * (np.log1p(-onset) - on_stay)
        + xi[:, 0, 1] * (np.log(onset) - on_lo)
        + xi[:, 1, 1] * (np.log1p(-offset) - off_stay)
        + xi[:, 1, 2] * (np.log(offset) - off_lo)
    )
    return -float(log_z) + float(gap.sum())


def _free_energy_core(trans, neighbor_idx, gamma, onset, offset, xi, log_z) -> float:
    total = 0.0
    t1 = gamma.shape[1]
    for i, idx in enumerate(neighbor_idx):
        aunt_probs = gamma[idx, : t1 - 1, 1] if idx else np.zeros((0, t1 - 1))
        total += _chain_fe_component(trans, aunt_probs, onset[i], offset[i], xi[i], log_z[i])
    return total


def free_energy(
    model: ChmmModel, q: VariationalChains, stats: PosteriorStats, feats: FeatureSeries
) -> float:
    """Variational free energy of the approximation (upper bounds -log p(Y)).

    Exact for a single uncoupled chain, where it equals the negative
    evidence of that chain's HMM.
    """
    neighbor_idx = aunt_indices(model.montage)
    total = _free_energy_core(
        model.trans, neighbor_idx, stats.gamma, q.onset, q.offset, stats.xi, q.log_z
    )
    # Correction for data weights that differ from the model's emission
    # log-likelihoods; exactly zero when q came from set_data_weights.
    ll0, ll1 = emission_logliks(model.emit, feats)
    base_mass = stats.gamma[:, :, 0] + stats.gamma[:, :, 2]
    total += float(np.sum(base_mass * (q.logw0 - ll0) + stats.gamma[:, :, 1] * (q.logw1 - ll1)))
    return total


def mixture_responsibilities(
    emit: EmissionModel, feats: FeatureSeries, stats: PosteriorStats
) -> np.ndarray:
    """Joint posterior over (mixture, state) per channel and frame.

    Returns (N, T+1, J, 3); sums to 1 over the last two axes.
    """
    from .model import _component_logpdfs

    n, t1 = feats.values.shape[:2]
    j = emit.n_mixtures
    tau = np.empty((n, t1, j, 3))
    for i in range(n):
        comp = _component_logpdfs(emit, i, feats.values[i])  # (T+1, J)
        for state in range(3):
            logw = np.log(clamp_prob(emit.state_weights(state)[i]))
            lognum = logw + comp
            r = np.exp(lognum - logsumexp(lognum, axis=-1, keepdims=True))
            tau[i, :, :, state] = stats.gamma[i, :, state][:, None] * r
    return tau


def run_estep(
    model: ChmmModel,
    feats: FeatureSeries,
    tol: float = 1e-4,
    max_sweeps: int = 50,
    init_stats: PosteriorStats | None = None,
) -> EStepResult:
    """Coordinate-descent fit of the factored approximation for one recording.

    Chains are initialized from ``init_stats`` marginals when given (useful
    for warm starts across EM iterations) and from zero expected aunt
    counts otherwise.  Sweeps run over channels in montage order until the
    relative free-energy change per sweep drops below ``tol`` or
    ``max_sweeps`` is reached.  The trace records the free energy after
    initialization and after every chain update.
    """
    if feats.channels != model.montage.channels:
        raise InputError("feature channels do not match the model montage")
    montage = model.montage
    n = montage.n_channels
    t1 = feats.n_frames
    t_steps = t1 - 1
    neighbor_idx = aunt_indices(montage)
    trans = model.trans

    logw0, logw1 = set_data_weights(model.emit, feats)
    gamma = np.zeros((n, t1, 3))
    xi = np.zeros((n, t_steps, 3, 3))
    log_z = np.zeros(n)
    onset = np.empty((n, t_steps))
    offset = np.empty((n, t_steps))

    if init_stats is not None:
        init_ebar = expected_seizure_aunts(init_stats.gamma, neighbor_idx)
    else:
        init_ebar = np.zeros((n, t_steps))
    for i in range(n):
        onset[i], offset[i] = _chain_transition_probs(trans, init_ebar[i])
        gamma[i], xi[i], log_z[i] = chain_forward_backward(logw0[i], logw1[i], onset[i], offset[i])

    fe = _free_energy_core(trans, neighbor_idx, gamma, onset, offset, xi, log_z)
    if not math.isfinite(fe):
        raise NumericalError(f"non-finite free energy after initialization: {fe}")
    trace = [FeTraceEntry(0, None, fe)]

    fe_sweep_prev = fe
    for sweep in range(1, max_sweeps + 1):
        for i in range(n):
            idx = neighbor_idx[i]
            ebar = gamma[idx, :t_steps, 1].sum(axis=0) if idx else np.zeros(t_steps)
            onset[i], offset[i] = _chain_transition_probs(trans, ebar)
            gamma[i], xi[i], log_z[i] = chain_forward_backward(
                logw0[i], logw1[i], onset[i], offset[i]
            )
            fe = _free_energy_core(trans, neighbor_idx, gamma, onset, offset, xi, log_z)
            if not math.isfinite(fe):
                raise NumericalError(
                    f"non-finite free energy after updating channel {montage.channels[i]!r}"
                )
            trace.append(FeTraceEntry(sweep, montage.channels[i], fe))
        rel = abs(fe_sweep_prev - fe) / max(abs(fe_sweep_prev), 1e-300)
        if rel < tol:
            break
        fe_sweep_prev = fe

    stats = PosteriorStats(
        montage.channels, gamma, xi, log_z, expected_seizure_aunts(gamma, neighbor_idx)
    )
    chains = VariationalChains(montage.channels, onset, offset, logw0, logw1, log_z.copy())
    return EStepResult(stats, chains, trace)
