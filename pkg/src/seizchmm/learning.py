"""M-step parameter updates and the variational EM driver.

Emissions are refit from pooled soft counts over (mixture, state); the
global transition coefficients are refit by weighted logistic regression
of expected aunt counts onto expected state transitions.  Labels feed the
supervised GMM initialization only; EM itself never touches them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import InputError, NumericalError
from .features import FeatureSeries, N_FEATURES
from .gmm import fit_diag_gmm
from .inference import EStepResult, PosteriorStats, mixture_responsibilities, run_estep
from .logistic import fit_weighted_logistic
from .model import ChmmModel, EmissionModel, TransitionParams
from .montage import MontageGraph

INIT_TRANSITIONS = TransitionParams(-7.0, 2.0, -3.0, 0.0)
EMPTY_MIXTURE_MASS = 1e-8


@dataclass(frozen=True)
class EmConfig:
    mixtures: int = 3
    estep_tol: float = 1e-4
    estep_max_sweeps: int = 50
    em_max_iters: int = 30
    em_tol: float = 1e-5
    newton_max_iters: int = 50
    newton_grad_tol: float = 1e-8
    variance_floor: float = 1e-6
    seed: int = 0
    freeze_emissions: bool = False

    def __post_init__(self):
        if self.mixtures < 1:
            raise InputError("mixtures must be >= 1")
        for name in ("estep_tol", "em_tol", "newton_grad_tol", "variance_floor"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be positive")


@dataclass
class TransitionDesignMatrix:
    """Pooled soft-count regression rows for the onset and offset fits.

    Each row is (expected aunt count, total transition mass, success mass):
    mass in state 0 at t-1 with the 0->1 share for onsets, mass in state 1
    with the 1->2 share for offsets.
    """

    onset: np.ndarray  # (n, 3)
    offset: np.ndarray  # (n, 3)

    def __post_init__(self):
        for name, rows in (("onset", self.onset), ("offset", self.offset)):
            if rows.size and (np.any(rows[:, 1] < 0) or np.any(rows[:, 2] > rows[:, 1] + 1e-9)):
                raise InputError(f"{name} design rows need 0 <= success <= total mass")


def transition_design(stats_list: list[PosteriorStats]) -> TransitionDesignMatrix:
    """Build the pooled design from per-recording posterior statistics."""
    onset_rows, offset_rows = [], []
    for stats in stats_list:
        ebar = stats.expected_aunts.ravel()
        xi = stats.xi
        w0 = (xi[:, :, 0, 0] + xi[:, :, 0, 1]).ravel()
        w1 = (xi[:, :, 1, 1] + xi[:, :, 1, 2]).ravel()
        onset_rows.append(np.column_stack([ebar, w0, xi[:, :, 0, 1].ravel()]))
        offset_rows.append(np.column_stack([ebar, w1, xi[:, :, 1, 2].ravel()]))
    if not onset_rows:
        raise InputError("no posterior statistics to build a transition design from")
    return TransitionDesignMatrix(np.vstack(onset_rows), np.vstack(offset_rows))


def fit_transition_params(
    design: TransitionDesignMatrix, init: TransitionParams, config: EmConfig
) -> TransitionParams:
    """Newton fit of the onset and offset logistic coefficients."""
    if design.onset.shape[0] == 0 or design.offset.shape[0] == 0:
        raise InputError("transition design is empty")
    rho = fit_weighted_logistic(
        design.onset[:, :1],
        design.onset[:, 2],
        design.onset[:, 1],
        init=(init.rho0, init.rho1),
        grad_tol=config.newton_grad_tol,
        max_iters=config.newton_max_iters,
    )
    phi = fit_weighted_logistic(
        design.offset[:, :1],
        design.offset[:, 2],
        design.offset[:, 1],
        init=(init.phi0, init.phi1),
        grad_tol=config.newton_grad_tol,
        max_iters=config.newton_max_iters,
    )
    return TransitionParams(float(rho[0]), float(rho[1]), float(phi[0]), float(phi[1]))


def update_emission_params(
    emit: EmissionModel,
    tau_list: list[np.ndarray],
    feats_list: list[FeatureSeries],
    config: EmConfig,
) -> EmissionModel:
    """Refit means, variances, and tied state weights from soft counts.

    Mixtures whose pooled mass vanishes keep their previous parameters
    (with a warning) instead of dividing by zero.
    """
    n, j = emit.means.shape[:2]
    counts = np.zeros((n, j))
    sum_y = np.zeros((n, j, N_FEATURES))
    sum_y2 = np.zeros((n, j, N_FEATURES))
    seiz_mass = np.zeros((n, j))
    base_mass = np.zeros((n, j))
    for tau, feats in zip(tau_list, feats_list):
        tau_j = tau.sum(axis=3)  # (N, T+1, J)
        counts += tau_j.sum(axis=1)
        sum_y += np.einsum("itj,itd->ijd", tau_j, feats.values)
        sum_y2 += np.einsum("itj,itd->ijd", tau_j, feats.values**2)
        seiz_mass += tau[:, :, :, 1].sum(axis=1)
        base_mass += tau[:, :, :, 0].sum(axis=1) + tau[:, :, :, 2].sum(axis=1)

    means = emit.means.copy()
    variances = emit.variances.copy()
    ok = counts > EMPTY_MIXTURE_MASS
    if not np.all(ok):
        for i, jj in zip(*np.nonzero(~ok)):
            warnings.warn(
                f"mixture {jj} of channel {emit.channels[i]!r} received no mass; "
                "keeping its previous parameters",
                RuntimeWarning,
                stacklevel=2,
            )
    means[ok] = sum_y[ok] / counts[ok, None]
    variances[ok] = np.maximum(
        sum_y2[ok] / counts[ok, None] - means[ok] ** 2, config.variance_floor
    )

    weights_base = emit.weights_base.copy()
    weights_seizure = emit.weights_seizure.copy()
    for mass, target, label in ((base_mass, weights_base, "base"), (seiz_mass, weights_seizure, "seizure")):
        denom = mass.sum(axis=1)
        for i in range(n):
            if denom[i] > EMPTY_MIXTURE_MASS:
                target[i] = mass[i] / denom[i]
            else:
                warnings.warn(
                    f"channel {emit.channels[i]!r} received no {label}-state mass; "
                    "keeping its previous weights",
                    RuntimeWarning,
                    stacklevel=2,
                )
    return EmissionModel(emit.channels, means, variances, weights_base, weights_seizure)


def init_from_annotations(
    labeled_sets: list[tuple[FeatureSeries, np.ndarray]],
    montage: MontageGraph,
    config: EmConfig,
) -> EmissionModel:
    """Supervised emission initialization.

    Fits one GMM per channel on all frames pooled across recordings, then
    sets the seizure and baseline mixture weights from the responsibility
    mass of seizure- and non-seizure-labeled frames.
    """
    if not labeled_sets:
        raise InputError("need at least one labeled feature set")
    rng = np.random.default_rng(config.seed)
    j = config.mixtures
    n = montage.n_channels
    means = np.empty((n, j, N_FEATURES))
    variances = np.empty((n, j, N_FEATURES))
    weights_base = np.empty((n, j))
    weights_seizure = np.empty((n, j))
    for i, ch in enumerate(montage.channels):
        xs, ys = [], []
        for feats, labels in labeled_sets:
            if feats.channels != montage.channels:
                raise InputError("feature channels do not match the montage")
            if labels.shape != feats.values.shape[:2]:
                raise InputError("label array does not match the feature dimensions")
            xs.append(feats.values[i])
            ys.append(labels[i])
        x = np.vstack(xs)
        y = np.concatenate(ys).astype(bool)
        for label, count in (("seizure", int(y.sum())), ("non-seizure", int((~y).sum()))):
            if count < j:
                raise InputError(
                    f"channel {ch!r} has only {count} {label}-labeled frames; need >= {j}"
                )
        gmm, resp = fit_diag_gmm(x, j, rng, var_floor=config.variance_floor)
        means[i] = gmm.means
        variances[i] = gmm.variances
        w1 = resp[y].sum(axis=0)
        w0 = resp[~y].sum(axis=0)
        weights_seizure[i] = w1 / w1.sum()
        weights_base[i] = w0 / w0.sum()
    return EmissionModel(montage.channels, means, variances, weights_base, weights_seizure)


@dataclass
class EmResult:
    model: ChmmModel
    fe_trace: list[tuple[int, float]]  # (iteration, total free energy)
    estep_results: list[EStepResult]  # final E-step per recording


def run_em(
    feature_sets: list[FeatureSeries],
    label_sets: list[np.ndarray],
    montage: MontageGraph,
    config: EmConfig = EmConfig(),
) -> EmResult:
    """Variational EM over a set of training recordings.

    Emissions are initialized from the annotations and transitions start at
    the fixed baseline coefficients; afterwards the labels are unused.
    Stops when the relative change in total free energy falls below
    ``config.em_tol`` or after ``config.em_max_iters`` iterations.
    """
    if len(feature_sets) == 0:
        raise InputError("need at least one training recording")
    if len(feature_sets) != len(label_sets):
        raise InputError("feature sets and label sets must pair up")
    emit = init_from_annotations(list(zip(feature_sets, label_sets)), montage, config)
    model = ChmmModel(montage, INIT_TRANSITIONS, emit)
    trace: list[tuple[int, float]] = []
    results: list[EStepResult] = [None] * len(feature_sets)

    prev_fe = None
    for iteration in range(1, config.em_max_iters + 1):
        total_fe = 0.0
        for r, feats in enumerate(feature_sets):
            warm = results[r].stats if results[r] is not None else None
            results[r] = run_estep(
                model,
                feats,
                tol=config.estep_tol,
                max_sweeps=config.estep_max_sweeps,
                init_stats=warm,
            )
            total_fe += results[r].free_energy
        trace.append((iteration, total_fe))
        if prev_fe is not None:
            if total_fe > prev_fe + 1e-6 * abs(prev_fe):
                raise NumericalError(
                    f"total free energy rose from {prev_fe:.6f} to {total_fe:.6f} "
                    f"after the M-step of iteration {iteration - 1}"
                )
            if abs(prev_fe - total_fe) / max(abs(prev_fe), 1e-300) < config.em_tol:
                break
        prev_fe = total_fe

        if not config.freeze_emissions:
            tau_list = [
                mixture_responsibilities(model.emit, feats, res.stats)
                for feats, res in zip(feature_sets, results)
            ]
            new_emit = update_emission_params(model.emit, tau_list, feature_sets, config)
        else:
            new_emit = model.emit
        design = transition_design([res.stats for res in results])
        new_trans = fit_transition_params(design, model.trans, config)
        model = ChmmModel(montage, new_trans, new_emit)
    return EmResult(model, trace, [r for r in results if r is not None])
