"""Diagonal-covariance Gaussian mixture fitting by EM.

Shared engine for supervised emission initialization and the GMM
likelihood-ratio baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InputError

GMM_TOL = 1e-6
GMM_MAX_ITERS = 200


@dataclass
class DiagGmm:
    means: np.ndarray  # (J, D)
    variances: np.ndarray  # (J, D)
    weights: np.ndarray  # (J,)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]


def diag_gmm_logpdf(gmm: DiagGmm, x: np.ndarray) -> np.ndarray:
    """Mixture log-density at each row of x; returns shape (...,)."""
    x = np.asarray(x, dtype=np.float64)
    comp = component_logpdfs(gmm.means, gmm.variances, x)
    logw = np.log(np.clip(gmm.weights, 1e-300, None))
    return logsumexp(logw + comp, axis=-1)


def component_logpdfs(means, variances, x) -> np.ndarray:
    """Per-component diagonal Gaussian log-densities, shape (..., J)."""
    z = (x[..., None, :] - means) ** 2 / variances
    return -0.5 * (np.sum(np.log(2.0 * np.pi * variances), axis=-1) + np.sum(z, axis=-1))


def _kmeanspp_means(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Spread initial means over the data with squared-distance seeding."""
    n = x.shape[0]
    means = np.empty((k, x.shape[1]))
    means[0] = x[rng.integers(n)]
    d2 = np.sum((x - means[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            means[j:] = means[0]
            break
        means[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((x - means[j]) ** 2, axis=1))
    return means


def fit_diag_gmm(
    x: np.ndarray,
    n_components: int,
    rng: np.random.Generator,
    tol: float = GMM_TOL,
    max_iters: int = GMM_MAX_ITERS,
    var_floor: float = 1e-6,
) -> tuple[DiagGmm, np.ndarray]:
    """Fit a diagonal GMM; returns the model and final responsibilities (n, J)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InputError("GMM training data must be a 2-D array")
    n = x.shape[0]
    if n < n_components:
        raise InputError(f"need at least {n_components} points to fit {n_components} mixtures, got {n}")
    means = _kmeanspp_means(x, n_components, rng)
    var0 = np.maximum(x.var(axis=0), var_floor)
    variances = np.tile(var0, (n_components, 1))
    weights = np.full(n_components, 1.0 / n_components)

    prev_ll = -np.inf
    resp = np.full((n, n_components), 1.0 / n_components)
    for _ in range(max_iters):
        logjoint = np.log(np.clip(weights, 1e-300, None)) + component_logpdfs(means, variances, x)
        norm = logsumexp(logjoint, axis=1)
        resp = np.exp(logjoint - norm[:, None])
        ll = float(norm.mean())
        counts = resp.sum(axis=0)
        nonzero = counts > 1e-12
        weights = counts / n
        if np.any(nonzero):
            means[nonzero] = (resp.T @ x)[nonzero] / counts[nonzero, None]
            second = (resp.T @ (x**2))[nonzero] / counts[nonzero, None]
            variances[nonzero] = np.maximum(second - means[nonzero] ** 2, var_floor)
        if abs(ll - prev_ll) < tol:
            break
        prev_ll = ll
    return DiagGmm(means, variances, weights), resp
