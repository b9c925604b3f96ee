"""Weighted logistic regression fit by Newton's method.

Rows carry a total mass and a success mass, so the same engine serves
binary labels (mass 1 rows) and the soft transition counts pooled from
posterior statistics.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.special import expit, log_expit

from .errors import InputError, NumericalError

SEPARATION_CLAMP = 30.0


def _design(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.ndim != 2:
        raise InputError("logistic design must be a 2-D array")
    return np.hstack([np.ones((x.shape[0], 1)), x])


def weighted_logistic_loglik(beta, x, successes, totals) -> float:
    """Soft-count Bernoulli log-likelihood at ``beta`` (intercept first)."""
    z = _design(x) @ beta
    return float(np.sum(successes * log_expit(z) + (totals - successes) * log_expit(-z)))


def weighted_logistic_grad(beta, x, successes, totals) -> np.ndarray:
    xd = _design(x)
    z = xd @ beta
    return xd.T @ (successes - totals * expit(z))


def fit_weighted_logistic(
    x,
    successes,
    totals,
    init=None,
    grad_tol: float = 1e-8,
    max_iters: int = 50,
    clamp: float = SEPARATION_CLAMP,
) -> np.ndarray:
    """Maximize the weighted Bernoulli log-likelihood by Newton iterations.

    Returns the coefficient vector (intercept first).  Perfectly separated
    data is detected by coefficients diverging past ``clamp`` and returned
    clamped, with a warning.  Unidentifiable directions (zero-variance
    predictors) stay at their initial values through minimum-norm steps.
    """
    xd = _design(x)
    successes = np.asarray(successes, dtype=np.float64)
    totals = np.asarray(totals, dtype=np.float64)
    if xd.shape[0] == 0:
        raise InputError("empty design matrix")
    if np.any(totals < 0) or np.any(successes < -1e-12) or np.any(successes > totals + 1e-9):
        raise InputError("need 0 <= successes <= totals for every row")
    beta = np.zeros(xd.shape[1]) if init is None else np.asarray(init, dtype=np.float64).copy()
    if beta.shape != (xd.shape[1],):
        raise InputError(f"init has {beta.shape[0]} coefficients, design needs {xd.shape[1]}")

    ll = float(np.sum(successes * log_expit(xd @ beta) + (totals - successes) * log_expit(-(xd @ beta))))
    grad_norms = []
    for it in range(1, max_iters + 1):
        z = xd @ beta
        p = expit(z)
        grad = xd.T @ (successes - totals * p)
        grad_norms.append(float(np.max(np.abs(grad))))
        if grad_norms[-1] < grad_tol:
            return beta
        w = totals * p * (1.0 - p)
        hess = xd.T @ (xd * w[:, None])
        if not np.all(np.isfinite(hess)):
            raise NumericalError(f"non-finite Hessian at iteration {it}; |grad| trace {grad_norms}")
        try:
            step = np.linalg.solve(hess, grad)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        # backtracking keeps the concave objective increasing
        scale = 1.0
        for _ in range(40):
            cand = beta + scale * step
            zc = xd @ cand
            ll_cand = float(np.sum(successes * log_expit(zc) + (totals - successes) * log_expit(-zc)))
            if ll_cand >= ll - 1e-12:
                break
            scale *= 0.5
        beta = beta + scale * step
        ll = ll_cand
        if np.any(np.abs(beta) > clamp):
            warnings.warn(
                "logistic regression diverged (separated data); coefficients clamped",
                RuntimeWarning,
                stacklevel=2,
            )
            return np.clip(beta, -clamp, clamp)
    raise NumericalError(
        f"Newton did not converge in {max_iters} iterations; |grad| trace {grad_norms}"
    )
