"""Independent oracles and tiny-model builders shared by the tests.

The oracles here deliberately avoid the library's inference code paths:
chain quantities come from literal path enumeration, and coupled-model
evidence comes from a product-space forward recursion over joint states
(itself validated against literal enumeration on a miniature instance).
"""

import itertools
import math

import numpy as np

from seizchmm.features import FeatureSeries, N_FEATURES
from seizchmm.model import ChmmModel, EmissionModel, TransitionParams
from seizchmm.montage import MontageGraph, NEIGHBOR


def enumerate_chain(logw0, logw1, g, h):
    """Brute-force marginals of one 3-state chain over all 3^(T+1) paths.

    The chain starts in state 0; transition t uses onset probability g[t-1]
    and offset probability h[t-1]; states 0 and 2 emit weight exp(logw0[t]),
    state 1 emits exp(logw1[t]).
    """
    n = len(logw0)
    t_steps = n - 1

    def emis(t, x):
        return math.exp(logw1[t] if x == 1 else logw0[t])

    def trans(t, a, b):
        row = {
            (0, 0): 1.0 - g[t - 1],
            (0, 1): g[t - 1],
            (1, 1): 1.0 - h[t - 1],
            (1, 2): h[t - 1],
            (2, 2): 1.0,
        }
        return row.get((a, b), 0.0)

    z = 0.0
    gamma = np.zeros((n, 3))
    xi = np.zeros((t_steps, 3, 3))
    for path in itertools.product(range(3), repeat=n):
        if path[0] != 0:
            continue
        w = emis(0, path[0])
        for t in range(1, n):
            w *= trans(t, path[t - 1], path[t]) * emis(t, path[t])
        z += w
        for t in range(n):
            gamma[t, path[t]] += w
        for t in range(1, n):
            xi[t - 1, path[t - 1], path[t]] += w
    return gamma / z, xi / z, math.log(z)


def joint_evidence_loglik(model: ChmmModel, logw0, logw1) -> float:
    """log p(Y) of the coupled model via the joint-state forward pass."""
    from seizchmm.model import onset_offset_probs
    from seizchmm.montage import aunt_indices

    n = model.montage.n_channels
    t1 = logw0.shape[1]
    neighbors = aunt_indices(model.montage)
    states = list(itertools.product(range(3), repeat=n))
    index = {s: k for k, s in enumerate(states)}
    m = len(states)

    kernel = np.zeros((m, m))
    for u in states:
        seizing = [x == 1 for x in u]
        rows = []
        for i in range(n):
            eta = sum(seizing[j] for j in neighbors[i])
            gi, hi = onset_offset_probs(model.trans, eta)
            mat = [[1 - gi, gi, 0.0], [0.0, 1 - hi, hi], [0.0, 0.0, 1.0]]
            rows.append(mat[u[i]])
        for v in states:
            p = 1.0
            for i in range(n):
                p *= rows[i][v[i]]
                if p == 0.0:
                    break
            kernel[index[u], index[v]] = p

    def emis_vec(t):
        out = np.empty(m)
        for s, k in index.items():
            out[k] = math.exp(sum(logw1[i, t] if s[i] == 1 else logw0[i, t] for i in range(n)))
        return out

    alpha = np.zeros(m)
    alpha[index[tuple([0] * n)]] = 1.0
    alpha = alpha * emis_vec(0)
    logz = 0.0
    for t in range(1, t1):
        c = alpha.sum()
        alpha /= c
        logz += math.log(c)
        alpha = (alpha @ kernel) * emis_vec(t)
    logz += math.log(alpha.sum())
    return logz


def enumerate_joint_loglik(model: ChmmModel, logw0, logw1) -> float:
    """Literal sum over every joint latent assignment; tiny instances only."""
    from seizchmm.model import onset_offset_probs
    from seizchmm.montage import aunt_indices

    n = model.montage.n_channels
    t1 = logw0.shape[1]
    neighbors = aunt_indices(model.montage)
    total = 0.0
    for flat in itertools.product(range(3), repeat=n * t1):
        x = np.array(flat).reshape(n, t1)
        if np.any(x[:, 0] != 0):
            continue
        w = 1.0
        for i in range(n):
            for t in range(t1):
                w *= math.exp(logw1[i, t] if x[i, t] == 1 else logw0[i, t])
        for t in range(1, t1):
            seizing = x[:, t - 1] == 1
            for i in range(n):
                eta = int(seizing[neighbors[i]].sum()) if neighbors[i] else 0
                gi, hi = onset_offset_probs(model.trans, eta)
                mat = [[1 - gi, gi, 0.0], [0.0, 1 - hi, hi], [0.0, 0.0, 1.0]]
                w *= mat[x[i, t - 1]][x[i, t]]
                if w == 0.0:
                    break
        total += w
    return math.log(total)


def line_montage(names=("A", "B", "C")) -> MontageGraph:
    edges = tuple((names[i], names[i + 1], NEIGHBOR) for i in range(len(names) - 1))
    return MontageGraph(tuple(names), edges)


def isolated_montage(names=("A",)) -> MontageGraph:
    return MontageGraph(tuple(names), ())


def make_emission(channels, rng=None, n_mixtures=1, spread=3.0) -> EmissionModel:
    """Random diagonal-GMM emissions with separated base/seizure weights."""
    rng = rng or np.random.default_rng(0)
    n = len(channels)
    means = rng.normal(0.0, 1.0, (n, n_mixtures, N_FEATURES))
    means[:, n_mixtures // 2 :, :] += spread
    variances = rng.uniform(0.5, 1.5, (n, n_mixtures, N_FEATURES))
    wb = rng.uniform(0.5, 1.0, (n, n_mixtures))
    ws = rng.uniform(0.5, 1.0, (n, n_mixtures))
    if n_mixtures > 1:
        wb[:, n_mixtures // 2 :] *= 0.05
        ws[:, : n_mixtures // 2] *= 0.05
    return EmissionModel(
        tuple(channels),
        means,
        variances,
        wb / wb.sum(1, keepdims=True),
        ws / ws.sum(1, keepdims=True),
    )


def make_model(montage, trans=None, rng=None, n_mixtures=1, spread=3.0) -> ChmmModel:
    trans = trans or TransitionParams(-2.0, 1.0, -1.5, 0.5)
    return ChmmModel(montage, trans, make_emission(montage.channels, rng, n_mixtures, spread))


def random_features(channels, n_frames, rng, loc=0.0, scale=1.0) -> FeatureSeries:
    values = rng.normal(loc, scale, (len(channels), n_frames, N_FEATURES))
    return FeatureSeries(tuple(channels), values)
