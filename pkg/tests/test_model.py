import math

import numpy as np
import pytest
from scipy import stats as sstats

from helpers import isolated_montage, line_montage, make_emission, make_model, random_features
from seizchmm.errors import InputError
from seizchmm.features import FeatureSeries, N_FEATURES
from seizchmm.model import (
    ChmmModel,
    EmissionModel,
    StateSequences,
    TransitionParams,
    count_seizure_aunts,
    emission_loglik,
    joint_loglik,
    model_from_text,
    model_to_text,
    onset_offset_probs,
    sample_recording,
    sample_states,
    seizure_intervals,
    transition_matrix,
)
from seizchmm.montage import MontageGraph, aunt_indices, aunts

INIT = TransitionParams(-7.0, 2.0, -3.0, 0.0)


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


class TestOnsetOffsetProbs:
    def test_baseline_rates_at_zero_aunts(self):
        g, h = onset_offset_probs(INIT, 0)
        assert g == pytest.approx(sigmoid(-7.0), rel=1e-12)
        assert h == pytest.approx(sigmoid(-3.0), rel=1e-12)
        assert g == pytest.approx(9.1105e-4, rel=1e-4)
        assert h == pytest.approx(4.7426e-2, rel=1e-4)

    def test_sevenfold_onset_boost_per_aunt(self):
        g0, _ = onset_offset_probs(INIT, 0)
        g1, h1 = onset_offset_probs(INIT, 1)
        assert g1 == pytest.approx(6.6929e-3, rel=1e-4)
        assert g1 / g0 == pytest.approx(7.35, rel=0.01)
        assert h1 == pytest.approx(sigmoid(-3.0), rel=1e-12)  # phi1 = 0

    def test_zero_params_give_half(self):
        g, _ = onset_offset_probs(TransitionParams(0.0, 0.0, -1.0, 0.0), 17)
        assert g == 0.5

    def test_monotone_in_aunt_count_for_positive_slope(self):
        gs = [onset_offset_probs(INIT, eta)[0] for eta in range(6)]
        assert all(a < b for a, b in zip(gs, gs[1:]))


class TestTransitionMatrix:
    def test_structure_and_entries(self):
        a = transition_matrix(INIT, 0)
        assert a[0, 1] == pytest.approx(9.1105e-4, rel=1e-4)
        assert a[1, 2] == pytest.approx(4.7426e-2, rel=1e-4)
        assert a[0, 2] == a[1, 0] == a[2, 0] == a[2, 1] == 0.0

    def test_rows_stochastic(self):
        for eta in range(5):
            a = transition_matrix(TransitionParams(-1.3, 0.7, 0.4, -0.2), eta)
            assert np.allclose(a.sum(axis=1), 1.0, atol=1e-15)
            assert np.allclose(np.triu(a), a)

    def test_absorbing_last_row(self):
        a = transition_matrix(TransitionParams(3.0, -1.0, 2.0, 0.1), 2)
        assert np.array_equal(a[2], [0.0, 0.0, 1.0])

    def test_vanishing_rates_give_identity(self):
        a = transition_matrix(TransitionParams(-500.0, 0.0, -500.0, 0.0), 0)
        assert np.allclose(a, np.eye(3), atol=1e-100)


class TestCountSeizureAunts:
    def test_line_graph_hand_count(self):
        m = line_montage(("A", "B", "C"))
        states = StateSequences(("A", "B", "C"), np.array([[0, 1], [0, 0], [0, 1]]).astype(np.int8))
        # at t=1 the previous frame is all baseline
        assert count_seizure_aunts(m, states, "B", 1) == 0
        states2 = StateSequences(("A", "B", "C"), np.array([[0, 1, 1], [0, 0, 0], [0, 1, 1]]).astype(np.int8))
        assert count_seizure_aunts(m, states2, "B", 2) == 2

    def test_all_aunts_seizing(self):
        m = line_montage(("A", "B", "C"))
        x = np.array([[0, 1], [0, 0], [0, 1]], dtype=np.int8)
        states = StateSequences(("A", "B", "C"), x)
        assert count_seizure_aunts(m, states, "B", 2 - 1 + 1) == len(aunts(m, "B"))

    def test_t_zero_rejected(self):
        m = line_montage()
        states = StateSequences(("A", "B", "C"), np.zeros((3, 2), dtype=np.int8))
        with pytest.raises(ValueError):
            count_seizure_aunts(m, states, "A", 0)


class TestEmissionLoglik:
    def test_standard_normal_at_mean(self):
        emit = EmissionModel(
            ("A",), np.zeros((1, 1, N_FEATURES)), np.ones((1, 1, N_FEATURES)),
            np.ones((1, 1)), np.ones((1, 1)),
        )
        expected = -0.5 * N_FEATURES * math.log(2.0 * math.pi)
        assert emission_loglik(emit, np.zeros(N_FEATURES), "A", 0) == pytest.approx(expected, rel=1e-12)

    def test_tied_pre_post_states(self):
        emit = make_emission(("A", "B"), np.random.default_rng(5), n_mixtures=3)
        y = np.random.default_rng(6).normal(size=N_FEATURES)
        assert emission_loglik(emit, y, "B", 0) == emission_loglik(emit, y, "B", 2)

    def test_dominant_component(self):
        means = np.stack([np.zeros((2, N_FEATURES)), np.full((2, N_FEATURES), 50.0)], axis=1)
        emit = EmissionModel(
            ("A", "B"), means, np.ones((2, 2, N_FEATURES)),
            np.tile([1.0, 0.0], (2, 1)), np.tile([1.0, 0.0], (2, 1)),
        )
        got = emission_loglik(emit, np.zeros(N_FEATURES), "A", 1)
        single = -0.5 * N_FEATURES * math.log(2 * math.pi)
        assert got == pytest.approx(single, abs=1e-6)

    def test_mixture_permutation_invariance(self):
        rng = np.random.default_rng(7)
        means = rng.normal(size=(1, 3, N_FEATURES))
        variances = rng.uniform(0.5, 2.0, size=(1, 3, N_FEATURES))
        w = np.array([[0.2, 0.5, 0.3]])
        perm = [2, 0, 1]
        emit1 = EmissionModel(("A",), means, variances, w, w)
        emit2 = EmissionModel(("A",), means[:, perm], variances[:, perm], w[:, perm], w[:, perm])
        y = rng.normal(size=N_FEATURES)
        assert emission_loglik(emit1, y, "A", 1) == pytest.approx(
            emission_loglik(emit2, y, "A", 1), rel=1e-14
        )


class TestJointLoglik:
    def test_single_channel_single_frame(self):
        m = isolated_montage(("A",))
        model = make_model(m)
        feats = random_features(("A",), 1, np.random.default_rng(8))
        states = StateSequences(("A",), np.zeros((1, 1), dtype=np.int8))
        assert joint_loglik(model, states, feats) == pytest.approx(
            emission_loglik(model.emit, feats.values[0, 0], "A", 0), rel=1e-12
        )

    def test_backward_transition_is_impossible(self):
        m = isolated_montage(("A",))
        model = make_model(m)
        feats = random_features(("A",), 3, np.random.default_rng(9))
        states = StateSequences(("A",), np.array([[0, 1, 0]], dtype=np.int8))
        assert joint_loglik(model, states, feats) == -math.inf

    def test_nonzero_start_rejected(self):
        with pytest.raises(InputError):
            StateSequences(("A",), np.array([[1, 1]], dtype=np.int8))

    def test_matches_hand_expansion(self):
        # N=2 coupled pair, T=2: independently re-expand the factorization
        montage = MontageGraph(("A", "B"), (("A", "B", "neighbor"),))
        model = make_model(montage, TransitionParams(-1.0, 0.8, -0.5, 0.3))
        rng = np.random.default_rng(10)
        feats = random_features(("A", "B"), 3, rng)
        x = np.array([[0, 1, 2], [0, 0, 1]], dtype=np.int8)
        states = StateSequences(("A", "B"), x)

        def sig(v):
            return 1.0 / (1.0 + math.exp(-v))

        expected = 0.0
        for i, ch in enumerate(("A", "B")):
            for t in range(3):
                expected += emission_loglik(model.emit, feats.values[i, t], ch, int(x[i, t]))
        tp = model.trans
        for t in (1, 2):
            for i, other in ((0, 1), (1, 0)):
                eta = 1 if x[other, t - 1] == 1 else 0
                g = sig(tp.rho0 + tp.rho1 * eta)
                h = sig(tp.phi0 + tp.phi1 * eta)
                a = [[1 - g, g, 0.0], [0.0, 1 - h, h], [0.0, 0.0, 1.0]]
                expected += math.log(a[x[i, t - 1]][x[i, t]])
        assert joint_loglik(model, states, feats) == pytest.approx(expected, rel=1e-12)


class TestSampling:
    def test_seed_determinism(self):
        model = make_model(line_montage())
        s1, f1 = sample_recording(model, 50, seed=123)
        s2, f2 = sample_recording(model, 50, seed=123)
        assert np.array_equal(s1.states, s2.states)
        assert np.array_equal(f1.values, f2.values)

    def test_different_seeds_differ(self):
        model = make_model(line_montage(), TransitionParams(-1.0, 0.0, -1.0, 0.0))
        _, f1 = sample_recording(model, 50, seed=1)
        _, f2 = sample_recording(model, 50, seed=2)
        assert not np.array_equal(f1.values, f2.values)

    def test_tiny_onset_rate_never_fires(self):
        model = make_model(isolated_montage(("A",)), TransitionParams(-50.0, 0.0, -3.0, 0.0))
        rng = np.random.default_rng(11)
        for _ in range(100):
            states = sample_states(model, 100, rng)
            assert np.all(states.states == 0)

    def test_sampled_states_monotone(self):
        model = make_model(line_montage(), TransitionParams(-2.0, 1.5, -1.0, 0.2))
        for seed in range(10):
            states, _ = sample_recording(model, 80, seed=seed)
            assert states.is_monotone()

    def test_empirical_transition_frequencies(self):
        # chi-square sanity of sampled onsets/offsets against the matrix rows
        trans = TransitionParams(-2.0, 0.0, -1.0, 0.0)
        model = make_model(isolated_montage(("A",)), trans)
        rng = np.random.default_rng(12)
        onsets = offsets = stay0 = stay1 = 0
        for _ in range(400):
            x = sample_states(model, 250, rng).states[0]
            prev, nxt = x[:-1], x[1:]
            onsets += int(np.sum((prev == 0) & (nxt == 1)))
            stay0 += int(np.sum((prev == 0) & (nxt == 0)))
            offsets += int(np.sum((prev == 1) & (nxt == 2)))
            stay1 += int(np.sum((prev == 1) & (nxt == 1)))
        g, h = onset_offset_probs(trans, 0)
        for observed, p in (((onsets, stay0), g), ((offsets, stay1), h)):
            total = observed[0] + observed[1]
            chi2 = sstats.chisquare(observed, [total * p, total * (1 - p)])
            assert chi2.pvalue > 1e-4

    def test_frames_zero(self):
        model = make_model(line_montage())
        states, feats = sample_recording(model, 0, seed=0)
        assert states.states.shape == (3, 1)
        assert feats.n_frames == 1

    def test_seizure_intervals_consistency(self):
        model = make_model(line_montage(), TransitionParams(-2.0, 1.0, -1.0, 0.0))
        states, feats = sample_recording(model, 60, seed=7)
        intervals = seizure_intervals(states, feats.frame_step_s)
        for ch, spans in intervals.items():
            i = states.channels.index(ch)
            for onset, offset in spans:
                t0 = int(round(onset / feats.frame_step_s))
                t1 = int(round(offset / feats.frame_step_s))
                assert np.all(states.states[i, t0:t1] == 1)


class TestModelFile:
    def test_round_trip(self):
        model = make_model(line_montage(), n_mixtures=3)
        text = model_to_text(model)
        back = model_from_text(text)
        assert back.montage == model.montage
        assert back.trans == model.trans
        assert np.array_equal(back.emit.means, model.emit.means)
        assert np.array_equal(back.emit.variances, model.emit.variances)
        assert np.array_equal(back.emit.weights_base, model.emit.weights_base)
        assert np.array_equal(back.emit.weights_seizure, model.emit.weights_seizure)

    def test_header_required(self):
        with pytest.raises(InputError, match="header"):
            model_from_text("something else\n")

    def test_emission_channels_must_match_montage(self):
        model = make_model(line_montage())
        other = make_emission(("A", "B"), np.random.default_rng(0))
        with pytest.raises(InputError):
            ChmmModel(model.montage, model.trans, other)
