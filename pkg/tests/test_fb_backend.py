import numpy as np
import pytest

from helpers import enumerate_chain
from seizchmm import _fb_py
from seizchmm._backend import FB_BACKEND, chain_forward_backward


def random_chain(rng, t_steps, weight_scale=2.0):
    logw0 = rng.normal(0.0, weight_scale, t_steps + 1)
    logw1 = rng.normal(0.0, weight_scale, t_steps + 1)
    g = rng.uniform(1e-4, 0.9, t_steps)
    h = rng.uniform(1e-4, 0.9, t_steps)
    return logw0, logw1, g, h


class TestAgainstEnumeration:
    @pytest.mark.parametrize("t_steps", [0, 1, 2, 4, 6])
    def test_matches_path_enumeration(self, t_steps):
        rng = np.random.default_rng(100 + t_steps)
        for _ in range(6):
            logw0, logw1, g, h = random_chain(rng, t_steps)
            gamma, xi, logz = chain_forward_backward(logw0, logw1, g, h)
            egamma, exi, elogz = enumerate_chain(logw0, logw1, g, h)
            assert np.allclose(gamma, egamma, atol=1e-9)
            assert np.allclose(xi, exi, atol=1e-9)
            assert logz == pytest.approx(elogz, abs=1e-9)

    def test_trivial_chain(self):
        gamma, xi, logz = chain_forward_backward([-1.7], [0.3], [], [])
        assert np.array_equal(gamma, [[1.0, 0.0, 0.0]])
        assert xi.shape == (0, 3, 3)
        assert logz == pytest.approx(-1.7)


class TestClosedFormPrior:
    def test_uniform_emissions_reduce_to_matrix_powers(self):
        # equal data weights cancel, leaving the prior chain
        t_steps = 12
        g_val, h_val = 0.2, 0.35
        logw0 = np.full(t_steps + 1, -0.7)
        logw1 = np.full(t_steps + 1, -0.7)
        gamma, _, _ = chain_forward_backward(
            logw0, logw1, np.full(t_steps, g_val), np.full(t_steps, h_val)
        )
        a = np.array([[1 - g_val, g_val, 0.0], [0.0, 1 - h_val, h_val], [0.0, 0.0, 1.0]])
        dist = np.array([1.0, 0.0, 0.0])
        for t in range(t_steps + 1):
            assert np.allclose(gamma[t], dist, atol=1e-12), t
            dist = dist @ a


class TestInvariants:
    def test_marginal_and_pairwise_consistency(self):
        rng = np.random.default_rng(200)
        logw0, logw1, g, h = random_chain(rng, 40)
        gamma, xi, _ = chain_forward_backward(logw0, logw1, g, h)
        assert np.allclose(gamma.sum(axis=1), 1.0, atol=1e-9)
        assert np.allclose(xi.sum(axis=(1, 2)), 1.0, atol=1e-9)
        assert np.allclose(xi.sum(axis=2), gamma[:-1], atol=1e-9)
        assert np.allclose(xi.sum(axis=1), gamma[1:], atol=1e-9)
        assert np.array_equal(gamma[0], [1.0, 0.0, 0.0])

    def test_long_chain_no_underflow(self):
        rng = np.random.default_rng(201)
        logw0, logw1, g, h = random_chain(rng, 10_000, weight_scale=6.0)
        gamma, xi, logz = chain_forward_backward(logw0, logw1, g, h)
        assert np.isfinite(logz)
        assert np.all(np.isfinite(gamma))
        assert np.allclose(gamma.sum(axis=1), 1.0, atol=1e-9)

    def test_extreme_weight_gaps(self):
        logw0 = np.array([0.0, -900.0, 0.0, -900.0, 0.0])
        logw1 = np.array([-900.0, 0.0, -900.0, 0.0, -900.0])
        g = np.full(4, 0.3)
        h = np.full(4, 0.4)
        gamma, _, logz = chain_forward_backward(logw0, logw1, g, h)
        assert np.isfinite(logz)
        assert np.all(np.isfinite(gamma))


class TestBackendParity:
    def test_backends_agree_bitwise(self):
        if FB_BACKEND != "cython":
            pytest.skip("compiled kernel not built")
        rng = np.random.default_rng(300)
        for t_steps in (0, 3, 17, 256):
            logw0, logw1, g, h = random_chain(rng, t_steps, weight_scale=4.0)
            g1, x1, z1 = chain_forward_backward(logw0, logw1, g, h)
            g2, x2, z2 = _fb_py.chain_forward_backward(logw0, logw1, g, h)
            assert np.array_equal(g1, g2)
            assert np.array_equal(x1, x2)
            assert z1 == z2
