"""Conditional (probit stick-breaking) block steps."""

import math

import numpy as np
import pytest

from panelmix.mixtures import mglrx_ck, probit_log_weights
from panelmix.priors import MixtureBlockPrior, scalar_block
from panelmix.samplers.blocks import CondBlock
from panelmix.samplers.rng import chain_rng


def _block(N=12, K=4, d=1, d_c=1, seed=0):
    rng = np.random.default_rng(seed)
    prior = scalar_block(m0=0.0, psi0=1.0, a0=2.0, b0=1.0, K=K)
    if d > 1:
        prior = MixtureBlockPrior(
            d=d, m0=np.zeros(d), psi0=1.0, nu0=d + 3.0, Psi0=2.0 * np.eye(d), K=K
        )
    cond = rng.standard_normal((N, d_c))
    blk = CondBlock(prior.conditional(d_c), cond)
    return blk, rng


class TestBandwidthKernel:
    def test_hand_value_single_unit(self):
        # N=1, A=1, C_k=1, eta=2, zeta=0: log kernel = -1 - 0.5 log(2 pi)
        prior = scalar_block(m0=0.0, psi0=1.0, a0=2.0, b0=1.0, K=3)
        blk = CondBlock(prior.conditional(1), np.array([[0.3]]))
        blk.Ck = np.array([1.0, 1.0])  # override the tiny prior constants
        val = blk.bandwidth_log_kernel(1.0, np.zeros(1), k=1)
        expected = -1.0 - 0.5 * math.log(2.0 * math.pi)
        assert val == pytest.approx(expected, abs=1e-4)

    def test_nonpositive_bandwidth_rejected(self):
        blk, _ = _block()
        assert blk.bandwidth_log_kernel(0.0, np.zeros(blk.N), k=1) == -math.inf
        assert blk.bandwidth_log_kernel(-1.0, np.zeros(blk.N), k=1) == -math.inf

    def test_small_ck_concentrates_at_small_A(self):
        # kernel(C_k/2) >> kernel(2 C_k) for late components
        blk, _ = _block(N=6, K=8)
        k = 6
        Ck = blk.Ck[k - 1]
        zeta = np.zeros(blk.N)
        lo = blk.bandwidth_log_kernel(Ck / 2.0, zeta, k=k)
        hi = blk.bandwidth_log_kernel(2.0 * Ck, zeta, k=k)
        assert lo > hi + 1.0


class TestSweepSteps:
    def test_xi_truncation_pattern(self):
        blk, _ = _block(N=30, K=4)
        rng = chain_rng(1)
        mix = blk.init_state(np.zeros((30, 1)), rng)
        mix.gamma = np.repeat(np.arange(3), 10).astype(np.int64)
        adapter = blk.new_adapter()
        blk.sweep_weights(mix, adapter, rng)
        # for unit i: xi_k < 0 when k < gamma_i, >= 0 when k == gamma_i
        for j in range(blk.prior.K - 1):
            k = j + 1
            for i in range(30):
                g = mix.gamma[i] + 1
                if k < g:
                    assert mix.xi[j, i] < 0.0
                elif k == g:
                    assert mix.xi[j, i] >= 0.0

    def test_weights_are_probit_of_zeta(self):
        blk, _ = _block(N=8, K=3)
        rng = chain_rng(2)
        mix = blk.init_state(np.zeros((8, 1)), rng)
        adapter = blk.new_adapter()
        blk.sweep_weights(mix, adapter, rng)
        np.testing.assert_allclose(
            mix.weights, np.exp(probit_log_weights(mix.zeta)), rtol=1e-12
        )
        np.testing.assert_allclose(mix.weights.sum(axis=1), 1.0, atol=1e-12)

    def test_bandwidth_acceptance_tracked(self):
        blk, _ = _block(N=20, K=5)
        rng = chain_rng(3)
        mix = blk.init_state(np.zeros((20, 1)), rng)
        adapter = blk.new_adapter()
        for _ in range(5):
            blk.sweep_weights(mix, adapter, rng)
        assert 0.0 <= blk.last_accept <= 1.0
        assert np.all(adapter.count == 5)

    def test_components_two_step_update(self):
        # single member at c0 = 0 reduces to the unconditional update on the
        # intercept column; a near-degenerate IW prior pins Omega ~= 1 so the
        # marginal mean matches the fixed-Omega value 0.5
        prior = scalar_block(m0=0.0, psi0=1.0, a0=5e5, b0=5e5, K=2)
        blk = CondBlock(prior.conditional(1), np.zeros((1, 1)))
        rng = chain_rng(4)
        mix = blk.init_state(np.zeros((1, 1)), rng)
        mix.gamma = np.zeros(1, dtype=np.int64)
        z = np.array([[1.0]])
        means, slopes = [], []
        for _ in range(4000):
            blk.sweep_components(mix, z, rng)
            means.append(mix.mu[0, 0, 0])
            slopes.append(mix.mu[0, 0, 1])
        assert np.mean(means) == pytest.approx(0.5, abs=0.05)
        assert np.mean(slopes) == pytest.approx(0.0, abs=0.05)  # slope keeps its prior

    def test_memberships_use_conditional_means(self):
        blk, _ = _block(N=40, K=2, d_c=1, seed=5)
        rng = chain_rng(6)
        mix = blk.init_state(np.zeros((40, 1)), rng)
        # component 0 tracks c, component 1 tracks -c; tight covariances
        mix.mu = np.array([[[0.0, 3.0]], [[0.0, -3.0]]])
        mix.Omega = np.full((2, 1, 1), 0.05)
        mix.zeta = np.zeros((1, 40))
        z = 3.0 * blk.c  # matches component 0 exactly
        blk.sweep_memberships(mix, z, rng)
        frac0 = (mix.gamma == 0).mean()
        assert frac0 > 0.9


class TestInitState:
    def test_initial_bandwidths_are_prior_constants(self):
        blk, _ = _block(N=10, K=5)
        rng = chain_rng(7)
        mix = blk.init_state(np.zeros((10, 1)), rng)
        np.testing.assert_allclose(mix.bandwidth, blk.Ck)
        assert mix.zeta.shape == (4, 10)
        np.testing.assert_allclose(mix.zeta, 0.0)

    def test_ck_values(self):
        blk, _ = _block(N=5, K=4, d_c=1)
        eta = 2.0
        expected = [mglrx_ck(k, eta) for k in (1, 2, 3)]
        np.testing.assert_allclose(blk.Ck, expected)
