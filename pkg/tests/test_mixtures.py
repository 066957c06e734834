import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import qmc

from panelmix.mixtures import (
    MixtureState,
    eval_density,
    eval_log_density,
    expected_unique_components,
    gp_covariance,
    mglrx_ck,
    probit_weights,
    stick_to_weights,
    truncation_error_bound,
)


class TestStickToWeights:
    def test_half_sticks(self):
        np.testing.assert_allclose(stick_to_weights([0.5, 0.5]), [0.5, 0.25, 0.25])

    def test_degenerate_first_stick(self):
        p = stick_to_weights([1 - 1e-12, 0.5])
        assert p[0] == pytest.approx(1.0, abs=1e-11)
        assert p[1:].sum() == pytest.approx(0.0, abs=1e-11)

    def test_hand_product(self):
        np.testing.assert_allclose(stick_to_weights([0.3, 0.6]), [0.3, 0.42, 0.28])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(1e-6, 1 - 1e-6), min_size=1, max_size=30))
    def test_simplex(self, sticks):
        p = stick_to_weights(sticks)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(p >= 0.0)


class TestProbitWeights:
    def test_zero_sticks(self):
        np.testing.assert_allclose(probit_weights(np.zeros(2)), [0.5, 0.25, 0.25])

    def test_large_positive_first(self):
        p = probit_weights(np.array([8.0, 0.0]))
        assert p[0] == pytest.approx(1.0, abs=1e-14)

    def test_normal_cdf_table(self):
        p = probit_weights(np.array([0.0, 1.0]))
        np.testing.assert_allclose(p, [0.5, 0.420672, 0.079328], atol=5e-6)

    def test_identical_sticks_identical_units(self):
        z = np.tile(np.array([[0.3], [-0.2]]), (1, 5))  # (K-1=2, N=5)
        p = probit_weights(z)
        assert p.shape == (5, 3)
        assert np.allclose(p, p[0])
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


class TestGPCovariance:
    def test_large_bandwidth_identity(self):
        V = gp_covariance(1e8, np.array([0.0, 1.0, 2.0]), tau=2.0)
        np.testing.assert_allclose(V, 2.0 * np.eye(3) * (1 + 1e-8), atol=1e-10)

    def test_zero_bandwidth_ones(self):
        V = gp_covariance(0.0, np.array([0.0, 1.0]), tau=1.5)
        np.testing.assert_allclose(V, 1.5 * np.ones((2, 2)) + 1.5e-8 * np.eye(2))
        np.linalg.cholesky(V)

    def test_two_point_value(self):
        V = gp_covariance(1.0, np.array([0.0, 1.0]))
        assert V[0, 1] == pytest.approx(math.exp(-1.0), rel=1e-12)

    @pytest.mark.slow
    def test_psd_large(self):
        rng = np.random.default_rng(0)
        V = gp_covariance(2.5, rng.standard_normal(2000))
        np.linalg.cholesky(V)

    def test_symmetric_psd_random(self):
        rng = np.random.default_rng(1)
        for A in (1e-6, 0.1, 5.0):
            V = gp_covariance(A, rng.standard_normal((40, 2)))
            np.testing.assert_allclose(V, V.T)
            np.linalg.cholesky(V)


def _uncond_state(weights, means, variances):
    K = len(weights)
    return MixtureState(
        kind="unconditional",
        K=K,
        mu=np.asarray(means, dtype=float).reshape(K, -1),
        Omega=np.asarray(variances, dtype=float).reshape(K, 1, 1),
        gamma=np.zeros(1, dtype=np.int64),
        weights=np.asarray(weights, dtype=float),
    )


class TestEvalDensity:
    def test_single_standard_normal(self):
        st_ = _uncond_state([1.0], [0.0], [1.0])
        assert eval_density(st_, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-12)

    def test_mixture_collapse(self):
        one = _uncond_state([1.0], [0.3], [2.0])
        two = _uncond_state([0.5, 0.5], [0.3, 0.3], [2.0, 2.0])
        for z in (-1.0, 0.0, 2.5):
            assert eval_density(two, z) == pytest.approx(eval_density(one, z), rel=1e-12)

    def test_conditional_mean_regression(self):
        state = MixtureState(
            kind="conditional",
            K=1,
            mu=np.array([[[0.0, 1.0]]]),  # mean = 0 + 1 * c0
            Omega=np.array([[[1.0]]]),
            gamma=np.zeros(1, dtype=np.int64),
            weights=np.array([[1.0]]),
            zeta=np.zeros((0, 1)),
            cpoints=np.array([[2.0]]),
        )
        val = eval_density(state, 2.0, c0=2.0)
        assert val == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-10)

    def test_conditional_requires_c0(self):
        state = MixtureState(
            kind="conditional",
            K=1,
            mu=np.array([[[0.0, 1.0]]]),
            Omega=np.array([[[1.0]]]),
            gamma=np.zeros(1, dtype=np.int64),
            weights=np.array([[1.0]]),
            zeta=np.zeros((0, 1)),
            cpoints=np.array([[2.0]]),
        )
        with pytest.raises(ValueError):
            eval_density(state, 0.0)

    @pytest.mark.slow
    def test_integrates_to_one_quasirandom(self):
        rng = np.random.default_rng(2)
        for d in (1, 2, 3):
            K = 3
            means = rng.standard_normal((K, d))
            A = rng.standard_normal((K, d, d))
            Om = np.einsum("kij,klj->kil", A, A) + 2 * np.eye(d)
            state = MixtureState(
                kind="unconditional",
                K=K,
                mu=means,
                Omega=Om,
                gamma=np.zeros(1, dtype=np.int64),
                weights=np.full(K, 1 / K),
            )
            lo, hi = -12.0, 12.0
            sampler = qmc.Sobol(d, scramble=False, seed=7)
            pts = lo + (hi - lo) * sampler.random(2**17)
            vals = np.array([eval_density(state, p) for p in pts])
            integral = vals.mean() * (hi - lo) ** d
            assert integral == pytest.approx(1.0, abs=1e-2)


class TestClusterDiagnostics:
    def test_antoniak_mean(self):
        m, v = expected_unique_components(1.0, 1000)
        assert m == pytest.approx(math.log(1001.0), rel=1e-12)
        assert v == pytest.approx(math.log(1001.0) - 1.0, rel=1e-12)

    def test_small_alpha_limit(self):
        m, _ = expected_unique_components(1e-12, 1000)
        assert m < 1e-8

    def test_two_by_two(self):
        m, _ = expected_unique_components(2.0, 2)
        assert m == pytest.approx(2.0 * math.log(2.0), rel=1e-12)

    def test_truncation_bound_paper_value(self):
        assert truncation_error_bound(1.0, 1000, 50) <= 2.10e-18

    def test_truncation_bound_k1(self):
        assert truncation_error_bound(2.0, 7, 1) == pytest.approx(28.0)

    def test_truncation_bound_hand(self):
        assert truncation_error_bound(2.0, 100, 21) == pytest.approx(400 * math.exp(-10.0), rel=1e-12)


class TestMglrxCk:
    def test_finite_at_one(self):
        c1 = mglrx_ck(1, eta=2.0)
        assert np.isfinite(c1) and c1 > 0
        assert c1 == pytest.approx(math.log(2.0) ** -0.5, rel=1e-12)

    def test_decay(self):
        cs = [mglrx_ck(k, 2.0) for k in range(1, 6)]
        assert all(a > b for a, b in zip(cs, cs[1:]))


class TestSerialization:
    def test_roundtrip(self):
        rng = np.random.default_rng(4)
        state = MixtureState(
            kind="unconditional",
            K=3,
            mu=rng.standard_normal((3, 2)),
            Omega=np.tile(np.eye(2), (3, 1, 1)),
            gamma=rng.integers(0, 3, size=5),
            weights=np.array([0.5, 0.3, 0.2]),
            sticks=np.array([0.5, 0.6]),
            alpha=1.3,
        )
        back = MixtureState.from_json(state.to_json())
        np.testing.assert_allclose(back.mu, state.mu)
        np.testing.assert_allclose(back.weights, state.weights)
        assert back.kind == state.kind and back.K == state.K
        assert back.alpha == pytest.approx(state.alpha)
        assert np.array_equal(back.gamma, state.gamma)
