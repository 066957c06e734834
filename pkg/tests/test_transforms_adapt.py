import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panelmix.samplers.adapt import AdapterState, adaptive_rwmh, rho_clamp
from panelmix.samplers.transforms import l_of_sigma2, sigma2_of_l


class TestVarianceTransform:
    def test_round_trip(self):
        lo, hi = 0.01, 100.0
        l = l_of_sigma2(1.0, lo, hi)
        assert sigma2_of_l(l, lo, hi) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(-12, 12))
    def test_bijection(self, l):
        # beyond |l| ~ 15 the map saturates and hi - sigma^2 cancels, so the
        # inverse is only meaningful over the interior range exercised here
        lo, hi = 0.003, 250.0
        s2 = sigma2_of_l(l, lo, hi)
        assert lo < s2 < hi
        assert l_of_sigma2(s2, lo, hi) == pytest.approx(l, rel=1e-9, abs=1e-9)

    def test_saturation(self):
        lo, hi = 0.5, 2.0
        assert sigma2_of_l(-800.0, lo, hi) == pytest.approx(lo, rel=1e-12)
        assert sigma2_of_l(800.0, lo, hi) == pytest.approx(hi, rel=1e-12)

    def test_degenerate_lower_bound(self):
        # bounds (0, 1): sigma^2(0) = 1/(1+1) = 0.5
        assert sigma2_of_l(0.0, 0.0, 1.0) == pytest.approx(0.5, rel=1e-12)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            l_of_sigma2(2.5, 0.5, 2.0)
        with pytest.raises(ValueError):
            l_of_sigma2(0.5, 0.5, 2.0)

    def test_vector_consistency(self):
        lo, hi = 1e-3, 1e3
        s2 = np.array([0.01, 1.0, 500.0])
        np.testing.assert_allclose(sigma2_of_l(l_of_sigma2(s2, lo, hi), lo, hi), s2, rtol=1e-10)


class TestAdapterUpdate:
    def test_hand_update(self):
        # accepted at step 1 from log step 0: 0 + 1^-0.55 * (1 - 0.3) = 0.7
        ad = AdapterState.fresh(initial_step=1.0)
        ad.update(1.0)
        assert float(ad.log_step) == pytest.approx(0.7, rel=1e-12)
        assert int(ad.count) == 1

    def test_fixed_point(self):
        ad = AdapterState.fresh(initial_step=0.37)
        before = float(ad.log_step)
        ad.update(0.30)
        assert float(ad.log_step) == pytest.approx(before, rel=1e-12)

    def test_clamp(self):
        assert rho_clamp(25.0, 10.0) == 10.0
        assert rho_clamp(-25.0, 10.0) == -10.0
        assert rho_clamp(3.0, 10.0) == 3.0

    def test_roundtrip_serialization(self):
        ad = AdapterState.fresh(5, initial_step=0.2)
        ad.update(np.full(5, 0.9))
        back = AdapterState.from_jsonable(ad.to_jsonable())
        np.testing.assert_allclose(back.log_step, ad.log_step)
        np.testing.assert_array_equal(back.count, ad.count)


class TestAdaptiveRWMH:
    def test_self_proposal_always_accepted(self):
        # acceptance ratio of an identical point is 1
        ad = AdapterState.fresh(initial_step=1e-30)
        rng = np.random.default_rng(0)
        new, accepted = adaptive_rwmh(ad, lambda x: -0.5 * x * x, 0.7, rng)
        assert accepted
        assert new == pytest.approx(0.7, abs=1e-12)

    def test_nonfinite_proposal_rejected(self):
        def log_target(x):
            return 0.0 if abs(x) < 0.5 else -math.inf

        ad = AdapterState.fresh(initial_step=100.0)
        rng = np.random.default_rng(1)
        rejections = 0
        for _ in range(50):
            new, accepted = adaptive_rwmh(ad, log_target, 0.0, rng)
            if not accepted:
                rejections += 1
                assert new == 0.0
        assert rejections > 0

    def test_prior_recovery_long_run(self):
        # target N(2, 0.5^2): long-run sample mean approaches 2
        ad = AdapterState.fresh(initial_step=1.0)
        rng = np.random.default_rng(2)
        x = 0.0
        xs = []
        for s in range(20_000):
            x, _ = adaptive_rwmh(ad, lambda v: -0.5 * (v - 2.0) ** 2 / 0.25, x, rng)
            if s > 2_000:
                xs.append(x)
        assert np.mean(xs) == pytest.approx(2.0, abs=0.05)
        assert np.std(xs) == pytest.approx(0.5, abs=0.05)
