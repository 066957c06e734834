import dataclasses
import math

import numpy as np
import pytest

from panelmix.panel import panel_from_arrays
from panelmix.priors import (
    PredictorSpec,
    elicit_defaults,
    param_marginal_logpdf,
    param_prior_matched,
)


def _panel(y):
    return panel_from_arrays(np.asarray(y, dtype=float))


class TestElicitDefaults:
    def test_fixed_constants(self):
        rng = np.random.default_rng(0)
        data = _panel(rng.standard_normal((20, 8)))
        h = elicit_defaults(data)
        assert h.a0_sigma2 == 2.0
        assert h.m0_beta[data.lag_col] == 0.5
        assert h.lam.a0_alpha == 2.0 and h.lam.b0_alpha == 2.0
        assert h.lam.K == 50
        assert h.lam.psi0 == 1.0
        np.testing.assert_allclose(h.lam.m0, 0.0)

    def test_constant_outcomes_rejected(self):
        y = np.tile(np.array([[1.0], [2.0], [3.0]]), (1, 8))
        with pytest.raises(ValueError, match="zero within variance"):
            elicit_defaults(_panel(y))

    def test_two_unit_hand_values(self):
        # within-variances 1 and 3 -> b0_sigma2 = 2, psi0_beta = 0.5
        T = 5
        t = np.arange(T + 2)
        base = (t - t[: T + 1].mean() * 0) * 0.0
        y0 = np.sqrt(1.0) * _std_pattern(T)
        y1 = np.sqrt(3.0) * _std_pattern(T)
        y = np.vstack([y0, y1])
        data = _panel(y)
        h = elicit_defaults(data)
        assert h.b0_sigma2 == pytest.approx(2.0, rel=1e-12)
        np.testing.assert_allclose(h.psi0_beta, 0.5)
        assert h.sigma2_lo == pytest.approx(2e-4)
        assert h.sigma2_hi == pytest.approx(2e4)

    def test_scale_covariance(self):
        rng = np.random.default_rng(1)
        y = rng.standard_normal((30, 9))
        h1 = elicit_defaults(_panel(y))
        s = 3.0
        h2 = elicit_defaults(_panel(s * y))
        assert h2.b0_sigma2 == pytest.approx(s**2 * h1.b0_sigma2, rel=1e-12)
        np.testing.assert_allclose(h2.psi0_beta, h1.psi0_beta / s**2, rtol=1e-12)
        # lambda scale: Psi0 = 2 b0_lam I
        np.testing.assert_allclose(h2.lam.Psi0, s**2 * h1.lam.Psi0, rtol=1e-12)

    def test_single_observation_units_warn(self):
        y = np.full((3, 6), np.nan)
        y[:, :] = np.random.default_rng(2).standard_normal((3, 6))
        y[2, 2:] = np.nan  # unit 2 keeps only one usable transition
        data = _panel(y)
        with pytest.warns(UserWarning, match="excluded"):
            elicit_defaults(data)


def _std_pattern(T):
    """Sequence over periods 0..T+1 whose estimation window has variance 1."""
    vals = np.array([0.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, 0.0][: T + 2])
    est = vals[1 : T + 1]
    sd = est.std(ddof=1)
    out = vals / sd
    return out


class TestParamPriorMatched:
    def test_matches_base_distribution(self):
        rng = np.random.default_rng(3)
        data = _panel(rng.standard_normal((25, 8)))
        h = elicit_defaults(data)
        blk = param_prior_matched(h)
        assert blk.K == 1
        np.testing.assert_allclose(blk.m0, h.lam.m0)
        assert blk.psi0 == h.lam.psi0
        np.testing.assert_allclose(blk.Psi0, h.lam.Psi0)

    def test_marginal_is_student_t(self):
        # NIG(a0=2, b0=1): marginal is scaled t with 4 degrees of freedom
        from panelmix.priors import scalar_block
        from scipy.stats import t as student_t

        blk = scalar_block(m0=0.0, psi0=1.0, a0=2.0, b0=1.0)
        grid = np.linspace(-4, 4, 31)
        ours = param_marginal_logpdf(blk, grid[:, None])
        scale = math.sqrt((1 + 1.0) * 1.0 / 2.0)
        ref = student_t(df=4, loc=0.0, scale=scale).logpdf(grid)
        np.testing.assert_allclose(ours, ref, atol=1e-10)

    def test_marginal_matches_monte_carlo(self):
        from panelmix.priors import scalar_block

        blk = scalar_block(m0=0.5, psi0=2.0, a0=3.0, b0=2.0)
        rng = np.random.default_rng(4)
        n = 200_000
        omega2 = 2.0 / rng.standard_gamma(3.0, size=n)
        mu = 0.5 + np.sqrt(2.0 * omega2) * rng.standard_normal(n)
        lam = mu + np.sqrt(omega2) * rng.standard_normal(n)
        # compare CDF at a few points
        for q in (-1.0, 0.0, 0.5, 2.0):
            from scipy.integrate import quad

            dens = lambda x: float(np.exp(param_marginal_logpdf(blk, np.array([[x]]))))
            cdf_analytic = quad(dens, -60, q, limit=400)[0]
            cdf_mc = (lam <= q).mean()
            assert cdf_mc == pytest.approx(cdf_analytic, abs=4e-3)


class TestPredictorSpec:
    def test_unknown_variant_rejected(self):
        with pytest.raises(ValueError, match="unknown predictor variant"):
            PredictorSpec(variant="banana")

    def test_oracle_requires_truth(self):
        with pytest.raises(ValueError, match="truth"):
            PredictorSpec(variant="oracle")

    def test_conditional_requires_selector(self):
        with pytest.raises(ValueError, match="conditioning"):
            PredictorSpec(variant="np_c")

    def test_roundtrip_serialization(self):
        rng = np.random.default_rng(5)
        data = _panel(rng.standard_normal((15, 8)))
        h = elicit_defaults(data)
        spec = PredictorSpec(variant="np_cr", heteroskedastic=True, conditioning=("y0",), hyper=h)
        back = PredictorSpec.from_jsonable(spec.to_jsonable())
        assert back.variant == spec.variant
        assert back.conditioning == spec.conditioning
        assert back.heteroskedastic == spec.heteroskedastic
        np.testing.assert_allclose(back.hyper.m0_beta, h.m0_beta)
        np.testing.assert_allclose(back.hyper.lam.Psi0, h.lam.Psi0)
        assert back.spec_hash() == spec.spec_hash()

    def test_names(self):
        assert PredictorSpec(variant="np_r").name == "np_r"
        assert PredictorSpec(variant="np_r", heteroskedastic=True).name == "heterosk_np_r"
        assert PredictorSpec(variant="homog", heteroskedastic=True).name == "homog"
