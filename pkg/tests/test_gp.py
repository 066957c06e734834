"""Low-rank GP algebra verified against dense Cholesky computations."""

import math

import numpy as np
import pytest

from panelmix.mixtures import GP_JITTER, gp_covariance
from panelmix.samplers.gp import GPFactor, pairwise_sq_dists, pivoted_cholesky


def _dense_reference(points, A, tau=1.0):
    V = tau * np.exp(-A * pairwise_sq_dists(points))
    return V + GP_JITTER * tau * np.eye(len(points))


@pytest.fixture(params=[1e-6, 0.05, 1.0, 8.0])
def factor_case(request):
    rng = np.random.default_rng(42)
    pts = rng.standard_normal(220)
    A = request.param
    d2 = pairwise_sq_dists(pts)
    fac = GPFactor.build(d2, A)
    Vref = _dense_reference(pts, A)
    return fac, Vref


class TestPivotedCholesky:
    def test_reconstruction_error_below_tolerance(self):
        rng = np.random.default_rng(0)
        pts = rng.standard_normal(150)
        d2 = pairwise_sq_dists(pts)
        for A in (1e-5, 0.3, 4.0):
            Phi, complete = pivoted_cholesky(d2, A, tau=1.0, tol=1e-8, max_rank=384)
            assert complete
            V = np.exp(-A * d2)
            resid = V - Phi @ Phi.T
            assert np.abs(np.diag(resid)).max() <= 1e-8 * 1.001
            # PSD residual: off-diagonals bounded by sqrt of diagonal products
            assert np.abs(resid).max() <= 1.1e-8 + 1e-12

    def test_tiny_bandwidth_low_rank(self):
        rng = np.random.default_rng(1)
        pts = rng.standard_normal(400)
        d2 = pairwise_sq_dists(pts)
        Phi, complete = pivoted_cholesky(d2, 1e-7, tau=1.0, tol=1e-8, max_rank=384)
        assert complete
        assert Phi.shape[1] <= 6


class TestGPFactorIdentities:
    def test_woodbury_algebra_exact(self, factor_case):
        # identities hold to roundoff against dense algebra on the factor's
        # own model Phi Phi' + delta I
        fac, _ = factor_case
        if fac.is_dense:
            return
        Vmod = fac.Phi @ fac.Phi.T + fac.delta * np.eye(fac.N)
        sign, ld = np.linalg.slogdet(Vmod)
        assert fac.logdet() == pytest.approx(ld, rel=1e-9, abs=1e-5)
        rng = np.random.default_rng(1)
        x = rng.standard_normal(fac.N)
        # cond(Vmod) ~ 1/delta ~ 1e8, so both solvers carry O(1e-8) relative
        # error; agreement at that level is roundoff-exact
        assert fac.quad(x) == pytest.approx(float(x @ np.linalg.solve(Vmod, x)), rel=3e-7)
        np.testing.assert_allclose(
            fac.solve_VpI(x), np.linalg.solve(Vmod + np.eye(fac.N), x), rtol=1e-9, atol=1e-12
        )

    def test_logdet(self, factor_case):
        fac, Vref = factor_case
        sign, ref = np.linalg.slogdet(Vref)
        assert sign > 0
        assert fac.logdet() == pytest.approx(ref, rel=1e-6, abs=0.05)

    def test_quadratic_form(self, factor_case):
        fac, Vref = factor_case
        rng = np.random.default_rng(2)
        for _ in range(3):
            x = rng.standard_normal(Vref.shape[0])
            ref = float(x @ np.linalg.solve(Vref, x))
            assert fac.quad(x) == pytest.approx(ref, rel=1e-4)

    def test_gauss_loglik(self, factor_case):
        fac, Vref = factor_case
        rng = np.random.default_rng(3)
        x = np.linalg.cholesky(Vref) @ rng.standard_normal(Vref.shape[0])
        N = Vref.shape[0]
        sign, ld = np.linalg.slogdet(Vref)
        ref = -0.5 * (N * math.log(2 * math.pi) + ld + float(x @ np.linalg.solve(Vref, x)))
        assert fac.gauss_loglik(x) == pytest.approx(ref, rel=1e-6, abs=0.05)

    def test_solve_VpI(self, factor_case):
        fac, Vref = factor_case
        rng = np.random.default_rng(4)
        x = rng.standard_normal(Vref.shape[0])
        ref = np.linalg.solve(Vref + np.eye(Vref.shape[0]), x)
        np.testing.assert_allclose(fac.solve_VpI(x), ref, rtol=1e-5, atol=1e-8)

    def test_sample_prior_covariance(self):
        rng = np.random.default_rng(5)
        pts = rng.standard_normal(40)
        d2 = pairwise_sq_dists(pts)
        fac = GPFactor.build(d2, 0.8)
        Vref = _dense_reference(pts, 0.8)
        draws = np.stack([fac.sample_prior(rng) for _ in range(40_000)])
        emp = np.cov(draws.T)
        assert np.abs(emp - Vref).max() < 0.05

    def test_draw_zeta_moments(self):
        # zeta ~ N(S xi, S) with S = (V^-1 + I)^-1
        rng = np.random.default_rng(6)
        pts = rng.standard_normal(25)
        d2 = pairwise_sq_dists(pts)
        fac = GPFactor.build(d2, 0.5)
        Vref = _dense_reference(pts, 0.5)
        S = np.linalg.inv(np.linalg.inv(Vref) + np.eye(25))
        xi = rng.standard_normal(25)
        m_ref = S @ xi
        draws = np.stack([fac.draw_zeta(xi, rng) for _ in range(60_000)])
        np.testing.assert_allclose(draws.mean(axis=0), m_ref, atol=0.02)
        emp = np.cov(draws.T)
        assert np.abs(emp - S).max() < 0.02

    def test_scalar_identity_case(self):
        # N=1, V=1, xi=2: Sigma = 0.5, m = 1
        fac = GPFactor.build(np.zeros((1, 1)), 1.0)
        xi = np.array([2.0])
        m = xi - fac.solve_VpI(xi)
        assert m[0] == pytest.approx(1.0, rel=1e-6)

    def test_dense_fallback_on_rank_cap(self):
        rng = np.random.default_rng(7)
        pts = rng.standard_normal(120)
        d2 = pairwise_sq_dists(pts)
        fac = GPFactor.build(d2, 50.0, max_rank=8)
        assert fac.is_dense
        Vref = _dense_reference(pts, 50.0)
        sign, ld = np.linalg.slogdet(Vref)
        assert fac.logdet() == pytest.approx(ld, rel=1e-9)
