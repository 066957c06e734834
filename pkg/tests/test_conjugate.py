"""Closed-form conditional posteriors checked against brute-force numerical
posteriors on scalar toy problems (grid integration)."""

import math

import numpy as np
import pytest
from scipy.integrate import simpson

from panelmix.samplers.conjugate import (
    NIWParams,
    conditional_mu_update,
    conditional_omega_update,
    invwishart_draw,
    nig_regression_draw,
    niw_draw,
    niw_update,
)


def _grid_posterior_nig(m0, psi0, a0, b0, zs, n_mu=1201, n_om=1201):
    """Numerical posterior moments of (mu, omega^2) for z_i ~ N(mu, omega^2),
    mu | omega^2 ~ N(m0, psi0 omega^2), omega^2 ~ IG(a0, b0)."""
    zs = np.asarray(zs, dtype=float)
    om = np.exp(np.linspace(math.log(5e-3), math.log(60.0), n_om))
    mu = np.linspace(-12.0, 12.0, n_mu)
    MU, OM = np.meshgrid(mu, om, indexing="ij")
    logp = (
        -(a0 + 1.0) * np.log(OM)
        - b0 / OM
        - 0.5 * np.log(OM * psi0)
        - 0.5 * (MU - m0) ** 2 / (psi0 * OM)
    )
    for z in zs:
        logp += -0.5 * np.log(OM) - 0.5 * (z - MU) ** 2 / OM
    logp -= logp.max()
    p = np.exp(logp)
    norm = simpson(simpson(p, x=om, axis=1), x=mu)
    e_mu = simpson(simpson(p * MU, x=om, axis=1), x=mu) / norm
    e_om = simpson(simpson(p * OM, x=om, axis=1), x=mu) / norm
    return e_mu, e_om


class TestNIWUpdate:
    def test_empty_returns_base(self):
        post = niw_update(np.array([0.5]), 2.0, 6.0, np.array([[3.0]]), np.empty((0, 1)))
        assert post.m[0] == 0.5 and post.psi == 2.0 and post.nu == 6.0
        assert post.Psi[0, 0] == 3.0

    def test_hand_example_single_member(self):
        # m0=0, psi0=1, one member z=1: psi=0.5, m=0.5, nu=nu0+1, Psi=Psi0+0.5
        post = niw_update(np.array([0.0]), 1.0, 4.0, np.array([[2.0]]), np.array([[1.0]]))
        assert post.psi == pytest.approx(0.5)
        assert post.m[0] == pytest.approx(0.5)
        assert post.nu == pytest.approx(5.0)
        assert post.Psi[0, 0] == pytest.approx(2.5)

    def test_against_grid_posterior(self):
        # scalar NIG toy: analytic moments match 2-D grid integration to 1e-6
        rng = np.random.default_rng(0)
        zs = rng.standard_normal((6, 1)) * 1.3 + 0.7
        m0, psi0, a0, b0 = 0.2, 1.5, 2.5, 1.2
        post = niw_update(np.array([m0]), psi0, 2 * a0, np.array([[2 * b0]]), zs)
        a_n, b_n = post.nu / 2.0, post.Psi[0, 0] / 2.0
        e_mu_exact = post.m[0]
        e_om_exact = b_n / (a_n - 1.0)
        e_mu_grid, e_om_grid = _grid_posterior_nig(m0, psi0, a0, b0, zs[:, 0])
        assert e_mu_grid == pytest.approx(e_mu_exact, rel=1e-6, abs=1e-8)
        assert e_om_grid == pytest.approx(e_om_exact, rel=1e-6)

    def test_multivariate_consistency_with_scalar(self):
        zs = np.array([[0.4], [1.1], [-0.3]])
        post = niw_update(np.array([0.0]), 1.0, 5.0, np.array([[2.0]]), zs)
        # same computation done by hand with scalars
        n = 3
        psi_k = 1.0 / (1.0 + n)
        m_k = psi_k * zs.sum()
        Psi_k = 2.0 + (zs**2).sum() - m_k**2 / psi_k
        assert post.psi == pytest.approx(psi_k)
        assert post.m[0] == pytest.approx(m_k)
        assert post.Psi[0, 0] == pytest.approx(Psi_k)


class TestNIWDraws:
    def test_invwishart_scalar_moments(self):
        rng = np.random.default_rng(1)
        nu, Psi = 8.0, np.array([[3.0]])
        draws = np.array([invwishart_draw(rng, Psi, nu)[0, 0] for _ in range(40_000)])
        # IG(nu/2, Psi/2): mean = (Psi/2)/(nu/2 - 1)
        assert draws.mean() == pytest.approx(1.5 / 3.0, rel=0.02)

    def test_invwishart_matrix_mean(self):
        rng = np.random.default_rng(2)
        d, nu = 2, 9.0
        Psi = np.array([[2.0, 0.6], [0.6, 1.0]])
        acc = np.zeros((d, d))
        n = 30_000
        for _ in range(n):
            acc += invwishart_draw(rng, Psi, nu)
        mean = acc / n
        np.testing.assert_allclose(mean, Psi / (nu - d - 1.0), rtol=0.03)

    def test_niw_draw_conditional_mean(self):
        rng = np.random.default_rng(3)
        params = NIWParams(m=np.array([1.5]), psi=0.5, nu=10.0, Psi=np.array([[4.0]]))
        mus = np.array([niw_draw(rng, params)[0][0] for _ in range(40_000)])
        assert mus.mean() == pytest.approx(1.5, abs=0.01)


class TestConditionalUpdates:
    def test_design_collapse_to_unconditional(self):
        # c0 = 0 makes [1, c0']' = e1: intercept-column update only
        zs = np.array([[1.0]])
        gs = np.array([[1.0, 0.0]])
        m0 = np.zeros((1, 2))
        Omega = np.array([[1.0]])
        mean, cov = conditional_mu_update(m0, 1.0, Omega, zs, gs)
        # intercept coordinate: precision 1 + 1 = 2, mean 0.5; slope: prior
        assert mean[0] == pytest.approx(0.5)
        assert mean[1] == pytest.approx(0.0)
        assert cov[0, 0] == pytest.approx(0.5)
        assert cov[1, 1] == pytest.approx(1.0)

    def test_mu_update_against_grid(self):
        rng = np.random.default_rng(4)
        n = 5
        c = rng.standard_normal(n)
        gs = np.column_stack([np.ones(n), c])
        true_mu = np.array([0.5, -0.8])
        zs = (gs @ true_mu + 0.3 * rng.standard_normal(n))[:, None]
        Omega = np.array([[0.09]])
        psi0 = 2.0
        m0 = np.zeros((1, 2))
        mean, cov = conditional_mu_update(m0, psi0, Omega, zs, gs)
        # brute-force 2-D grid posterior of (mu0, mu1)
        g0 = np.linspace(mean[0] - 8 * math.sqrt(cov[0, 0]), mean[0] + 8 * math.sqrt(cov[0, 0]), 801)
        g1 = np.linspace(mean[1] - 8 * math.sqrt(cov[1, 1]), mean[1] + 8 * math.sqrt(cov[1, 1]), 801)
        M0, M1 = np.meshgrid(g0, g1, indexing="ij")
        logp = -0.5 * (M0**2 + M1**2) / psi0
        for i in range(n):
            resid = zs[i, 0] - (M0 + M1 * c[i])
            logp += -0.5 * resid**2 / Omega[0, 0]
        logp -= logp.max()
        p = np.exp(logp)
        norm = simpson(simpson(p, x=g1, axis=1), x=g0)
        e0 = simpson(simpson(p * M0, x=g1, axis=1), x=g0) / norm
        e1 = simpson(simpson(p * M1, x=g1, axis=1), x=g0) / norm
        assert e0 == pytest.approx(mean[0], rel=1e-6, abs=1e-8)
        assert e1 == pytest.approx(mean[1], rel=1e-6, abs=1e-8)

    def test_omega_update_residual_form(self):
        zs = np.array([[1.0], [2.0]])
        gs = np.array([[1.0, 0.5], [1.0, -0.5]])
        mu = np.array([[1.0, 2.0]])
        Psi, nu = conditional_omega_update(5.0, np.array([[0.5]]), mu, zs, gs)
        resid = zs[:, 0] - gs @ mu[0]
        assert nu == 7.0
        assert Psi[0, 0] == pytest.approx(0.5 + (resid**2).sum())


class TestRegressionDraws:
    def test_nig_posterior_parameters_against_grid(self):
        # 1-D regression toy: posterior moments of (beta, sigma^2)
        rng = np.random.default_rng(5)
        n = 8
        x = rng.standard_normal(n)
        y = 0.7 * x + 0.4 * rng.standard_normal(n)
        m0, psi0, a0, b0 = 0.5, 1.0, 2.0, 0.8
        Sxx = np.array([[float(x @ x)]])
        Sxy = np.array([float(x @ y)])
        Syy = float(y @ y)

        class MeanRNG:
            """Deterministic stub: gamma at its mean, normals at zero."""

            def standard_gamma(self, a):
                return a

            def standard_normal(self, size=None):
                return np.zeros(size) if size else 0.0

        beta, sigma2 = nig_regression_draw(
            MeanRNG(), np.array([m0]), np.array([psi0]), a0, b0, Sxx, Sxy, Syy, n
        )
        # grid: p(beta, sigma2) ~ NIG prior x normal likelihood
        bg = np.linspace(-3, 3, 1401)
        og = np.exp(np.linspace(math.log(2e-3), math.log(40.0), 2501))
        B, O = np.meshgrid(bg, og, indexing="ij")
        logp = (
            -(a0 + 1.0) * np.log(O)
            - b0 / O
            - 0.5 * np.log(O)
            - 0.5 * (B - m0) ** 2 / (psi0 * O)
        )
        for i in range(n):
            logp += -0.5 * np.log(O) - 0.5 * (y[i] - B * x[i]) ** 2 / O
        logp -= logp.max()
        p = np.exp(logp)
        norm = simpson(simpson(p, x=og, axis=1), x=bg)
        e_b = simpson(simpson(p * B, x=og, axis=1), x=bg) / norm
        e_o = simpson(simpson(p * O, x=og, axis=1), x=bg) / norm
        # stub returns posterior mean of beta and b_n / a_n; convert to moments
        a_n = a0 + n / 2.0
        assert beta[0] == pytest.approx(e_b, rel=1e-6, abs=1e-8)
        assert sigma2 * a_n / (a_n - 1.0) == pytest.approx(e_o, rel=1e-6)

    def test_no_data_returns_prior(self):
        rng = np.random.default_rng(6)
        draws = [
            nig_regression_draw(
                rng,
                np.array([0.5]),
                np.array([2.0]),
                3.0,
                1.5,
                np.zeros((1, 1)),
                np.zeros(1),
                0.0,
                0.0,
            )
            for _ in range(20_000)
        ]
        betas = np.array([b[0] for b, _ in draws])
        s2s = np.array([s for _, s in draws])
        assert betas.mean() == pytest.approx(0.5, abs=0.02)
        assert s2s.mean() == pytest.approx(1.5 / 2.0, rel=0.05)  # IG(3, 1.5) mean
