"""Closed-form conditional posterior updates and draws.

Conventions:  IG(a, b) has density proportional to x^-a-1 exp(-b/x);
IW(Psi, nu) reduces to IG(nu/2, Psi/2) for scalars.  The normal-inverse-
Wishart base for a mixture component is mu | Omega ~ N(m0, psi0 Omega),
Omega ~ IW(Psi0, nu0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NIWParams",
    "niw_update",
    "invwishart_draw",
    "niw_draw",
    "conditional_mu_update",
    "conditional_omega_update",
    "nig_regression_draw",
    "normal_regression_draw",
]


@dataclass(frozen=True)
class NIWParams:
    m: np.ndarray  # (d,)
    psi: float
    nu: float
    Psi: np.ndarray  # (d, d)


def niw_update(m0: np.ndarray, psi0: float, nu0: float, Psi0: np.ndarray, zs: np.ndarray) -> NIWParams:
    """Posterior NIW parameters given component members zs of shape (n, d).

    psi_k = (psi0^-1 + n)^-1,  m_k = psi_k (psi0^-1 m0 + sum z),
    nu_k = nu0 + n,  Psi_k = Psi0 + sum zz' + psi0^-1 m0 m0' - psi_k^-1 m_k m_k'.
    An empty member set returns the base distribution unchanged.
    """
    m0 = np.atleast_1d(np.asarray(m0, dtype=float))
    Psi0 = np.atleast_2d(np.asarray(Psi0, dtype=float))
    zs = np.asarray(zs, dtype=float).reshape(-1, m0.size)
    n = zs.shape[0]
    if n == 0:
        return NIWParams(m=m0, psi=psi0, nu=nu0, Psi=Psi0)
    inv_psi0 = 1.0 / psi0
    psi_k = 1.0 / (inv_psi0 + n)
    zsum = zs.sum(axis=0)
    m_k = psi_k * (inv_psi0 * m0 + zsum)
    nu_k = nu0 + n
    Psi_k = (
        Psi0
        + zs.T @ zs
        + inv_psi0 * np.outer(m0, m0)
        - (1.0 / psi_k) * np.outer(m_k, m_k)
    )
    Psi_k = 0.5 * (Psi_k + Psi_k.T)
    return NIWParams(m=m_k, psi=psi_k, nu=nu_k, Psi=Psi_k)


def invwishart_draw(rng, Psi: np.ndarray, nu: float) -> np.ndarray:
    """IW(Psi, nu) draw via the Bartlett decomposition of the Wishart inverse."""
    Psi = np.atleast_2d(np.asarray(Psi, dtype=float))
    d = Psi.shape[0]
    inv_Psi = np.linalg.inv(Psi)
    inv_Psi = 0.5 * (inv_Psi + inv_Psi.T)
    M = np.linalg.cholesky(inv_Psi)
    A = np.zeros((d, d))
    for i in range(d):
        A[i, i] = np.sqrt(rng.chisquare(nu - i))
        for j in range(i):
            A[i, j] = rng.standard_normal()
    W = M @ A
    W = W @ W.T  # ~ Wishart(nu, Psi^-1)
    Omega = np.linalg.inv(W)
    Omega = 0.5 * (Omega + Omega.T)
    # guard against round-off indefiniteness in near-singular draws
    try:
        np.linalg.cholesky(Omega)
    except np.linalg.LinAlgError:
        Omega += 1e-12 * np.trace(Omega) / d * np.eye(d)
        np.linalg.cholesky(Omega)
    return Omega


def niw_draw(rng, params: NIWParams) -> tuple[np.ndarray, np.ndarray]:
    """Draw (mu, Omega) from a normal-inverse-Wishart distribution."""
    Omega = invwishart_draw(rng, params.Psi, params.nu)
    d = Omega.shape[0]
    Lo = np.linalg.cholesky(params.psi * Omega)
    mu = params.m + Lo @ rng.standard_normal(d)
    return mu, Omega


def conditional_mu_update(
    m0: np.ndarray,  # (d, q)
    psi0: float,
    Omega: np.ndarray,  # (d, d)
    zs: np.ndarray,  # (n, d)
    gs: np.ndarray,  # (n, q) rows [1, c']
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean/covariance of vec(mu) in the mean-regression component.

    Prior vec(mu) ~ N(vec(m0), psi0 I); likelihood z_i ~ N(mu g_i, Omega).
    Returns (mean, cov) of vec(mu) in column-stacked (Fortran) order.
    """
    d, q = m0.shape
    zs = np.asarray(zs, dtype=float).reshape(-1, d)
    gs = np.asarray(gs, dtype=float).reshape(-1, q)
    Omega_inv = np.linalg.inv(Omega)
    Omega_inv = 0.5 * (Omega_inv + Omega_inv.T)
    Gcc = gs.T @ gs  # (q, q)
    prec = np.eye(d * q) / psi0 + np.kron(Gcc, Omega_inv)
    Mzc = zs.T @ gs  # (d, q) = sum z g'
    rhs = m0.reshape(-1, order="F") / psi0 + (Omega_inv @ Mzc).reshape(-1, order="F")
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ rhs
    return mean, cov


def conditional_omega_update(
    nu0: float,
    Psi0: np.ndarray,
    mu: np.ndarray,  # (d, q)
    zs: np.ndarray,
    gs: np.ndarray,
) -> tuple[np.ndarray, float]:
    """IW posterior (Psi_k, nu_k) for the component covariance given mu."""
    d, q = mu.shape
    zs = np.asarray(zs, dtype=float).reshape(-1, d)
    gs = np.asarray(gs, dtype=float).reshape(-1, q)
    resid = zs - gs @ mu.T
    Psi_k = np.atleast_2d(Psi0) + resid.T @ resid
    return 0.5 * (Psi_k + Psi_k.T), nu0 + zs.shape[0]


def nig_regression_draw(
    rng,
    m0: np.ndarray,
    psi0_diag: np.ndarray,
    a0: float,
    b0: float,
    Sxx: np.ndarray,
    Sxy: np.ndarray,
    Syy: float,
    n_obs: float,
) -> tuple[np.ndarray, float]:
    """Joint (beta, sigma^2) draw for the homoskedastic regression step.

    Sxx/Sxy/Syy are the accumulated cross-products of regressors and
    residualized outcomes over all usable unit-periods; n_obs their count.
    """
    inv_psi0 = 1.0 / np.asarray(psi0_diag, dtype=float)
    prec = np.diag(inv_psi0) + Sxx
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    m = cov @ (inv_psi0 * m0 + Sxy)
    a_n = a0 + 0.5 * n_obs
    b_n = b0 + 0.5 * (Syy + m0 @ (inv_psi0 * m0) - m @ (prec @ m))
    b_n = max(b_n, 1e-300)
    sigma2 = b_n / rng.standard_gamma(a_n)
    L = np.linalg.cholesky(sigma2 * cov)
    beta = m + L @ rng.standard_normal(m.size)
    return beta, float(sigma2)


def normal_regression_draw(
    rng,
    m0: np.ndarray,
    psi0_diag: np.ndarray,
    Sxx_w: np.ndarray,
    Sxy_w: np.ndarray,
) -> np.ndarray:
    """Known-variance regression draw for the heteroskedastic beta step.

    Sxx_w/Sxy_w are precision-weighted cross-products sum_i sigma_i^-2 (...).
    """
    inv_psi0 = 1.0 / np.asarray(psi0_diag, dtype=float)
    prec = np.diag(inv_psi0) + Sxx_w
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    m = cov @ (inv_psi0 * m0 + Sxy_w)
    L = np.linalg.cholesky(cov)
    return m + L @ rng.standard_normal(m.size)
