"""Pure-NumPy reference implementation of the sweep kernels."""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular

LOG_2PI = math.log(2.0 * math.pi)


def mixture_loglik(z, means, chol_L, logdet):
    """Log normal densities of each row of z under each mixture component.

    z: (N, d); means: (K, d) shared or (N, K, d) per-unit; chol_L: (K, d, d)
    lower Cholesky factors of the component covariances; logdet: (K,) their
    log determinants.  Returns (N, K).
    """
    z = np.asarray(z, dtype=float)
    N, d = z.shape
    K = chol_L.shape[0]
    out = np.empty((N, K))
    per_unit = means.ndim == 3
    for k in range(K):
        mk = means[:, k, :] if per_unit else means[k]
        dev = z - mk
        y = solve_triangular(chol_L[k], dev.T, lower=True, check_finite=False)
        quad = np.einsum("dn,dn->n", y, y)
        out[:, k] = -0.5 * (d * LOG_2PI + logdet[k] + quad)
    return out


def categorical_rows(logp, u):
    """Rowwise categorical draws from unnormalized log probabilities.

    u: (N,) uniforms.  Normalization happens in log space; the draw inverts
    the row CDF at u * total mass.
    """
    logp = np.asarray(logp, dtype=float)
    m = logp.max(axis=1, keepdims=True)
    p = np.exp(logp - m)
    cum = np.cumsum(p, axis=1)
    total = cum[:, -1]
    if not np.all(total > 0.0):
        raise FloatingPointError("membership degenerate: all component masses underflowed")
    targets = u * total
    gamma = (cum < targets[:, None]).sum(axis=1)
    return np.minimum(gamma, logp.shape[1] - 1).astype(np.int64)


def lambda_draw(Sww, Swr, inv_s2, prior_mean, prior_prec, gamma, eps):
    """Conjugate per-unit draws of the heterogeneous coefficients.

    Posterior precision P_i = prior_prec[gamma_i] + inv_s2_i * Sww_i and mean
    P_i^-1 (prior_prec[gamma_i] prior_mean_i + inv_s2_i * Swr_i); the draw is
    mean + chol(P_i)^-T eps_i.
    """
    pp = prior_prec[gamma]  # (N, d, d)
    P = pp + inv_s2[:, None, None] * Sww
    L = np.linalg.cholesky(P)
    rhs = np.einsum("nij,nj->ni", pp, prior_mean) + inv_s2[:, None] * Swr
    mean = np.linalg.solve(P, rhs[..., None])[..., 0]
    upper = np.swapaxes(L, 1, 2)
    shift = np.linalg.solve(upper, eps[..., None])[..., 0]
    return mean + shift


def sse_quad(Syy, Sxy, Sxx, Swy, Swx, Sww, beta, lam):
    """Per-unit sum of squared residuals of y - beta'x - lambda'w."""
    out = Syy - 2.0 * (Sxy @ beta) + np.einsum("nij,i,j->n", Sxx, beta, beta)
    out = out - 2.0 * np.einsum("ni,ni->n", Swy, lam)
    out = out + 2.0 * np.einsum("nij,j,ni->n", Swx, beta, lam)
    out = out + np.einsum("nij,ni,nj->n", Sww, lam, lam)
    return np.maximum(out, 0.0)


def _sigma2_of_l(l, lo, hi):
    l = np.asarray(l, dtype=float)
    out = np.empty_like(l)
    neg = l < 0.0
    el = np.exp(l, where=neg, out=np.zeros_like(l))
    out[neg] = hi * (el[neg] + lo) / (el[neg] + hi)
    pos = ~neg
    eml = np.exp(-l, where=pos, out=np.zeros_like(l))
    out[pos] = hi * (1.0 + lo * eml[pos]) / (1.0 + hi * eml[pos])
    return out


def l_rwmh_vec(l, prior_mean, prior_var, Tn, sse, lo, hi, log_step, count, eps, u, c, target, cap):
    """One adaptive RWMH move per unit on the variance transform l.

    Target: N(l; prior_mean, prior_var) x likelihood with sigma^2(l).
    l, log_step, count are updated in place; returns (sigma2, accepted).
    """
    step_std = np.exp(0.5 * log_step)
    prop = l + step_std * eps
    s2_cur = _sigma2_of_l(l, lo, hi)
    s2_prop = _sigma2_of_l(prop, lo, hi)

    def logp(lv, s2):
        return -0.5 * (lv - prior_mean) ** 2 / prior_var - 0.5 * Tn * np.log(s2) - 0.5 * sse / s2

    delta = logp(prop, s2_prop) - logp(l, s2_cur)
    ar = np.exp(np.minimum(delta, 0.0))
    ar[np.isnan(delta)] = 0.0
    accepted = u < ar
    l[accepted] = prop[accepted]
    sigma2 = np.where(accepted, s2_prop, s2_cur)
    s = count + 1
    adj = log_step + s ** (-c) * (ar - target)
    np.copyto(log_step, np.minimum(np.abs(adj), cap) * np.sign(adj))
    np.copyto(count, s)
    return sigma2, accepted
