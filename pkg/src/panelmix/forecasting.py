"""One-period-ahead density and point predictors.

Every predictive density is a finite normal mixture: one component per
retained posterior draw for the fitted predictors, one per (mixture
component x quadrature node) for the oracle.  Retained draws enter Eq.-style
posterior averaging with equal weights; thinning/autocorrelation of the chain
is the user's choice and is not reweighted here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr
from scipy.stats import invgamma

from panelmix.panel import PanelData
from panelmix.samplers.gibbs import PanelStats, PosteriorDraws
from panelmix.truths import BaselineTruth, GeneralTruth

__all__ = [
    "PredictiveDensity",
    "conditional_density",
    "sp_density",
    "sp_density_all",
    "oracle_density",
    "oracle_density_all",
    "point_forecast",
    "predictive_cdf",
]

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PredictiveDensity:
    """Weighted normal mixture: component means, variances, weights."""

    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        for name in ("means", "variances", "weights"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if not (self.means.shape == self.variances.shape == self.weights.shape):
            raise ValueError("component arrays must share a shape")
        if np.any(self.variances <= 0.0):
            raise ValueError("component variances must be positive")

    def logpdf(self, y) -> np.ndarray | float:
        y = np.asarray(y, dtype=float)
        dev = y[..., None] - self.means
        lp = -0.5 * (LOG_2PI + np.log(self.variances) + dev**2 / self.variances)
        out = logsumexp(lp + np.log(self.weights), axis=-1)
        return out if out.ndim else float(out)

    def pdf(self, y):
        return np.exp(self.logpdf(y))

    def cdf(self, y) -> np.ndarray | float:
        y = np.asarray(y, dtype=float)
        zs = (y[..., None] - self.means) / np.sqrt(self.variances)
        out = ndtr(zs) @ self.weights
        return out if out.ndim else float(out)

    def mean(self) -> float:
        return float(self.weights @ self.means)

    def variance(self) -> float:
        m = self.mean()
        return float(self.weights @ (self.variances + self.means**2) - m * m)

    def grid(self, n: int = 512, span: float = 6.0) -> np.ndarray:
        """Evaluation grid spanning mean +- span * max component std."""
        sd = math.sqrt(float(self.variances.max()))
        lo = self.means.min() - span * sd
        hi = self.means.max() + span * sd
        return np.linspace(lo, hi, n)


def conditional_density(beta, lam_i, sigma2_i, x_T, w_T) -> PredictiveDensity:
    """Predictive given one parameter draw: N(beta'x_iT + lambda_i'w_iT, sigma_i^2)."""
    mean = float(np.dot(beta, x_T) + np.dot(lam_i, w_T))
    return PredictiveDensity(means=[mean], variances=[float(sigma2_i)], weights=[1.0])


def sp_density_all(draws: PosteriorDraws, data: PanelData) -> tuple[np.ndarray, np.ndarray]:
    """Per-draw predictive means and variances for every unit.

    Returns (means, variances) of shape (S, N); the unit-i predictive is the
    equal-weight mixture over draws.
    """
    stats = PanelStats.from_panel(data)
    mean = draws.beta @ stats.x_T.T + np.einsum("snd,nd->sn", draws.lam, stats.w_T)
    var = draws.sigma2_full(data.N)
    return mean, np.broadcast_to(var, mean.shape)


def sp_density(draws: PosteriorDraws, data: PanelData, unit: int) -> PredictiveDensity:
    """Posterior-averaged predictive density for one unit."""
    if draws.S < 1:
        raise ValueError("need at least one retained draw")
    means, variances = sp_density_all(draws, data)
    S = draws.S
    return PredictiveDensity(
        means=means[:, unit], variances=variances[:, unit], weights=np.full(S, 1.0 / S)
    )


def point_forecast(density: PredictiveDensity) -> float:
    """Mixture mean."""
    return density.mean()


def predictive_cdf(density: PredictiveDensity, y) -> float:
    return density.cdf(y)


# ---------------------------------------------------------------------------
# oracle predictors


def _oracle_baseline_unit(truth: BaselineTruth, stats: PanelStats, data, unit: int) -> PredictiveDensity:
    """Exact conjugate posterior within each true mixture component (w = 1)."""
    i = unit
    Tn = stats.Tn[i]
    # residual sufficient statistics: r_t = y_t - beta0 * y_{t-1}
    beta0 = np.array([truth.beta0])
    r_sum = float(stats.resid_wy(beta0)[i, 0])
    w = np.asarray(truth.weights, dtype=float)
    m0 = np.asarray(truth.means, dtype=float)
    v0 = np.asarray(truth.variances, dtype=float)
    if Tn > 0:
        rbar = r_sum / Tn
        marg_var = v0 + truth.sigma0_sq / Tn
        logw = np.log(w) - 0.5 * (np.log(marg_var) + (rbar - m0) ** 2 / marg_var)
        post_prec = 1.0 / v0 + Tn / truth.sigma0_sq
        post_var = 1.0 / post_prec
        post_mean = post_var * (m0 / v0 + r_sum / truth.sigma0_sq)
    else:
        logw = np.log(w)
        post_var = v0
        post_mean = m0
    logw -= logsumexp(logw)
    origin = truth.beta0 * float(stats.x_T[i, 0])
    return PredictiveDensity(
        means=origin + post_mean,
        variances=post_var + truth.sigma0_sq,
        weights=np.exp(logw),
    )


def _ig_nodes(truth: GeneralTruth, n_nodes: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights for the IG mixing variable's support."""
    dist = invgamma(truth.ig_shape, scale=truth.ig_rate)
    lo, hi = dist.ppf(1e-10), dist.ppf(1.0 - 1e-10)
    nodes, gl_w = np.polynomial.legendre.leggauss(n_nodes)
    g = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
    wq = 0.5 * (hi - lo) * gl_w * dist.pdf(g)
    return g, wq


def _oracle_general_unit(
    truth: GeneralTruth, stats: PanelStats, data: PanelData, unit: int, g, wq
) -> PredictiveDensity:
    """sigma^2 integrated by quadrature; lambda conjugate inside each node.

    lambda = mean_j(c) + s v with s ~ N(0, s_j^2), so the within-node model is
    a scalar regression of the mean-adjusted residuals on a_t = v'w_{t-1}.
    """
    i = unit
    c = float(data.y[i, 0])
    sigma2_nodes = truth.sigma2_of_g(c, g)  # (Q,)
    keep = sigma2_nodes <= truth.sigma_max
    sigma2_nodes, wq = sigma2_nodes[keep], wq[keep]
    Q = sigma2_nodes.size
    v = np.asarray(truth.v)
    beta0 = np.array([truth.beta0])

    # per-unit scalar sufficient statistics
    Sww, Swr = stats.Sww[i], stats.resid_wy(beta0)[i]
    a_quad = float(v @ Sww @ v)  # sum_t a_t^2
    # sse of y - beta0'x at lambda = 0; mean-adjusted below per component
    u_i = float(
        stats.Syy[i] - 2.0 * stats.Sxy[i] @ beta0 + beta0 @ stats.Sxx[i] @ beta0
    )
    w_T, x_T = stats.w_T[i], stats.x_T[i]
    a_T = float(v @ w_T)

    pi1 = float(truth.mix_weight1(c))
    comp_w = np.array([pi1, 1.0 - pi1])
    scales = np.array([truth.s1, truth.s2])

    means = np.empty((2, Q))
    variances = np.empty((2, Q))
    logw = np.empty((2, Q))
    Tn = stats.Tn[i]
    for j in range(2):
        mj = truth.lam_mean(c, j)  # (dw,)
        # residual stats of e_t = y_t - beta0'x - mj'w
        sse_j = u_i - 2.0 * float(mj @ Swr) + float(mj @ Sww @ mj)
        a_e = float(v @ (Swr - Sww @ mj))  # sum_t a_t e_t
        s2j = scales[j] ** 2
        for q in range(Q):
            s2 = sigma2_nodes[q]
            denom = s2 + s2j * a_quad
            # N(e; 0, s2 I + s2j a a') marginal likelihood
            loglik = -0.5 * (
                Tn * math.log(2.0 * math.pi * s2)
                + math.log(denom / s2)
                + (sse_j - s2j * a_e**2 / denom) / s2
            )
            post_prec = 1.0 / s2j + a_quad / s2
            post_var = 1.0 / post_prec
            post_mean = post_var * (a_e / s2)
            mu_T = truth.beta0 * float(x_T[0]) + float(mj @ w_T)
            means[j, q] = mu_T + post_mean * a_T
            variances[j, q] = post_var * a_T**2 + s2
            logw[j, q] = math.log(comp_w[j] + 1e-300) + math.log(wq[q] + 1e-300) + loglik
    logw = logw.reshape(-1)
    logw -= logsumexp(logw)
    return PredictiveDensity(
        means=means.reshape(-1), variances=variances.reshape(-1), weights=np.exp(logw)
    )


def oracle_density(truth, data: PanelData, unit: int, stats: PanelStats | None = None) -> PredictiveDensity:
    """Infeasible benchmark: exact unit posterior under the true DGP."""
    if stats is None:
        stats = PanelStats.from_panel(data)
    if isinstance(truth, BaselineTruth):
        return _oracle_baseline_unit(truth, stats, data, unit)
    if isinstance(truth, GeneralTruth):
        g, wq = _ig_nodes(truth)
        return _oracle_general_unit(truth, stats, data, unit, g, wq)
    raise ValueError("oracle requires mixture truth (baseline or general description)")


def oracle_density_all(truth, data: PanelData) -> list[PredictiveDensity]:
    stats = PanelStats.from_panel(data)
    if isinstance(truth, GeneralTruth):
        g, wq = _ig_nodes(truth)
        return [_oracle_general_unit(truth, stats, data, i, g, wq) for i in range(data.N)]
    return [oracle_density(truth, data, i, stats) for i in range(data.N)]
