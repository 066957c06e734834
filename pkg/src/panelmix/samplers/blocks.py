"""Mixture-block Gibbs steps: weights, component parameters, memberships.

Three block flavors share the MixtureState container:

* UncondBlock: truncated stick-breaking DPM (weights via TSB, NIW component
  updates, density-based memberships).
* CondBlock: probit stick-breaking with GP-distributed stick functions of the
  conditioning variables and mean-regression components.
* AtomBlock: Dirichlet-process atoms (point-mass components); memberships use
  the data likelihood directly and the atom updates pool member units.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import log_ndtr, ndtri_exp

from panelmix import _kernels as kern
from panelmix.mixtures import MixtureState, mglrx_ck, probit_log_weights
from panelmix.priors import MixtureBlockPrior
from panelmix.samplers.adapt import AdapterState
from panelmix.samplers.conjugate import (
    conditional_mu_update,
    conditional_omega_update,
    invwishart_draw,
    niw_draw,
    niw_update,
)
from panelmix.samplers.gp import GPFactor, pairwise_sq_dists

__all__ = [
    "draw_dp_scale",
    "draw_weights_tsb",
    "log_weights_from_sticks",
    "trunc_norm_lower",
    "trunc_norm_upper",
    "UncondBlock",
    "CondBlock",
    "AtomBlock",
]

LOG_P_FLOOR = -700.0


def draw_dp_scale(a0: float, b0: float, K: int, p_K: float, rng) -> float:
    """Gamma draw of the DP scale given the closing weight p_K."""
    log_pk = math.log(p_K) if p_K > 0.0 else -math.inf
    rate = b0 - max(log_pk, LOG_P_FLOOR)
    return float(rng.standard_gamma(a0 + K - 1) / rate)


def draw_weights_tsb(counts: np.ndarray, alpha: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Truncated stick-breaking posterior draw given component counts.

    zeta_k ~ Beta(1 + n_k, alpha + sum_{j>k} n_j) for k < K; returns
    (sticks, weights) with the K-th weight closing the simplex.
    """
    K = counts.size
    tail = np.concatenate([np.cumsum(counts[::-1])[::-1][1:], [0.0]])
    sticks = rng.beta(1.0 + counts[: K - 1], alpha + tail[: K - 1])
    sticks = np.clip(sticks, 1e-15, 1.0 - 1e-15)
    remaining = 1.0
    weights = np.empty(K)
    for k in range(K - 1):
        weights[k] = sticks[k] * remaining
        remaining *= 1.0 - sticks[k]
    weights[K - 1] = 1.0 - weights[: K - 1].sum()
    return sticks, weights


def log_weights_from_sticks(sticks: np.ndarray) -> np.ndarray:
    """Stable log weights of the truncated stick-breaking map."""
    logs = np.log(sticks)
    log1m = np.log1p(-sticks)
    cum = np.concatenate([[0.0], np.cumsum(log1m)])
    out = np.empty(sticks.size + 1)
    out[:-1] = logs + cum[:-1]
    out[-1] = cum[-1]
    return out


def trunc_norm_lower(mean, u):
    """X ~ N(mean, 1) conditioned on X < 0, via inverse CDF at u."""
    logp = np.log(u) + log_ndtr(-mean)
    return mean + ndtri_exp(logp)


def trunc_norm_upper(mean, u):
    """X ~ N(mean, 1) conditioned on X >= 0 (mirror of trunc_norm_lower)."""
    return -trunc_norm_lower(-np.asarray(mean), u)


def _chol_batch(Omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    L = np.linalg.cholesky(Omega)
    logdet = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
    return L, logdet


def _kmeans_assign(z: np.ndarray, n_centers: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Light k-means for membership initialization; returns (labels, centers)."""
    N = z.shape[0]
    n_centers = max(1, min(n_centers, N))
    idx = rng.choice(N, size=n_centers, replace=False)
    centers = z[idx].copy()
    labels = np.zeros(N, dtype=np.int64)
    for _ in range(5):
        d2 = ((z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        for k in range(n_centers):
            members = z[labels == k]
            if len(members):
                centers[k] = members.mean(axis=0)
    return labels, centers


class UncondBlock:
    """Unconditional DPM block (Algorithm-1 steps 1-3 for one z)."""

    def __init__(self, prior: MixtureBlockPrior, N: int):
        self.prior = prior
        self.N = N

    # -- state construction -------------------------------------------------
    def init_state(self, z0: np.ndarray, rng) -> MixtureState:
        p = self.prior
        K, d = p.K, p.d
        labels, centers = _kmeans_assign(z0.reshape(self.N, d), max(K // 5, 1), rng)
        mu = np.tile(np.asarray(p.m0, dtype=float), (K, 1))
        mu[: centers.shape[0]] = centers
        Omega_mean = np.asarray(p.Psi0) / max(p.nu0 - d - 1.0, 1.0)
        Omega = np.tile(Omega_mean, (K, 1, 1))
        alpha = p.a0_alpha / p.b0_alpha
        sticks = np.full(K - 1, 1.0 / (1.0 + alpha))
        weights = np.empty(K)
        rem = 1.0
        for k in range(K - 1):
            weights[k] = sticks[k] * rem
            rem *= 1.0 - sticks[k]
        weights[K - 1] = 1.0 - weights[: K - 1].sum()
        return MixtureState(
            kind="unconditional",
            K=K,
            mu=mu,
            Omega=Omega,
            gamma=labels,
            weights=weights,
            sticks=sticks,
            alpha=alpha,
        )

    def prior_state(self, rng) -> MixtureState:
        """Exact draw from the prior over the block (for joint-law checks)."""
        p = self.prior
        K, d = p.K, p.d
        alpha = float(rng.standard_gamma(p.a0_alpha) / p.b0_alpha)
        sticks = np.clip(rng.beta(1.0, alpha, size=K - 1), 1e-15, 1 - 1e-15)
        weights = np.empty(K)
        rem = 1.0
        for k in range(K - 1):
            weights[k] = sticks[k] * rem
            rem *= 1.0 - sticks[k]
        weights[K - 1] = 1.0 - weights[: K - 1].sum()
        mu = np.empty((K, d))
        Omega = np.empty((K, d, d))
        for k in range(K):
            mu[k], Omega[k] = niw_draw(
                rng,
                niw_update(p.m0, p.psi0, p.nu0, p.Psi0, np.empty((0, d))),
            )
        gamma = kern.categorical_rows(
            np.broadcast_to(np.log(weights), (self.N, K)).copy(), rng.uniform(size=self.N)
        )
        return MixtureState(
            kind="unconditional", K=K, mu=mu, Omega=Omega, gamma=gamma,
            weights=weights, sticks=sticks, alpha=alpha,
        )

    def draw_z_prior(self, mix: MixtureState, rng) -> np.ndarray:
        """z_i ~ N(mu_gamma_i, Omega_gamma_i) (prior predictive given state)."""
        L, _ = _chol_batch(mix.Omega)
        eps = rng.standard_normal((self.N, self.prior.d))
        return mix.mu[mix.gamma] + np.einsum("nij,nj->ni", L[mix.gamma], eps)

    # -- sweep steps ---------------------------------------------------------
    def sweep_weights(self, mix: MixtureState, rng) -> None:
        p = self.prior
        mix.alpha = draw_dp_scale(p.a0_alpha, p.b0_alpha, p.K, float(mix.weights[-1]), rng)
        counts = mix.component_counts().astype(float)
        mix.sticks, mix.weights = draw_weights_tsb(counts, mix.alpha, rng)

    def sweep_components(self, mix: MixtureState, z: np.ndarray, rng) -> None:
        p = self.prior
        z = z.reshape(self.N, p.d)
        if p.d == 1:
            self._sweep_components_scalar(mix, z[:, 0], rng)
            return
        for k in range(p.K):
            members = z[mix.gamma == k]
            post = niw_update(p.m0, p.psi0, p.nu0, p.Psi0, members)
            mix.mu[k], mix.Omega[k] = niw_draw(rng, post)

    def _sweep_components_scalar(self, mix: MixtureState, z: np.ndarray, rng) -> None:
        """Vectorized NIG update/draw across all components (scalar z)."""
        p = self.prior
        K = p.K
        n = np.bincount(mix.gamma, minlength=K).astype(float)
        zsum = np.bincount(mix.gamma, weights=z, minlength=K)
        zsq = np.bincount(mix.gamma, weights=z * z, minlength=K)
        m0 = float(p.m0[0])
        Psi0 = float(p.Psi0[0, 0])
        inv_psi0 = 1.0 / p.psi0
        psi_k = 1.0 / (inv_psi0 + n)
        m_k = psi_k * (inv_psi0 * m0 + zsum)
        nu_k = p.nu0 + n
        Psi_k = Psi0 + zsq + inv_psi0 * m0 * m0 - m_k * m_k / psi_k
        Psi_k = np.maximum(Psi_k, 1e-300)
        omega = 0.5 * Psi_k / rng.standard_gamma(0.5 * nu_k)
        mu = m_k + np.sqrt(psi_k * omega) * rng.standard_normal(K)
        mix.mu[:, 0] = mu
        mix.Omega[:, 0, 0] = omega

    def sweep_memberships(self, mix: MixtureState, z: np.ndarray, rng) -> None:
        z = z.reshape(self.N, self.prior.d)
        L, logdet = _chol_batch(mix.Omega)
        logp = kern.mixture_loglik(z, mix.mu, L, logdet)
        logp += log_weights_from_sticks(mix.sticks)
        mix.gamma = kern.categorical_rows(logp, rng.uniform(size=self.N))

    # -- conjugate inputs for the z draw ------------------------------------
    def unit_prior_mean(self, mix: MixtureState) -> np.ndarray:
        return mix.mu[mix.gamma]

    def component_prec(self, mix: MixtureState) -> np.ndarray:
        return np.linalg.inv(mix.Omega)


class CondBlock:
    """Conditional MGLRx block (Algorithm-2 steps 1-3 for one z)."""

    def __init__(self, prior: MixtureBlockPrior, cond_values: np.ndarray):
        self.prior = prior
        self.c = np.atleast_2d(np.asarray(cond_values, dtype=float))
        if self.c.shape[0] == 1 and self.c.size > 1:
            self.c = self.c.T
        self.N = self.c.shape[0]
        self.d_c = self.c.shape[1]
        self.eta = float(self.d_c + 1)
        self.g = np.column_stack([np.ones(self.N), self.c])  # (N, q)
        self.q = 1 + self.d_c
        self.d2 = pairwise_sq_dists(self.c)
        self.Ck = np.array([mglrx_ck(k, self.eta) for k in range(1, prior.K)])
        self._factors: dict[int, GPFactor] = {}
        self.last_accept = np.nan

    # -- state construction -------------------------------------------------
    def init_state(self, z0: np.ndarray, rng) -> MixtureState:
        p = self.prior
        K, d = p.K, p.d
        labels, centers = _kmeans_assign(z0.reshape(self.N, d), max(K // 5, 1), rng)
        mu = np.tile(np.asarray(p.m0, dtype=float)[None], (K, 1, 1))
        mu[: centers.shape[0], :, 0] = centers
        Omega_mean = np.asarray(p.Psi0) / max(p.nu0 - d - 1.0, 1.0)
        Omega = np.tile(Omega_mean, (K, 1, 1))
        zeta = np.zeros((K - 1, self.N))
        bandwidth = self.Ck.copy()
        mix = MixtureState(
            kind="conditional",
            K=K,
            mu=mu,
            Omega=Omega,
            gamma=labels,
            weights=np.exp(probit_log_weights(zeta)),
            zeta=zeta,
            bandwidth=bandwidth,
            xi=np.zeros((K - 1, self.N)),
            cpoints=self.c,
            tau=p.tau,
        )
        self._factors.clear()
        return mix

    def new_adapter(self) -> AdapterState:
        return AdapterState.fresh(self.prior.K - 1, initial_step=0.25)

    def _factor(self, k: int, A: float) -> GPFactor:
        f = self._factors.get(k)
        if f is None or getattr(f, "_A", None) != A:
            f = GPFactor.build(self.d2, A, tau=self.prior.tau)
            f._A = A
            self._factors[k] = f
        return f

    def bandwidth_log_kernel(self, A: float, zeta_k: np.ndarray, k: int) -> float:
        """Unnormalized log posterior kernel of the component-k bandwidth.

        (A)^(eta-1) exp(-(A/C_k)^eta) x N(zeta_k; 0, V(A)); k is 1-based.
        """
        if A <= 0.0:
            return -math.inf
        Ck = self.Ck[k - 1]
        f = GPFactor.build(self.d2, A, tau=self.prior.tau)
        return (self.eta - 1.0) * math.log(A) - (A / Ck) ** self.eta + f.gauss_loglik(zeta_k)

    # -- sweep steps ---------------------------------------------------------
    def sweep_weights(self, mix: MixtureState, adapter: AdapterState, rng) -> None:
        p = self.prior
        Km1 = p.K - 1
        ars = np.empty(Km1)
        for j in range(Km1):
            ars[j] = self._bandwidth_step(mix, adapter, j, rng)
        self.last_accept = float(ars.mean()) if Km1 else np.nan
        # auxiliary xi, then zeta | V, xi
        u = rng.uniform(size=(Km1, self.N))
        xi = np.empty((Km1, self.N))
        for j in range(Km1):
            zj = mix.zeta[j]
            lower = (j + 1) < mix.gamma + 1  # k < gamma_i (1-based)
            equal = (j + 1) == mix.gamma + 1
            xi[j] = zj + rng.standard_normal(self.N)  # k > gamma_i: untruncated
            xi[j, lower] = trunc_norm_lower(zj[lower], u[j, lower])
            xi[j, equal] = trunc_norm_upper(zj[equal], u[j, equal])
        mix.xi = xi
        for j in range(Km1):
            f = self._factor(j, float(mix.bandwidth[j]))
            mix.zeta[j] = f.draw_zeta(xi[j], rng)
        mix.weights = np.exp(probit_log_weights(mix.zeta))

    def _bandwidth_step(self, mix: MixtureState, adapter: AdapterState, j: int, rng) -> None:
        """Adaptive RWMH on log A_j with the Jacobian folded into the target."""
        p = self.prior
        Ck = self.Ck[j]
        zeta_j = mix.zeta[j]
        A_cur = float(mix.bandwidth[j])
        f_cur = self._factor(j, A_cur)
        theta_cur = math.log(A_cur)

        def log_target(theta: float, fac: GPFactor) -> float:
            A = math.exp(theta)
            return self.eta * theta - (A / Ck) ** self.eta + fac.gauss_loglik(zeta_j)

        step = math.exp(float(adapter.log_step[j]))
        theta_prop = theta_cur + math.sqrt(step) * rng.standard_normal()
        A_prop = math.exp(theta_prop)
        try:
            f_prop = GPFactor.build(self.d2, A_prop, tau=p.tau)
            f_prop._A = A_prop
            lp_prop = log_target(theta_prop, f_prop)
        except np.linalg.LinAlgError:
            f_prop, lp_prop = None, -math.inf
        lp_cur = log_target(theta_cur, f_cur)
        if np.isfinite(lp_prop):
            ar = min(1.0, math.exp(min(lp_prop - lp_cur, 0.0)))
        else:
            ar = 0.0
        if rng.uniform() < ar:
            mix.bandwidth[j] = A_prop
            self._factors[j] = f_prop
        s = adapter.count[j] + 1
        adj = adapter.log_step[j] + s ** (-adapter.c) * (ar - adapter.target)
        adapter.log_step[j] = min(abs(adj), adapter.cap) * math.copysign(1.0, adj)
        adapter.count[j] = s
        return ar

    def sweep_components(self, mix: MixtureState, z: np.ndarray, rng) -> None:
        p = self.prior
        z = z.reshape(self.N, p.d)
        for k in range(p.K):
            sel = mix.gamma == k
            zs, gs = z[sel], self.g[sel]
            mean, cov = conditional_mu_update(p.m0, p.psi0, mix.Omega[k], zs, gs)
            L = np.linalg.cholesky(cov)
            vec_mu = mean + L @ rng.standard_normal(mean.size)
            mix.mu[k] = vec_mu.reshape(p.d, self.q, order="F")
            Psi_k, nu_k = conditional_omega_update(p.nu0, p.Psi0, mix.mu[k], zs, gs)
            mix.Omega[k] = invwishart_draw(rng, Psi_k, nu_k)

    def sweep_memberships(self, mix: MixtureState, z: np.ndarray, rng) -> None:
        p = self.prior
        z = z.reshape(self.N, p.d)
        L, logdet = _chol_batch(mix.Omega)
        means = np.einsum("kdq,nq->nkd", mix.mu, self.g)
        logp = kern.mixture_loglik(z, means, L, logdet)
        logp += probit_log_weights(mix.zeta)
        mix.gamma = kern.categorical_rows(logp, rng.uniform(size=self.N))

    # -- conjugate inputs ----------------------------------------------------
    def unit_prior_mean(self, mix: MixtureState) -> np.ndarray:
        return np.einsum("ndq,nq->nd", mix.mu[mix.gamma], self.g)

    def component_prec(self, mix: MixtureState) -> np.ndarray:
        return np.linalg.inv(mix.Omega)


class AtomBlock:
    """Dirichlet-process point-mass block: z_i equals its component's atom.

    Memberships weigh components by the unit's *data* likelihood at each atom,
    and atom updates pool the member units' sufficient statistics.  The
    caller supplies both through a likelihood adapter.
    """

    def __init__(self, prior: MixtureBlockPrior, N: int, kind: str):
        # kind: 'coef' (normal atoms for lambda) or 'var' (IG atoms for sigma^2)
        self.prior = prior
        self.N = N
        self.atom_kind = kind

    def init_state(self, z0: np.ndarray, rng) -> MixtureState:
        p = self.prior
        K, d = p.K, p.d
        labels, centers = _kmeans_assign(z0.reshape(self.N, d), max(K // 5, 1), rng)
        if self.atom_kind == "var":
            mu = np.full((K, 1), float(np.median(z0)))
        else:
            mu = np.tile(np.asarray(p.m0, dtype=float), (K, 1))
        mu[: centers.shape[0]] = centers
        alpha = p.a0_alpha / p.b0_alpha
        sticks = np.full(K - 1, 1.0 / (1.0 + alpha))
        weights = np.empty(K)
        rem = 1.0
        for k in range(K - 1):
            weights[k] = sticks[k] * rem
            rem *= 1.0 - sticks[k]
        weights[K - 1] = 1.0 - weights[: K - 1].sum()
        return MixtureState(
            kind="unconditional",
            K=K,
            mu=mu,
            Omega=np.zeros((K, p.d, p.d)),
            gamma=labels,
            weights=weights,
            sticks=sticks,
            alpha=alpha,
        )

    def sweep_weights(self, mix: MixtureState, rng) -> None:
        p = self.prior
        mix.alpha = draw_dp_scale(p.a0_alpha, p.b0_alpha, p.K, float(mix.weights[-1]), rng)
        counts = mix.component_counts().astype(float)
        mix.sticks, mix.weights = draw_weights_tsb(counts, mix.alpha, rng)

    def sweep_memberships(self, mix: MixtureState, loglik_nk: np.ndarray, rng) -> None:
        """loglik_nk: (N, K) data log likelihood of unit i under atom k."""
        logp = loglik_nk + log_weights_from_sticks(mix.sticks)
        mix.gamma = kern.categorical_rows(logp, rng.uniform(size=self.N))
