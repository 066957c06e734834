"""Slice-retrospective sampler: the truncation-free alternative for the
unconditional mixture blocks.

Auxiliary uniforms u_i ~ U(0, p_{gamma_i}) bound the set of components a
unit can move to, so only K^P components (active plus potentially reachable)
need updating per sweep.  Label-switching Metropolis moves improve mixing
across component indices; the DP scale follows the two-gamma mixture update.
"""

from __future__ import annotations

import math

import numpy as np

from panelmix import _kernels as kern
from panelmix.mixtures import MixtureState
from panelmix.priors import PredictorSpec
from panelmix.samplers.blocks import _chol_batch, _kmeans_assign
from panelmix.samplers.conjugate import niw_draw, niw_update
from panelmix.samplers.gibbs import (
    ChainState,
    _ModelBase,
    draw_beta_sigma2_nig,
    draw_lambda_units,
)

__all__ = ["SliceNPRModel", "potential_component_count", "escobar_west_weight"]

MAX_COMPONENTS = 512


def potential_component_count(weights: np.ndarray, u_min: float) -> int:
    """Walk the growth rule: smallest k with 1 - sum_{j<=k} p_j < min u."""
    acc = 0.0
    for k, p in enumerate(weights, start=1):
        acc += p
        if 1.0 - acc < u_min:
            return k
    return weights.size


def escobar_west_weight(a0_alpha: float, K_A: int, N: int, rate: float) -> float:
    """Mixing weight of the higher-shape gamma in the DP-scale update."""
    return min(max((a0_alpha + K_A - 1.0) / (N * rate), 0.0), 1.0)


class _SliceBlock:
    """One unconditional mixture block without hard truncation."""

    def __init__(self, prior, N):
        self.prior = prior
        self.N = N

    def init_state(self, z0: np.ndarray, rng) -> MixtureState:
        p = self.prior
        d = p.d
        n0 = max(2, min(8, self.N))
        labels, centers = _kmeans_assign(z0.reshape(self.N, d), n0, rng)
        K = centers.shape[0]
        mu = centers.copy()
        Omega_mean = np.asarray(p.Psi0) / max(p.nu0 - d - 1.0, 1.0)
        Omega = np.tile(Omega_mean, (K, 1, 1))
        alpha = p.a0_alpha / p.b0_alpha
        sticks = np.full(K, 1.0 / (1.0 + alpha))
        weights = self._weights_from_sticks(sticks)
        return MixtureState(
            kind="unconditional", K=K, mu=mu, Omega=Omega, gamma=labels,
            weights=weights, sticks=sticks, alpha=alpha,
        )

    @staticmethod
    def _weights_from_sticks(sticks: np.ndarray) -> np.ndarray:
        rem = np.concatenate([[1.0], np.cumprod(1.0 - sticks[:-1])])
        return sticks * rem

    def _comp_logpdf(self, mix, z, k) -> np.ndarray:
        d = z.shape[1]
        L = np.linalg.cholesky(mix.Omega[k])
        dev = z - mix.mu[k]
        y = np.linalg.solve(L, dev.T)
        return -0.5 * (d * math.log(2 * math.pi) + 2 * np.log(np.diag(L)).sum() + (y**2).sum(0))

    def sweep(self, mix: MixtureState, z: np.ndarray, rng) -> None:
        p = self.prior
        d = p.d
        z = z.reshape(self.N, d)
        # 1(a) active components
        K_A = int(mix.gamma.max()) + 1
        counts = np.bincount(mix.gamma, minlength=K_A).astype(float)
        # 1(b) stick posterior for active components
        tail = np.concatenate([np.cumsum(counts[::-1])[::-1][1:], [0.0]])
        sticks = rng.beta(1.0 + counts, mix.alpha + tail)
        sticks = np.clip(sticks, 1e-15, 1 - 1e-15)
        # 1(c) component parameters
        mu = np.empty((K_A, d))
        Omega = np.empty((K_A, d, d))
        for k in range(K_A):
            post = niw_update(p.m0, p.psi0, p.nu0, p.Psi0, z[mix.gamma == k])
            mu[k], Omega[k] = niw_draw(rng, post)
        mix.mu, mix.Omega, mix.sticks = mu, Omega, sticks[:K_A]
        mix.weights = self._weights_from_sticks(mix.sticks)
        mix.K = K_A
        # 1(d) label-switching moves
        self._move_swap_labels(mix, z, rng)
        self._move_adjacent(mix, z, rng)
        self._move_swap_components(mix, z, rng)
        K_A = int(mix.gamma.max()) + 1
        # 2. auxiliary slice variables
        u = rng.uniform(size=self.N) * mix.weights[mix.gamma]
        # 3. DP scale (two-gamma mixture)
        xi = rng.beta(mix.alpha + 1.0, self.N)
        rate = p.b0_alpha - math.log(xi)
        p_alpha = escobar_west_weight(p.a0_alpha, K_A, self.N, rate)
        shape = p.a0_alpha + K_A - (0.0 if rng.uniform() < p_alpha else 1.0)
        mix.alpha = float(rng.standard_gamma(shape) / rate)
        # 4. potential components
        sticks = list(mix.sticks[:K_A])
        weights = list(self._weights_from_sticks(np.asarray(sticks)))
        mu_list = list(mix.mu[:K_A])
        om_list = list(mix.Omega[:K_A])
        u_min = float(u.min())
        while 1.0 - sum(weights) >= u_min:
            if len(weights) >= MAX_COMPONENTS:
                raise RuntimeError(
                    f"slice-retrospective component count exceeded {MAX_COMPONENTS}"
                )
            zeta_new = float(np.clip(rng.beta(1.0, mix.alpha), 1e-15, 1 - 1e-15))
            prod = np.prod([1.0 - s for s in sticks]) if sticks else 1.0
            sticks.append(zeta_new)
            weights.append(zeta_new * prod)
            mu_k, om_k = niw_draw(rng, niw_update(p.m0, p.psi0, p.nu0, p.Psi0, np.empty((0, d))))
            mu_list.append(mu_k)
            om_list.append(om_k)
        K_P = len(weights)
        mix.mu = np.asarray(mu_list)
        mix.Omega = np.asarray(om_list)
        mix.sticks = np.asarray(sticks)
        mix.weights = np.asarray(weights)
        mix.K = K_P
        # 5. memberships restricted by the slice.  Given u_i ~ U(0, p_gamma),
        # the weight factor cancels: P(gamma_i = k | u_i, z_i) is proportional
        # to 1(u_i < p_k) phi(z_i; theta_k) alone.
        L, logdet = _chol_batch(mix.Omega)
        logp = kern.mixture_loglik(z, mix.mu, L, logdet)
        logp[u[:, None] >= mix.weights[None, :]] = -np.inf
        mix.gamma = kern.categorical_rows(logp, rng.uniform(size=self.N))

    # -- label-switching moves ----------------------------------------------
    def _nonempty(self, mix) -> np.ndarray:
        counts = np.bincount(mix.gamma, minlength=mix.K)
        return np.where(counts > 0)[0]

    def _move_swap_labels(self, mix, z, rng) -> None:
        """Swap the member sets of two non-empty components; theta, p fixed."""
        ne = self._nonempty(mix)
        if ne.size < 2:
            rng.uniform()  # keep the draw budget stable enough for mixing
            return
        j, k = rng.choice(ne, size=2, replace=False)
        sel_j = mix.gamma == j
        sel_k = mix.gamma == k
        n_j, n_k = int(sel_j.sum()), int(sel_k.sum())
        lj_j = self._comp_logpdf(mix, z[sel_j], j).sum()
        lj_k = self._comp_logpdf(mix, z[sel_j], k).sum()
        lk_j = self._comp_logpdf(mix, z[sel_k], j).sum()
        lk_k = self._comp_logpdf(mix, z[sel_k], k).sum()
        log_ratio = (
            (lj_k + lk_j) - (lj_j + lk_k)
            + (n_j - n_k) * (math.log(mix.weights[k]) - math.log(mix.weights[j]))
        )
        if math.log(rng.uniform() + 1e-300) < log_ratio:
            mix.gamma[sel_j] = k
            mix.gamma[sel_k] = j

    def _move_adjacent(self, mix, z, rng) -> None:
        """Swap two adjacent components wholesale along with their sticks."""
        if mix.K < 2:
            rng.uniform()
            return
        k = int(rng.integers(0, mix.K - 1))
        counts = np.bincount(mix.gamma, minlength=mix.K)
        n_k, n_k1 = int(counts[k]), int(counts[k + 1])
        z_k, z_k1 = mix.sticks[k], mix.sticks[k + 1]
        log_ratio = n_k * math.log1p(-z_k1) - n_k1 * math.log1p(-z_k)
        if math.log(rng.uniform() + 1e-300) < log_ratio:
            sel_k = mix.gamma == k
            sel_k1 = mix.gamma == k + 1
            mix.gamma[sel_k] = k + 1
            mix.gamma[sel_k1] = k
            mix.sticks[[k, k + 1]] = mix.sticks[[k + 1, k]]
            mix.mu[[k, k + 1]] = mix.mu[[k + 1, k]]
            mix.Omega[[k, k + 1]] = mix.Omega[[k + 1, k]]
            mix.weights = self._weights_from_sticks(mix.sticks)

    def _move_swap_components(self, mix, z, rng) -> None:
        """Swap parameters and members of two non-empty components; weights
        stay positional."""
        ne = self._nonempty(mix)
        if ne.size < 2:
            rng.uniform()
            return
        j, k = rng.choice(ne, size=2, replace=False)
        counts = np.bincount(mix.gamma, minlength=mix.K)
        n_j, n_k = int(counts[j]), int(counts[k])
        log_ratio = (n_k - n_j) * (math.log(mix.weights[j]) - math.log(mix.weights[k]))
        if math.log(rng.uniform() + 1e-300) < log_ratio:
            sel_j = mix.gamma == j
            sel_k = mix.gamma == k
            mix.gamma[sel_j] = k
            mix.gamma[sel_k] = j
            mix.mu[[j, k]] = mix.mu[[k, j]]
            mix.Omega[[j, k]] = mix.Omega[[k, j]]


class SliceNPRModel(_ModelBase):
    """NP-R fitted without truncation (homoskedastic panels)."""

    def __init__(self, spec: PredictorSpec, data):
        super().__init__(spec, data)
        if spec.heteroskedastic:
            raise NotImplementedError("slice-retrospective sampler covers homoskedastic NP-R")
        self.lam_block = _SliceBlock(self.hyper.lam, self.N)

    def init_state(self, rng) -> ChainState:
        beta, lam, s2 = self._init_common(rng)
        st = ChainState(beta=beta, sigma2=s2, lam=lam)
        st.lam_mix = self.lam_block.init_state(lam, rng)
        st.sigma2_common = float(np.mean(s2))
        st.sigma2 = np.full(self.N, st.sigma2_common)
        return st

    def sweep(self, state: ChainState, rng) -> None:
        self.lam_block.sweep(state.lam_mix, state.lam, rng)
        mix = state.lam_mix
        inv_s2 = 1.0 / state.sigma2
        state.lam = draw_lambda_units(
            self.stats,
            inv_s2,
            mix.mu[mix.gamma],
            np.linalg.inv(mix.Omega),
            mix.gamma,
            state.beta,
            rng,
        )
        state.beta, s2 = draw_beta_sigma2_nig(self.stats, state.lam, self.hyper, rng)
        state.sigma2_common = s2
        state.sigma2 = np.full(self.N, s2)
