"""Gibbs sweeps for every fitted predictor variant, and chain orchestration.

Each variant is a small model class exposing ``init_state``, ``sweep`` and
``record``.  All randomness flows through one Philox root stream per chain;
unit-parallel steps consume pre-drawn blocks in canonical unit order (see
samplers.rng).  Per-sweep cost is dominated by the kernel battery in
panelmix._kernels and, for conditional variants, the GP factor updates.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from panelmix import _kernels as kern
from panelmix import __version__
from panelmix.mixtures import MixtureState
from panelmix.panel import PanelData, build_conditioning_set
from panelmix.priors import Hyperparameters, PredictorSpec, elicit_defaults
from panelmix.samplers.adapt import AdapterState
from panelmix.samplers.blocks import AtomBlock, CondBlock, UncondBlock, _chol_batch
from panelmix.samplers.conjugate import nig_regression_draw, normal_regression_draw
from panelmix.samplers.rng import bitgen_state, chain_rng, restore_rng
from panelmix.samplers.transforms import l_of_sigma2, sigma2_of_l

__all__ = [
    "PanelStats",
    "ChainState",
    "PosteriorDraws",
    "build_model",
    "run_chain",
    "draw_beta_known_variance",
    "draw_beta_sigma2_nig",
]


# ---------------------------------------------------------------------------
# sufficient statistics


@dataclass
class PanelStats:
    """Per-unit cross products over the usable windows (estimation view)."""

    Tn: np.ndarray  # (N,) transition counts
    Sww: np.ndarray  # (N, dw, dw)
    Sxx: np.ndarray  # (N, dx, dx)
    Swx: np.ndarray  # (N, dw, dx)
    Swy: np.ndarray  # (N, dw)
    Sxy: np.ndarray  # (N, dx)
    Syy: np.ndarray  # (N,)
    x_T: np.ndarray  # (N, dx) forecast-origin regressors
    w_T: np.ndarray  # (N, dw)

    @classmethod
    def from_panel(cls, data: PanelData) -> "PanelStats":
        y, x, w = data.estimation_view()
        return cls._from_arrays(y, x, w, data.t0, data.t1, data.T)

    @classmethod
    def _from_arrays(cls, y, x, w, t0, t1, T) -> "PanelStats":
        N = y.shape[0]
        t_grid = np.arange(1, T + 1)
        mask = (t_grid[None, :] >= t0[:, None]) & (t_grid[None, :] <= t1[:, None])
        Y = np.where(mask, y[:, 1 : T + 1], 0.0)
        X = np.where(mask[:, :, None], x[:, 0:T], 0.0)
        W = np.where(mask[:, :, None], w[:, 0:T], 0.0)
        return cls(
            Tn=mask.sum(axis=1).astype(float),
            Sww=np.einsum("nta,ntb->nab", W, W),
            Sxx=np.einsum("nta,ntb->nab", X, X),
            Swx=np.einsum("nta,ntb->nab", W, X),
            Swy=np.einsum("nta,nt->na", W, Y),
            Sxy=np.einsum("nta,nt->na", X, Y),
            Syy=np.einsum("nt,nt->n", Y, Y),
            x_T=x[:, T].copy(),
            w_T=w[:, T].copy(),
        )

    @property
    def n_obs(self) -> float:
        return float(self.Tn.sum())

    def sse(self, beta: np.ndarray, lam: np.ndarray) -> np.ndarray:
        return kern.sse_quad(self.Syy, self.Sxy, self.Sxx, self.Swy, self.Swx, self.Sww, beta, lam)

    def resid_wy(self, beta: np.ndarray) -> np.ndarray:
        """sum_t w (y - beta'x) per unit."""
        return self.Swy - self.Swx @ beta

    def resid_xy(self, lam: np.ndarray) -> np.ndarray:
        """sum_t x (y - lam'w) per unit."""
        return self.Sxy - np.einsum("nij,ni->nj", self.Swx, lam)

    def resid_yy(self, lam: np.ndarray) -> np.ndarray:
        """sum_t (y - lam'w)^2 per unit."""
        return (
            self.Syy
            - 2.0 * np.einsum("ni,ni->n", self.Swy, lam)
            + np.einsum("nij,ni,nj->n", self.Sww, lam, lam)
        )


# ---------------------------------------------------------------------------
# chain state


@dataclass
class ChainState:
    """Full parameter state of one chain at one sweep."""

    beta: np.ndarray
    sigma2: np.ndarray  # (N,) per-unit values (equal under homoskedasticity)
    lam: np.ndarray  # (N, dw)
    sigma2_common: float | None = None
    l: np.ndarray | None = None
    lam_mix: MixtureState | None = None
    l_mix: MixtureState | None = None
    adapters: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    sweep_index: int = 0
    accept_l: float = np.nan
    accept_A: float = np.nan

    def to_jsonable(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "sigma2": self.sigma2.tolist(),
            "lam": self.lam.tolist(),
            "sigma2_common": self.sigma2_common,
            "l": None if self.l is None else self.l.tolist(),
            "lam_mix": None if self.lam_mix is None else self.lam_mix.to_json(),
            "l_mix": None if self.l_mix is None else self.l_mix.to_json(),
            "adapters": {k: v.to_jsonable() for k, v in self.adapters.items()},
            "extras": {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.extras.items()},
            "sweep_index": self.sweep_index,
        }

    @classmethod
    def from_jsonable(cls, payload: dict) -> "ChainState":
        return cls(
            beta=np.asarray(payload["beta"], dtype=float),
            sigma2=np.asarray(payload["sigma2"], dtype=float),
            lam=np.asarray(payload["lam"], dtype=float),
            sigma2_common=payload["sigma2_common"],
            l=None if payload["l"] is None else np.asarray(payload["l"], dtype=float),
            lam_mix=None if payload["lam_mix"] is None else MixtureState.from_json(payload["lam_mix"]),
            l_mix=None if payload["l_mix"] is None else MixtureState.from_json(payload["l_mix"]),
            adapters={k: AdapterState.from_jsonable(v) for k, v in payload["adapters"].items()},
            extras=payload["extras"],
            sweep_index=int(payload["sweep_index"]),
        )


# ---------------------------------------------------------------------------
# shared steps


def draw_beta_known_variance(stats: PanelStats, lam, inv_s2, hyper: Hyperparameters, rng):
    """Heteroskedastic common-parameter step (precision-weighted regression)."""
    Sxx_w = np.einsum("n,nij->ij", inv_s2, stats.Sxx)
    Sxy_w = np.einsum("n,ni->i", inv_s2, stats.resid_xy(lam))
    return normal_regression_draw(rng, hyper.m0_beta, hyper.psi0_beta, Sxx_w, Sxy_w)


def draw_beta_sigma2_nig(stats: PanelStats, lam, hyper: Hyperparameters, rng):
    """Homoskedastic joint (beta, sigma^2) step."""
    Sxx = stats.Sxx.sum(axis=0)
    Sxy = stats.resid_xy(lam).sum(axis=0)
    Syy = float(stats.resid_yy(lam).sum())
    return nig_regression_draw(
        rng,
        hyper.m0_beta,
        hyper.psi0_beta,
        hyper.a0_sigma2,
        hyper.b0_sigma2,
        Sxx,
        Sxy,
        Syy,
        stats.n_obs,
    )


def draw_lambda_units(stats: PanelStats, inv_s2, prior_mean, prior_prec, gamma, beta, rng):
    """Conjugate lambda_i draws for all units (block-drawn normals)."""
    N, dw = stats.Swy.shape
    eps = rng.standard_normal((N, dw))
    Swr = stats.resid_wy(beta)
    return kern.lambda_draw(stats.Sww, Swr, inv_s2, prior_mean, prior_prec, gamma, eps)


def draw_l_units(state, stats: PanelStats, hyper: Hyperparameters, prior_mean, prior_var, rng):
    """Adaptive RWMH moves on every unit's variance transform."""
    ad = state.adapters["l"]
    N = stats.Tn.size
    eps = rng.standard_normal(N)
    u = rng.uniform(size=N)
    sse = stats.sse(state.beta, state.lam)
    sigma2, accepted = kern.l_rwmh_vec(
        state.l,
        prior_mean,
        prior_var,
        stats.Tn,
        sse,
        hyper.sigma2_lo,
        hyper.sigma2_hi,
        ad.log_step,
        ad.count,
        eps,
        u,
        ad.c,
        ad.target,
        ad.cap,
    )
    state.sigma2 = sigma2
    state.accept_l = float(accepted.mean()) if N else np.nan
    return sigma2


def _clamp_sigma2(s2, lo, hi):
    span = hi - lo
    return np.clip(s2, lo + 1e-6 * span, hi - 1e-6 * span)


# ---------------------------------------------------------------------------
# variant models


class _ModelBase:
    needs_conditioning = False

    def __init__(self, spec: PredictorSpec, data: PanelData):
        self.spec = spec
        self.data = data
        self.hyper = spec.hyper if spec.hyper is not None else elicit_defaults(data)
        self.stats = PanelStats.from_panel(data)
        self.N = data.N
        self.d_x = data.d_x
        self.d_w = data.d_w
        self.cond = None
        if self.needs_conditioning or spec.lambda_conditional:
            self.cond = build_conditioning_set(data, spec.conditioning, spec.standardize)

    # overridden by variants
    def init_state(self, rng) -> ChainState:
        raise NotImplementedError

    def sweep(self, state: ChainState, rng) -> None:
        raise NotImplementedError

    def refresh_outcomes(self, y: np.ndarray) -> None:
        """Swap in regenerated outcomes (joint-law validation only).

        Assumes the panel layout is fixed (windows, w, exogenous x); the
        lagged-outcome column tracks the new y.
        """
        data = self.data
        x = np.array(data.x)
        if data.lag_col >= 0:
            x[:, :, data.lag_col] = y[:, : data.T + 1]
        self.stats = PanelStats._from_arrays(y, x, np.array(data.w), data.t0, data.t1, data.T)

    # shared initializers ---------------------------------------------------
    def _init_common(self, rng):
        h = self.hyper
        beta = h.m0_beta.copy()
        Swr = self.stats.resid_wy(beta)
        lam = np.zeros((self.N, self.d_w))
        ok = self.stats.Tn >= self.d_w
        for i in np.where(ok)[0]:
            try:
                lam[i] = np.linalg.solve(self.stats.Sww[i], Swr[i])
            except np.linalg.LinAlgError:
                pass
        sse = self.stats.sse(beta, lam)
        s2 = sse / np.maximum(self.stats.Tn, 1.0)
        s2[~np.isfinite(s2) | (s2 <= 0.0)] = h.b0_sigma2
        s2 = _clamp_sigma2(s2, h.sigma2_lo, h.sigma2_hi)
        return beta, lam, s2

    def record(self, state: ChainState) -> dict:
        rec = {
            "beta": state.beta.copy(),
            "lam": state.lam.copy(),
            "accept_l": state.accept_l,
            "accept_A": state.accept_A,
        }
        if state.sigma2_common is not None:
            rec["sigma2"] = np.array([state.sigma2_common])
        else:
            rec["sigma2"] = state.sigma2.copy()
        rec["alpha_lam"] = state.lam_mix.alpha if state.lam_mix is not None else np.nan
        rec["alpha_l"] = state.l_mix.alpha if state.l_mix is not None else np.nan
        rec["n_unique_lam"] = state.lam_mix.n_unique() if state.lam_mix is not None else np.nan
        if rec["alpha_lam"] is None:
            rec["alpha_lam"] = np.nan
        if rec["alpha_l"] is None:
            rec["alpha_l"] = np.nan
        return rec


class HomogModel(_ModelBase):
    """Fully pooled predictor: one (beta, lambda*, sigma^2) for everyone."""

    def __init__(self, spec, data):
        super().__init__(spec, data)
        h = self.hyper
        self._m0 = np.concatenate([h.m0_beta, np.zeros(self.d_w)])
        self._psi0 = np.concatenate([h.psi0_beta, np.full(self.d_w, 1.0 / h.b0_sigma2)])
        # pooled cross products of the stacked regressor [x, w]
        self._Szz = np.block(
            [
                [self.stats.Sxx.sum(0), np.swapaxes(self.stats.Swx, 1, 2).sum(0)],
                [self.stats.Swx.sum(0), self.stats.Sww.sum(0)],
            ]
        )
        self._Szy = np.concatenate([self.stats.Sxy.sum(0), self.stats.Swy.sum(0)])
        self._Syy = float(self.stats.Syy.sum())

    def init_state(self, rng) -> ChainState:
        beta, _, s2 = self._init_common(rng)
        s2c = float(np.mean(s2))
        return ChainState(
            beta=beta,
            sigma2=np.full(self.N, s2c),
            lam=np.zeros((self.N, self.d_w)),
            sigma2_common=s2c,
        )

    def sweep(self, state: ChainState, rng) -> None:
        coef, s2 = nig_regression_draw(
            rng,
            self._m0,
            self._psi0,
            self.hyper.a0_sigma2,
            self.hyper.b0_sigma2,
            self._Szz,
            self._Szy,
            self._Syy,
            self.stats.n_obs,
        )
        state.beta = coef[: self.d_x]
        state.lam = np.tile(coef[self.d_x :], (self.N, 1))
        state.sigma2_common = s2
        state.sigma2 = np.full(self.N, s2)


class FlatModel(_ModelBase):
    """Improper uniform prior on the unit-level parameters (no pooling)."""

    def init_state(self, rng) -> ChainState:
        beta, lam, s2 = self._init_common(rng)
        st = ChainState(beta=beta, sigma2=s2, lam=lam)
        if not self.spec.heteroskedastic:
            st.sigma2_common = float(np.mean(s2))
            st.sigma2 = np.full(self.N, st.sigma2_common)
        return st

    def sweep(self, state: ChainState, rng) -> None:
        inv_s2 = 1.0 / state.sigma2
        zero_prec = np.zeros((1, self.d_w, self.d_w))
        gamma = np.zeros(self.N, dtype=np.int64)
        state.lam = draw_lambda_units(
            self.stats, inv_s2, np.zeros((self.N, self.d_w)), zero_prec, gamma, state.beta, rng
        )
        if self.spec.heteroskedastic:
            sse = self.stats.sse(state.beta, state.lam)
            shape = 0.5 * np.maximum(self.stats.Tn, 1.0)
            state.sigma2 = (0.5 * sse + 1e-300) / rng.standard_gamma(shape)
            state.sigma2 = _clamp_sigma2(state.sigma2, self.hyper.sigma2_lo, self.hyper.sigma2_hi)
            state.beta = draw_beta_known_variance(
                self.stats, state.lam, 1.0 / state.sigma2, self.hyper, rng
            )
        else:
            state.beta, s2 = draw_beta_sigma2_nig(self.stats, state.lam, self.hyper, rng)
            state.sigma2_common = s2
            state.sigma2 = np.full(self.N, s2)


class DPMModel(_ModelBase):
    """Gaussian-mixture prior on lambda (and on l when heteroskedastic).

    K = 1 gives the parametric Gaussian predictor; K > 1 the nonparametric
    random-coefficients predictor.  The heteroskedastic parametric variant
    replaces the l mixture with the conjugate IG(a, b) hierarchy.
    """

    def __init__(self, spec, data, lam_K=None):
        super().__init__(spec, data)
        h = self.hyper
        lam_prior = h.lam if lam_K is None else dataclasses.replace(h.lam, K=lam_K)
        self.lam_block = UncondBlock(lam_prior, self.N)
        self.param_sigma = spec.variant == "param" and spec.heteroskedastic
        self.l_block = None
        if spec.heteroskedastic and not self.param_sigma:
            self.l_block = UncondBlock(h.l, self.N)

    def init_state(self, rng) -> ChainState:
        h = self.hyper
        beta, lam, s2 = self._init_common(rng)
        st = ChainState(beta=beta, sigma2=s2, lam=lam)
        st.lam_mix = self.lam_block.init_state(lam, rng)
        if self.spec.heteroskedastic:
            st.l = l_of_sigma2(s2, h.sigma2_lo, h.sigma2_hi)
            st.adapters["l"] = AdapterState.fresh(self.N, initial_step=0.25)
            if self.l_block is not None:
                st.l_mix = self.l_block.init_state(st.l[:, None], rng)
            else:
                st.extras["ig_a"] = 2.0
                st.extras["ig_b"] = h.b0_sigma2
                st.adapters["ig_a"] = AdapterState.fresh(initial_step=0.25)
        else:
            st.sigma2_common = float(np.mean(s2))
            st.sigma2 = np.full(self.N, st.sigma2_common)
        return st

    def sweep(self, state: ChainState, rng) -> None:
        h = self.hyper
        self.lam_block.sweep_weights(state.lam_mix, rng)
        if state.l_mix is not None:
            self.l_block.sweep_weights(state.l_mix, rng)
        self.lam_block.sweep_components(state.lam_mix, state.lam, rng)
        if state.l_mix is not None:
            self.l_block.sweep_components(state.l_mix, state.l[:, None], rng)
        self.lam_block.sweep_memberships(state.lam_mix, state.lam, rng)
        if state.l_mix is not None:
            self.l_block.sweep_memberships(state.l_mix, state.l[:, None], rng)

        inv_s2 = 1.0 / state.sigma2
        state.lam = draw_lambda_units(
            self.stats,
            inv_s2,
            self.lam_block.unit_prior_mean(state.lam_mix),
            self.lam_block.component_prec(state.lam_mix),
            state.lam_mix.gamma,
            state.beta,
            rng,
        )
        if self.spec.heteroskedastic:
            if state.l_mix is not None:
                mix = state.l_mix
                prior_mean = mix.mu[mix.gamma, 0]
                prior_var = mix.Omega[mix.gamma, 0, 0]
                draw_l_units(state, self.stats, h, prior_mean, prior_var, rng)
            else:
                self._param_sigma_sweep(state, rng)
            state.beta = draw_beta_known_variance(
                self.stats, state.lam, 1.0 / state.sigma2, h, rng
            )
        else:
            state.beta, s2 = draw_beta_sigma2_nig(self.stats, state.lam, h, rng)
            state.sigma2_common = s2
            state.sigma2 = np.full(self.N, s2)

    def _param_sigma_sweep(self, state: ChainState, rng) -> None:
        """IG(a, b) hierarchy on sigma_i^2 (shape RWMH, scale gamma, units IG)."""
        h = self.hyper
        a, b = state.extras["ig_a"], state.extras["ig_b"]
        s2 = state.sigma2
        sum_log_s2 = float(np.log(s2).sum())
        log_a1 = math.log(h.a0_a) + sum_log_s2
        b1 = h.b0_a + self.N
        c1 = h.c0_a + self.N

        def log_kernel(av: float) -> float:
            if av <= 0.0:
                return -math.inf
            return (-1.0 - av) * log_a1 + av * c1 * math.log(b) - b1 * math.lgamma(av)

        ad = state.adapters["ig_a"]
        step = math.exp(float(ad.log_step))
        prop = a + math.sqrt(step) * rng.standard_normal()
        lp_prop = log_kernel(prop)
        ar = 0.0 if not np.isfinite(lp_prop) else min(1.0, math.exp(min(lp_prop - log_kernel(a), 0.0)))
        if rng.uniform() < ar:
            a = prop
        ad.update(ar)
        b = float(rng.standard_gamma(h.a0_b + self.N * a) / (h.b0_b + float((1.0 / s2).sum())))
        sse = self.stats.sse(state.beta, state.lam)
        shape = a + 0.5 * self.stats.Tn
        state.sigma2 = (b + 0.5 * sse) / rng.standard_gamma(shape)
        state.extras["ig_a"], state.extras["ig_b"] = a, b
        if state.l is not None:
            state.l = l_of_sigma2(
                _clamp_sigma2(state.sigma2, h.sigma2_lo, h.sigma2_hi), h.sigma2_lo, h.sigma2_hi
            )


class AtomModel(_ModelBase):
    """Dirichlet-process (discrete) prior: point-mass atoms for lambda and,
    when heteroskedastic, for sigma^2."""

    def __init__(self, spec, data):
        super().__init__(spec, data)
        h = self.hyper
        self.lam_block = AtomBlock(h.lam, self.N, kind="coef")
        d = self.d_w
        self._S0_inv = np.linalg.inv(np.asarray(h.lam.Psi0) / max(h.lam.nu0 - d - 1.0, 1.0))
        self._atom_m0 = np.asarray(h.lam.m0, dtype=float)
        self.s2_block = None
        if spec.heteroskedastic:
            self.s2_block = AtomBlock(h.l, self.N, kind="var")

    def init_state(self, rng) -> ChainState:
        beta, lam, s2 = self._init_common(rng)
        st = ChainState(beta=beta, sigma2=s2, lam=lam)
        st.lam_mix = self.lam_block.init_state(lam, rng)
        st.lam = st.lam_mix.mu[st.lam_mix.gamma]
        if self.spec.heteroskedastic:
            st.l_mix = self.s2_block.init_state(s2[:, None], rng)
            st.l_mix.mu = np.maximum(st.l_mix.mu, 1e-12)
            st.sigma2 = st.l_mix.mu[st.l_mix.gamma, 0]
        else:
            st.sigma2_common = float(np.mean(s2))
            st.sigma2 = np.full(self.N, st.sigma2_common)
        return st

    def sweep(self, state: ChainState, rng) -> None:
        h = self.hyper
        mix = state.lam_mix
        self.lam_block.sweep_weights(mix, rng)
        if state.l_mix is not None:
            self.s2_block.sweep_weights(state.l_mix, rng)

        inv_s2 = 1.0 / state.sigma2
        # atom updates: pooled conjugate normal per component
        Swr = self.stats.resid_wy(state.beta)
        for k in range(mix.K):
            sel = mix.gamma == k
            prec = self._S0_inv + np.einsum("n,nij->ij", inv_s2[sel], self.stats.Sww[sel])
            rhs = self._S0_inv @ self._atom_m0 + np.einsum("n,ni->i", inv_s2[sel], Swr[sel])
            cov = np.linalg.inv(prec)
            cov = 0.5 * (cov + cov.T)
            mean = cov @ rhs
            mix.mu[k] = mean + np.linalg.cholesky(cov) @ rng.standard_normal(self.d_w)
        # memberships against the data likelihood at each atom
        loglik = self._lam_loglik(state, inv_s2, mix.mu)
        self.lam_block.sweep_memberships(mix, loglik, rng)
        state.lam = mix.mu[mix.gamma]

        if state.l_mix is not None:
            self._sigma_atoms(state, rng)
            state.beta = draw_beta_known_variance(self.stats, state.lam, 1.0 / state.sigma2, h, rng)
        else:
            state.beta, s2 = draw_beta_sigma2_nig(self.stats, state.lam, h, rng)
            state.sigma2_common = s2
            state.sigma2 = np.full(self.N, s2)

    def _lam_loglik(self, state, inv_s2, atoms) -> np.ndarray:
        """(N, K) log likelihood of each unit's data at each lambda atom."""
        st = self.stats
        u = st.Syy - 2.0 * (st.Sxy @ state.beta) + np.einsum("nij,i,j->n", st.Sxx, state.beta, state.beta)
        r = st.resid_wy(state.beta)  # (N, dw)
        cross = r @ atoms.T  # (N, K)
        quad = np.einsum("kd,nde,ke->nk", atoms, st.Sww, atoms)
        sse = u[:, None] - 2.0 * cross + quad
        return -0.5 * inv_s2[:, None] * sse

    def _sigma_atoms(self, state, rng) -> None:
        h = self.hyper
        mix = state.l_mix
        sse = self.stats.sse(state.beta, state.lam)
        for k in range(mix.K):
            sel = mix.gamma == k
            a_k = h.a0_sigma2 + 0.5 * float(self.stats.Tn[sel].sum())
            b_k = h.b0_sigma2 + 0.5 * float(sse[sel].sum())
            mix.mu[k, 0] = b_k / rng.standard_gamma(a_k)
        atoms = mix.mu[:, 0]
        loglik = -0.5 * (
            self.stats.Tn[:, None] * np.log(atoms)[None, :] + sse[:, None] / atoms[None, :]
        )
        self.s2_block.sweep_memberships(mix, loglik, rng)
        state.sigma2 = atoms[mix.gamma]


class MGLRxModel(_ModelBase):
    """Conditional mixture prior (probit stick-breaking in c_{i0}).

    np_c: both lambda and l conditional (when heteroskedastic);
    np_cr: lambda conditional, l unconditional;
    homoskedastic np_c: lambda conditional, common sigma^2.
    """

    needs_conditioning = True

    def __init__(self, spec, data):
        super().__init__(spec, data)
        h = self.hyper
        self.lam_block = CondBlock(h.lam.conditional(self.cond.d), self.cond.values)
        self.l_block = None
        self.l_cond = False
        if spec.heteroskedastic:
            if spec.l_conditional:
                self.l_block = CondBlock(h.l.conditional(self.cond.d), self.cond.values)
                self.l_cond = True
            else:
                self.l_block = UncondBlock(h.l, self.N)

    def init_state(self, rng) -> ChainState:
        h = self.hyper
        beta, lam, s2 = self._init_common(rng)
        st = ChainState(beta=beta, sigma2=s2, lam=lam)
        st.lam_mix = self.lam_block.init_state(lam, rng)
        st.adapters["A_lam"] = self.lam_block.new_adapter()
        if self.spec.heteroskedastic:
            st.l = l_of_sigma2(s2, h.sigma2_lo, h.sigma2_hi)
            st.adapters["l"] = AdapterState.fresh(self.N, initial_step=0.25)
            st.l_mix = self.l_block.init_state(st.l[:, None], rng)
            if self.l_cond:
                st.adapters["A_l"] = self.l_block.new_adapter()
        else:
            st.sigma2_common = float(np.mean(s2))
            st.sigma2 = np.full(self.N, st.sigma2_common)
        return st

    def sweep(self, state: ChainState, rng) -> None:
        h = self.hyper
        self.lam_block.sweep_weights(state.lam_mix, state.adapters["A_lam"], rng)
        if state.l_mix is not None:
            if self.l_cond:
                self.l_block.sweep_weights(state.l_mix, state.adapters["A_l"], rng)
            else:
                self.l_block.sweep_weights(state.l_mix, rng)
        self.lam_block.sweep_components(state.lam_mix, state.lam, rng)
        if state.l_mix is not None:
            self.l_block.sweep_components(state.l_mix, state.l[:, None], rng)
        self.lam_block.sweep_memberships(state.lam_mix, state.lam, rng)
        if state.l_mix is not None:
            self.l_block.sweep_memberships(state.l_mix, state.l[:, None], rng)

        inv_s2 = 1.0 / state.sigma2
        state.lam = draw_lambda_units(
            self.stats,
            inv_s2,
            self.lam_block.unit_prior_mean(state.lam_mix),
            self.lam_block.component_prec(state.lam_mix),
            state.lam_mix.gamma,
            state.beta,
            rng,
        )
        if self.spec.heteroskedastic:
            mix = state.l_mix
            if self.l_cond:
                prior_mean = self.l_block.unit_prior_mean(mix)[:, 0]
            else:
                prior_mean = mix.mu[mix.gamma, 0]
            prior_var = mix.Omega[mix.gamma, 0, 0]
            draw_l_units(state, self.stats, h, prior_mean, prior_var, rng)
            state.beta = draw_beta_known_variance(self.stats, state.lam, 1.0 / state.sigma2, h, rng)
        else:
            state.beta, s2 = draw_beta_sigma2_nig(self.stats, state.lam, h, rng)
            state.sigma2_common = s2
            state.sigma2 = np.full(self.N, s2)
        rates = [self.lam_block.last_accept]
        if self.l_cond and self.l_block is not None:
            rates.append(self.l_block.last_accept)
        state.accept_A = float(np.mean(rates))


def build_model(spec: PredictorSpec, data: PanelData):
    """Instantiate the Gibbs model for a fitted predictor variant."""
    if spec.variant == "homog":
        return HomogModel(spec, data)
    if spec.variant == "flat":
        return FlatModel(spec, data)
    if spec.variant == "param":
        return DPMModel(spec, data, lam_K=1)
    if spec.variant == "np_r":
        return DPMModel(spec, data)
    if spec.variant == "np_disc":
        return AtomModel(spec, data)
    if spec.variant in ("np_c", "np_cr"):
        return MGLRxModel(spec, data)
    raise ValueError(f"variant {spec.variant!r} is not a fitted model")


# ---------------------------------------------------------------------------
# chain driver


@dataclass
class PosteriorDraws:
    """Retained post-burn-in draws plus provenance."""

    beta: np.ndarray  # (S, dx)
    sigma2: np.ndarray  # (S, N) or (S, 1)
    lam: np.ndarray  # (S, N, dw)
    alpha_lam: np.ndarray
    alpha_l: np.ndarray
    n_unique_lam: np.ndarray
    accept_l: np.ndarray
    accept_A: np.ndarray
    provenance: dict

    @property
    def S(self) -> int:
        return self.beta.shape[0]

    def sigma2_full(self, N: int) -> np.ndarray:
        if self.sigma2.shape[1] == N:
            return self.sigma2
        return np.broadcast_to(self.sigma2, (self.S, N))

    def save(self, path) -> None:
        meta = json.dumps(self.provenance, sort_keys=True)
        np.savez(
            path,
            beta=self.beta,
            sigma2=self.sigma2,
            lam=self.lam,
            alpha_lam=self.alpha_lam,
            alpha_l=self.alpha_l,
            n_unique_lam=self.n_unique_lam,
            accept_l=self.accept_l,
            accept_A=self.accept_A,
            provenance=np.frombuffer(meta.encode(), dtype=np.uint8),
        )

    @classmethod
    def load(cls, path) -> "PosteriorDraws":
        with np.load(path) as z:
            meta = json.loads(bytes(z["provenance"]).decode())
            return cls(
                beta=z["beta"],
                sigma2=z["sigma2"],
                lam=z["lam"],
                alpha_lam=z["alpha_lam"],
                alpha_l=z["alpha_l"],
                n_unique_lam=z["n_unique_lam"],
                accept_l=z["accept_l"],
                accept_A=z["accept_A"],
                provenance=meta,
            )


def _write_checkpoint(path, spec, state, rng, n_sim, burn_in, thin, seed, chain_id, records):
    payload = {
        "version": __version__,
        "spec": spec.to_jsonable(),
        "spec_hash": spec.spec_hash(),
        "n_sim": n_sim,
        "burn_in": burn_in,
        "thin": thin,
        "seed": seed,
        "chain_id": chain_id,
        "state": state.to_jsonable(),
        "rng": bitgen_state(rng),
        "n_records": len(records),
    }
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh)
    import os

    os.replace(tmp, path)
    if records:
        np.savez(str(path) + ".draws.npz", **_stack_records(records))


def _stack_records(records: list[dict]) -> dict:
    out = {}
    for key in records[0]:
        vals = [r[key] for r in records]
        out[key] = np.stack(vals) if isinstance(vals[0], np.ndarray) else np.asarray(vals, dtype=float)
    return out


def run_chain(
    spec: PredictorSpec,
    data: PanelData,
    n_sim: int,
    burn_in: int,
    thin: int = 1,
    seed: int = 0,
    chain_id: int = 0,
    diagnostics_path=None,
    checkpoint_path=None,
    resume_from=None,
) -> PosteriorDraws:
    """Run one chain and return the retained draws.

    Deterministic in (spec, data, n_sim, burn_in, thin, seed, chain_id):
    repeated runs produce byte-identical draws.  A checkpoint is written on
    failure when checkpoint_path is set; resume_from continues a checkpointed
    run and reproduces the uninterrupted result exactly.
    """
    if not (n_sim > burn_in >= 0):
        raise ValueError("need n_sim > burn_in >= 0")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    model = build_model(spec, data)
    records: list[dict] = []
    start = 0
    if resume_from is not None:
        with open(resume_from) as fh:
            payload = json.load(fh)
        if payload["spec_hash"] != spec.spec_hash():
            raise ValueError("checkpoint was produced by a different spec")
        state = ChainState.from_jsonable(payload["state"])
        rng = restore_rng(payload["rng"])
        start = state.sweep_index
        import os

        partial = str(resume_from) + ".draws.npz"
        if payload["n_records"] and os.path.exists(partial):
            with np.load(partial) as z:
                stacked = {k: z[k] for k in z.files}
            for s in range(payload["n_records"]):
                records.append({k: stacked[k][s] for k in stacked})
        # reconstruct extras dtype
        for k, v in list(state.extras.items()):
            if isinstance(v, list):
                state.extras[k] = np.asarray(v, dtype=float)
    else:
        rng = chain_rng(seed, chain_id)
        state = model.init_state(rng)

    diag_fh = open(diagnostics_path, "w") if diagnostics_path else None
    if diag_fh and start == 0:
        beta_cols = ",".join(f"beta{j}" for j in range(model.d_x))
        diag_fh.write(f"sweep,{beta_cols},sigma2,alpha_lam,alpha_l,lambda_1,accept_l,accept_A\n")
    try:
        for s in range(start, n_sim):
            model.sweep(state, rng)
            state.sweep_index = s + 1
            if s >= burn_in and (s - burn_in) % thin == 0:
                records.append(model.record(state))
            if diag_fh:
                b = ",".join(repr(float(v)) for v in state.beta)
                s2 = state.sigma2_common if state.sigma2_common is not None else float(
                    np.mean(state.sigma2)
                )
                al = state.lam_mix.alpha if state.lam_mix is not None else np.nan
                al2 = state.l_mix.alpha if state.l_mix is not None else np.nan
                diag_fh.write(
                    f"{s},{b},{s2!r},{al},{al2},{state.lam[0, 0]!r},{state.accept_l},{state.accept_A}\n"
                )
    except BaseException:
        if checkpoint_path is not None:
            _write_checkpoint(
                checkpoint_path, spec, state, rng, n_sim, burn_in, thin, seed, chain_id, records
            )
        raise
    finally:
        if diag_fh:
            diag_fh.close()
    if checkpoint_path is not None:
        _write_checkpoint(
            checkpoint_path, spec, state, rng, n_sim, burn_in, thin, seed, chain_id, records
        )

    stacked = _stack_records(records) if records else {}
    from panelmix._kernels import BACKEND

    prov = {
        "version": __version__,
        "spec_hash": spec.spec_hash(),
        "variant": spec.variant,
        "seed": seed,
        "chain_id": chain_id,
        "n_sim": n_sim,
        "burn_in": burn_in,
        "thin": thin,
        "backend": BACKEND,
    }
    return PosteriorDraws(
        beta=stacked["beta"],
        sigma2=stacked["sigma2"],
        lam=stacked["lam"],
        alpha_lam=stacked["alpha_lam"],
        alpha_l=stacked["alpha_l"],
        n_unique_lam=stacked["n_unique_lam"],
        accept_l=stacked["accept_l"],
        accept_A=stacked["accept_A"],
        provenance=prov,
    )
