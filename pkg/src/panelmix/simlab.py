"""Simulation DGPs and the Monte Carlo experiment harness.

Baseline designs: homoskedastic AR(1) with unit intercepts drawn from
degenerate/skewed/fat-tail/bimodal mixtures, beta = 0.8, shock variance 1/4,
standard-normal initial conditions.  The general design has a 3-dimensional
coefficient vector correlated with the uniform initial condition and
initial-condition-dependent shock variances.  Period T+1 is simulated and
stored as the held-out target; estimation never sees it (the estimation view
masks it).
"""

from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, ndtr

from panelmix.evaluation import EvalReport, ag_test, dm_test, significance_stars
from panelmix.forecasting import oracle_density_all, sp_density_all
from panelmix.panel import PanelData, panel_from_arrays
from panelmix.priors import PredictorSpec
from panelmix.samplers.gibbs import run_chain
from panelmix.truths import BaselineTruth, GeneralTruth

__all__ = [
    "DGPSpec",
    "BASELINE_VARIANTS",
    "gen_baseline",
    "gen_general",
    "simulate",
    "run_mc",
    "MCResult",
    "score_arrays",
]

_SIM_SALT = 0x73696D6C6162

BASELINE_VARIANTS = {
    # weights, means, variances of the intercept mixture
    "degenerate": ((1.0,), (0.0,), (0.0,)),
    "skewed": ((1.0 / 9.0, 8.0 / 9.0), (2.0, -0.25), (0.5, 0.5)),
    "fat_tail": ((0.2, 0.8), (0.0, 0.0), (4.0, 0.25)),
    "bimodal": ((0.35, 0.65), (0.0, 10.0), (1.0, 1.0)),
}
_BIMODAL_SCALE = math.sqrt(1.0 + 10.0**2 * 0.35 * 0.65)


@dataclass(frozen=True)
class DGPSpec:
    """Which simulation design to draw, at what size, from which seed."""

    variant: str  # baseline variant name or 'general'
    N: int = 1000
    T: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.variant != "general" and self.variant not in BASELINE_VARIANTS:
            raise ValueError(f"unknown DGP variant {self.variant!r}")


def _sim_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([_SIM_SALT, int(seed)])))


def _draw_mixture_normal(rng, weights, means, variances, size):
    comp = rng.choice(len(weights), p=np.asarray(weights), size=size)
    draws = np.asarray(means)[comp] + np.sqrt(np.asarray(variances))[comp] * rng.standard_normal(size)
    return draws


def gen_baseline(variant: str, N: int = 1000, T: int = 6, seed: int = 0):
    """Simulate one baseline panel; returns (PanelData, BaselineTruth)."""
    weights, means, variances = BASELINE_VARIANTS[variant]
    if variant == "bimodal":
        means = tuple(m / _BIMODAL_SCALE for m in means)
        variances = tuple(v / _BIMODAL_SCALE**2 for v in variances)
    truth = BaselineTruth(
        beta0=0.8, sigma0_sq=0.25, weights=weights, means=means, variances=variances
    )
    rng = _sim_rng(seed)
    y = np.empty((N, T + 2))
    y[:, 0] = rng.standard_normal(N)
    if variant == "degenerate":
        lam = np.zeros(N)
    else:
        lam = _draw_mixture_normal(rng, weights, means, variances, N)
    shocks = math.sqrt(truth.sigma0_sq) * rng.standard_normal((N, T + 1))
    for t in range(1, T + 2):
        y[:, t] = truth.beta0 * y[:, t - 1] + lam + shocks[:, t - 1]
    data = panel_from_arrays(y)
    return data, truth


def gen_general(N: int = 1000, T: int = 6, seed: int = 0):
    """Simulate one general-model panel; returns (PanelData, GeneralTruth)."""
    truth = GeneralTruth(beta0=0.8)
    rng = _sim_rng(seed)
    y = np.empty((N, T + 2))
    y0 = rng.uniform(0.0, 1.0, size=N)
    y[:, 0] = y0
    v = np.asarray(truth.v)
    # lambda | y0: rank-1 covariance sampled as mean + s * v
    pick1 = rng.uniform(size=N) < truth.mix_weight1(y0)
    scale = np.where(pick1, truth.s1, truth.s2)
    center = np.where(pick1[:, None], truth.lam_mean(y0, 0), truth.lam_mean(y0, 1))
    lam = center + (scale * rng.standard_normal(N))[:, None] * v
    # sigma^2 | y0 with rejection at the truncation bound
    sigma2 = np.empty(N)
    pending = np.arange(N)
    for _ in range(100):
        if pending.size == 0:
            break
        g = 1.0 / rng.standard_gamma(truth.ig_shape, size=pending.size) * truth.ig_rate
        cand = truth.sigma2_of_g(y0[pending], g)
        ok = cand <= truth.sigma_max
        sigma2[pending[ok]] = cand[ok]
        pending = pending[~ok]
    if pending.size:
        raise RuntimeError("sigma^2 truncation rejection cap exceeded")
    # covariates: aggregate N(0,1) per period, individual Ga(1,1)
    w = np.empty((N, T + 1, 3))
    w[:, :, 0] = 1.0
    w[:, :, 1] = rng.standard_normal(T + 1)[None, :]
    w[:, :, 2] = rng.standard_gamma(1.0, size=(N, T + 1))
    shocks = np.sqrt(sigma2)[:, None] * rng.standard_normal((N, T + 1))
    for t in range(1, T + 2):
        y[:, t] = truth.beta0 * y[:, t - 1] + np.einsum("nd,nd->n", lam, w[:, t - 1]) + shocks[:, t - 1]
    x = y[:, : T + 1][:, :, None].copy()
    data = panel_from_arrays(y, x=x, w=w, lag_col=0)
    return data, truth


def simulate(dgp: DGPSpec):
    if dgp.variant == "general":
        return gen_general(dgp.N, dgp.T, dgp.seed)
    return gen_baseline(dgp.variant, dgp.N, dgp.T, dgp.seed)


# ---------------------------------------------------------------------------
# scoring helpers


def score_arrays(means: np.ndarray, variances: np.ndarray, realizations: np.ndarray):
    """Cross-sectional scores of a draw-mixture predictive.

    means/variances: (S, N) per-draw predictive parameters.  Returns
    (point_errors, logscores, pit_values), each (N,).
    """
    S = means.shape[0]
    y = realizations[None, :]
    lp = -0.5 * (np.log(2.0 * np.pi * variances) + (y - means) ** 2 / variances)
    logscores = logsumexp(lp, axis=0) - math.log(S)
    points = means.mean(axis=0)
    errors = realizations - points
    pit_vals = ndtr((y - means) / np.sqrt(variances)).mean(axis=0)
    return errors, logscores, pit_vals


def _score_density_list(densities, realizations):
    errors = np.array([d.mean() for d in densities])
    errors = realizations - errors
    logscores = np.array([d.logpdf(y) for d, y in zip(densities, realizations)])
    pit_vals = np.array([d.cdf(y) for d, y in zip(densities, realizations)])
    return errors, logscores, pit_vals


def _one_repetition(dgp, predictors, chain_cfg, rep_seed, truth_required):
    data, truth = simulate(dataclasses.replace(dgp, seed=rep_seed))
    realizations = data.y[:, data.T + 1]
    out = {}
    for spec in predictors:
        if spec.variant == "oracle":
            spec = dataclasses.replace(spec, truth=truth)
            dens = oracle_density_all(truth, data)
            out[spec.name] = _score_density_list(dens, realizations)
        else:
            draws = run_chain(
                spec,
                data,
                n_sim=chain_cfg["n_sim"],
                burn_in=chain_cfg["burn_in"],
                thin=chain_cfg.get("thin", 1),
                seed=rep_seed,
                chain_id=0,
            )
            means, variances = sp_density_all(draws, data)
            out[spec.name] = score_arrays(means, variances, realizations)
    return out


@dataclass
class MCResult:
    """Averaged Monte Carlo scores in the oracle-deviation layout."""

    dgp: DGPSpec
    repetitions: int
    benchmark: str
    rows: dict  # name -> dict of averaged statistics
    failures: list = field(default_factory=list)

    def ordered_names(self) -> list:
        return list(self.rows)

    def to_csv(self, provenance: str = "") -> str:
        cols = [
            "predictor", "reps", "mse", "lps_n", "mse_pct_dev", "lps_n_dev",
            "dm_stat", "dm_p", "dm_stars", "ag_stat", "ag_p", "ag_stars",
        ]
        lines = []
        if provenance:
            lines.append(f"# {provenance}")
        lines.append(",".join(cols))
        for name, r in self.rows.items():
            lines.append(
                ",".join(
                    [
                        name,
                        str(r["reps"]),
                        repr(r["mse"]),
                        repr(r["lps_n"]),
                        repr(r["mse_pct_dev"]),
                        repr(r["lps_n_dev"]),
                        repr(r["dm_stat"]),
                        repr(r["dm_p"]),
                        r["dm_stars"],
                        repr(r["ag_stat"]),
                        repr(r["ag_p"]),
                        r["ag_stars"],
                    ]
                )
            )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        lines = [
            f"DGP {self.dgp.variant}  N={self.dgp.N} T={self.dgp.T}  "
            f"R={self.repetitions}  benchmark={self.benchmark}",
            f"{'predictor':<20}{'MSE':>10}{'LPS*N':>10}{'MSE%dev':>10}{'LPSNdev':>10}  sig",
        ]
        for name, r in self.rows.items():
            lines.append(
                f"{name:<20}{r['mse']:>10.4f}{r['lps_n']:>10.1f}"
                f"{r['mse_pct_dev']:>9.2f}%{r['lps_n_dev']:>10.2f}  {r['ag_stars']}"
            )
        if self.failures:
            lines.append(f"incomplete: {len(self.failures)} failures")
            for rep, name, msg in self.failures[:10]:
                lines.append(f"  rep {rep} {name}: {msg}")
        return "\n".join(lines) + "\n"


def run_mc(
    dgp: DGPSpec,
    predictors: list[PredictorSpec],
    chain_cfg: dict,
    repetitions: int,
    benchmark: str | None = None,
    jobs: int = 1,
) -> MCResult:
    """Simulate, fit, forecast, and score every predictor over R repetitions.

    Per-repetition scores are aggregated as plain averages; DM/AG statistics
    are computed within each repetition against the benchmark and averaged.
    Repetition r uses seed dgp.seed + r for both simulation and chains.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    names = [s.name for s in predictors]
    if benchmark is None:
        benchmark = next((n for n in names if n != "oracle"), names[0])
    per_rep: list = [None] * repetitions
    failures = []
    seeds = [dgp.seed + r for r in range(repetitions)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {
                pool.submit(_one_repetition, dgp, predictors, chain_cfg, s, False): r
                for r, s in enumerate(seeds)
            }
            for fut, r in futs.items():
                try:
                    per_rep[r] = fut.result()
                except Exception as exc:  # noqa: BLE001
                    failures.append((r, "*", str(exc)))
    else:
        for r, s in enumerate(seeds):
            try:
                per_rep[r] = _one_repetition(dgp, predictors, chain_cfg, s, False)
            except Exception as exc:  # noqa: BLE001
                failures.append((r, "*", str(exc)))

    rows: dict = {}
    mse_means: dict = {}
    lps_means: dict = {}
    for name in names:
        reps_ok = [rep for rep in per_rep if rep is not None and name in rep]
        mses = [float(np.mean(rep[name][0] ** 2)) for rep in reps_ok]
        lpss = [float(np.mean(rep[name][1])) for rep in reps_ok]
        mse_means[name] = float(np.mean(mses)) if mses else np.nan
        lps_means[name] = float(np.mean(lpss)) if lpss else np.nan
        rows[name] = {"reps": len(reps_ok)}
    mse_o = mse_means.get("oracle", np.nan)
    lps_o = lps_means.get("oracle", np.nan)
    for name in names:
        r = rows[name]
        r["mse"] = mse_means[name]
        r["lps_n"] = lps_means[name] * dgp.N
        r["mse_pct_dev"] = 100.0 * (mse_means[name] / mse_o - 1.0) if np.isfinite(mse_o) else np.nan
        r["lps_n_dev"] = (lps_means[name] - lps_o) * dgp.N if np.isfinite(lps_o) else np.nan
        dm_stats, dm_ps, ag_stats, ag_ps = [], [], [], []
        if name != benchmark and name != "oracle":
            for rep in per_rep:
                if rep is None or name not in rep or benchmark not in rep:
                    continue
                s, p = dm_test(rep[name][0], rep[benchmark][0])
                dm_stats.append(s)
                dm_ps.append(p)
                s, p = ag_test(rep[name][1], rep[benchmark][1])
                ag_stats.append(s)
                ag_ps.append(p)
        if dm_stats:
            from scipy.special import ndtr as _ndtr

            r["dm_stat"] = float(np.mean(dm_stats))
            r["dm_p"] = float(2.0 * (1.0 - _ndtr(abs(r["dm_stat"]))))
            r["ag_stat"] = float(np.mean(ag_stats))
            r["ag_p"] = float(2.0 * (1.0 - _ndtr(abs(r["ag_stat"]))))
        else:
            r["dm_stat"] = r["dm_p"] = r["ag_stat"] = r["ag_p"] = np.nan
        r["dm_stars"] = "" if np.isnan(r["dm_p"]) else significance_stars(r["dm_p"])
        r["ag_stars"] = "" if np.isnan(r["ag_p"]) else significance_stars(r["ag_p"])
    return MCResult(
        dgp=dgp, repetitions=repetitions, benchmark=benchmark, rows=rows, failures=failures
    )
