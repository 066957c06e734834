"""Data-driven hyperparameter elicitation and the predictor-variant registry.

Defaults follow the scale-matching recipe: shock-variance and heterogeneity
scales are read off the within-unit outcome variances and the cross-sectional
variance of the within-unit means, everything else is deliberately diffuse.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from panelmix.panel import PanelData

__all__ = [
    "MixtureBlockPrior",
    "Hyperparameters",
    "PredictorSpec",
    "VARIANTS",
    "elicit_defaults",
    "param_prior_matched",
    "param_marginal_logpdf",
]

VARIANTS = ("oracle", "homog", "flat", "param", "np_disc", "np_r", "np_c", "np_cr")

SIGMA2_LO_FACTOR = 1e-4
SIGMA2_HI_FACTOR = 1e4


@dataclass(frozen=True)
class MixtureBlockPrior:
    """Base-distribution and DP hyperparameters for one mixture block.

    The normal-inverse-Wishart base has mean m0 (per coordinate), scale psi0
    (prior covariance of the mean is psi0 * Omega), and inverse-Wishart
    (nu0, Psi0); for scalar blocks this reduces to NIG(a0, b0) with
    nu0 = 2 a0 and Psi0 = 2 b0.  a0_alpha/b0_alpha parameterize the gamma
    hyperprior on the DP scale; K is the truncation level; tau scales the
    probit-stick GP covariance in conditional blocks.
    """

    d: int
    m0: np.ndarray
    psi0: float
    nu0: float
    Psi0: np.ndarray
    a0_alpha: float = 2.0
    b0_alpha: float = 2.0
    K: int = 50
    tau: float = 1.0

    def conditional(self, d_c0: int) -> "MixtureBlockPrior":
        """Lift the base to the conditional (mean-regression) form.

        The component mean becomes a d x (1 + d_c0) coefficient matrix; the
        intercept column keeps m0 and the slope columns are centered at 0.
        """
        m0 = np.zeros((self.d, 1 + d_c0))
        m0[:, 0] = self.m0
        return replace(self, m0=m0)

    def to_jsonable(self):
        out = {
            "d": self.d,
            "m0": np.asarray(self.m0).tolist(),
            "psi0": self.psi0,
            "nu0": self.nu0,
            "Psi0": np.asarray(self.Psi0).tolist(),
            "a0_alpha": self.a0_alpha,
            "b0_alpha": self.b0_alpha,
            "K": self.K,
            "tau": self.tau,
        }
        return out

    @classmethod
    def from_jsonable(cls, payload) -> "MixtureBlockPrior":
        return cls(
            d=int(payload["d"]),
            m0=np.asarray(payload["m0"], dtype=float),
            psi0=float(payload["psi0"]),
            nu0=float(payload["nu0"]),
            Psi0=np.asarray(payload["Psi0"], dtype=float),
            a0_alpha=float(payload["a0_alpha"]),
            b0_alpha=float(payload["b0_alpha"]),
            K=int(payload["K"]),
            tau=float(payload["tau"]),
        )


def scalar_block(m0: float, psi0: float, a0: float, b0: float, **kw) -> MixtureBlockPrior:
    """Scalar-z block from NIG parameters (nu0 = 2 a0, Psi0 = 2 b0)."""
    return MixtureBlockPrior(
        d=1,
        m0=np.array([m0]),
        psi0=psi0,
        nu0=2.0 * a0,
        Psi0=np.array([[2.0 * b0]]),
        **kw,
    )


@dataclass(frozen=True)
class Hyperparameters:
    """Full prior configuration for one fitted model."""

    m0_beta: np.ndarray
    psi0_beta: np.ndarray  # diagonal entries; prior cov of beta is diag(psi0_beta) (x sigma^2 when homoskedastic)
    a0_sigma2: float
    b0_sigma2: float
    lam: MixtureBlockPrior
    l: MixtureBlockPrior | None
    sigma2_lo: float
    sigma2_hi: float
    rwmh_c: float = 0.55
    rwmh_target: float = 0.30
    rwmh_logstep_cap: float = 10.0
    # parametric-heteroskedasticity prior constants
    a0_a: float = 1.0
    b0_a: float = 0.01
    c0_a: float = 0.01
    a0_b: float = 0.01
    b0_b: float = 0.01

    def to_jsonable(self):
        return {
            "m0_beta": np.asarray(self.m0_beta).tolist(),
            "psi0_beta": np.asarray(self.psi0_beta).tolist(),
            "a0_sigma2": self.a0_sigma2,
            "b0_sigma2": self.b0_sigma2,
            "lam": self.lam.to_jsonable(),
            "l": None if self.l is None else self.l.to_jsonable(),
            "sigma2_lo": self.sigma2_lo,
            "sigma2_hi": self.sigma2_hi,
            "rwmh_c": self.rwmh_c,
            "rwmh_target": self.rwmh_target,
            "rwmh_logstep_cap": self.rwmh_logstep_cap,
            "a0_a": self.a0_a,
            "b0_a": self.b0_a,
            "c0_a": self.c0_a,
            "a0_b": self.a0_b,
            "b0_b": self.b0_b,
        }

    @classmethod
    def from_jsonable(cls, payload) -> "Hyperparameters":
        return cls(
            m0_beta=np.asarray(payload["m0_beta"], dtype=float),
            psi0_beta=np.asarray(payload["psi0_beta"], dtype=float),
            a0_sigma2=float(payload["a0_sigma2"]),
            b0_sigma2=float(payload["b0_sigma2"]),
            lam=MixtureBlockPrior.from_jsonable(payload["lam"]),
            l=None if payload["l"] is None else MixtureBlockPrior.from_jsonable(payload["l"]),
            sigma2_lo=float(payload["sigma2_lo"]),
            sigma2_hi=float(payload["sigma2_hi"]),
            rwmh_c=float(payload["rwmh_c"]),
            rwmh_target=float(payload["rwmh_target"]),
            rwmh_logstep_cap=float(payload["rwmh_logstep_cap"]),
            a0_a=float(payload["a0_a"]),
            b0_a=float(payload["b0_a"]),
            c0_a=float(payload["c0_a"]),
            a0_b=float(payload["a0_b"]),
            b0_b=float(payload["b0_b"]),
        )


@dataclass(frozen=True)
class PredictorSpec:
    """Which predictor variant to run, and with what prior configuration.

    `conditioning` names the c_{i0} selector tokens for conditional variants
    ('np_c', 'np_cr'); `truth` attaches the data-generating description the
    oracle variant requires.
    """

    variant: str
    heteroskedastic: bool = False
    conditioning: tuple[str, ...] = ()
    standardize: bool = True
    hyper: Hyperparameters | None = None
    truth: object = None
    label: str | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown predictor variant {self.variant!r}")
        if self.variant == "oracle" and self.truth is None:
            raise ValueError("oracle predictor requires an attached truth description")
        if self.variant in ("np_c", "np_cr") and not self.conditioning:
            raise ValueError(f"{self.variant} requires a conditioning selector")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        base = self.variant
        if self.heteroskedastic and self.variant not in ("homog", "oracle"):
            return f"heterosk_{base}"
        return base

    @property
    def lambda_conditional(self) -> bool:
        return self.variant in ("np_c", "np_cr")

    @property
    def l_conditional(self) -> bool:
        return self.variant == "np_c"

    def to_jsonable(self):
        return {
            "variant": self.variant,
            "heteroskedastic": self.heteroskedastic,
            "conditioning": list(self.conditioning),
            "standardize": self.standardize,
            "hyper": None if self.hyper is None else self.hyper.to_jsonable(),
            "label": self.label,
        }

    @classmethod
    def from_jsonable(cls, payload, truth=None) -> "PredictorSpec":
        return cls(
            variant=payload["variant"],
            heteroskedastic=bool(payload["heteroskedastic"]),
            conditioning=tuple(payload["conditioning"]),
            standardize=bool(payload["standardize"]),
            hyper=None if payload["hyper"] is None else Hyperparameters.from_jsonable(payload["hyper"]),
            truth=truth,
            label=payload.get("label"),
        )

    def spec_hash(self) -> str:
        text = json.dumps(self.to_jsonable(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def elicit_defaults(data: PanelData, K: int = 50) -> Hyperparameters:
    """Scale-matched default hyperparameters from the observed panel.

    a0_sigma2 = 2 and b0_sigma2 is the cross-sectional average of within-unit
    outcome variances, so prior and data share a scale; the lagged-outcome
    coefficient is centered at 0.5 (other x columns at 0) with prior variance
    1/b0_sigma2; the lambda base is NIG(2, Var_i(mean_t y_it)) with m0 = 0,
    psi0 = 1; the DP scale prior is Ga(2, 2).  Units with fewer than two
    usable observations are excluded from the variance estimates.
    """
    y, _, _ = data.estimation_view()
    within_var = np.full(data.N, np.nan)
    within_mean = np.full(data.N, np.nan)
    skipped = 0
    for i in range(data.N):
        t0, t1 = int(data.t0[i]), int(data.t1[i])
        if t1 < t0:
            skipped += 1
            continue
        yi = y[i, t0 : t1 + 1]
        within_mean[i] = yi.mean()
        if yi.size < 2:
            skipped += 1
            continue
        within_var[i] = yi.var(ddof=1)
    if skipped:
        warnings.warn(f"{skipped} unit(s) with <2 usable observations excluded from elicitation")
    if not np.isfinite(within_var).any():
        raise ValueError("no unit provides a within variance")
    b0_sigma2 = float(np.nanmean(within_var))
    if b0_sigma2 <= 0.0:
        raise ValueError("zero within variance")
    b0_lam = float(np.nanvar(within_mean, ddof=1))

    d_x, d_w = data.d_x, data.d_w
    m0_beta = np.zeros(d_x)
    if data.lag_col >= 0:
        m0_beta[data.lag_col] = 0.5
    psi0_beta = np.full(d_x, 1.0 / b0_sigma2)

    lam = MixtureBlockPrior(
        d=d_w,
        m0=np.zeros(d_w),
        psi0=1.0,
        nu0=d_w + 3.0,
        Psi0=2.0 * b0_lam * np.eye(d_w),
        K=K,
    )
    sigma2_lo = SIGMA2_LO_FACTOR * b0_sigma2
    sigma2_hi = SIGMA2_HI_FACTOR * b0_sigma2
    from panelmix.samplers.transforms import l_of_sigma2

    m0_l = l_of_sigma2(b0_sigma2, sigma2_lo, sigma2_hi)
    l_block = scalar_block(m0=m0_l, psi0=1.0, a0=2.0, b0=1.0, K=K)
    return Hyperparameters(
        m0_beta=m0_beta,
        psi0_beta=psi0_beta,
        a0_sigma2=2.0,
        b0_sigma2=b0_sigma2,
        lam=lam,
        l=l_block,
        sigma2_lo=sigma2_lo,
        sigma2_hi=sigma2_hi,
    )


def param_prior_matched(hyper: Hyperparameters) -> MixtureBlockPrior:
    """Gaussian-heterogeneity prior whose hyperprior matches the mixture base.

    lambda_i ~ N(mu, Omega) with (mu, Omega) drawn from the same base
    distribution as the nonparametric mixture, so a single observation's
    marginal is identical under the two models.
    """
    return replace(hyper.lam, K=1)


def param_marginal_logpdf(block: MixtureBlockPrior, lam: np.ndarray) -> np.ndarray:
    """Single-draw marginal log density under the matched Gaussian prior.

    Integrating N(mu, Omega) against the NIW base gives a multivariate
    Student-t with nu0 - d + 1 degrees of freedom, location m0, and scale
    matrix (1 + psi0) Psi0 / (nu0 - d + 1).
    """
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    d = block.d
    df = block.nu0 - d + 1.0
    scale = (1.0 + block.psi0) * np.asarray(block.Psi0) / df
    from scipy.stats import multivariate_t

    return multivariate_t.logpdf(lam, loc=np.asarray(block.m0, dtype=float).reshape(d), shape=scale, df=df)
