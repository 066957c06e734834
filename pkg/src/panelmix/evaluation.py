"""Forecast scoring and comparison: MSE, LPS, cross-sectional DM/AG tests,
and PIT histograms with confidence bands.

The DM and AG constructions here are cross-sectional: loss differentials are
averaged over units (outcomes are cross-sectionally independent conditional
on aggregates), with the plain variance rather than a HAC estimator, and a
two-sided normal limit for p-values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr
from scipy.stats import chi2

__all__ = [
    "mse",
    "lps",
    "dm_test",
    "ag_test",
    "pit",
    "PITResult",
    "EvalReport",
    "significance_stars",
    "report_table",
]


def mse(forecasts, realizations) -> float:
    """Mean squared forecast error over the cross-section."""
    f = np.asarray(forecasts, dtype=float)
    y = np.asarray(realizations, dtype=float)
    if f.shape != y.shape or f.size < 1:
        raise ValueError("forecasts and realizations must share a nonempty shape")
    return float(np.mean((y - f) ** 2))


def lps(log_densities, n_units: int | None = None) -> float:
    """Mean log predictive density at the realizations.

    Accepts the per-unit log predictive values; -inf entries propagate (the
    caller sees which units had zero predictive mass).
    """
    lp = np.asarray(log_densities, dtype=float)
    if lp.size < 1:
        raise ValueError("need at least one unit")
    if np.any(np.isneginf(lp)):
        bad = np.where(np.isneginf(lp))[0]
        import warnings

        warnings.warn(f"zero predictive density at units {bad[:5].tolist()}; LPS is -inf")
    return float(np.mean(lp))


def _cross_sectional_test(d: np.ndarray) -> tuple[float, float]:
    n = d.size
    if n < 10:
        raise ValueError("need at least 10 units for the cross-sectional test")
    mean = d.mean()
    var = d.var(ddof=1)
    if var == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    stat = mean / math.sqrt(var / n)
    p = 2.0 * (1.0 - ndtr(abs(stat)))
    return float(stat), float(p)


def dm_test(errors_a, errors_b) -> tuple[float, float]:
    """Diebold-Mariano-type test on squared-error differentials.

    d_i = e_{A,i}^2 - e_{B,i}^2; the statistic is mean(d)/sqrt(var(d)/N)
    with a two-sided normal p-value.  Negative statistics favor predictor A.
    """
    ea = np.asarray(errors_a, dtype=float)
    eb = np.asarray(errors_b, dtype=float)
    if ea.shape != eb.shape:
        raise ValueError("error vectors must share a shape")
    return _cross_sectional_test(ea**2 - eb**2)


def ag_test(logscores_a, logscores_b) -> tuple[float, float]:
    """Amisano-Giacomini-type test on log-score differentials.

    d_i = log p_{A,i} - log p_{B,i}; positive statistics favor predictor A.
    """
    la = np.asarray(logscores_a, dtype=float)
    lb = np.asarray(logscores_b, dtype=float)
    if la.shape != lb.shape:
        raise ValueError("log-score vectors must share a shape")
    return _cross_sectional_test(la - lb)


@dataclass(frozen=True)
class PITResult:
    values: np.ndarray  # per-unit predictive CDF at the realization
    counts: np.ndarray  # histogram counts over equal bins
    band_lo: float  # pointwise band on the density-scale histogram
    band_hi: float
    bins: int

    def density_heights(self) -> np.ndarray:
        n = self.values.size
        return self.counts * self.bins / n

    def chi2_stat(self) -> float:
        n = self.values.size
        expected = n / self.bins
        return float(((self.counts - expected) ** 2 / expected).sum())

    def chi2_pvalue(self) -> float:
        return float(chi2.sf(self.chi2_stat(), self.bins - 1))

    def uniform_ok(self, level: float = 0.05) -> bool:
        return self.chi2_pvalue() >= level


def pit(cdf_values, bins: int = 10, band_level: float = 0.95) -> PITResult:
    """Probability integral transform summary.

    cdf_values are the predictive CDFs evaluated at the realizations; under a
    correct density forecast they are i.i.d. U(0,1).  The band is the
    pointwise binomial interval 1/B +- z sqrt((1/B)(1-1/B)/N), rescaled to
    density units.
    """
    u = np.asarray(cdf_values, dtype=float)
    if np.any((u < 0.0) | (u > 1.0)):
        raise ValueError("PIT values must lie in [0, 1]")
    counts, _ = np.histogram(u, bins=bins, range=(0.0, 1.0))
    n = u.size
    from scipy.special import ndtri

    z = ndtri(0.5 + band_level / 2.0)
    half = z * math.sqrt((1.0 / bins) * (1.0 - 1.0 / bins) / n)
    return PITResult(
        values=u,
        counts=counts,
        band_lo=(1.0 / bins - half) * bins,
        band_hi=(1.0 / bins + half) * bins,
        bins=bins,
    )


def significance_stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.10:
        return "*"
    return ""


@dataclass
class EvalReport:
    """Scores for a set of predictors against one benchmark.

    Rows keep the raw per-unit errors and log scores so tests can be re-run;
    the table view mirrors the oracle-absolute / deviation layout.
    """

    n_units: int
    benchmark: str
    rows: dict = field(default_factory=dict)  # name -> dict

    def add(self, name: str, errors: np.ndarray, logscores: np.ndarray, pit_values=None) -> None:
        self.rows[name] = {
            "errors": np.asarray(errors, dtype=float),
            "logscores": np.asarray(logscores, dtype=float),
            "pit": None if pit_values is None else np.asarray(pit_values, dtype=float),
        }

    def scores(self, name: str) -> tuple[float, float]:
        row = self.rows[name]
        return mse(row["errors"], np.zeros_like(row["errors"])), lps(row["logscores"])

    def table(self, oracle: str = "oracle") -> list[dict]:
        """Table rows: oracle absolute, others as deviations plus test stats."""
        out = []
        if oracle in self.rows:
            mse_o, lps_o = self.scores(oracle)
            out.append(
                {
                    "predictor": oracle,
                    "mse": mse_o,
                    "lps_n": lps_o * self.n_units,
                    "mse_pct_dev": 0.0,
                    "lps_n_dev": 0.0,
                    "dm_stat": np.nan,
                    "dm_p": np.nan,
                    "ag_stat": np.nan,
                    "ag_p": np.nan,
                }
            )
        else:
            mse_o = lps_o = None
        bench = self.rows.get(self.benchmark)
        for name, row in self.rows.items():
            if name == oracle:
                continue
            m, lp = self.scores(name)
            rec = {
                "predictor": name,
                "mse": m,
                "lps_n": lp * self.n_units,
                "mse_pct_dev": np.nan if mse_o is None else 100.0 * (m / mse_o - 1.0),
                "lps_n_dev": np.nan if lps_o is None else (lp - lps_o) * self.n_units,
            }
            if bench is not None and name != self.benchmark:
                rec["dm_stat"], rec["dm_p"] = dm_test(row["errors"], bench["errors"])
                rec["ag_stat"], rec["ag_p"] = ag_test(row["logscores"], bench["logscores"])
            else:
                rec["dm_stat"] = rec["dm_p"] = rec["ag_stat"] = rec["ag_p"] = np.nan
            out.append(rec)
        return out


def report_table(report: EvalReport, oracle: str = "oracle") -> str:
    """Human-readable table with significance stars against the benchmark."""
    rows = report.table(oracle)
    lines = [
        f"{'predictor':<18}{'MSE':>12}{'LPS*N':>12}{'MSE %dev':>12}{'LPS*N dev':>12}  stars"
    ]
    for r in rows:
        stars = "" if np.isnan(r["ag_p"]) else significance_stars(r["ag_p"])
        lines.append(
            f"{r['predictor']:<18}{r['mse']:>12.4f}{r['lps_n']:>12.1f}"
            f"{r['mse_pct_dev']:>11.2f}%{r['lps_n_dev']:>12.2f}  {stars}"
        )
    return "\n".join(lines)
