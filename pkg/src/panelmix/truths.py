"""Data-generating-process descriptions consumed by the oracle predictor and
written as truth sidecars by the simulation commands."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = ["BaselineTruth", "GeneralTruth", "truth_to_json", "truth_from_json"]


@dataclass(frozen=True)
class BaselineTruth:
    """Homoskedastic AR(1) with unit intercepts from a finite normal mixture.

    y_it = beta0 y_{i,t-1} + lambda_i + u_it, u ~ N(0, sigma0_sq);
    lambda_i ~ sum_m weights[m] N(means[m], variances[m]) independent of y_i0.
    """

    beta0: float
    sigma0_sq: float
    weights: tuple
    means: tuple
    variances: tuple

    def lam_moments(self) -> tuple[float, float]:
        w = np.asarray(self.weights)
        m = np.asarray(self.means)
        v = np.asarray(self.variances)
        mean = float(w @ m)
        var = float(w @ (v + m**2) - mean**2)
        return mean, var


@dataclass(frozen=True)
class GeneralTruth:
    """Correlated random coefficients with cross-sectional heteroskedasticity.

    lambda_i | y_i0 = c: with probability exp(-2c) drawn N(c v, s1^2 v v'),
    else N(c^4 v, s2^2 v v'); sigma_i^2 | c = var_scale (c + 0.5)^2 G + var_shift
    with G ~ IG(ig_shape, ig_rate), truncated at sigma_max.
    """

    beta0: float
    v: tuple = (1.0, 2.0, -1.0)
    s1: float = 0.1
    s2: float = 0.2
    var_scale: float = 0.454
    var_shift: float = 0.05
    ig_shape: float = 51.0
    ig_rate: float = 50.0
    sigma_max: float = 1e6

    def mix_weight1(self, c):
        return np.exp(-2.0 * np.asarray(c, dtype=float))

    def lam_mean(self, c, component: int) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        scale = c if component == 0 else c**4
        return np.multiply.outer(scale, np.asarray(self.v))

    def sigma2_of_g(self, c, g):
        return self.var_scale * (np.asarray(c) + 0.5) ** 2 * np.asarray(g) + self.var_shift


def truth_to_json(truth) -> str:
    if isinstance(truth, BaselineTruth):
        payload = {"kind": "baseline", **truth.__dict__}
    elif isinstance(truth, GeneralTruth):
        payload = {"kind": "general", **truth.__dict__}
    else:
        raise TypeError(f"unknown truth type {type(truth)!r}")
    payload = {k: (list(v) if isinstance(v, tuple) else v) for k, v in payload.items()}
    return json.dumps(payload, sort_keys=True)


def truth_from_json(text: str):
    payload = json.loads(text)
    kind = payload.pop("kind")
    for k, v in payload.items():
        if isinstance(v, list):
            payload[k] = tuple(v)
    if kind == "baseline":
        return BaselineTruth(**payload)
    if kind == "general":
        return GeneralTruth(**payload)
    raise ValueError(f"unknown truth kind {kind!r}")
