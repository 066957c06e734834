"""Truncated stick-breaking mixtures: state container, deterministic algebra,
density evaluation, and truncation/clustering diagnostics.

Two mixture kinds are supported.  The unconditional kind has scalar weights
p_1..p_K from a truncated stick-breaking law with a Dirichlet-process scale
alpha.  The conditional kind has per-unit weights p_k(c_i0) built from probit
stick-breaking functions zeta_k evaluated at the units' conditioning points,
with squared-exponential Gaussian-process priors (bandwidths A_k) on each
zeta_k, and component means that are linear in [1, c_i0']'.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, ndtr

__all__ = [
    "MixtureState",
    "stick_to_weights",
    "probit_weights",
    "probit_log_weights",
    "gp_covariance",
    "eval_density",
    "eval_log_density",
    "expected_unique_components",
    "truncation_error_bound",
    "mglrx_ck",
    "GP_JITTER",
]

GP_JITTER = 1e-8
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class MixtureState:
    """One mixture block (for lambda or for l).

    kind 'unconditional': mu has shape (K, d); weights (K,).
    kind 'conditional': mu has shape (K, d, 1 + d_c0); weights (N, K) derived
    from zeta (K-1, N) via the probit stick-breaking map; bandwidth, xi carry
    the per-component GP state.  Omega is (K, d, d) SPD in both kinds.
    """

    kind: str
    K: int
    mu: np.ndarray
    Omega: np.ndarray
    gamma: np.ndarray
    weights: np.ndarray | None = None
    sticks: np.ndarray | None = None  # (K-1,) stick fractions, unconditional
    alpha: float | None = None
    zeta: np.ndarray | None = None  # (K-1, N), conditional
    bandwidth: np.ndarray | None = None  # (K-1,), conditional
    xi: np.ndarray | None = None  # (K-1, N), conditional
    cpoints: np.ndarray | None = None  # (N, d_c0), conditional
    tau: float = 1.0

    @property
    def d(self) -> int:
        return self.mu.shape[1]

    def component_counts(self) -> np.ndarray:
        return np.bincount(self.gamma, minlength=self.K)

    def n_unique(self) -> int:
        return int(np.unique(self.gamma).size)

    def unit_weights(self, n_units: int) -> np.ndarray:
        """Weights as an (N, K) array regardless of kind."""
        if self.kind == "unconditional":
            return np.broadcast_to(self.weights, (n_units, self.K))
        return self.weights

    def to_json(self) -> str:
        payload = {"kind": self.kind, "K": self.K, "tau": self.tau, "alpha": self.alpha}
        fields = ("mu", "Omega", "gamma", "weights", "sticks", "zeta", "bandwidth", "xi", "cpoints")
        for name in fields:
            arr = getattr(self, name)
            payload[name] = None if arr is None else np.asarray(arr).tolist()
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "MixtureState":
        payload = json.loads(text)

        def arr(name, dtype=float):
            v = payload[name]
            return None if v is None else np.asarray(v, dtype=dtype)

        return cls(
            kind=payload["kind"],
            K=int(payload["K"]),
            mu=arr("mu"),
            Omega=arr("Omega"),
            gamma=arr("gamma", dtype=np.int64),
            weights=arr("weights"),
            sticks=arr("sticks"),
            alpha=payload["alpha"],
            zeta=arr("zeta"),
            bandwidth=arr("bandwidth"),
            xi=arr("xi"),
            cpoints=arr("cpoints"),
            tau=float(payload.get("tau", 1.0)),
        )


def stick_to_weights(zeta: np.ndarray, K: int | None = None) -> np.ndarray:
    """Truncated stick-breaking map: length K-1 fractions -> K weights.

    p_k = zeta_k prod_{j<k}(1 - zeta_j) for k < K; the K-th weight closes the
    simplex.  Computed so the output sums to exactly 1.
    """
    zeta = np.asarray(zeta, dtype=float)
    if K is None:
        K = zeta.size + 1
    if zeta.size != K - 1:
        raise ValueError("need K-1 stick fractions")
    p = np.empty(K)
    remaining = 1.0
    for k in range(K - 1):
        p[k] = zeta[k] * remaining
        remaining *= 1.0 - zeta[k]
    p[K - 1] = 1.0 - p[: K - 1].sum()
    return p


def probit_weights(zeta_at_c: np.ndarray) -> np.ndarray:
    """Probit stick-breaking weights from zeta values.

    zeta_at_c has shape (K-1,) or (K-1, N); returns (K,) or (N, K) with
    p_k(c) = Phi(zeta_k(c)) prod_{j<k}(1 - Phi(zeta_j(c))) and the K-th
    weight closing the simplex.
    """
    return np.exp(probit_log_weights(zeta_at_c))


def probit_log_weights(zeta_at_c: np.ndarray) -> np.ndarray:
    """Log of probit_weights, computed without cancellation.

    log p_k = log Phi(zeta_k) + sum_{j<k} log Phi(-zeta_j); the closing
    weight is the full survival product sum_{j<K} log Phi(-zeta_j).
    """
    z = np.asarray(zeta_at_c, dtype=float)
    squeeze = z.ndim == 1
    if squeeze:
        z = z[:, None]
    Km1, N = z.shape
    logphi = log_ndtr(z)  # log Phi(zeta_k)
    logsurv = log_ndtr(-z)  # log (1 - Phi(zeta_k))
    cum = np.vstack([np.zeros((1, N)), np.cumsum(logsurv, axis=0)])
    logp = np.empty((Km1 + 1, N))
    logp[:Km1] = logphi + cum[:Km1]
    logp[Km1] = cum[Km1]
    out = logp.T  # (N, K)
    return out[0] if squeeze else out


def gp_covariance(bandwidth: float, points: np.ndarray, tau: float = 1.0) -> np.ndarray:
    """Squared-exponential covariance tau * exp(-A ||c_i - c_j||^2) + jitter.

    A small diagonal jitter (GP_JITTER * tau) keeps Cholesky factorizations
    viable at extreme bandwidths.
    """
    c = np.atleast_2d(np.asarray(points, dtype=float))
    if c.shape[0] == 1 and c.size > 1:
        c = c.T
    d2 = np.sum((c[:, None, :] - c[None, :, :]) ** 2, axis=-1)
    V = tau * np.exp(-bandwidth * d2)
    V[np.diag_indices_from(V)] += GP_JITTER * tau
    return V


def _component_log_norm(z: np.ndarray, mean: np.ndarray, Omega: np.ndarray) -> float:
    d = z.size
    L = np.linalg.cholesky(Omega)
    half = np.linalg.solve(L, z - mean)
    return -0.5 * (d * LOG_2PI) - np.log(np.diag(L)).sum() - 0.5 * float(half @ half)


def eval_log_density(state: MixtureState, z, c0=None) -> float:
    """Log mixture density at a point, via log-sum-exp over components."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if state.kind == "conditional":
        if c0 is None:
            raise ValueError("conditional mixture requires a conditioning point c0")
        g = np.concatenate([[1.0], np.atleast_1d(np.asarray(c0, dtype=float))])
        means = state.mu @ g  # (K, d)
        logw = probit_log_weights(_zeta_at_point(state, c0))
    else:
        means = state.mu
        logw = np.log(np.maximum(state.weights, 1e-300))
    terms = np.array(
        [
            logw[k] + _component_log_norm(z, means[k], state.Omega[k])
            for k in range(state.K)
            if logw[k] > -np.inf
        ]
    )
    m = terms.max()
    return float(m + np.log(np.exp(terms - m).sum()))


def eval_density(state: MixtureState, z, c0=None) -> float:
    """Mixture density at a point (level scale)."""
    return math.exp(eval_log_density(state, z, c0))


def _zeta_at_point(state: MixtureState, c0) -> np.ndarray:
    """zeta_k at an arbitrary conditioning point via the stored unit values.

    Exact when c0 matches a stored unit's conditioning point; otherwise
    callers should regenerate zeta from the GP (not needed in-sample).
    """
    if state.zeta is None or state.cpoints is None:
        raise ValueError("conditional state carries no zeta values")
    c = np.atleast_1d(np.asarray(c0, dtype=float))
    pts = np.atleast_2d(state.cpoints)
    d2 = np.sum((pts - c) ** 2, axis=1)
    j = int(np.argmin(d2))
    if d2[j] > 1e-12:
        raise ValueError("c0 does not match any stored conditioning point")
    return state.zeta[:, j]


def expected_unique_components(alpha: float, N: int) -> tuple[float, float]:
    """Mean and variance of the number of unique mixture components.

    mean = alpha log((alpha + N)/alpha); variance = alpha [log(...) - 1].
    """
    if alpha <= 0 or N < 1:
        raise ValueError("need alpha > 0 and N >= 1")
    m = alpha * math.log((alpha + N) / alpha)
    return m, alpha * (math.log((alpha + N) / alpha) - 1.0)


def truncation_error_bound(alpha: float, N: int, K: int) -> float:
    """L1 truncation error bound 4 N exp(-(K-1)/alpha) for the K-component
    stick-breaking approximation."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return 4.0 * N * math.exp(-(K - 1) / alpha)


def mglrx_ck(k: int, eta: float) -> float:
    """Prior scale constant C_k for the component-k GP bandwidth.

    C_k = k^{-2(3 eta + 2)} (log(k+1))^{-1/eta}.  log(k+1) replaces log k so
    the k=1 constant is finite while the asymptotic decay is preserved.
    """
    if k < 1:
        raise ValueError("component index starts at 1")
    return k ** (-2.0 * (3.0 * eta + 2.0)) * math.log(k + 1.0) ** (-1.0 / eta)
