"""Gaussian-process linear algebra for the probit stick-breaking steps.

The squared-exponential kernel matrix over the units' conditioning points is
represented as V ~= Phi Phi' + delta I via rank-revealing pivoted Cholesky
(delta is the same diagonal jitter the dense path would add).  The pivoting
stops once the residual diagonal falls below delta, so the truncation error
is dominated by the jitter already present in the model.  Log determinants,
quadratic forms, (V+I)^-1 solves, and N(0, V) sampling all run in
O(N r^2) through exact Woodbury identities on this representation; a dense
Cholesky fallback covers the (rare) case where the effective rank exceeds
the cap.  tests/test_gp.py checks every identity against dense algebra.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from panelmix.mixtures import GP_JITTER

__all__ = ["GPFactor", "pivoted_cholesky", "pairwise_sq_dists"]

LOG_2PI = math.log(2.0 * math.pi)
MAX_RANK = 384
# pivoting stops this far below the jitter so the dropped tail perturbs the
# jittered model's log determinant by O(N * PIVOT_TOL_FACTOR), not O(1)
PIVOT_TOL_FACTOR = 1e-4


def pairwise_sq_dists(points: np.ndarray) -> np.ndarray:
    c = np.atleast_2d(np.asarray(points, dtype=float))
    if c.shape[0] == 1 and c.size > 1:
        c = c.T
    return np.sum((c[:, None, :] - c[None, :, :]) ** 2, axis=-1)


def pivoted_cholesky(d2: np.ndarray, A: float, tau: float, tol: float, max_rank: int):
    """Low-rank factor of tau * exp(-A * d2) with residual diagonal <= tol.

    Returns (Phi, complete): Phi is (N, r); complete is False when the rank
    cap was hit before the tolerance.
    """
    N = d2.shape[0]
    diag = np.full(N, tau)
    cap = min(max_rank, N)
    Phi = np.empty((N, cap))
    r = 0
    while r < cap:
        j = int(np.argmax(diag))
        piv = diag[j]
        if piv <= tol:
            break
        col = tau * np.exp(-A * d2[:, j])
        if r:
            col = col - Phi[:, :r] @ Phi[j, :r]
        s = math.sqrt(piv)
        col /= s
        col[j] = s
        Phi[:, r] = col
        diag -= col * col
        np.maximum(diag, 0.0, out=diag)
        diag[j] = 0.0
        r += 1
    complete = bool(diag.max(initial=0.0) <= tol) if r == cap else True
    return np.ascontiguousarray(Phi[:, :r]), complete


class GPFactor:
    """Factorized V = tau exp(-A d2) + delta I with Woodbury solvers."""

    def __init__(self, Phi, delta, N, dense_chol=None, dense_V=None):
        self.Phi = Phi
        self.delta = float(delta)
        self.N = int(N)
        self._dense_chol = dense_chol
        self._dense_V = dense_V
        if Phi is not None:
            r = Phi.shape[1]
            G = Phi.T @ Phi
            self._cf_d = cho_factor(G + self.delta * np.eye(r), lower=True)
            self._cf_d1 = cho_factor(G + (1.0 + self.delta) * np.eye(r), lower=True)
            self._logdet = 2.0 * np.log(np.diag(self._cf_d[0])).sum() + (N - r) * math.log(
                self.delta
            )

    @classmethod
    def build(cls, d2: np.ndarray, A: float, tau: float = 1.0, jitter: float = GP_JITTER,
              max_rank: int = MAX_RANK) -> "GPFactor":
        N = d2.shape[0]
        delta = jitter * tau
        if N <= 64:
            V = tau * np.exp(-A * d2)
            return cls._dense(V, delta, N)
        Phi, complete = pivoted_cholesky(
            d2, A, tau, tol=PIVOT_TOL_FACTOR * delta, max_rank=max_rank
        )
        if not complete:
            V = tau * np.exp(-A * d2)
            return cls._dense(V, delta, N)
        return cls(Phi, delta, N)

    @classmethod
    def _dense(cls, V, delta, N):
        Vj = V + delta * np.eye(N)
        chol = cho_factor(Vj, lower=True)
        obj = cls(None, delta, N, dense_chol=chol, dense_V=Vj)
        obj._logdet = 2.0 * np.log(np.diag(chol[0])).sum()
        return obj

    @property
    def rank(self) -> int:
        return self.N if self.Phi is None else self.Phi.shape[1]

    @property
    def is_dense(self) -> bool:
        return self.Phi is None

    def logdet(self) -> float:
        return float(self._logdet)

    def quad(self, x: np.ndarray) -> float:
        """x' V^-1 x."""
        if self.is_dense:
            return float(x @ cho_solve(self._dense_chol, x))
        w = cho_solve(self._cf_d, self.Phi.T @ x)
        resid = x - self.Phi @ w
        return float(resid @ resid / self.delta + w @ w)

    def gauss_loglik(self, x: np.ndarray) -> float:
        """log N(x; 0, V)."""
        return -0.5 * (self.N * LOG_2PI + self.logdet() + self.quad(x))

    def solve_VpI(self, x: np.ndarray) -> np.ndarray:
        """(V + I)^-1 x."""
        if self.is_dense:
            return np.linalg.solve(self._dense_V + np.eye(self.N), x)
        w = cho_solve(self._cf_d1, self.Phi.T @ x)
        return (x - self.Phi @ w) / (1.0 + self.delta)

    def n_prior_normals(self) -> int:
        """How many standard normals sample_prior consumes."""
        return self.N if self.is_dense else self.rank + self.N

    def sample_prior(self, rng) -> np.ndarray:
        """u ~ N(0, V)."""
        if self.is_dense:
            z = rng.standard_normal(self.N)
            return np.tril(self._dense_chol[0]) @ z
        z = rng.standard_normal(self.rank + self.N)
        return self.Phi @ z[: self.rank] + math.sqrt(self.delta) * z[self.rank :]

    def draw_zeta(self, xi: np.ndarray, rng) -> np.ndarray:
        """Draw zeta ~ N(m, S) with S = (V^-1 + I)^-1 and m = S xi.

        Uses the identity S = I - (V+I)^-1: with u ~ N(0, V), v ~ N(0, I),
        zeta = m - v + (V+I)^-1 (u + v) has exactly the target law.
        """
        m = xi - self.solve_VpI(xi)
        u = self.sample_prior(rng)
        v = rng.standard_normal(self.N)
        return m - v + self.solve_VpI(u + v)
