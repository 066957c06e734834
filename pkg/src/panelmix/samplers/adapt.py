"""Adaptive random-walk Metropolis-Hastings for conditionally independent
scalar targets.

The proposal is N(current, step), step being a variance.  After each move
the log step size is nudged by s^-c times the gap between the realized
acceptance probability and the target rate, then clamped to +-cap:

    log step <- rho(log step + s^-c (a.r. - a.r.*)),  rho(x) = min(|x|, cap) sgn(x).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdapterState", "adaptive_rwmh", "rho_clamp"]

DEFAULT_C = 0.55
DEFAULT_TARGET = 0.30
DEFAULT_CAP = 10.0


def rho_clamp(x, cap: float):
    return np.minimum(np.abs(x), cap) * np.sign(x)


@dataclass
class AdapterState:
    """Step-size state for one or many scalar RWMH targets."""

    log_step: np.ndarray  # () or (n,)
    count: np.ndarray  # iterations completed, same shape
    c: float = DEFAULT_C
    target: float = DEFAULT_TARGET
    cap: float = DEFAULT_CAP

    @classmethod
    def fresh(cls, n: int | None = None, initial_step: float = 1.0, **kw) -> "AdapterState":
        shape = () if n is None else (n,)
        return cls(
            log_step=np.full(shape, np.log(initial_step)),
            count=np.zeros(shape, dtype=np.int64),
            **kw,
        )

    def update(self, accept_prob):
        """Apply the step-size recursion for one completed iteration."""
        s = self.count + 1
        self.log_step = rho_clamp(
            self.log_step + s ** (-self.c) * (np.asarray(accept_prob) - self.target), self.cap
        )
        self.count = s

    def to_jsonable(self):
        return {
            "log_step": np.asarray(self.log_step).tolist(),
            "count": np.asarray(self.count).tolist(),
            "c": self.c,
            "target": self.target,
            "cap": self.cap,
        }

    @classmethod
    def from_jsonable(cls, payload) -> "AdapterState":
        log_step = np.asarray(payload["log_step"], dtype=float)
        count = np.asarray(payload["count"], dtype=np.int64)
        if log_step.ndim == 0:
            log_step = log_step[()]
        return cls(
            log_step=log_step,
            count=count,
            c=float(payload["c"]),
            target=float(payload["target"]),
            cap=float(payload["cap"]),
        )


def adaptive_rwmh(adapter: AdapterState, log_target, current: float, rng) -> tuple[float, bool]:
    """One adaptive RWMH move on a scalar target.

    Returns (next point, accepted).  A non-finite log target at the proposal
    counts as acceptance probability zero.
    """
    step = float(np.exp(adapter.log_step))
    proposal = current + np.sqrt(step) * rng.standard_normal()
    lp_cur = log_target(current)
    lp_prop = log_target(proposal)
    if np.isfinite(lp_prop):
        ar = min(1.0, float(np.exp(min(lp_prop - lp_cur, 0.0))))
    else:
        ar = 0.0
    accepted = rng.uniform() < ar
    nxt = proposal if accepted else current
    adapter.update(ar)
    return nxt, accepted
