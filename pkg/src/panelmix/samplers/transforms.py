"""Bijection between the bounded shock variance and its unbounded log-odds
transform l = log(hi * (s2 - lo) / (hi - s2))."""

from __future__ import annotations

import numpy as np

__all__ = ["sigma2_of_l", "l_of_sigma2"]


def sigma2_of_l(l, lo: float, hi: float):
    """Map l in R to sigma^2 in (lo, hi).

    sigma^2(l) = (hi - lo) / (1 + hi * exp(-l)) + lo, evaluated in the
    branch that avoids exp overflow on either tail.
    """
    l = np.asarray(l, dtype=float)
    out = np.empty_like(l)
    neg = l < 0.0
    # l < 0: hi * (e^l + lo) / (e^l + hi); l >= 0: hi * (1 + lo e^-l) / (1 + hi e^-l)
    el = np.exp(l, where=neg, out=np.zeros_like(l))
    out[neg] = hi * (el[neg] + lo) / (el[neg] + hi)
    eml = np.exp(-l, where=~neg, out=np.zeros_like(l))
    pos = ~neg
    out[pos] = hi * (1.0 + lo * eml[pos]) / (1.0 + hi * eml[pos])
    return out if out.ndim else float(out)


def l_of_sigma2(s2, lo: float, hi: float):
    """Inverse map; requires lo < sigma^2 < hi elementwise."""
    s2 = np.asarray(s2, dtype=float)
    if np.any(s2 <= lo) or np.any(s2 >= hi):
        raise ValueError(f"sigma^2 must lie strictly inside ({lo}, {hi})")
    out = np.log(hi * (s2 - lo) / (hi - s2))
    return out if out.ndim else float(out)
