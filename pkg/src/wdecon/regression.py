"""Ordinary least squares on log-log axes."""

from __future__ import annotations

import numpy as np
from scipy import stats

__all__ = ["fit_loglog"]


def fit_loglog(xs, ys) -> dict:
    """Fit ``log y = intercept + slope * log x``.

    Returns slope, intercept, r2 and the half-width ``ci95`` of the 95%
    t-interval for the slope.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-d and of equal length")
    if x.size < 4:
        raise ValueError("need at least 4 points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    res = stats.linregress(lx, ly)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    resid = ly - (res.intercept + res.slope * lx)
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    dof = x.size - 2
    ci = float(stats.t.ppf(0.975, dof) * res.stderr)
    return {"slope": float(res.slope), "intercept": float(res.intercept), "r2": r2, "ci95": ci}
