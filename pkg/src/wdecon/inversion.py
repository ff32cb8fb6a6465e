"""Inversion inequality: from distances between observed laws to W1 between
mixing laws.

For a bandwidth ``h`` the CDF difference of the mixing laws, smoothed by
``K_h``, splits as ``K1h * (F_Y - F0Y) + K2h * (F_Y - F0Y)``.  The second
term equals ``F2h * (f_Y - f0Y)``; both forms are computed (by grid
convolution and spectrally) so they cross-check each other.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .distributions import NoiseModel
from .kernels import OperatorBundle, build_bundle, bundle_grid
from .measures import ProbabilityMeasure, _measure_spectrum
from .numerics import GridFunction, Spectrum, convolve, fourier_inverse, trapezoid
from .wasserstein import w1

__all__ = [
    "InversionReport",
    "inversion_components",
    "optimize_h",
    "rate_exponents",
    "verify_inequality",
]


@dataclass(frozen=True)
class InversionReport:
    h: float
    w1_actual: float
    bias_term: float
    t1: float
    t2_w1: float
    t2_tv: float
    bound_w1: float
    bound_tv: float
    slack: float
    w1_y: float = 0.0
    l1_y: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


@lru_cache(maxsize=8)
def _bundle(noise: NoiseModel, h: float, grid: tuple) -> OperatorBundle:
    return build_bundle(noise, h, grid)


def _l1(f: GridFunction) -> float:
    return trapezoid(np.abs(f.values), f.dx)


def _check_first_moment(mu: ProbabilityMeasure) -> None:
    m = mu.mean_abs()
    if not np.isfinite(m) or m > 1e6:
        raise ValueError(f"first absolute moment {m!r} is not finite")


def _cumulative(f: GridFunction) -> GridFunction:
    v = f.values
    c = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1])) * f.dx])
    return f.with_values(c)


def _bias_term(h: float, alpha: float | None) -> float:
    if alpha is None:
        return h
    return h ** (alpha + 1.0) if math.isfinite(alpha) else 0.0


def _w1_factor(h: float, beta: float) -> float:
    return h ** (-max(beta - 0.5, 0.0)) * abs(math.log(h)) ** (1.0 + 0.5 * (beta == 0.5))


def _tv_factor(h: float, beta: float) -> float:
    return h ** (-max(beta - 1.0, 0.0)) * abs(math.log(h))


def inversion_components(
    mu_x: ProbabilityMeasure,
    mu0_x: ProbabilityMeasure,
    noise: NoiseModel,
    h: float,
    alpha_opt: float | None = None,
    grid: tuple[float, float, int] | None = None,
) -> InversionReport:
    """Evaluate every term of the inversion bound at bandwidth ``h``.

    ``alpha_opt`` selects the smooth branch (bias ``h^(alpha+1)``); without it
    the bias term is ``h``, which needs no regularity of either law.
    """
    if not 0 < h <= 0.5:
        raise ValueError(f"bandwidth must lie in (0, 1/2], got {h}")
    _check_first_moment(mu_x)
    _check_first_moment(mu0_x)
    grid = tuple(grid) if grid is not None else bundle_grid(h)
    b = _bundle(noise, float(h), grid)
    lo, hi, n = grid
    t = b.w1h.freqs

    fe = noise.cf(t)
    dhat = (_measure_spectrum(mu_x, lo, hi, n) - _measure_spectrum(mu0_x, lo, hi, n)) * fe
    dy = fourier_inverse(Spectrum(t, dhat, lo, hi), check_symmetry=False)
    big_d = _cumulative(dy)

    w1_y = _l1(big_d)
    l1_y = _l1(dy)
    t1 = _l1(convolve(b.k1h, big_d))
    t2_w1 = _l1(convolve(b.k2h, big_d))

    g = np.zeros(n, dtype=complex)
    outer = np.abs(t) > 1.0
    g[outer] = b.w2h.values[outer] / (-1j * t[outer])
    t2_tv = _l1(fourier_inverse(Spectrum(t, g * dhat, lo, hi), check_symmetry=False))

    actual = w1(mu_x, mu0_x)
    bias = _bias_term(h, alpha_opt)
    beta = noise.beta
    bound_w1 = bias + w1_y + _w1_factor(h, beta) * w1_y
    bound_tv = bias + w1_y + _tv_factor(h, beta) * l1_y
    slack = bound_tv / actual if actual > 0 else math.inf
    return InversionReport(
        h=float(h),
        w1_actual=actual,
        bias_term=bias,
        t1=t1,
        t2_w1=t2_w1,
        t2_tv=t2_tv,
        bound_w1=bound_w1,
        bound_tv=bound_tv,
        slack=slack,
        w1_y=w1_y,
        l1_y=l1_y,
    )


def optimize_h(mu_x, mu0_x, noise: NoiseModel, h_grid, alpha_opt: float | None = None) -> InversionReport:
    """Report at the bandwidth minimizing ``bound_tv`` over ``h_grid``."""
    hs = sorted({float(h) for h in h_grid})
    if not hs:
        raise ValueError("empty bandwidth grid")
    if hs[0] <= 0 or hs[-1] > 0.5:
        raise ValueError("bandwidths must lie in (0, 1/2]")
    reports = [inversion_components(mu_x, mu0_x, noise, h, alpha_opt) for h in hs]
    return min(reports, key=lambda r: (r.bound_tv, r.h))


def rate_exponents(alpha: float | None, beta: float) -> dict:
    """Rate exponents for W1 in terms of the observed-law rate and of ``n``."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    b1 = max(beta, 1.0)
    if alpha is None:
        direct = 1.0 / b1
        alpha_eff = 0.0
    elif math.isinf(alpha):
        direct, alpha_eff = 1.0, math.inf
    else:
        direct = (alpha + 1.0) / (alpha + b1)
        alpha_eff = alpha
    if math.isinf(alpha_eff):
        from_root_n = 0.5
    else:
        from_root_n = (alpha_eff + 1.0) / (2.0 * alpha_eff + max(2.0 * beta, 1.0) + 1.0)
    return {"direct_to_w1": direct, "w1_rate_from_root_n": from_root_n}


def verify_inequality(
    test_pairs,
    noise: NoiseModel,
    h_grid,
    calibration: int | None = None,
    constant: float | None = None,
) -> dict:
    """Check ``W1(mu_X, mu_0X) <= C * bound_tv`` at each pair's optimizing h.

    ``test_pairs`` holds ``(mu_x, mu0_x, alpha_opt)`` triples.  When
    ``constant`` is not given it is fitted as the largest ratio
    ``w1_actual / bound_tv`` over the first ``calibration`` pairs (default:
    half of them), floored at 1.
    """
    pairs = list(test_pairs)
    if len(pairs) < 5:
        raise ValueError("need at least 5 test pairs")
    reports = [optimize_h(mx, m0, noise, h_grid, a) for mx, m0, a in pairs]
    ratios = [r.w1_actual / r.bound_tv if r.bound_tv > 0 else (math.inf if r.w1_actual > 0 else 0.0) for r in reports]
    if constant is None:
        k = calibration if calibration is not None else len(pairs) // 2
        constant = max([1.0] + ratios[:k])
    slacks = [constant / q if q > 0 else math.inf for q in ratios]
    worst = min(slacks)
    return {
        "pass": bool(worst >= 1.0),
        "worst_slack": worst,
        "fitted_constant": constant,
        "ratios": ratios,
        "reports": reports,
    }
