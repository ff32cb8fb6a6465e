"""Flat-top smoothing kernel, the cutoff chi and the inversion operators.

All operators are realized spectrally on a common spatial grid.  For a
bandwidth ``h`` and noise with reciprocal characteristic function ``r``:

    w1h(t) = Khat(h t) chi(t) r(t)          (supported in |t| <= 2)
    w2h(t) = Khat(h t) (1 - chi(t)) r(t)    (supported in 1 <= |t| <= 2/h)

``k1h``/``k2h`` are their inverse transforms and ``f2h`` is the antiderivative
of ``k2h`` (transform ``w2h / (-i t)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import NoiseModel
from .measures import Discrete, Empirical, GaussMix, ProbabilityMeasure, _measure_spectrum
from .numerics import (
    GridFunction,
    Spectrum,
    fourier_inverse,
    frequency_grid,
    smooth_step,
    trapezoid,
)
from .regression import fit_loglog

__all__ = [
    "chi",
    "flattop_hat",
    "FlatTopKernel",
    "build_flattop",
    "OperatorBundle",
    "build_bundle",
    "bundle_grid",
    "operator_norms",
    "norm_slopes",
    "cdf_bias",
    "gaussmix_sigma",
    "gaussmix_bias_check",
]

MIN_SHOULDER_POINTS = 64
BIAS_GRID = (-40.0, 40.0)


def chi(t):
    """Cutoff equal to 1 on [-1, 1], 0 off [-2, 2], exp-bump shoulder between."""
    a = np.abs(np.asarray(t, dtype=float))
    out = np.where(a <= 1.0, 1.0, 0.0)
    mid = (a > 1.0) & (a < 2.0)
    s = a[mid] - 1.0
    out[mid] = np.exp(1.0 - 1.0 / (1.0 - s * s))
    return out if out.ndim else float(out)


def flattop_hat(t):
    """Fourier transform of the flat-top kernel.

    Equal to 1 on [-1, 1] and 0 off [-2, 2]; the shoulder is the C-infinity
    step built from the same exp(-1/u) bump as ``chi``.
    """
    a = np.abs(np.asarray(t, dtype=float))
    out = smooth_step(2.0 - a)
    return out if out.ndim else float(out)


def _next_pow2(n: float) -> int:
    return 1 << max(3, math.ceil(math.log2(n)))


def bundle_grid(h: float, half_width: float = 128.0, points_per_h: int = 8) -> tuple[float, float, int]:
    """Symmetric spatial grid resolving ``K_h`` (``points_per_h`` nodes per h)."""
    n = _next_pow2(2.0 * half_width * points_per_h / h)
    return -half_width, half_width, n


@dataclass(frozen=True)
class FlatTopKernel:
    """``K_h`` on a grid together with its transform ``Khat(h t)``."""

    h: float
    khat: Spectrum = field(repr=False)
    k: GridFunction = field(repr=False)

    def moment(self, j: int) -> float:
        x = self.k.x
        return trapezoid(x**j * self.k.values, self.k.dx)


def _check_shoulder(t: np.ndarray, h: float) -> None:
    if 2.0 / h >= t[-1]:
        raise ValueError(f"spectral grid reaches |t| = {t[-1]:.4g}, needs > 2/h = {2.0 / h:.4g}")
    inside = np.count_nonzero((t > 1.0 / h) & (t < 2.0 / h))
    if inside < MIN_SHOULDER_POINTS:
        raise ValueError(f"only {inside} frequencies across the kernel shoulder (need {MIN_SHOULDER_POINTS})")


def build_flattop(h: float, grid: tuple[float, float, int]) -> FlatTopKernel:
    if not h > 0:
        raise ValueError("h must be positive")
    lo, hi, n = grid
    t = frequency_grid(lo, hi, n)
    _check_shoulder(t, h)
    khat = Spectrum(t, flattop_hat(h * t), lo, hi)
    return FlatTopKernel(h, khat, fourier_inverse(khat))


@dataclass(frozen=True)
class OperatorBundle:
    h: float
    noise: NoiseModel
    chi: GridFunction = field(repr=False)
    w1h: Spectrum = field(repr=False)
    w2h: Spectrum = field(repr=False)
    k1h: GridFunction = field(repr=False)
    k2h: GridFunction = field(repr=False)
    f2h: GridFunction = field(repr=False)

    @property
    def grid(self) -> tuple[float, float, int]:
        return self.k1h.lo, self.k1h.hi, self.k1h.n

    def norms(self) -> dict:
        return {
            "k1_l1": trapezoid(np.abs(self.k1h.values), self.k1h.dx),
            "k2_l1": trapezoid(np.abs(self.k2h.values), self.k2h.dx),
            "f2_l1": trapezoid(np.abs(self.f2h.values), self.f2h.dx),
        }


def build_bundle(noise: NoiseModel, h: float, grid: tuple[float, float, int] | None = None) -> OperatorBundle:
    if not 0 < h <= 0.5:
        raise ValueError(f"bandwidth must lie in (0, 1/2], got {h}")
    lo, hi, n = grid if grid is not None else bundle_grid(h)
    t = frequency_grid(lo, hi, n)
    _check_shoulder(t, h)
    with np.errstate(over="raise"):
        try:
            r_edge = noise.rinv(np.array([2.0 / h]))
        except FloatingPointError:
            r_edge = np.array([np.inf])
    if not np.all(np.isfinite(r_edge)):
        raise OverflowError(f"r_eps overflows at |t| = 2/h = {2.0 / h:.4g}")

    kh = flattop_hat(h * t)
    c = chi(t)
    active = kh > 0
    r = np.zeros(n, dtype=complex)
    r[active] = noise.rinv(t[active])
    w1 = kh * c * r
    w2 = kh * (1.0 - c) * r
    w1h = Spectrum(t, w1, lo, hi)
    w2h = Spectrum(t, w2, lo, hi)

    g = np.zeros(n, dtype=complex)
    outer = np.abs(t) > 1.0
    g[outer] = w2[outer] / (-1j * t[outer])
    f2h = fourier_inverse(Spectrum(t, g, lo, hi))

    chi_grid = GridFunction(float(t[0]), float(t[-1]), c)
    return OperatorBundle(
        h=h,
        noise=noise,
        chi=chi_grid,
        w1h=w1h,
        w2h=w2h,
        k1h=fourier_inverse(w1h),
        k2h=fourier_inverse(w2h),
        f2h=f2h,
    )


def operator_norms(noise: NoiseModel, h_list, half_width: float = 128.0, points_per_h: int = 8) -> list[dict]:
    """L1 norms of ``k1h``, ``k2h``, ``f2h`` for each h, sorted by h descending."""
    hs = sorted({float(h) for h in h_list}, reverse=True)
    if not hs:
        raise ValueError("empty bandwidth list")
    rows = []
    for h in hs:
        b = build_bundle(noise, h, bundle_grid(h, half_width, points_per_h))
        rows.append({"h": h, **b.norms()})
    return rows


def norm_slopes(rows: list[dict]) -> dict:
    """Log-log slopes of each norm against 1/h, after dividing out |log h|."""
    inv_h = np.array([1.0 / r["h"] for r in rows])
    logh = np.abs(np.log([r["h"] for r in rows]))
    out = {}
    for key in ("k2_l1", "f2_l1"):
        y = np.array([r[key] for r in rows]) / logh
        out[key] = fit_loglog(inv_h, y)
    k1 = np.array([r["k1_l1"] for r in rows])
    out["k1_ratio"] = float(k1.max() / k1.min())
    return out


# -- CDF bias -------------------------------------------------------------


def _bias_grid(h: float, lo: float = BIAS_GRID[0], hi: float = BIAS_GRID[1]) -> tuple[float, float, int]:
    n = _next_pow2(max(2**14, (hi - lo) * 3.0 / (math.pi * h)))
    return lo, hi, n


def _cdf_increment_spectrum(F: GridFunction) -> np.ndarray:
    """Transform of the measure whose CDF is the piecewise-linear ``F``."""
    if F.values[0] > 1e-6 or abs(F.values[-1] - 1.0) > 1e-6:
        raise ValueError("CDF does not reach 0 and 1 inside its grid: bias integral diverges")
    dF = np.diff(F.values)
    if np.any(dF < -1e-12):
        raise ValueError("CDF must be nondecreasing")
    n = F.n
    vals = np.append(dF, 0.0)
    k = np.fft.fftfreq(n, d=F.dx) * (2.0 * np.pi)
    s = n * np.fft.ifft(vals) * np.exp(1j * k * (F.lo + 0.5 * F.dx))
    # density of each increment is uniform on its cell: sinc factor
    s *= np.sinc(k * F.dx / (2.0 * np.pi))
    return np.fft.fftshift(s)


def cdf_bias(F, h: float, grid: tuple[float, float, int] | None = None, log: bool = False) -> float:
    """``|| F * K_h - F ||_1`` computed spectrally.

    ``F`` is a probability measure or a CDF tabulated as a ``GridFunction``.
    The bias has transform ``(Khat(h t) - 1) fhat(t) / (-i t)``, which vanishes
    for ``|t| <= 1/h``.  With ``log=True`` the natural log of the bias is
    returned; for Gaussian mixtures the factor ``exp(-sigma^2 / (2 h^2))`` is
    then handled analytically so that tiny biases do not underflow.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    if isinstance(F, GridFunction):
        lo, hi, n = F.lo, F.hi, F.n
        fhat = _cdf_increment_spectrum(F)
        log_scale = 0.0
    elif isinstance(F, ProbabilityMeasure):
        if F.is_step:
            raise ValueError("the bias of a step CDF is not O(h^(a+1)); pass a smooth measure")
        lo, hi, n = grid if grid is not None else _bias_grid(h)
        t = frequency_grid(lo, hi, n)
        if isinstance(F, GaussMix) and log:
            t0 = 1.0 / h
            log_scale = -0.5 * (F.sigma * t0) ** 2
            fhat = F.location_cf(t) * np.exp(-0.5 * F.sigma**2 * (t * t - t0 * t0) * (np.abs(t) >= t0))
            fhat = np.where(np.abs(t) >= t0, fhat, 0.0)
        else:
            log_scale = 0.0
            fhat = _measure_spectrum(F, lo, hi, n)
    else:
        raise TypeError("F must be a GridFunction CDF or a ProbabilityMeasure")

    t = frequency_grid(lo, hi, n)
    if 2.0 / h >= t[-1]:
        raise ValueError("grid too coarse for this bandwidth")
    mult = flattop_hat(h * t) - 1.0
    b = np.zeros(n, dtype=complex)
    nz = (mult != 0.0) & (t != 0.0)
    b[nz] = mult[nz] * fhat[nz] / (-1j * t[nz])
    bias = fourier_inverse(Spectrum(t, b, lo, hi), check_symmetry=False)
    tail = abs(bias.values[0]) + abs(bias.values[-1])
    l1 = trapezoid(np.abs(bias.values), bias.dx)
    if not np.isfinite(l1) or tail > 1e-3 * max(l1, 1e-300) and tail > 1e-12:
        raise ValueError("bias does not decay inside the grid: tail integral diverges")
    if log:
        return math.log(l1) + log_scale if l1 > 0 else -math.inf
    return l1


def gaussmix_sigma(h: float, alpha: float) -> float:
    return math.sqrt(2.0) * h * math.sqrt((2.0 * alpha + 1.0) * abs(math.log(h)))


def gaussmix_bias_check(mu_h: ProbabilityMeasure, h: float, alpha: float = 1.0) -> float:
    """Bias of the Gaussian mixture ``mu_h * N(0, sigma_h^2)`` at the coupled scale."""
    if not isinstance(mu_h, (Discrete, Empirical)):
        raise TypeError("mixing measure must be discrete or empirical")
    mix = GaussMix(mu_h.atoms, mu_h.weights, gaussmix_sigma(h, alpha))
    return math.exp(cdf_bias(mix, h, log=True))

