"""Probability measures on the line in the four representations we need.

Every measure exposes a vectorized ``cdf``, a characteristic function ``cf``
and the data needed to build a W1 integration window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .numerics import (
    GridFunction,
    as_density,
    cdf_from_density,
    fourier_forward,
    fourier_inverse,
    frequency_grid,
    Spectrum,
    trapezoid,
)

__all__ = [
    "ProbabilityMeasure",
    "Empirical",
    "Discrete",
    "GridDensity",
    "GaussMix",
    "noisy_density",
    "measure_density",
]

_WEIGHT_TOL = 1e-10


def _check_weights(weights: np.ndarray) -> np.ndarray:
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    total = weights.sum()
    if abs(total - 1.0) > _WEIGHT_TOL:
        raise ValueError(f"weights sum to {total!r}, not 1")
    return weights


def atoms_cf(t, atoms, weights, chunk=1 << 22):
    """``sum_k w_k exp(i t a_k)``, chunked over ``t`` to bound memory."""
    t = np.asarray(t, dtype=float)
    flat = t.ravel()
    out = np.empty(flat.size, dtype=complex)
    step = max(1, chunk // max(1, len(atoms)))
    for i in range(0, flat.size, step):
        out[i:i + step] = np.exp(1j * np.multiply.outer(flat[i:i + step], atoms)) @ weights
    return out.reshape(t.shape) if t.ndim else complex(out[0])


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True).ravel()
    a.setflags(write=False)
    return a


class ProbabilityMeasure:
    """Common interface; concrete variants are frozen dataclasses."""

    #: True for measures whose CDF is a step function
    is_step = False

    def cdf(self, x):
        raise NotImplementedError

    def cf(self, t):
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        """Interval carrying (essentially) all the mass."""
        raise NotImplementedError

    @property
    def scale(self) -> float:
        """Intrinsic smoothing width used to pad integration windows."""
        return 0.0

    def breakpoints(self) -> np.ndarray:
        """Abscissae where the CDF changes its functional form."""
        return np.empty(0)

    def shift(self, c: float) -> "ProbabilityMeasure":
        raise NotImplementedError

    def mean_abs(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class Discrete(ProbabilityMeasure):
    atoms: np.ndarray
    weights: np.ndarray

    is_step = True

    def __post_init__(self):
        atoms = _frozen(self.atoms)
        weights = _frozen(self.weights)
        if atoms.shape != weights.shape or atoms.size == 0:
            raise ValueError("atoms and weights must be nonempty and of equal length")
        _check_weights(weights)
        order = np.argsort(atoms, kind="stable")
        object.__setattr__(self, "atoms", _frozen(atoms[order]))
        object.__setattr__(self, "weights", _frozen(weights[order]))

    def cdf(self, x):
        cum = np.cumsum(self.weights)
        idx = np.searchsorted(self.atoms, np.asarray(x, dtype=float), side="right")
        out = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
        return np.minimum(out, 1.0) if np.ndim(out) else float(min(out, 1.0))

    def cf(self, t):
        return atoms_cf(t, self.atoms, self.weights)

    def support(self):
        return float(self.atoms[0]), float(self.atoms[-1])

    def breakpoints(self):
        return self.atoms

    def shift(self, c):
        return Discrete(self.atoms + c, self.weights)

    def mean_abs(self):
        return float(np.abs(self.atoms) @ self.weights)


@dataclass(frozen=True)
class Empirical(ProbabilityMeasure):
    """Uniform weights on a sample; stored sorted ascending."""

    sample: np.ndarray

    is_step = True

    def __post_init__(self):
        s = np.sort(np.asarray(self.sample, dtype=float).ravel())
        if s.size == 0:
            raise ValueError("empirical measure needs at least one point")
        if not np.all(np.isfinite(s)):
            raise ValueError("sample must be finite")
        object.__setattr__(self, "sample", _frozen(s))

    @property
    def atoms(self):
        return self.sample

    @property
    def weights(self):
        return np.full(self.sample.size, 1.0 / self.sample.size)

    def cdf(self, x):
        idx = np.searchsorted(self.sample, np.asarray(x, dtype=float), side="right")
        out = idx / self.sample.size
        return out if np.ndim(out) else float(out)

    def cf(self, t):
        return atoms_cf(t, self.sample, self.weights)

    def support(self):
        return float(self.sample[0]), float(self.sample[-1])

    def breakpoints(self):
        return self.sample

    def shift(self, c):
        return Empirical(self.sample + c)

    def mean_abs(self):
        return float(np.abs(self.sample).mean())


@dataclass(frozen=True)
class GaussMix(ProbabilityMeasure):
    """Location mixture of ``N(atom, sigma^2)`` with a common scale."""

    atoms: np.ndarray
    weights: np.ndarray
    sigma: float

    def __post_init__(self):
        atoms = _frozen(self.atoms)
        weights = _frozen(self.weights)
        if atoms.shape != weights.shape or atoms.size == 0:
            raise ValueError("atoms and weights must be nonempty and of equal length")
        _check_weights(weights)
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "sigma", float(self.sigma))

    @classmethod
    def from_discrete(cls, mu: ProbabilityMeasure, sigma: float) -> "GaussMix":
        return cls(mu.atoms, mu.weights, sigma)

    @property
    def scale(self):
        return self.sigma

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (np.subtract.outer(x, self.atoms)) / self.sigma
        out = special.ndtr(z) @ self.weights
        return out if np.ndim(out) else float(out)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (np.subtract.outer(x, self.atoms)) / self.sigma
        return (np.exp(-0.5 * z * z) @ self.weights) / (self.sigma * np.sqrt(2.0 * np.pi))

    def cf(self, t):
        t = np.asarray(t, dtype=float)
        return self.location_cf(t) * np.exp(-0.5 * (self.sigma * t) ** 2)

    def location_cf(self, t):
        """Transform of the atom measure alone (no Gaussian factor)."""
        return atoms_cf(t, self.atoms, self.weights)

    def support(self):
        return float(self.atoms.min()), float(self.atoms.max())

    def shift(self, c):
        return GaussMix(self.atoms + c, self.weights, self.sigma)

    def mean_abs(self):
        a, s = self.atoms, self.sigma
        e = s * np.sqrt(2 / np.pi) * np.exp(-0.5 * (a / s) ** 2) + a * special.erf(a / (s * np.sqrt(2)))
        return float(e @ self.weights)


@dataclass(frozen=True, init=False)
class GridDensity(ProbabilityMeasure):
    """Measure with a density tabulated on a grid.

    An optional closed-form characteristic function can be attached; spectral
    code prefers it over the grid transform.
    """

    density: GridFunction
    cf_fn: Callable | None = field(default=None, repr=False, compare=False)

    def __init__(self, density: GridFunction, cf: Callable | None = None):
        object.__setattr__(self, "density", as_density(density))
        object.__setattr__(self, "cf_fn", cf)
        object.__setattr__(self, "_cdf", cdf_from_density(self.density))

    def cdf(self, x):
        out = np.interp(np.asarray(x, dtype=float), self._cdf.x, self._cdf.values, left=0.0, right=1.0)
        return out if np.ndim(out) else float(out)

    def cf(self, t):
        if self.cf_fn is not None:
            return self.cf_fn(t)
        t = np.asarray(t, dtype=float)
        d = self.density
        w = d.values * d.dx
        w = w.copy()
        w[0] *= 0.5
        w[-1] *= 0.5
        return atoms_cf(t, d.x, w)

    def support(self):
        return self.density.lo, self.density.hi

    def breakpoints(self):
        return self.density.x

    @property
    def scale(self):
        return 0.0

    def shift(self, c):
        shifted = None
        if self.cf_fn is not None:
            base = self.cf_fn

            def shifted(t):
                return base(t) * np.exp(1j * np.asarray(t, dtype=float) * c)

        return GridDensity(self.density.shift(c), cf=shifted)

    def mean_abs(self):
        d = self.density
        return trapezoid(np.abs(d.x) * d.values, d.dx)


def _measure_spectrum(mu: ProbabilityMeasure, lo: float, hi: float, n: int) -> np.ndarray:
    t = frequency_grid(lo, hi, n)
    if isinstance(mu, GridDensity) and mu.cf_fn is None:
        # resample onto the target grid; far cheaper than summing exponentials
        return fourier_forward(measure_density(mu, lo, hi, n)).values
    return np.asarray(mu.cf(t), dtype=complex)


def measure_density(mu: ProbabilityMeasure, lo: float, hi: float, n: int) -> GridFunction:
    """Density of a measure on a grid (absolutely continuous variants only)."""
    if isinstance(mu, GaussMix):
        return GridFunction.from_callable(mu.pdf, lo, hi, n)
    if isinstance(mu, GridDensity):
        d = mu.density
        if d.n == n and np.isclose(d.lo, lo) and np.isclose(d.hi, hi):
            return d
        return GridFunction.from_callable(d, lo, hi, n)
    raise ValueError(f"{type(mu).__name__} has no density")


def noisy_density(mu: ProbabilityMeasure, noise, lo: float, hi: float, n: int, clip=True) -> GridFunction:
    """Density of ``mu * noise`` on a grid, computed spectrally.

    Works for every variant, atoms included, because the noise has a density.
    """
    t = frequency_grid(lo, hi, n)
    vals = _measure_spectrum(mu, lo, hi, n) * noise.cf(t)
    f = fourier_inverse(Spectrum(t, vals, lo, hi), check_symmetry=False)
    return as_density(f) if clip else f
