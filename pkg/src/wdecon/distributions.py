"""Noise laws, signal presets and simulation of ``Y = X + eps``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .numerics import (
    GridFunction,
    as_density,
    cdf_from_density,
    fourier_inverse,
    smooth_step,
    spectrum_from_function,
    trapezoid,
)

__all__ = [
    "NoiseModel",
    "SignalPreset",
    "ModelSample",
    "noise_cf",
    "noise_rinv",
    "noise_density",
    "noise_sample",
    "linnik_mixing_pdf",
    "linnik_mixing_cdf",
    "linnik_sample_scale",
    "linnik_tail_constant",
    "noise_first_moment",
    "laplace_sample",
    "get_preset",
    "gaussian_preset",
    "gaussian_mixture_preset",
    "simulate",
    "PRESETS",
]

DEFAULT_LO = -40.0
DEFAULT_HI = 40.0
DEFAULT_N = 2**14


@dataclass(frozen=True)
class NoiseModel:
    """Error law of the additive model.

    ``kind`` is one of ``"laplace"``, ``"linnik"`` or ``"gamma"``.  A Linnik
    law with ``beta == 2`` is stored as Laplace.
    """

    kind: str
    beta: float = 2.0
    scale: float = 1.0

    def __post_init__(self):
        kind = self.kind.lower()
        beta = float(self.beta)
        if kind == "linnik":
            if not 0.0 < beta <= 2.0:
                raise ValueError(f"Linnik index must lie in (0, 2], got {beta}")
            if beta == 2.0:
                kind = "laplace"
        elif kind == "laplace":
            beta = 2.0
        elif kind == "gamma":
            if beta <= 0:
                raise ValueError(f"gamma shape must be positive, got {beta}")
        else:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not self.scale > 0:
            raise ValueError("noise scale must be positive")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "scale", float(self.scale))

    @classmethod
    def parse(cls, spec: str) -> "NoiseModel":
        """Parse ``"laplace"``, ``"linnik:1.5"`` or ``"gamma:1.0"``."""
        name, _, arg = spec.strip().partition(":")
        name = name.lower()
        if name == "laplace":
            return cls("laplace")
        if not arg:
            raise ValueError(f"noise {name!r} needs a parameter, e.g. '{name}:1.5'")
        return cls(name, float(arg))

    @property
    def label(self) -> str:
        return "laplace" if self.kind == "laplace" else f"{self.kind}:{self.beta:g}"

    @property
    def symmetric(self) -> bool:
        return self.kind != "gamma"

    def cf(self, t):
        return noise_cf(self, t)

    def rinv(self, t, l: int = 0):
        return noise_rinv(self, t, l)

    def density(self, lo=DEFAULT_LO, hi=DEFAULT_HI, n=DEFAULT_N) -> GridFunction:
        return noise_density(self, lo, hi, n)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return noise_sample(self, n, rng)


def noise_cf(m: NoiseModel, t):
    """Characteristic function ``E exp(i t eps)``."""
    t = np.asarray(t, dtype=float) * m.scale
    if m.kind == "laplace":
        out = 1.0 / (1.0 + t * t)
    elif m.kind == "linnik":
        out = 1.0 / (1.0 + np.abs(t) ** m.beta)
    else:
        out = (1.0 - 1j * t) ** (-m.beta)
    return out.astype(complex) if np.ndim(out) else complex(out)


def noise_rinv(m: NoiseModel, t, l: int = 0):
    """Reciprocal ``1 / cf`` (``l=0``) or its derivative (``l=1``).

    The Linnik derivative is singular at ``t = 0`` when ``beta < 1``; asking for
    it there raises ``ValueError``.
    """
    if l not in (0, 1):
        raise ValueError("only l = 0 and l = 1 are supported")
    s = m.scale
    t = np.asarray(t, dtype=float)
    u = t * s
    b = m.beta
    if m.kind == "laplace":
        out = 1.0 + u * u if l == 0 else 2.0 * u * s
    elif m.kind == "linnik":
        if l == 0:
            out = 1.0 + np.abs(u) ** b
        else:
            if b < 1 and np.any(u == 0):
                raise ValueError("Linnik r' is singular at t = 0 for beta < 1")
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(u == 0, 0.0, b * np.sign(u) * np.abs(u) ** (b - 1.0)) * s
    else:
        z = 1.0 - 1j * u
        out = z**b if l == 0 else -1j * b * z ** (b - 1.0) * s
    out = np.asarray(out, dtype=complex)
    return out if out.ndim else complex(out)


def linnik_tail_constant(beta: float) -> float:
    """``C`` in ``f(u) ~ C |u|^-(1+beta)`` for the standard Linnik density."""
    return math.gamma(1.0 + beta) * math.sin(math.pi * beta / 2.0) / math.pi


def noise_density(m: NoiseModel, lo=DEFAULT_LO, hi=DEFAULT_HI, n=DEFAULT_N) -> GridFunction:
    """Noise density on a grid; Linnik is obtained by spectral inversion."""
    x = np.linspace(lo, hi, n)
    s = m.scale
    if m.kind == "laplace":
        return GridFunction(lo, hi, np.exp(-np.abs(x) / s) / (2.0 * s))
    if m.kind == "gamma":
        u = x / s
        vals = np.zeros_like(x)
        pos = u > 0
        vals[pos] = np.exp((m.beta - 1.0) * np.log(u[pos]) - u[pos] - special.gammaln(m.beta)) / s
        return GridFunction(lo, hi, vals)
    return as_density(GridFunction(lo, hi, _linnik_values(m, lo, hi, n)))


def _linnik_values(m: NoiseModel, lo: float, hi: float, n: int, pad: int = 8) -> np.ndarray:
    """Linnik density at the grid nodes, unnormalized.

    The inversion runs on a ``pad`` times wider grid sharing the same nodes, so
    the power-law tails do not wrap around into the window.
    """
    if m.beta <= 0.5:
        raise ValueError("Linnik densities with beta <= 1/2 are too singular for the grid")
    dx = (hi - lo) / (n - 1)
    side = (pad - 1) * n // 2
    wide_lo = lo - side * dx
    wide_hi = wide_lo + (pad * n - 1) * dx
    spec = spectrum_from_function(lambda t: noise_cf(m, t), wide_lo, wide_hi, pad * n)
    vals = fourier_inverse(spec).values[side : side + n]
    return np.clip(vals, 0.0, None)


def noise_first_moment(m: NoiseModel, lo=DEFAULT_LO, hi=DEFAULT_HI, n=DEFAULT_N) -> float:
    """``E|eps|``; Linnik tails beyond the grid use the power-law asymptote."""
    if m.kind == "laplace":
        return m.scale
    if m.kind == "gamma":
        return m.beta * m.scale
    if m.beta <= 1.0:
        return math.inf
    x = np.linspace(lo, hi, n)
    inner = trapezoid(np.abs(x) * _linnik_values(m, lo, hi, n), (hi - lo) / (n - 1))
    # power-law asymptote C |u|^-(1+beta) beyond each edge
    c = linnik_tail_constant(m.beta) * m.scale**m.beta
    tails = sum(c * e ** (1.0 - m.beta) / (m.beta - 1.0) for e in (-lo, hi))
    return inner + tails


# -- Linnik scale mixture ----------------------------------------------------


def linnik_mixing_pdf(beta: float, v):
    """Density of the Laplace rate ``V`` in the Linnik scale mixture."""
    if not 0.0 < beta < 2.0:
        raise ValueError("beta must lie in (0, 2)")
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise ValueError("mixing density is defined for v > 0 only")
    th = math.pi * beta / 2.0
    vb = v**beta
    out = (2.0 / math.pi) * math.sin(th) * v ** (beta - 1.0) / (1.0 + vb * vb + 2.0 * vb * math.cos(th))
    return out if out.ndim else float(out)


def linnik_mixing_cdf(beta: float, v):
    """Closed-form CDF of ``V`` (via ``z = v**beta``)."""
    th = math.pi * beta / 2.0
    z = np.asarray(v, dtype=float) ** beta
    out = (np.arctan((z + math.cos(th)) / math.sin(th)) - (math.pi / 2.0 - th)) / th
    return out if np.ndim(out) else float(out)


def linnik_sample_scale(beta: float, rng: np.random.Generator, size=None):
    """Exact inverse-CDF draws of ``V``.

    With ``theta = pi beta / 2`` and ``U`` uniform, ``V**beta`` equals
    ``sin(theta U) / sin(theta (1 - U))``.
    """
    if not 0.0 < beta < 2.0:
        raise ValueError("beta must lie in (0, 2)")
    th = math.pi * beta / 2.0
    u = rng.random(size)
    # guard the endpoints, where the ratio is 0 or infinite
    u = np.clip(u, 1e-300, 1.0 - 1e-16)
    z = np.sin(th * u) / np.sin(th * (1.0 - u))
    return z ** (1.0 / beta)


def laplace_sample(n, rng: np.random.Generator) -> np.ndarray:
    """Standard Laplace draws by inverting the CDF."""
    u = rng.random(n) - 0.5
    return -np.sign(u) * np.log1p(-2.0 * np.abs(u))


def noise_sample(m: NoiseModel, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    if m.kind == "laplace":
        return laplace_sample(n, rng) * m.scale
    if m.kind == "linnik":
        lap = laplace_sample(n, rng)
        v = linnik_sample_scale(m.beta, rng, n)
        return lap / v * m.scale
    return rng.standard_gamma(m.beta, n) * m.scale


# -- signal presets ----------------------------------------------------------


def _normal_pdf(x, mu, sd):
    return np.exp(-0.5 * ((x - mu) / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))


@dataclass(frozen=True)
class SignalPreset:
    """Mixing density ``f_0X`` with its documented regularity.

    ``alpha`` is the smoothness used in rate predictions (``inf`` for analytic
    or C-infinity densities); ``tail_constant`` is the ``C0`` of an exponential
    tail bound ``exp(-(1 + C0)|x|)``.
    """

    name: str
    pdf: Callable = field(repr=False)
    alpha: float
    tail_constant: float
    first_moment: float
    cf: Callable | None = field(default=None, repr=False)
    atoms: tuple | None = None
    weights: tuple | None = None
    sigma: float | None = None

    def density(self, lo=DEFAULT_LO, hi=DEFAULT_HI, n=DEFAULT_N) -> GridFunction:
        return GridFunction.from_callable(self.pdf, lo, hi, n)

    def sample(self, n: int, rng: np.random.Generator, lo=DEFAULT_LO, hi=DEFAULT_HI, grid_n=2**16):
        """Inverse-CDF sampling on a fine grid (linear interpolation)."""
        cdf = cdf_from_density(self.density(lo, hi, grid_n))
        u = rng.random(n)
        # strictly increasing abscissa for np.interp
        c, idx = np.unique(cdf.values, return_index=True)
        return np.interp(u, c, cdf.x[idx])

    def measure(self, lo=DEFAULT_LO, hi=DEFAULT_HI, n=DEFAULT_N):
        """The preset as a ``ProbabilityMeasure`` (closed form where possible)."""
        from .measures import GaussMix, GridDensity

        if self.atoms is not None:
            return GaussMix(self.atoms, self.weights, self.sigma)
        return GridDensity(self.density(lo, hi, n), cf=self.cf)


def gaussian_mixture_preset(atoms, weights, sd, name="gmix") -> SignalPreset:
    atoms = tuple(float(a) for a in atoms)
    weights = tuple(float(w) for w in weights)

    def pdf(x):
        return sum(w * _normal_pdf(x, a, sd) for a, w in zip(atoms, weights))

    def cf(t):
        t = np.asarray(t, dtype=float)
        return sum(w * np.exp(1j * t * a) for a, w in zip(atoms, weights)) * np.exp(-0.5 * (sd * t) ** 2)

    e_abs = sum(
        w * (sd * math.sqrt(2 / math.pi) * math.exp(-0.5 * (a / sd) ** 2) + a * math.erf(a / (sd * math.sqrt(2))))
        for a, w in zip(atoms, weights)
    )
    return SignalPreset(name, pdf, math.inf, math.inf, e_abs, cf, atoms, weights, float(sd))


def gaussian_preset(mu=0.0, sd=1.0) -> SignalPreset:
    return gaussian_mixture_preset([mu], [1.0], sd, name=f"normal:{mu:g},{sd:g}")


def _laplace_signal() -> SignalPreset:
    def pdf(x):
        return 0.5 * np.exp(-np.abs(x))

    def cf(t):
        t = np.asarray(t, dtype=float)
        return (1.0 / (1.0 + t * t)).astype(complex)

    # int |t|^a / (1 + t^2) dt < inf iff a < 1: the regularity index is 1^-
    return SignalPreset("laplace-signal", pdf, 0.99, 0.0, 1.0, cf)


_SMOOTH_UNIFORM_WIDTH = 0.2


def _smoothed_uniform() -> SignalPreset:
    w = _SMOOTH_UNIFORM_WIDTH

    def raw(x):
        return smooth_step((1.0 - np.abs(np.asarray(x, dtype=float))) / w)

    # normalizing constant by fine trapezoid quadrature (the profile is C-infinity)
    xs = np.linspace(-1.0, 1.0, 200_001)
    ys = raw(xs)
    z = float(np.trapezoid(ys, xs))
    e_abs = float(np.trapezoid(np.abs(xs) * ys, xs)) / z

    def pdf(x):
        return raw(x) / z

    return SignalPreset("smoothed-uniform", pdf, math.inf, math.inf, e_abs, None)


PRESETS = {
    "gmix2": gaussian_mixture_preset([-1.0, 1.0], [0.5, 0.5], 0.5, name="gmix2"),
    "laplace-signal": _laplace_signal(),
    "smoothed-uniform": _smoothed_uniform(),
}


def get_preset(name: str) -> SignalPreset:
    """Look up a preset; ``normal:mu,sd`` builds a single Gaussian."""
    if name in PRESETS:
        return PRESETS[name]
    if name.startswith("normal:"):
        mu, sd = (float(v) for v in name.split(":", 1)[1].split(","))
        return gaussian_preset(mu, sd)
    raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")


@dataclass(frozen=True)
class ModelSample:
    y: np.ndarray
    x: np.ndarray
    eps: np.ndarray
    seed: int


def simulate(preset: SignalPreset, m: NoiseModel, n: int, seed: int) -> ModelSample:
    """Draw ``n`` observations ``y = x + eps``; deterministic given ``seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    x = preset.sample(n, rng)
    eps = noise_sample(m, n, rng)
    return ModelSample(y=x + eps, x=x, eps=eps, seed=int(seed))
