"""Discrete mixing measures matching polynomial and exponential moments.

Given a density ``f`` supported on ``[-a, a]`` we look for atoms/weights with

    sum_k w_k u_k^j     = int u^j f(u) du,      j = 0..J-1
    sum_k w_k e^{b u_k} = int e^{b u} f(u) du,  b = -1/2, 1/2

over a fine grid of candidate atoms.  A vertex of this feasibility polytope
has at most J + 2 positive weights.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre
from scipy.optimize import linprog

from .distributions import DEFAULT_HI, DEFAULT_LO, DEFAULT_N, NoiseModel
from .measures import Discrete, GaussMix, ProbabilityMeasure, _measure_spectrum
from .numerics import GridFunction, Spectrum, as_density, fourier_forward, fourier_inverse, frequency_grid, hellinger, trapezoid

__all__ = [
    "MomentSpec",
    "truncate_renormalize",
    "match_moments",
    "moment_residuals",
    "hellinger_gap",
    "coupled_order",
    "write_gap_csv",
]

RESIDUAL_TOL = 1e-9
CANDIDATES_PER_ATOM = 20


@dataclass(frozen=True)
class MomentSpec:
    a: float
    J: int
    exp_points: tuple = (-0.5, 0.5)
    n_target: int | None = None

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("support half-width must be positive")
        if self.J < 1:
            raise ValueError("J must be >= 1")
        n = self.n_target if self.n_target is not None else self.J + 4
        if n < self.J / 2 + 2:
            raise ValueError(f"atom budget {n} below J/2 + 2")
        object.__setattr__(self, "n_target", int(n))
        object.__setattr__(self, "exp_points", tuple(float(b) for b in self.exp_points))


def coupled_order(sigma: float, a: float, eta: float = 1.1) -> int:
    """Number of matched moments ``ceil(eta * e * a * M)`` with ``M = |log sigma|^(1/2) / sigma``."""
    m = math.sqrt(abs(math.log(sigma))) / sigma
    return math.ceil(eta * math.e * a * m)


def truncate_renormalize(f0x: GridFunction, a: float) -> GridFunction:
    """Restrict a density to ``[-a, a]`` and renormalize."""
    if not a > 0:
        raise ValueError("a must be positive")
    x = f0x.x
    inside = np.abs(x) <= a
    vals = np.where(inside, f0x.values, 0.0)
    mass = trapezoid(vals, f0x.dx)
    if mass <= 0.5:
        raise ValueError(f"only {mass:.3g} of the mass lies in [-{a}, {a}]")
    return f0x.with_values(vals / mass)


def _features(u: np.ndarray, spec: MomentSpec) -> np.ndarray:
    """Constraint rows: Legendre polynomials in ``u / a`` then exponentials."""
    rows = legendre.legvander(u / spec.a, spec.J - 1).T
    if spec.exp_points:
        rows = np.vstack([rows, np.exp(np.outer(spec.exp_points, u))])
    return rows


def _targets(f: GridFunction, spec: MomentSpec) -> np.ndarray:
    x = f.x
    feats = _features(x, spec)
    w = np.full(f.n, f.dx)
    w[0] = w[-1] = 0.5 * f.dx
    return feats @ (w * f.values)


def moment_residuals(mu: ProbabilityMeasure, f: GridFunction, spec: MomentSpec) -> np.ndarray:
    """|moment(mu) - moment(f)| for monomials u^j (j < J) and each exponential."""
    x = f.x
    w = np.full(f.n, f.dx)
    w[0] = w[-1] = 0.5 * f.dx
    mono_f = np.vander(x, spec.J, increasing=True).T @ (w * f.values)
    mono_mu = np.vander(mu.atoms, spec.J, increasing=True).T @ mu.weights
    out = [np.abs(mono_mu - mono_f)]
    for b in spec.exp_points:
        out.append(np.array([abs(np.exp(b * mu.atoms) @ mu.weights - np.exp(b * x) @ (w * f.values))]))
    return np.concatenate(out)


def match_moments(f0x_trunc: GridFunction, spec: MomentSpec) -> Discrete:
    """Moment-matched discrete measure on ``[-a, a]`` with at most J + 2 atoms."""
    f = f0x_trunc
    outside = np.abs(f.x) > spec.a * (1 + 1e-12)
    if np.any(f.values[outside] != 0.0):
        raise ValueError("density must vanish outside [-a, a]; truncate it first")
    cand = np.linspace(-spec.a, spec.a, CANDIDATES_PER_ATOM * spec.n_target)
    A = _features(cand, spec)
    b = _targets(f, spec)
    res = linprog(
        np.zeros(cand.size),
        A_eq=A,
        b_eq=b,
        bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0 or res.x is None:
        raise ValueError(f"moment constraints infeasible on the candidate grid: {res.message}")
    support = np.flatnonzero(res.x > 0)
    # polish on the basic support
    w, *_ = np.linalg.lstsq(A[:, support], b, rcond=None)
    if np.any(w < 0):
        w = res.x[support]
    keep = w > 0
    atoms, w = cand[support][keep], w[keep]
    w = w / w.sum()
    mu = Discrete(atoms, w)
    worst = float(moment_residuals(mu, f, spec).max())
    if worst > RESIDUAL_TOL:
        raise ValueError(f"moment residual {worst:.3e} exceeds {RESIDUAL_TOL:g}")
    return mu


def hellinger_gap(
    mu_h: ProbabilityMeasure,
    sigma: float,
    f0x,
    noise: NoiseModel,
    lo: float = DEFAULT_LO,
    hi: float = DEFAULT_HI,
    n: int = DEFAULT_N,
) -> float:
    """Hellinger distance between ``f_eps * (mu_H * phi_sigma)`` and ``f_eps * f0X``."""
    if noise.kind == "gamma":
        raise ValueError("gap is defined for Laplace and Linnik noise")
    t = frequency_grid(lo, hi, n)
    fe = noise.cf(t)
    mix = GaussMix(mu_h.atoms, mu_h.weights, sigma)
    fy = _to_density(mix.cf(t) * fe, t, lo, hi)
    if isinstance(f0x, GridFunction):
        g = f0x if (f0x.n, f0x.lo, f0x.hi) == (n, lo, hi) else GridFunction.from_callable(f0x, lo, hi, n)
        s0 = fourier_forward(g).values
    else:
        s0 = _measure_spectrum(f0x, lo, hi, n)
    f0y = _to_density(s0 * fe, t, lo, hi)
    return hellinger(fy, f0y)


def _to_density(values: np.ndarray, t: np.ndarray, lo: float, hi: float) -> GridFunction:
    return as_density(fourier_inverse(Spectrum(t, values, lo, hi), check_symmetry=False))


def write_gap_csv(rows: list[dict], path) -> None:
    cols = ["sigma", "J", "n_atoms", "hellinger_gap", "residual_max"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(r[k])) if isinstance(r[k], float) else r[k] for k in cols})
