"""Uniform-grid function calculus.

Fourier transforms follow the convention

    f_hat(t) = int exp(i t x) f(x) dx,
    f(x)     = (2 pi)^-1 int exp(-i t x) f_hat(t) dt,

realized on a grid ``x_j = lo + j * dx`` by a Riemann sum with an explicit
phase correction for the offset ``lo``.  The frequency grid has spacing
``2 pi / (n dx)`` and is stored in ascending order.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "GridFunction",
    "Spectrum",
    "fourier_forward",
    "fourier_inverse",
    "frequency_grid",
    "spectrum_from_function",
    "apply_multiplier",
    "convolve",
    "norms",
    "hellinger",
    "cdf_from_density",
    "as_density",
    "trapezoid",
    "smooth_step",
]

_SYMMETRY_RTOL = 1e-10


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def trapezoid(values: np.ndarray, dx: float) -> float:
    """Composite trapezoid rule on a uniform grid."""
    v = np.asarray(values)
    if v.size < 2:
        return 0.0
    return float(dx * (v.sum() - 0.5 * (v[0] + v[-1])))


def smooth_step(u):
    """C-infinity step from 0 (u <= 0) to 1 (u >= 1) built from exp(-1/u)."""
    u = np.asarray(u, dtype=float)
    a = np.zeros_like(u)
    b = np.zeros_like(u)
    pos = u > 0
    a[pos] = np.exp(-1.0 / u[pos])
    neg = u < 1
    b[neg] = np.exp(-1.0 / (1.0 - u[neg]))
    return a / (a + b)


@dataclass(frozen=True)
class GridFunction:
    """Real function sampled at ``n`` equispaced points of ``[lo, hi]``.

    ``n`` must be a power of two and at least 8.  The value array is copied and
    made read-only.
    """

    lo: float
    hi: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 1:
            raise ValueError("values must be one-dimensional")
        n = values.size
        if n < 8 or not _is_power_of_two(n):
            raise ValueError(f"grid size must be a power of two >= 8, got {n}")
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.hi <= self.lo:
            raise ValueError(f"invalid domain [{self.lo}, {self.hi}]")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, fn, lo: float, hi: float, n: int) -> "GridFunction":
        x = np.linspace(lo, hi, n)
        return cls(lo, hi, fn(x))

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.lo, self.hi, values)

    def __call__(self, x):
        """Linear interpolation; zero outside the domain."""
        return np.interp(x, self.x, self.values, left=0.0, right=0.0)

    def integral(self) -> float:
        return trapezoid(self.values, self.dx)

    def shift(self, c: float) -> "GridFunction":
        """Translate the function by ``c`` (the grid moves, values do not)."""
        return GridFunction(self.lo + c, self.hi + c, self.values)

    # -- serialization -------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "value"])
            for xi, vi in zip(self.x, self.values):
                writer.writerow([repr(float(xi)), repr(float(vi))])

    @classmethod
    def from_csv(cls, path) -> "GridFunction":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[0, 0], data[-1, 0], data[:, 1])

    def to_bytes(self) -> bytes:
        header = struct.pack("<ddd", self.lo, self.hi, float(self.n))
        return header + self.values.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "GridFunction":
        lo, hi, n = struct.unpack_from("<ddd", blob)
        n = int(n)
        values = np.frombuffer(blob, dtype="<f8", count=n, offset=24)
        return cls(lo, hi, values)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "GridFunction":
        return cls.from_bytes(Path(path).read_bytes())


@dataclass(frozen=True)
class Spectrum:
    """Fourier transform sampled on the frequency grid of a spatial grid.

    ``lo``/``hi`` record the spatial grid the spectrum belongs to; they fix the
    phase convention used when inverting.
    """

    freqs: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        freqs = np.array(self.freqs, dtype=float, copy=True)
        values = np.array(self.values, dtype=complex, copy=True)
        if freqs.shape != values.shape or freqs.ndim != 1:
            raise ValueError("freqs and values must be matching 1-d arrays")
        if not _is_power_of_two(freqs.size) or freqs.size < 8:
            raise ValueError("spectrum size must be a power of two >= 8")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrum values must be finite")
        freqs.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.freqs.size

    @property
    def dt(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def with_values(self, values) -> "Spectrum":
        return Spectrum(self.freqs, values, self.lo, self.hi)

    def __mul__(self, other):
        if isinstance(other, Spectrum):
            _check_same_spectral_grid(self, other)
            return self.with_values(self.values * other.values)
        return self.with_values(self.values * other)

    __rmul__ = __mul__

    def __add__(self, other: "Spectrum") -> "Spectrum":
        _check_same_spectral_grid(self, other)
        return self.with_values(self.values + other.values)

    def symmetry_defect(self) -> float:
        """Max |s(-t) - conj(s(t))|, ignoring the unpaired Nyquist bin."""
        v = self.values[1:]
        return float(np.max(np.abs(v - np.conj(v[::-1])))) if v.size else 0.0


def _check_same_spectral_grid(a: Spectrum, b: Spectrum) -> None:
    if a.n != b.n or not np.isclose(a.dt, b.dt, rtol=1e-12) or a.lo != b.lo:
        raise ValueError("spectra live on different frequency grids")


def frequency_grid(lo: float, hi: float, n: int) -> np.ndarray:
    """Ascending angular frequencies matching the spatial grid ``(lo, hi, n)``."""
    dx = (hi - lo) / (n - 1)
    return np.fft.fftshift(np.fft.fftfreq(n, d=dx)) * (2.0 * np.pi)


def fourier_forward(f: GridFunction) -> Spectrum:
    n, dx = f.n, f.dx
    t = np.fft.fftfreq(n, d=dx) * (2.0 * np.pi)
    # n * ifft gives sum_j f_j exp(+2 pi i j k / n)
    raw = np.fft.ifft(f.values) * (n * dx)
    vals = raw * np.exp(1j * t * f.lo)
    return Spectrum(np.fft.fftshift(t), np.fft.fftshift(vals), f.lo, f.hi)


def fourier_inverse(s: Spectrum, check_symmetry: bool = True) -> GridFunction:
    """Inverse transform back to the spatial grid the spectrum belongs to.

    A spectrum that is not conjugate-symmetric cannot come from a real
    function; this usually means a phase error upstream, so it is rejected.
    """
    if check_symmetry:
        scale = max(1.0, float(np.max(np.abs(s.values))))
        defect = s.symmetry_defect()
        if defect > _SYMMETRY_RTOL * scale:
            raise ValueError(f"spectrum is not conjugate-symmetric (defect {defect:.3g})")
    n = s.n
    dx = (s.hi - s.lo) / (n - 1)
    t = np.fft.ifftshift(s.freqs)
    vals = np.fft.ifftshift(s.values) * np.exp(-1j * t * s.lo)
    out = np.fft.fft(vals) / (n * dx)
    return GridFunction(s.lo, s.hi, out.real)


def spectrum_from_function(fn, lo: float, hi: float, n: int) -> Spectrum:
    """Sample an analytic transform ``fn(t)`` on the grid's frequencies."""
    t = frequency_grid(lo, hi, n)
    return Spectrum(t, fn(t), lo, hi)


def apply_multiplier(f: GridFunction, multiplier) -> GridFunction:
    """Return the function with transform ``f_hat(t) * multiplier(t)``.

    The result lives on f's grid, so anything pushed past the domain edges
    wraps around; callers are responsible for leaving enough room.
    """
    s = fourier_forward(f)
    m = multiplier(s.freqs) if callable(multiplier) else np.asarray(multiplier)
    return fourier_inverse(s.with_values(s.values * m))


def convolve(f: GridFunction, g: GridFunction) -> GridFunction:
    """Linear convolution ``(f * g)(x) = int f(x - u) g(u) du``.

    Both inputs are zero-padded so no wrap-around occurs.  The result lives on
    ``[f.lo + g.lo, f.lo + g.lo + (N - 1) dx]`` with ``N`` the padded length.
    """
    dx = f.dx
    if not np.isclose(dx, g.dx, rtol=1e-10, atol=0.0):
        raise ValueError(f"grid spacings differ: {f.dx} vs {g.dx}")
    m = f.n + g.n
    N = 1 << (m - 1).bit_length()
    spec = np.fft.rfft(f.values, N) * np.fft.rfft(g.values, N)
    out = np.fft.irfft(spec, N) * dx
    # the last N - (f.n + g.n - 1) entries are exact zeros up to roundoff
    out[f.n + g.n - 1:] = 0.0
    lo = f.lo + g.lo
    return GridFunction(lo, lo + (N - 1) * dx, out)


def norms(f: GridFunction) -> dict:
    v = f.values
    return {
        "l1": trapezoid(np.abs(v), f.dx),
        "l2": float(np.sqrt(trapezoid(v * v, f.dx))),
        "sup": float(np.max(np.abs(v))),
    }


def as_density(f: GridFunction) -> GridFunction:
    """Clip negative values (spectral ringing) and renormalize to unit mass."""
    v = np.clip(f.values, 0.0, None)
    mass = trapezoid(v, f.dx)
    if mass <= 0:
        raise ValueError("function has no positive mass")
    return f.with_values(v / mass)


def _check_grids_equal(f: GridFunction, g: GridFunction) -> None:
    if f.n != g.n or not np.isclose(f.lo, g.lo) or not np.isclose(f.hi, g.hi):
        raise ValueError("functions live on different grids")


def hellinger(f: GridFunction, g: GridFunction) -> float:
    """Hellinger distance ``||sqrt(f) - sqrt(g)||_2`` between two grid densities.

    Values above -1e-12 are clipped to zero.  Either density missing more than
    1e-3 of its mass means the domain is too small and is rejected.
    """
    _check_grids_equal(f, g)
    out = []
    for h in (f, g):
        if np.min(h.values) < -1e-12:
            raise ValueError("density has materially negative values")
        v = np.clip(h.values, 0.0, None)
        mass = trapezoid(v, h.dx)
        if abs(mass - 1.0) > 1e-3:
            raise ValueError(f"density mass {mass:.6f} deviates from 1 by more than 1e-3")
        out.append(np.sqrt(v))
    d2 = trapezoid((out[0] - out[1]) ** 2, f.dx)
    return float(min(np.sqrt(max(d2, 0.0)), np.sqrt(2.0)))


def cdf_from_density(f: GridFunction) -> GridFunction:
    """Cumulative trapezoid integral, renormalized to end exactly at 1."""
    v = np.clip(f.values, 0.0, None)
    increments = 0.5 * (v[1:] + v[:-1]) * f.dx
    cdf = np.concatenate(([0.0], np.cumsum(increments)))
    total = cdf[-1]
    if total <= 0:
        raise ValueError("density has no mass")
    cdf /= total
    cdf = np.maximum.accumulate(cdf)
    cdf[-1] = 1.0
    return f.with_values(cdf)
