"""Dirichlet-process location mixture of normals with Laplace or Linnik noise.

Model::

    y_i = u_{z_i} + sigma * Z_i + eps_i,   (u_c) iid H0,   z ~ CRP(alpha)

with ``H0`` the generalized-normal density ``c0 exp(-b0 |u|^delta)`` and an
inverse-gamma prior on ``sigma``.  Laplace noise is written as
``eps_i = sqrt(W_i) N_i`` with ``W_i ~ Exp(rate v_i^2 / 2)``, where ``v_i = 1``
for Laplace and ``v_i ~ f_V`` for Linnik noise.  Given ``W`` every observation
is Gaussian around its cluster location with variance ``sigma^2 + W_i``.

One sweep updates, in order: the augmentation ``(W, v)``, the labels
(auxiliary-atom scheme), the cluster locations and ``sigma``.  The noise
``eps_i`` is drawn exactly from its conditional before ``W_i``, and ``sigma``
sees the closed-form Laplace-normal likelihood with ``W`` integrated out; the
two are strongly coupled otherwise.  Observations
are processed in sorted order so the chain depends on the data only as a
multiset.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import special

from .distributions import NoiseModel, linnik_sample_scale
from .measures import GaussMix, ProbabilityMeasure
from .numerics import GridFunction, Spectrum, fourier_inverse, frequency_grid, trapezoid
from .wasserstein import w1

__all__ = [
    "DPMConfig",
    "DPMState",
    "PosteriorDraws",
    "augment_laplace",
    "draw_noise",
    "log_laplace_normal",
    "sample_base",
    "initial_state",
    "gibbs_sweep",
    "run_chain",
    "chain_seed",
    "posterior_w1",
    "posterior_predictive_l1",
    "prior_draws",
    "write_summary_csv",
]

TARGET_ACCEPT = 0.3
ADAPT_EVERY = 25


@dataclass(frozen=True)
class DPMConfig:
    noise: NoiseModel = field(default_factory=lambda: NoiseModel("laplace"))
    concentration: float = 1.0
    base_b0: float = 1.0
    base_delta: float = 1.0
    sigma_nu: float = 1.0
    sigma_gamma: float = 1.0
    aux_m: int = 3
    iters: int = 2000
    burn: int = 1000
    thin: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.noise.kind == "gamma":
            raise ValueError("the sampler supports Laplace and Linnik noise only")
        if self.noise.kind == "linnik" and not 1.0 < self.noise.beta < 2.0:
            raise ValueError("Linnik noise needs 1 < beta < 2")
        if not 0.0 < self.base_delta <= 1.0:
            raise ValueError("base_delta must lie in (0, 1]")
        for name in ("concentration", "base_b0", "sigma_nu", "sigma_gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.aux_m < 1:
            raise ValueError("aux_m must be >= 1")
        if self.thin < 1 or self.burn < 0 or self.iters <= self.burn:
            raise ValueError("need iters > burn >= 0 and thin >= 1")


@dataclass
class DPMState:
    """Mutable sampler state; ``locs[c]``/``counts[c]`` describe cluster ``c``."""

    z: np.ndarray
    locs: np.ndarray
    counts: np.ndarray
    sigma: float
    w_aug: np.ndarray
    v_aug: np.ndarray | None = None
    log_steps: dict = field(default_factory=lambda: {"loc": 0.0, "sigma": -1.0})

    def copy(self) -> "DPMState":
        return DPMState(
            self.z.copy(),
            self.locs.copy(),
            self.counts.copy(),
            self.sigma,
            self.w_aug.copy(),
            None if self.v_aug is None else self.v_aug.copy(),
            dict(self.log_steps),
        )

    @property
    def n_clusters(self) -> int:
        return int(self.locs.size)

    def check(self) -> None:
        k = self.locs.size
        if self.z.min() < 0 or self.z.max() >= k:
            raise AssertionError("label points to a missing cluster")
        if not np.array_equal(np.bincount(self.z, minlength=k), self.counts) or np.any(self.counts == 0):
            raise AssertionError("cluster counts inconsistent with labels")
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise AssertionError("sigma left (0, inf)")
        if np.any(self.w_aug <= 0) or (self.v_aug is not None and np.any(self.v_aug <= 0)):
            raise AssertionError("augmentation variables must be positive")


@dataclass
class PosteriorDraws:
    atoms: list
    weights: list
    sigmas: np.ndarray
    final_state: DPMState | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.sigmas)

    def mixture(self, k: int) -> GaussMix:
        return GaussMix(self.atoms[k], self.weights[k], self.sigmas[k])

    def n_clusters(self) -> np.ndarray:
        return np.array([a.size for a in self.atoms])

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for a, w, s in zip(self.atoms, self.weights, self.sigmas):
                fh.write(json.dumps({"sigma": float(s), "atoms": a.tolist(), "weights": w.tolist()}) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "PosteriorDraws":
        atoms, weights, sig = [], [], []
        with open(path) as fh:
            for line in fh:
                d = json.loads(line)
                atoms.append(np.array(d["atoms"]))
                weights.append(np.array(d["weights"]))
                sig.append(d["sigma"])
        return cls(atoms, weights, np.array(sig))


def chain_seed(master: int, index: int) -> int:
    """SplitMix64 of ``master + index``: independent per-chain seeds."""
    mask = (1 << 64) - 1
    z = (master + index + 0x9E3779B97F4A7C15) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return z ^ (z >> 31)


# -- conditionals -----------------------------------------------------------


def augment_laplace(residual, rng: np.random.Generator, rate: float | np.ndarray = 1.0):
    """Draw ``W`` given ``eps = residual`` for ``eps | W ~ N(0, W)``, ``W ~ Exp(rate^2 / 2)``.

    The conditional makes ``1/W`` inverse Gaussian with mean ``rate/|r|`` and
    shape ``rate^2``; at ``r = 0`` it is ``Gamma(1/2, rate^2 / 2)``.  The
    inverse Gaussian draw uses the chi-square root construction, written in
    terms of ``W`` and with the small root taken as a ratio, which stays exact
    as ``r -> 0`` where library samplers cancel to zero.
    """
    r = np.abs(np.asarray(residual, dtype=float))
    v = np.broadcast_to(np.asarray(rate, dtype=float), r.shape)
    y = rng.standard_normal(r.shape) ** 2
    u = rng.random(r.shape)
    tiny = r < 1e-300
    rr = np.where(tiny, 1.0, r)
    k = y / (2.0 * v * rr)
    a = 1.0 + k + np.sqrt(k) * np.sqrt(k + 2.0)
    w = np.where(u * (1.0 + a) < a, a * rr / v, rr / (v * a))
    out = np.where(tiny, y / v**2, w)
    return out if out.ndim else float(out)


def sample_base(b0: float, delta: float, rng: np.random.Generator, size=None):
    """Draws from ``c0 exp(-b0 |u|^delta)``: ``|u|^delta ~ Gamma(1/delta, b0)``."""
    g = rng.gamma(1.0 / delta, 1.0 / b0, size=size)
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return sign * g ** (1.0 / delta)


def _log_base(u, b0: float, delta: float):
    return -b0 * np.abs(u) ** delta


def _log_sigma_prior(s: float, nu: float, gamma: float) -> float:
    return -(nu + 1.0) * math.log(s) - gamma / s


@numba.njit(cache=True)
def _assign(y, s2, z, locs, counts, nslots, alpha, aux, unif):
    """Auxiliary-atom label updates.  ``locs``/``counts`` have spare capacity;
    slots with zero count are free.  Returns the number of used slots."""
    n = y.size
    m = aux.shape[1]
    free = np.empty(locs.size, dtype=np.int64)
    nfree = 0
    for c in range(nslots):
        if counts[c] == 0:
            free[nfree] = c
            nfree += 1
    logw = np.empty(locs.size + m)
    for i in range(n):
        c = z[i]
        counts[c] -= 1
        if counts[c] == 0:
            # singleton: its atom becomes the first auxiliary candidate
            aux[i, 0] = locs[c]
            free[nfree] = c
            nfree += 1
        inv = 1.0 / s2[i]
        half_log = -0.5 * math.log(2.0 * math.pi * s2[i])
        top = -np.inf
        for k in range(nslots):
            if counts[k] > 0:
                d = y[i] - locs[k]
                logw[k] = math.log(counts[k]) + half_log - 0.5 * d * d * inv
            else:
                logw[k] = -np.inf
            if logw[k] > top:
                top = logw[k]
        la = math.log(alpha / m)
        for j in range(m):
            d = y[i] - aux[i, j]
            logw[nslots + j] = la + half_log - 0.5 * d * d * inv
            if logw[nslots + j] > top:
                top = logw[nslots + j]
        total = 0.0
        for k in range(nslots + m):
            logw[k] = math.exp(logw[k] - top)
            total += logw[k]
        target = unif[i] * total
        acc = 0.0
        pick = nslots + m - 1
        for k in range(nslots + m):
            acc += logw[k]
            if acc >= target and logw[k] > 0.0:
                pick = k
                break
        if pick < nslots:
            z[i] = pick
            counts[pick] += 1
        else:
            new_loc = aux[i, pick - nslots]
            if nfree > 0:
                nfree -= 1
                slot = free[nfree]
            else:
                slot = nslots
                nslots += 1
            locs[slot] = new_loc
            z[i] = slot
            counts[slot] = 1
    return nslots


def _compact(z: np.ndarray, locs: np.ndarray, counts: np.ndarray, nslots: int):
    used = np.flatnonzero(counts[:nslots] > 0)
    relabel = np.full(nslots, -1, dtype=np.int64)
    relabel[used] = np.arange(used.size)
    return relabel[z], locs[used].copy(), counts[used].copy()


def initial_state(y: np.ndarray, config: DPMConfig, groups: int = 10) -> DPMState:
    """Over-dispersed start: sorted data split into ``groups`` blocks at their
    means, ``sigma`` a tenth of the data spread and ``W`` at its prior mean."""
    n = y.size
    k = min(n, groups)
    z = (np.arange(n) * k) // n
    counts = np.bincount(z, minlength=k).astype(np.int64)
    locs = np.bincount(z, weights=np.sort(y), minlength=k) / counts
    spread = float(np.std(y)) if n > 1 else 1.0
    v = np.ones(n) if config.noise.kind == "linnik" else None
    return DPMState(
        z=z.astype(np.int64),
        locs=locs,
        counts=counts,
        sigma=max(0.1 * spread, 1e-3),
        w_aug=np.full(n, 2.0),
        v_aug=v,
    )


def _branch_logs(r, s: float, v):
    # log weights of eps > 0 and eps < 0 in Laplace(eps; v) * N(r - eps; 0, s^2)
    a = 0.5 * (v * s) ** 2
    pos = a - v * r + special.log_ndtr((r - v * s * s) / s)
    neg = a + v * r + special.log_ndtr((-r - v * s * s) / s)
    return pos, neg


def log_laplace_normal(r, s: float, v=1.0):
    """Log density at ``r`` of Laplace(rate ``v``) plus independent N(0, s^2)."""
    pos, neg = _branch_logs(r, s, v)
    return np.log(0.5 * v) + np.logaddexp(pos, neg)


def draw_noise(r, s: float, v, rng: np.random.Generator) -> np.ndarray:
    """Exact draw of ``eps`` given ``eps + s Z = r`` with ``eps ~ Laplace(v)``.

    The posterior splits into N(r - v s^2, s^2) on ``eps > 0`` and
    N(r + v s^2, s^2) on ``eps < 0``.
    """
    r = np.asarray(r, dtype=float)
    v = np.broadcast_to(np.asarray(v, dtype=float), r.shape)
    pos, neg = _branch_logs(r, s, v)
    up = rng.random(r.shape) < np.exp(pos - np.logaddexp(pos, neg))
    m = np.where(up, r - v * s * s, -(r + v * s * s))
    # N(m, s^2) restricted to (0, inf) by inverting its upper tail in logs
    tail = special.log_ndtr(m / s) + np.log(rng.random(r.shape))
    e = np.maximum(m - s * special.ndtri_exp(tail), 0.0)
    return np.where(up, e, -e)


def _cluster_stats(y, s2, z, k):
    prec = np.bincount(z, weights=1.0 / s2, minlength=k)
    lin = np.bincount(z, weights=y / s2, minlength=k)
    return prec, lin


def _sigma_loglik(s: float, resid: np.ndarray, rate) -> float:
    return float(np.sum(log_laplace_normal(resid, s, rate)))


def gibbs_sweep(state: DPMState, y: np.ndarray, config: DPMConfig, rng: np.random.Generator) -> tuple[DPMState, dict]:
    """One full sweep over a state whose labels index the sorted data ``y``.

    Returns the updated state and the acceptance indicators of the two
    Metropolis blocks (used for step-size adaptation).
    """
    st = state.copy()
    n = y.size
    s = st.sigma
    u_obs = st.locs[st.z]

    # (1) augmentation: eps_i exactly given (u, sigma, v), then v_i and W_i
    rate = st.v_aug if st.v_aug is not None else 1.0
    eps = draw_noise(y - u_obs, s, rate, rng)
    if st.v_aug is not None:
        prop = linnik_sample_scale(config.noise.beta, rng, size=n)
        log_acc = np.log(prop / st.v_aug) - (prop - st.v_aug) * np.abs(eps)
        take = np.log(rng.random(n)) < log_acc
        st.v_aug = np.where(take, prop, st.v_aug)
        rate = st.v_aug
    else:
        rate = 1.0
    st.w_aug = augment_laplace(eps, rng, rate)
    if not np.all(np.isfinite(st.w_aug)) or np.any(st.w_aug <= 0):
        raise FloatingPointError("augmentation produced a non-finite or zero variance")

    # (2) labels
    s2 = s * s + st.w_aug
    m = config.aux_m
    aux = sample_base(config.base_b0, config.base_delta, rng, size=(n, m))
    unif = rng.random(n)
    cap = n + m + 1
    locs = np.zeros(cap)
    counts = np.zeros(cap, dtype=np.int64)
    k = st.locs.size
    locs[:k] = st.locs
    counts[:k] = st.counts
    z = st.z.copy()
    nslots = _assign(y, s2, z, locs, counts, k, config.concentration, aux, unif)
    st.z, st.locs, st.counts = _compact(z, locs, counts, nslots)

    # (3) locations: random walk scaled by each cluster's likelihood sd
    k = st.locs.size
    cprec, clin = _cluster_stats(y, s2, st.z, k)
    step = math.exp(st.log_steps["loc"])
    cur = st.locs
    new = cur + step * rng.standard_normal(k) / np.sqrt(cprec)
    d_lik = -0.5 * cprec * (new * new - cur * cur) + clin * (new - cur)
    d_pri = _log_base(new, config.base_b0, config.base_delta) - _log_base(cur, config.base_b0, config.base_delta)
    log_r = d_lik + d_pri
    if not np.all(np.isfinite(log_r)):
        raise FloatingPointError("non-finite location acceptance ratio")
    acc_loc = np.log(rng.random(k)) < log_r
    st.locs = np.where(acc_loc, new, cur)

    # (4) sigma with W integrated out; step (1) of the next sweep redraws W
    # exactly, so the sweep stays a valid partially collapsed scheme
    resid = y - st.locs[st.z]
    rate = st.v_aug if st.v_aug is not None else 1.0
    s_new = s * math.exp(math.exp(st.log_steps["sigma"]) * rng.standard_normal())
    log_r = (
        _sigma_loglik(s_new, resid, rate)
        - _sigma_loglik(s, resid, rate)
        + _log_sigma_prior(s_new, config.sigma_nu, config.sigma_gamma)
        - _log_sigma_prior(s, config.sigma_nu, config.sigma_gamma)
        + math.log(s_new / s)
    )
    if not math.isfinite(log_r) and not log_r == -math.inf:
        raise FloatingPointError("non-finite sigma acceptance ratio")
    acc_sig = math.log(rng.random()) < log_r
    if acc_sig:
        st.sigma = s_new
    if not (st.sigma > 0 and math.isfinite(st.sigma)):
        raise FloatingPointError(f"sigma left (0, inf): {st.sigma!r}")
    return st, {"loc": float(acc_loc.mean()), "sigma": float(acc_sig)}


def run_chain(data, config: DPMConfig, init: DPMState | None = None) -> PosteriorDraws:
    """Run ``config.iters`` sweeps, keeping every ``thin``-th draw after ``burn``.

    Step sizes adapt toward 30% acceptance during burn-in only.  ``init``
    (for example the ``final_state`` of an earlier run on the same data)
    replaces the default starting point, step sizes included.
    """
    y = np.sort(np.asarray(data, dtype=float).ravel())
    if y.size == 0:
        raise ValueError("no data")
    rng = np.random.default_rng(config.seed)
    state = init.copy() if init is not None else initial_state(y, config)
    if state.z.size != y.size:
        raise ValueError("initial state does not match the data size")
    atoms, weights, sigmas = [], [], []
    acc = {"loc": 0.0, "sigma": 0.0}
    for it in range(config.iters):
        state, a = gibbs_sweep(state, y, config, rng)
        if it < config.burn:
            for key in acc:
                acc[key] += a[key]
            if (it + 1) % ADAPT_EVERY == 0:
                gain = 1.0 / math.sqrt((it + 1) / ADAPT_EVERY)
                for key in acc:
                    state.log_steps[key] += gain * (acc[key] / ADAPT_EVERY - TARGET_ACCEPT)
                    acc[key] = 0.0
        elif (it - config.burn) % config.thin == 0:
            atoms.append(state.locs.copy())
            weights.append(state.counts / y.size)
            sigmas.append(state.sigma)
    return PosteriorDraws(atoms, weights, np.array(sigmas), final_state=state)


# -- posterior functionals --------------------------------------------------


def posterior_w1(draws: PosteriorDraws, mu0x: ProbabilityMeasure) -> np.ndarray:
    return np.array([w1(draws.mixture(k), mu0x) for k in range(len(draws))])


def posterior_predictive_l1(draws: PosteriorDraws, noise: NoiseModel, f0y: GridFunction) -> np.ndarray:
    """``||f_eps * (mu_H * phi_sigma) - f0Y||_1`` per draw, on the grid of ``f0y``."""
    lo, hi, n = f0y.lo, f0y.hi, f0y.n
    t = frequency_grid(lo, hi, n)
    fe = noise.cf(t)
    out = np.empty(len(draws))
    for k in range(len(draws)):
        spec = Spectrum(t, draws.mixture(k).cf(t) * fe, lo, hi)
        fy = fourier_inverse(spec, check_symmetry=False)
        out[k] = min(2.0, trapezoid(np.abs(fy.values - f0y.values), f0y.dx))
    return out


def prior_draws(config: DPMConfig, count: int, rng: np.random.Generator, tol: float = 1e-10) -> PosteriorDraws:
    """Mixtures drawn from the prior by stick breaking (truncated at mass ``tol``)."""
    atoms, weights, sigmas = [], [], []
    for _ in range(count):
        ws, left = [], 1.0
        while left > tol:
            b = rng.beta(1.0, config.concentration)
            ws.append(left * b)
            left *= 1.0 - b
        w = np.array(ws)
        atoms.append(sample_base(config.base_b0, config.base_delta, rng, size=w.size))
        weights.append(w / w.sum())
        sigmas.append(1.0 / rng.gamma(config.sigma_nu, 1.0 / config.sigma_gamma))
    return PosteriorDraws(atoms, weights, np.array(sigmas))


def write_summary_csv(path, draws: PosteriorDraws, w1_vals, l1_vals) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["draw_index", "w1", "l1", "sigma", "n_clusters"])
        for k in range(len(draws)):
            w.writerow([k, repr(float(w1_vals[k])), repr(float(l1_vals[k])), repr(float(draws.sigmas[k])), int(draws.atoms[k].size)])
