"""``wdecon`` command line: reproducible studies with CSV/JSON outputs.

Every study writes ``manifest.json`` (the fully resolved configuration),
one or more CSV tables and ``summary.json``.  Options can come from a flat
``key = value`` file given with ``--config``; command-line flags win.

Exit status: 0 when every check of the study passes, 1 when a check fails
(the failing metric is printed), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .approx import MomentSpec, coupled_order, hellinger_gap, match_moments, moment_residuals, truncate_renormalize, write_gap_csv
from .distributions import DEFAULT_HI, DEFAULT_LO, DEFAULT_N, NoiseModel, get_preset, simulate
from .dpm import DPMConfig, chain_seed, posterior_predictive_l1, posterior_w1, run_chain
from .inversion import optimize_h, rate_exponents
from .kernels import cdf_bias, norm_slopes, operator_norms
from .measures import Discrete, GaussMix, noisy_density
from .regression import fit_loglog

__all__ = ["main", "run_study", "fit_loglog", "parse_schedule", "read_config", "pair_suite"]

STUDIES = ("simulate", "op-norms", "bias", "inversion", "approx", "dpm-rates")

DEFAULTS = {
    "simulate": {"preset": "gmix2", "noise": "laplace", "n": "1000"},
    "op-norms": {"noise": "laplace", "h": "2^-4..2^-10", "half_width": "128", "points_per_h": "8"},
    "bias": {"preset": "laplace-signal", "h": "2^-3..2^-7"},
    "inversion": {"noise": "laplace", "h": "2^-1..2^-7", "constant": ""},
    "approx": {"preset": "smoothed-uniform", "noise": "laplace", "sigma": "0.4,0.2,0.1,0.05", "a": "1.0", "eta": "1.1"},
    "dpm-rates": {
        "preset": "laplace-signal",
        "noise": "laplace",
        "n": "250,1000,4000",
        "reps": "5",
        "iters": "3000",
        "burn": "1000",
        "thin": "10",
    },
}
COMMON = {"seed": "0", "grid_n": str(DEFAULT_N), "domain": f"{DEFAULT_LO:g},{DEFAULT_HI:g}"}


class UsageError(Exception):
    pass


# -- parsing helpers --------------------------------------------------------


def parse_schedule(text: str) -> list[float]:
    """``2^-4..2^-10`` (every dyadic step) or a comma-separated list."""
    text = text.strip()
    if ".." in text:
        a, b = (s.strip() for s in text.split("..", 1))
        if not (a.startswith("2^") and b.startswith("2^")):
            raise UsageError(f"range schedules must be dyadic, got {text!r}")
        ka, kb = int(a[2:]), int(b[2:])
        step = 1 if kb >= ka else -1
        return [2.0**k for k in range(ka, kb + step, step)]
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        out.append(2.0 ** float(item[2:]) if item.startswith("2^") else float(item))
    if not out:
        raise UsageError("empty schedule")
    return out


def read_config(path) -> dict:
    cfg = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{num}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_")] = value
    return cfg


def _domain(cfg) -> tuple[float, float, int]:
    try:
        lo, hi = (float(v) for v in cfg["domain"].split(","))
        n = int(cfg["grid_n"])
    except ValueError as exc:
        raise UsageError(f"bad grid options: {exc}") from exc
    if n < 8 or n & (n - 1) or hi <= lo:
        raise UsageError("grid_n must be a power of two >= 8 and domain must satisfy lo < hi")
    return lo, hi, n


def _workers(cells: int) -> int:
    cap = os.environ.get("WDECON_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, cells))


def _map(fn, items):
    items = list(items)
    w = _workers(len(items))
    if w == 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=w) as pool:
        return list(pool.map(fn, items))


def _version() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _num(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in r])


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n")


def _check(failures: list, name: str, ok: bool, detail: str) -> None:
    if not ok:
        failures.append(f"{name}: {detail}")


# -- studies ----------------------------------------------------------------


def _study_simulate(cfg, out: Path) -> tuple[dict, list]:
    preset = get_preset(cfg["preset"])
    noise = NoiseModel.parse(cfg["noise"])
    n = int(cfg["n"])
    s = simulate(preset, noise, n, int(cfg["seed"]))
    _write_csv(out / "sample.csv", ["index", "y", "x", "eps"], [[i, s.y[i], s.x[i], s.eps[i]] for i in range(n)])
    return {"n": n, "mean_y": float(s.y.mean()), "sd_y": float(s.y.std())}, []


def _study_op_norms(cfg, out: Path) -> tuple[dict, list]:
    noise = NoiseModel.parse(cfg["noise"])
    hs = parse_schedule(cfg["h"])
    rows = operator_norms(noise, hs, float(cfg["half_width"]), int(cfg["points_per_h"]))
    _write_csv(out / "norms.csv", ["h", "k1_l1", "k2_l1", "f2_l1"], [[r["h"], r["k1_l1"], r["k2_l1"], r["f2_l1"]] for r in rows])
    fits = norm_slopes(rows)
    beta = noise.beta
    targets = {"k2_l1": max(beta - 0.5, 0.0), "f2_l1": max(beta - 1.0, 0.0)}
    failures = []
    for key, target in targets.items():
        slope = fits[key]["slope"]
        _check(failures, f"{key} slope", abs(slope - target) <= 0.25, f"{slope:.4f} not within {target} +/- 0.25")
    _check(failures, "k1_l1 max/min", fits["k1_ratio"] <= 3.0, f"{fits['k1_ratio']:.4f} > 3")
    return {"fits": fits, "targets": targets}, failures


def _study_bias(cfg, out: Path) -> tuple[dict, list]:
    preset = get_preset(cfg["preset"])
    hs = parse_schedule(cfg["h"])
    lo, hi, n = _domain(cfg)
    mu = preset.measure(lo, hi, n)
    smooth = math.isinf(preset.alpha)
    if smooth and isinstance(mu, GaussMix):
        logs = [cdf_bias(mu, h, log=True) for h in hs]
    else:
        logs = [math.log(cdf_bias(mu, h)) for h in hs]
    _write_csv(out / "bias.csv", ["h", "log_bias"], [[h, v] for h, v in zip(hs, logs)])
    slope = float(np.polyfit(np.log(hs), logs, 1)[0])
    failures = []
    if smooth:
        band = (4.0, math.inf)
    else:
        band = (preset.alpha + 0.71, preset.alpha + 1.11)
    _check(failures, "bias slope", band[0] <= slope <= band[1], f"{slope:.4f} outside [{band[0]:.2f}, {band[1]:.2f}]")
    return {"slope": slope, "band": list(band), "alpha": preset.alpha}, failures


def pair_suite() -> list[tuple]:
    """Eight ``(name, mu_x, mu0_x, alpha)`` test pairs for the inversion study."""
    g = get_preset("gmix2")
    gm = g.measure()
    lap = get_preset("laplace-signal").measure()
    unif = get_preset("smoothed-uniform").measure()
    return [
        ("shift-0.05", gm.shift(0.05), gm, None),
        ("shift-0.2", gm.shift(0.2), gm, None),
        ("weight", GaussMix(gm.atoms, [0.55, 0.45], gm.sigma), gm, None),
        ("scale", GaussMix(gm.atoms, gm.weights, 0.6), gm, None),
        ("laplace-shift", lap.shift(0.1), lap, 0.99),
        ("uniform-normal", GaussMix([0.0], [1.0], 0.6), unif, None),
        ("normal-normal", GaussMix([0.3], [1.0], 1.2), GaussMix([0.0], [1.0], 1.0), None),
        ("atoms", Discrete([-1.0, 1.0], [0.5, 0.5]), gm, None),
    ]


def _inversion_cell(args):
    name, mx, m0, alpha, noise_spec, hs = args
    return optimize_h(mx, m0, NoiseModel.parse(noise_spec), hs, alpha)


def _study_inversion(cfg, out: Path) -> tuple[dict, list]:
    noise = NoiseModel.parse(cfg["noise"])
    hs = parse_schedule(cfg["h"])
    pairs = pair_suite()
    reports = _map(_inversion_cell, [(p[0], p[1], p[2], p[3], cfg["noise"], hs) for p in pairs])
    ratios = [r.w1_actual / r.bound_tv if r.bound_tv > 0 else 0.0 for r in reports]
    if cfg.get("constant"):
        constant = float(cfg["constant"])
    else:
        constant = max([1.0] + ratios[: len(pairs) // 2])
    rows = [[p[0], r.h, r.w1_actual, r.t1, r.t2_w1, r.t2_tv, r.bound_tv, r.slack] for p, r in zip(pairs, reports)]
    _write_csv(out / "inversion.csv", ["pair_id", "h", "w1_actual", "t1", "t2_w1", "t2_tv", "bound_tv", "slack"], rows)
    slacks = [constant / q if q > 0 else math.inf for q in ratios]
    worst = min(slacks)
    failures = []
    _check(failures, "worst slack", worst >= 1.0, f"{worst:.4f} < 1")
    return {"pass": worst >= 1.0, "fitted_constant": constant, "worst_slack": worst}, failures


def _study_approx(cfg, out: Path) -> tuple[dict, list]:
    preset = get_preset(cfg["preset"])
    noise = NoiseModel.parse(cfg["noise"])
    a = float(cfg["a"])
    eta = float(cfg["eta"])
    lo, hi, n = _domain(cfg)
    f = truncate_renormalize(preset.density(lo, hi, n), a)
    rows = []
    for s in parse_schedule(cfg["sigma"]):
        spec = MomentSpec(a, coupled_order(s, a, eta))
        mu = match_moments(f, spec)
        rows.append(
            {
                "sigma": s,
                "J": spec.J,
                "n_atoms": mu.atoms.size,
                "hellinger_gap": hellinger_gap(mu, s, f, noise, lo, hi, n),
                "residual_max": float(moment_residuals(mu, f, spec).max()),
            }
        )
    write_gap_csv(rows, out / "approx.csv")
    fit = fit_loglog([r["sigma"] for r in rows], [r["hellinger_gap"] for r in rows])
    worst = max(r["residual_max"] for r in rows)
    failures = []
    _check(failures, "gap slope", fit["slope"] >= noise.beta - 0.3, f"{fit['slope']:.4f} < {noise.beta - 0.3:.2f}")
    _check(failures, "moment residual", worst <= 1e-9, f"{worst:.3e} > 1e-9")
    return {"fit": fit, "residual_max": worst, "beta": noise.beta}, failures


def _dpm_cell(args):
    preset_name, noise_spec, n, seed, iters, burn, thin, grid = args
    preset = get_preset(preset_name)
    noise = NoiseModel.parse(noise_spec)
    sample = simulate(preset, noise, n, seed)
    cfg = DPMConfig(noise=noise, iters=iters, burn=burn, thin=thin, seed=chain_seed(seed, 1))
    draws = run_chain(sample.y, cfg)
    lo, hi, gn = grid
    mu0 = preset.measure(lo, hi, gn)
    f0y = noisy_density(mu0, noise, lo, hi, gn)
    l1 = posterior_predictive_l1(draws, noise, f0y)
    w = posterior_w1(draws, mu0)
    return float(np.median(l1)), float(np.median(w)), float(draws.n_clusters().mean())


def _study_dpm_rates(cfg, out: Path) -> tuple[dict, list]:
    noise = NoiseModel.parse(cfg["noise"])
    ns = [int(v) for v in parse_schedule(cfg["n"])]
    reps = int(cfg["reps"])
    if reps < 1:
        raise UsageError("reps must be >= 1")
    master = int(cfg["seed"])
    grid = _domain(cfg)
    cells = []
    for i, n in enumerate(ns):
        for r in range(reps):
            seed = chain_seed(master, i * reps + r)
            cells.append((cfg["preset"], cfg["noise"], n, seed, int(cfg["iters"]), int(cfg["burn"]), int(cfg["thin"]), grid))
    results = _map(_dpm_cell, cells)
    rows = [[c[2], k % reps, c[3], *res] for k, (c, res) in enumerate(zip(cells, results))]
    _write_csv(out / "rates.csv", ["n", "rep", "seed", "median_l1", "median_w1", "mean_clusters"], rows)
    med_l1 = [float(np.median([rw[3] for rw in rows if rw[0] == n])) for n in ns]
    med_w1 = [float(np.median([rw[4] for rw in rows if rw[0] == n])) for n in ns]
    beta = noise.beta
    targets = {"l1": -beta / (2 * beta + 1), "w1": -1.0 / (2 * beta + 1)}
    bands = {"l1": (targets["l1"] - 0.15, targets["l1"] + 0.15), "w1": (targets["w1"] - 0.15, targets["w1"] + 0.12)}
    slopes = {
        "l1": float(np.polyfit(np.log(ns), np.log(med_l1), 1)[0]),
        "w1": float(np.polyfit(np.log(ns), np.log(med_w1), 1)[0]),
    }
    failures = []
    for key, med in (("l1", med_l1), ("w1", med_w1)):
        _check(failures, f"median {key} decreasing", all(b < a for a, b in zip(med, med[1:])), f"{med}")
        lo_b, hi_b = bands[key]
        _check(failures, f"{key} slope", lo_b <= slopes[key] <= hi_b, f"{slopes[key]:.4f} outside [{lo_b:.3f}, {hi_b:.3f}]")
    summary = {
        "n": ns,
        "median_l1": med_l1,
        "median_w1": med_w1,
        "slopes": slopes,
        "targets": targets,
        "bands": {k: list(v) for k, v in bands.items()},
        "rate_exponents": rate_exponents(None, beta),
    }
    return summary, failures


RUNNERS = {
    "simulate": _study_simulate,
    "op-norms": _study_op_norms,
    "bias": _study_bias,
    "inversion": _study_inversion,
    "approx": _study_approx,
    "dpm-rates": _study_dpm_rates,
}


def run_study(study: str, cfg: dict, out: Path) -> int:
    if study not in RUNNERS:
        raise UsageError(f"unknown study {study!r}")
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"study": study, "config": dict(sorted(cfg.items())), "version": _version(), "seed": int(cfg["seed"])}
    _dump(out / "manifest.json", manifest)
    summary, failures = RUNNERS[study](cfg, out)
    summary["failures"] = failures
    summary["pass"] = not failures
    _dump(out / "summary.json", summary)
    for f in failures:
        print(f"FAIL {study}: {f}", file=sys.stderr)
    return 1 if failures else 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wdecon", description=__doc__.split("\n\n")[0])
    p.add_argument("study", choices=STUDIES)
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default runs/<study>)")
    p.add_argument("--grid-n", dest="grid_n", type=int)
    p.add_argument("--domain", help="lo,hi of the density grid")
    for key in ("noise", "preset", "h", "n", "sigma", "reps", "iters", "burn", "thin", "a", "eta", "constant", "half-width", "points-per-h"):
        p.add_argument(f"--{key}", dest=key.replace("-", "_"))
    return p


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        cfg = {**COMMON, **DEFAULTS[args.study]}
        if args.config:
            extra = read_config(args.config)
            extra.pop("study", None)
            cfg.update(extra)
        for key, value in vars(args).items():
            if key in ("study", "config", "out") or value is None:
                continue
            cfg[key] = str(value)
        unknown = set(cfg) - set(COMMON) - set(DEFAULTS[args.study])
        if unknown:
            raise UsageError(f"options not used by {args.study}: {sorted(unknown)}")
        out = Path(args.out) if args.out else Path("runs") / args.study
        return run_study(args.study, cfg, out)
    except (UsageError, ValueError) as exc:
        print(f"wdecon: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
