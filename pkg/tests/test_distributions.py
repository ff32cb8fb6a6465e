import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

import oracles
from wdecon.distributions import (
    NoiseModel,
    gaussian_preset,
    get_preset,
    linnik_mixing_cdf,
    linnik_mixing_pdf,
    linnik_sample_scale,
    noise_cf,
    noise_density,
    noise_first_moment,
    noise_rinv,
    noise_sample,
    simulate,
)
from wdecon.numerics import norms

LAPLACE = NoiseModel("laplace")
NOISES = [LAPLACE, NoiseModel("linnik", 1.2), NoiseModel("linnik", 1.5), NoiseModel("gamma", 1.0)]


def within_3se(draws, expected):
    return abs(draws.mean() - expected) <= 3 * draws.std(ddof=1) / math.sqrt(draws.size)


class TestNoiseModel:
    def test_parse(self):
        assert NoiseModel.parse("laplace") == LAPLACE
        assert NoiseModel.parse("linnik:1.5") == NoiseModel("linnik", 1.5)
        assert NoiseModel.parse("gamma:1.0").kind == "gamma"
        with pytest.raises(ValueError):
            NoiseModel.parse("linnik")
        with pytest.raises(ValueError):
            NoiseModel.parse("cauchy:1")

    def test_linnik_two_is_laplace(self):
        assert NoiseModel("linnik", 2.0) == LAPLACE

    @pytest.mark.parametrize("beta", [0.0, -1.0, 2.5])
    def test_linnik_range(self, beta):
        with pytest.raises(ValueError):
            NoiseModel("linnik", beta)


class TestCharacteristicFunction:
    def test_examples(self):
        assert noise_cf(LAPLACE, 1.0) == 0.5
        assert abs(noise_cf(NoiseModel("linnik", 1.0), 2.0) - 1 / 3) < 1e-15
        assert abs(noise_cf(NoiseModel("gamma", 1.0), 1.0) - (0.5 + 0.5j)) < 1e-15

    def test_rinv_examples(self):
        assert noise_rinv(LAPLACE, 1.0, 0) == 2.0
        assert noise_rinv(LAPLACE, 1.0, 1) == 2.0
        assert abs(noise_rinv(NoiseModel("linnik", 1.5), 2.0) - (1 + 2**1.5)) < 1e-12

    def test_rinv_derivative_matches_difference_quotient(self):
        t = np.linspace(0.3, 30.0, 50)
        d = 1e-6
        for m in NOISES:
            fd = (noise_rinv(m, t + d) - noise_rinv(m, t - d)) / (2 * d)
            np.testing.assert_allclose(noise_rinv(m, t, 1), fd, rtol=1e-6)

    def test_linnik_derivative_singular_at_zero(self):
        with pytest.raises(ValueError):
            noise_rinv(NoiseModel("linnik", 0.8), np.array([0.0, 1.0]), 1)

    @pytest.mark.parametrize("m", NOISES, ids=lambda m: m.label)
    def test_reciprocal(self, m):
        t = np.linspace(-500, 500, 4001)
        np.testing.assert_allclose(np.abs(noise_cf(m, t)) * np.abs(noise_rinv(m, t)), 1.0, rtol=1e-14)

    @pytest.mark.parametrize("m", NOISES, ids=lambda m: m.label)
    def test_ordinary_smooth_sandwich(self, m):
        t = np.geomspace(10, 1e3, 200)
        ratio = np.abs(noise_cf(m, t)) * t**m.beta
        assert 0 < ratio.min() <= ratio.max() < 2 * ratio.min()
        slope = np.polyfit(np.log(t), np.log(np.abs(noise_cf(m, t))), 1)[0]
        assert abs(slope + m.beta) < 0.01

    @pytest.mark.parametrize("m", NOISES, ids=lambda m: m.label)
    @pytest.mark.parametrize("l", [0, 1])
    def test_growth_stable_under_refinement(self, m, l):
        def worst(k):
            t = np.linspace(1e-3, 200, k)
            return np.max(np.abs(noise_rinv(m, t, l)) / (1 + t) ** (m.beta - l))

        coarse, fine = worst(2**10), worst(2**14)
        assert np.isfinite(fine)
        assert abs(fine - coarse) / fine < 1e-3


class TestDensity:
    def test_laplace_peak(self):
        # dx = 1/256 with a node at 0
        f = noise_density(LAPLACE, -32.0, -32.0 + (2**14 - 1) / 256, 2**14)
        assert f.values[2**13] == 0.5

    def test_exponential(self):
        f = noise_density(NoiseModel("gamma", 1.0))
        assert abs(f(1.0) - math.exp(-1)) < 1e-4

    def test_linnik_symmetric(self):
        f = noise_density(NoiseModel("linnik", 1.5))
        np.testing.assert_allclose(f.values, f.values[::-1], atol=1e-10)

    @pytest.mark.parametrize("m", NOISES, ids=lambda m: m.label)
    def test_mass(self, m):
        assert abs(noise_density(m).integral() - 1.0) < 1e-4

    def test_linnik_too_singular(self):
        with pytest.raises(ValueError):
            noise_density(NoiseModel("linnik", 0.5))

    @pytest.mark.parametrize("beta", [1.5, 1.8])
    def test_linnik_matches_mixture_quadrature(self, beta):
        # a window wide enough that the truncated tail mass is below 1e-4
        f = noise_density(NoiseModel("linnik", beta), -1280.0, 1280.0, 2**20)
        xs = np.concatenate([np.linspace(0.0, 1.0, 2001), np.geomspace(1.0, 1280.0, 2000)[1:]])
        ref = np.array([oracles.linnik_mixture_density(u, beta) for u in xs])
        l1 = 2 * np.trapezoid(np.abs(f(xs) - ref), xs)
        assert l1 < 1e-3

    def test_linnik_window_keeps_node_values(self):
        # the default window agrees with a wide grid at shared nodes
        m = NoiseModel("linnik", 1.5)
        f = noise_density(m, -40.0, 40.0, 2**12)
        dx = f.dx
        g = noise_density(m, -40.0 - 2**12 * dx, -40.0 + (2**13 + 2**12 - 1) * dx, 2**14)
        inner = g.values[2**12 : 2**13]
        np.testing.assert_allclose(f.values / f.integral(), inner / np.trapezoid(inner, dx=dx), atol=2e-4)

    def test_linnik_first_moment(self):
        m = NoiseModel("linnik", 1.5)
        # E|eps| = E|L| E[1/V] with E[1/V] from quadrature
        e_inv = integrate.quad(lambda v: oracles.linnik_mixing_pdf(1.5, v) / v, 0, 1)[0]
        e_inv += integrate.quad(lambda v: oracles.linnik_mixing_pdf(1.5, v) / v, 1, np.inf)[0]
        assert abs(noise_first_moment(m) - e_inv) < 2e-3 * e_inv


class TestMixing:
    def test_examples(self):
        assert abs(linnik_mixing_pdf(1.0, 1.0) - 1 / math.pi) < 1e-12
        assert abs(linnik_mixing_pdf(1.0, 1e-12) - 2 / math.pi) < 1e-9

    def test_integrates_to_one(self):
        total = oracles.linnik_mixing_cdf(1.5, 1.0) + integrate.quad(lambda v: oracles.linnik_mixing_pdf(1.5, v), 1, np.inf)[0]
        assert abs(total - 1.0) < 1e-6

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            linnik_mixing_pdf(1.5, 0.0)

    @pytest.mark.parametrize("beta", [0.7, 1.2, 1.5, 1.9])
    def test_closed_form_cdf(self, beta):
        for v in (0.1, 0.5, 1.0, 3.0, 20.0):
            assert abs(linnik_mixing_cdf(beta, v) - oracles.linnik_mixing_cdf(beta, v)) < 1e-8

    def test_sampler_ks(self):
        v = np.sort(linnik_sample_scale(1.2, np.random.default_rng(1), 10**5))
        grid = np.geomspace(1e-3, 1e3, 300)
        ref = np.array([oracles.linnik_mixing_cdf(1.2, x) for x in grid])
        emp = np.searchsorted(v, grid, side="right") / v.size
        assert np.max(np.abs(emp - ref)) < 0.01

    def test_sampler_median(self):
        v = linnik_sample_scale(1.0, np.random.default_rng(2), 10**5)
        assert abs(np.median(v) - 1.0) < 0.02
        assert np.all(v > 0)

    @settings(max_examples=20, deadline=None)
    @given(beta=st.floats(0.2, 1.95), seed=st.integers(0, 2**32))
    def test_draws_positive(self, beta, seed):
        v = linnik_sample_scale(beta, np.random.default_rng(seed), 1000)
        assert np.all(v > 0) and np.all(np.isfinite(v))


class TestSampling:
    def test_laplace_moments(self):
        e = noise_sample(LAPLACE, 10**5, np.random.default_rng(3))
        assert abs(e.mean()) <= 0.02
        assert abs(e.var() - 2.0) < 0.1

    def test_linnik_cf(self):
        e = noise_sample(NoiseModel("linnik", 1.5), 10**5, np.random.default_rng(4))
        for t in (0.5, 1.0, 2.0):
            assert within_3se(np.cos(t * e), 1 / (1 + t**1.5))

    def test_gamma_mean(self):
        e = noise_sample(NoiseModel("gamma", 1.0), 10**5, np.random.default_rng(5))
        assert within_3se(e, 1.0)

    def test_n_zero(self):
        with pytest.raises(ValueError):
            noise_sample(LAPLACE, 0, np.random.default_rng(0))


class TestPresets:
    @pytest.mark.parametrize("name", ["gmix2", "laplace-signal", "smoothed-uniform"])
    def test_mass_and_moment(self, name):
        p = get_preset(name)
        f = p.density()
        assert abs(f.integral() - 1.0) < 1e-6
        e_abs = np.trapezoid(np.abs(f.x) * f.values, f.x)
        assert abs(e_abs - p.first_moment) < 1e-4

    def test_unknown(self):
        with pytest.raises(ValueError):
            get_preset("nope")

    def test_smoothed_uniform_support(self):
        f = get_preset("smoothed-uniform").density()
        assert np.all(f.values[np.abs(f.x) >= 1.0] == 0.0)


class TestSimulate:
    def test_deterministic(self):
        p = get_preset("gmix2")
        a = simulate(p, LAPLACE, 500, 7)
        b = simulate(p, LAPLACE, 500, 7)
        assert a.y.tobytes() == b.y.tobytes() and a.x.tobytes() == b.x.tobytes()
        np.testing.assert_array_equal(a.y, a.x + a.eps)
        assert not np.array_equal(a.y, simulate(p, LAPLACE, 500, 8).y)

    def test_n_zero(self):
        with pytest.raises(ValueError):
            simulate(get_preset("gmix2"), LAPLACE, 0, 1)

    def test_point_mass_cf(self):
        mu = 0.7
        s = simulate(gaussian_preset(mu, 0.01), LAPLACE, 20000, 11)
        for t in (0.5, 1.0, 2.0):
            target = 1 / (1 + t * t) * np.exp(1j * t * mu)
            assert within_3se(np.cos(t * s.y), target.real)
            assert within_3se(np.sin(t * s.y), target.imag)
