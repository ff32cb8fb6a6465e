import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

import oracles
from wdecon.distributions import NoiseModel, get_preset, noise_sample, simulate
from wdecon.dpm import (
    DPMConfig,
    PosteriorDraws,
    augment_laplace,
    chain_seed,
    draw_noise,
    gibbs_sweep,
    initial_state,
    log_laplace_normal,
    posterior_predictive_l1,
    posterior_w1,
    prior_draws,
    run_chain,
    sample_base,
)
from wdecon.measures import noisy_density

LAPLACE = NoiseModel("laplace")


@pytest.fixture(scope="module")
def gmix_run():
    p = get_preset("gmix2")
    s = simulate(p, LAPLACE, 2000, 1)
    return p, s, run_chain(s.y, DPMConfig(seed=1))


class TestAugmentation:
    def test_marginal_mean(self):
        rng = np.random.default_rng(0)
        r = noise_sample(LAPLACE, 10**5, rng)
        w = augment_laplace(r, rng)
        assert abs(w.mean() - 2.0) < 0.05

    def test_inverse_gaussian_mean(self):
        w = augment_laplace(np.ones(10**5), np.random.default_rng(1))
        assert abs(np.mean(1.0 / w) - 1.0) < 0.02

    def test_zero_residual(self):
        # the conditional at r = 0 is Gamma(1/2, rate 1/2), mean 1
        w = augment_laplace(np.zeros(10**5), np.random.default_rng(2))
        assert abs(w.mean() - 1.0) < 0.03

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-50, 50), st.floats(0.2, 5.0), st.integers(0, 2**32))
    def test_positive(self, r, rate, seed):
        w = augment_laplace(np.full(100, r), np.random.default_rng(seed), rate)
        assert np.all(w > 0) and np.all(np.isfinite(w))

    def test_collapse_reproduces_likelihood(self):
        # E_W N(r; 0, s^2 + W) with W ~ Exp(1/2) is the Laplace-normal density
        rng = np.random.default_rng(3)
        w = rng.exponential(2.0, size=10**6)
        for r, s in zip(rng.uniform(-3, 3, 20), rng.uniform(0.1, 1.0, 20)):
            var = s * s + w
            mc = np.mean(np.exp(-0.5 * r * r / var) / np.sqrt(2 * math.pi * var))
            exact = oracles.laplace_normal_conv(r, s)
            assert abs(mc - exact) < 0.01 * exact

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-30, 30), st.floats(0.05, 3.0))
    def test_closed_form_likelihood(self, r, s):
        ref = oracles.laplace_normal_conv(r, s)
        assert abs(math.exp(log_laplace_normal(r, s)) - ref) <= 1e-10 * ref + 1e-300

    def test_likelihood_rate(self):
        # Laplace(rate v) + N(0, s^2) is (v/1) * [Laplace(1) + N(0, (v s)^2)] at v r
        r, s, v = 0.7, 0.4, 2.5
        assert abs(log_laplace_normal(r, s, v) - math.log(v * oracles.laplace_normal_conv(v * r, v * s))) < 1e-12

    @pytest.mark.parametrize("r,s", [(0.7, 0.5), (-2.0, 0.3), (0.0, 1.0), (6.0, 0.2)])
    def test_noise_draw_moments(self, r, s):
        e = draw_noise(np.full(10**5, r), s, 1.0, np.random.default_rng(4))

        def dens(x):
            return 0.5 * math.exp(-abs(x)) * oracles.normal_pdf(r - x, 0.0, s)

        def total(g, lo=-np.inf):
            cuts = sorted({lo, max(lo, min(0.0, r)), max(lo, r), np.inf})
            return sum(integrate.quad(g, a, b)[0] for a, b in zip(cuts, cuts[1:]))

        z = total(dens)
        m1 = total(lambda x: x * dens(x)) / z
        assert abs(e.mean() - m1) <= 4 * e.std() / math.sqrt(e.size)
        p_pos = total(dens, 0.0) / z
        assert abs(np.mean(e > 0) - p_pos) <= 4 * math.sqrt(p_pos * (1 - p_pos) / e.size) + 1e-12


class TestBase:
    @pytest.mark.parametrize("delta", [1.0, 0.5])
    def test_base_moment(self, delta):
        # E|u|^delta = 1 / (delta b0) for density c0 exp(-b0 |u|^delta)
        u = sample_base(2.0, delta, np.random.default_rng(5), size=10**5)
        v = np.abs(u) ** delta
        assert abs(v.mean() - 1 / (2.0 * delta)) <= 4 * v.std() / math.sqrt(v.size)
        assert abs(np.mean(u > 0) - 0.5) < 0.01


class TestSweep:
    def test_single_observation(self):
        y = np.array([0.3])
        cfg = DPMConfig()
        state = initial_state(y, cfg)
        rng = np.random.default_rng(6)
        for _ in range(200):
            state, _ = gibbs_sweep(state, y, cfg, rng)
            assert state.n_clusters == 1
            state.check()

    def test_state_stays_valid(self):
        y = simulate(get_preset("gmix2"), LAPLACE, 200, 2).y
        for noise in (LAPLACE, NoiseModel("linnik", 1.5)):
            cfg = DPMConfig(noise=noise)
            ys = np.sort(y)
            state = initial_state(ys, cfg)
            rng = np.random.default_rng(7)
            for _ in range(100):
                state, acc = gibbs_sweep(state, ys, cfg, rng)
                state.check()
                assert 0 <= acc["loc"] <= 1 and acc["sigma"] in (0.0, 1.0)

    def test_sigma_support(self):
        y = simulate(get_preset("gmix2"), LAPLACE, 10, 3).y
        d = run_chain(y, DPMConfig(iters=10**5, burn=0, thin=100, seed=2))
        assert np.all(d.sigmas > 0) and np.all(np.isfinite(d.sigmas))
        d.final_state.check()


class TestChain:
    def test_deterministic(self):
        y = simulate(get_preset("gmix2"), LAPLACE, 300, 4).y
        cfg = DPMConfig(iters=300, burn=100, thin=5, seed=11)
        a, b = run_chain(y, cfg), run_chain(y, cfg)
        assert a.sigmas.tobytes() == b.sigmas.tobytes()
        assert all(x.tobytes() == z.tobytes() for x, z in zip(a.atoms, b.atoms))
        assert not np.array_equal(a.sigmas, run_chain(y, DPMConfig(iters=300, burn=100, thin=5, seed=12)).sigmas)

    def test_linnik_deterministic(self):
        y = simulate(get_preset("gmix2"), NoiseModel("linnik", 1.5), 200, 4).y
        cfg = DPMConfig(noise=NoiseModel("linnik", 1.5), iters=200, burn=100, thin=10, seed=3)
        assert run_chain(y, cfg).sigmas.tobytes() == run_chain(y, cfg).sigmas.tobytes()

    @pytest.mark.parametrize("iters,burn,thin", [(300, 100, 10), (250, 50, 1), (101, 100, 7)])
    def test_draw_count(self, iters, burn, thin):
        y = simulate(get_preset("gmix2"), LAPLACE, 50, 5).y
        d = run_chain(y, DPMConfig(iters=iters, burn=burn, thin=thin))
        assert len(d) == math.ceil((iters - burn) / thin)
        assert np.all(d.sigmas > 0)
        for w in d.weights:
            assert abs(w.sum() - 1.0) < 1e-12

    def test_empty_data(self):
        with pytest.raises(ValueError):
            run_chain([], DPMConfig())

    def test_cluster_envelope(self, gmix_run):
        _, _, d = gmix_run
        assert 2 <= d.n_clusters().mean() <= 15

    def test_exchangeable(self):
        s = simulate(get_preset("gmix2"), LAPLACE, 200, 6)
        cfg = DPMConfig(iters=700, burn=200, thin=1, seed=8)
        mu0 = get_preset("gmix2").measure()
        a = posterior_w1(run_chain(s.y, cfg), mu0)
        b = posterior_w1(run_chain(np.random.default_rng(9).permutation(s.y), cfg), mu0)
        assert a.size == 500
        grid = np.union1d(a, b)
        ks = np.max(np.abs(np.searchsorted(np.sort(a), grid, "right") - np.searchsorted(np.sort(b), grid, "right"))) / a.size
        assert ks < 0.05

    def test_chain_seeds(self):
        seeds = {chain_seed(7, i) for i in range(100)}
        assert len(seeds) == 100 and all(0 <= s < 2**64 for s in seeds)
        assert chain_seed(7, 0) == chain_seed(7, 0)


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            {"noise": NoiseModel("gamma", 1.0)},
            {"noise": NoiseModel("linnik", 0.8)},
            {"base_delta": 0.0},
            {"base_delta": 1.5},
            {"sigma_nu": 0.0},
            {"sigma_gamma": -1.0},
            {"concentration": 0.0},
            {"iters": 100, "burn": 100},
            {"thin": 0},
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            DPMConfig(**kw)

    def test_linnik_two_is_laplace(self):
        assert DPMConfig(noise=NoiseModel("linnik", 2.0)).noise == LAPLACE


class TestFunctionals:
    def test_self_distance(self, gmix_run):
        _, _, d = gmix_run
        assert posterior_w1(d, d.mixture(3))[3] < 1e-8
        assert np.all(posterior_w1(d, d.mixture(0)) >= 0)

    def test_posterior_beats_prior(self, gmix_run):
        p, _, d = gmix_run
        prior = prior_draws(DPMConfig(), 100, np.random.default_rng(10))
        assert np.median(posterior_w1(d, p.measure())) < np.median(posterior_w1(prior, p.measure()))

    def test_l1_range(self, gmix_run):
        p, _, d = gmix_run
        f0y = noisy_density(p.measure(), LAPLACE, -40.0, 40.0, 2**14)
        l1 = posterior_predictive_l1(d, LAPLACE, f0y)
        assert np.all((l1 >= 0) & (l1 <= 2))
        own = noisy_density(d.mixture(2), LAPLACE, -40.0, 40.0, 2**14)
        assert posterior_predictive_l1(d, LAPLACE, own)[2] < 1e-4

    def test_label_invariance(self, gmix_run):
        p, _, d = gmix_run
        k = int(np.argmax(d.n_clusters()))
        perm = np.random.default_rng(11).permutation(d.atoms[k].size)
        shuffled = PosteriorDraws([d.atoms[k][perm]], [d.weights[k][perm]], d.sigmas[k : k + 1])
        f0y = noisy_density(p.measure(), LAPLACE, -40.0, 40.0, 2**14)
        one = PosteriorDraws([d.atoms[k]], [d.weights[k]], d.sigmas[k : k + 1])
        assert posterior_w1(shuffled, p.measure())[0] == pytest.approx(posterior_w1(one, p.measure())[0], abs=1e-12)
        assert posterior_predictive_l1(shuffled, LAPLACE, f0y)[0] == pytest.approx(
            posterior_predictive_l1(one, LAPLACE, f0y)[0], abs=1e-12
        )

    def test_jsonl_round_trip(self, gmix_run, tmp_path):
        _, _, d = gmix_run
        d.to_jsonl(tmp_path / "draws.jsonl")
        e = PosteriorDraws.from_jsonl(tmp_path / "draws.jsonl")
        assert e.sigmas.tobytes() == d.sigmas.tobytes()
        assert all(np.array_equal(a, b) for a, b in zip(d.atoms, e.atoms))
        assert all(np.array_equal(a, b) for a, b in zip(d.weights, e.weights))

    def test_prior_draws(self):
        pr = prior_draws(DPMConfig(), 20, np.random.default_rng(12))
        assert len(pr) == 20
        assert all(abs(w.sum() - 1) < 1e-12 for w in pr.weights)
        assert np.all(pr.sigmas > 0)
