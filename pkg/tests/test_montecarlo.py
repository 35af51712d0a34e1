import math

import numpy as np
import pytest

from criticalbranch import (
    make_finite_immigration,
    make_finite_offspring,
    make_stable_immigration,
    make_stable_offspring,
)
from criticalbranch import montecarlo as mc
from criticalbranch.oracle import build_generator, uniformized_transition

BINARY = make_finite_offspring([1.0, -2.0, 1.0])
HALF = make_stable_offspring(0.5, 1.0)
ARRIVALS = make_finite_immigration([-1.0, 1.0])
HEAVY_IMM = make_stable_immigration(0.4, 0.1)


class TestSampleOffspring:
    def test_binary_inverse_cdf(self):
        # pmf: {0: 1/2, 2: 1/2}
        assert mc.sample_offspring(BINARY, 0.3) == 0
        assert mc.sample_offspring(BINARY, 0.7) == 2

    def test_half_index_prefix(self):
        # lifetime mean 2/3; p0 = 2/3, p2 = 1/4, so u = 0.9 falls at k >= 2
        assert HALF.lifetime_mean == pytest.approx(2.0 / 3.0)
        assert mc.sample_offspring(HALF, 0.5) == 0
        assert mc.sample_offspring(HALF, 0.9) >= 2

    def test_rejects_bad_uniform(self):
        with pytest.raises(ValueError):
            mc.sample_offspring(HALF, 1.0)

    def test_empirical_pmf_matches_rates(self):
        rng = np.random.default_rng(7)
        sampler = mc._Sampler(mc._offspring_pmf(HALF))
        draws = sampler.draw(rng.random(1_000_000))
        lam = HALF.lifetime_mean
        pmf = lam * HALF.rates_up_to(10)
        pmf[1] = 0.0
        n = draws.size
        for k in range(11):
            observed = np.mean(draws == k)
            se = math.sqrt(max(pmf[k] * (1.0 - pmf[k]), 1e-12) / n)
            assert abs(observed - pmf[k]) <= 4.0 * se


class TestSimulate:
    def test_initial_states_on_grid(self):
        cfg = mc.SimConfig(offspring=BINARY, immigration=None, grid=(0.0,), replicas=100, seed=1)
        obs = mc.simulate(cfg)
        assert np.all(obs.states[:, 0] == 1)
        cfg2 = mc.SimConfig(offspring=BINARY, immigration=ARRIVALS, grid=(0.0,), replicas=100, seed=1)
        assert np.all(mc.simulate(cfg2).states[:, 0] == 0)

    def test_absorption_is_permanent(self):
        cfg = mc.SimConfig(offspring=BINARY, immigration=None, grid=(1.0, 2.0, 4.0), replicas=2000, seed=3)
        obs = mc.simulate(cfg)
        dead_at_1 = obs.states[:, 0] == 0
        assert np.all(obs.states[dead_at_1, 1:] == 0)

    def test_bitwise_determinism_and_thread_independence(self):
        cfg = mc.SimConfig(
            offspring=HALF, immigration=HEAVY_IMM, grid=(1.0, 5.0), replicas=20_000, seed=42, cap=1000
        )
        a = mc.simulate(cfg, threads=1)
        b = mc.simulate(cfg, threads=1)
        c = mc.simulate(cfg, threads=4)
        assert np.array_equal(a.states, b.states) and np.array_equal(a.capped, b.capped)
        assert np.array_equal(a.states, c.states) and np.array_equal(a.capped, c.capped)

    def test_capped_fraction_small_for_critical_paths(self):
        cfg = mc.SimConfig(offspring=HALF, immigration=None, grid=(100.0,), replicas=10_000, seed=5, cap=10**6)
        obs = mc.simulate(cfg)
        assert obs.capped.mean() < 1e-3

    def test_config_validation(self):
        with pytest.raises(ValueError):
            mc.SimConfig(offspring=HALF, immigration=None, grid=(1.0,), replicas=0, seed=1)
        with pytest.raises(ValueError):
            mc.SimConfig(offspring=HALF, immigration=None, grid=(2.0, 1.0), replicas=10, seed=1)
        with pytest.raises(ValueError):
            mc.SimConfig(offspring=HALF, immigration=None, grid=(1.0,), replicas=10, seed=1, cap=0)


class TestEstimate:
    def test_survival_at_time_zero(self):
        cfg = mc.SimConfig(offspring=HALF, immigration=None, grid=(0.0,), replicas=500, seed=2)
        est = mc.estimate(cfg, "survival", 0.0)
        assert est.value == 1.0 and est.se == 0.0

    def test_binary_survival_covers_closed_form(self):
        cfg = mc.SimConfig(offspring=BINARY, immigration=None, grid=(2.0,), replicas=100_000, seed=11)
        est = mc.estimate(cfg, "survival", 2.0)
        assert abs(est.value - 1.0 / 3.0) <= 3.0 * est.se

    def test_half_index_survival_covers_closed_form(self):
        cfg = mc.SimConfig(offspring=HALF, immigration=None, grid=(10.0,), replicas=100_000, seed=12)
        est = mc.estimate(cfg, "survival", 10.0)
        assert abs(est.value - 1.0 / 36.0) <= 3.0 * est.se
        assert est.se == pytest.approx(5e-4, rel=0.2)

    def test_immigration_mean_covers_linear_growth(self):
        cfg = mc.SimConfig(offspring=BINARY, immigration=ARRIVALS, grid=(3.0,), replicas=20_000, seed=13)
        est = mc.estimate(cfg, "mean", 3.0)
        assert abs(est.value - 3.0) <= 3.0 * est.se

    def test_state_probability_covers_oracle(self):
        cfg = mc.SimConfig(offspring=HALF, immigration=HEAVY_IMM, grid=(1.0,), replicas=20_000, seed=14)
        est = mc.estimate(cfg, "p", 1.0, j=0)
        want = uniformized_transition(build_generator(HALF, HEAVY_IMM, 128), 1.0)[0, 0]
        assert abs(est.value - want) <= 3.0 * est.se

    def test_ratio_covers_limit_coefficient(self):
        from criticalbranch.asymptotics import ratio_limit_series

        cfg = mc.SimConfig(
            offspring=HALF, immigration=HEAVY_IMM, grid=(50.0,), replicas=10_000, seed=15, cap=200
        )
        est = mc.estimate(cfg, "ratio", 50.0, j=1)
        pi1 = float(ratio_limit_series(HALF, HEAVY_IMM, 4).coeffs[1])
        assert abs(est.value - pi1) <= 3.0 * est.se
        assert est.capped > 0  # exclusions are counted, never silent

    def test_ratio_needs_denominator_mass(self):
        cfg = mc.SimConfig(offspring=BINARY, immigration=ARRIVALS, grid=(50.0,), replicas=200, seed=16)
        with pytest.raises(mc.InsufficientEventsError):
            mc.estimate(cfg, "ratio", 50.0, j=1)

    def test_unknown_grid_point_rejected(self):
        cfg = mc.SimConfig(offspring=HALF, immigration=None, grid=(1.0,), replicas=100, seed=17)
        with pytest.raises(ValueError):
            mc.estimate(cfg, "survival", 2.0)


def test_three_sigma_coverage_rate():
    # 200 repeated experiments; the 3 SE band should cover the closed-form
    # survival probability in at least 99% of them
    q_true = 1.0 / 36.0
    misses = 0
    for rep in range(200):
        cfg = mc.SimConfig(offspring=HALF, immigration=None, grid=(10.0,), replicas=10_000, seed=9_000 + rep)
        est = mc.estimate(cfg, "survival", 10.0)
        if abs(est.value - q_true) > 3.0 * est.se:
            misses += 1
    assert misses <= 2
