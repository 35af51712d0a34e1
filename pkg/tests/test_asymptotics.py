import math

import numpy as np
import pytest

from criticalbranch import asymptotics as asy
from criticalbranch import karamata as km
from criticalbranch import (
    classify,
    make_perturbed_offspring,
    make_stable_immigration,
    make_stable_offspring,
)
from criticalbranch.kolmogorov import closed_form_gf, solve_gf

HALF = make_stable_offspring(0.5, 1.0)
BINARY = make_stable_offspring(1.0, 1.0)
IMM = make_stable_immigration(0.4, 0.1)
IMM_PERTURBED = make_stable_immigration(0.4, 0.1, kappa=0.25)
REGIME = classify(HALF, IMM)
RATIO = km.ratio_of(HALF.slowly_varying(), IMM.slowly_varying())
RATIO_PERTURBED = km.ratio_of(HALF.slowly_varying(), IMM_PERTURBED.slowly_varying())


class TestInvariantGf:
    def test_vanishes_at_zero(self):
        assert asy.invariant_gf(HALF, 0.0) == 0.0

    def test_half_index_closed_form(self):
        want = 2.0 * (math.sqrt(2.0) - 1.0)
        assert asy.invariant_gf(HALF, 0.5) == pytest.approx(want, abs=1e-12)

    @pytest.mark.parametrize("s", np.arange(0.1, 0.95, 0.1))
    def test_quadrature_matches_tail_form(self, s):
        quad_val = asy.invariant_gf(HALF, float(s), method="quad")
        tail_val = asy.invariant_gf_via_tail(HALF, float(s))
        assert quad_val == pytest.approx(tail_val, abs=1e-10)

    def test_series_matches_closed_coefficients(self):
        got = asy.invariant_series(HALF, 48).coeffs
        want = asy.stable_invariant_coeffs(0.5, 1.0, 48)
        assert np.max(np.abs(got - want)) < 1e-12
        assert np.all(got >= -1e-10)

    def test_series_for_unit_index_is_geometric(self):
        got = asy.invariant_series(BINARY, 16).coeffs
        assert np.allclose(got[1:], 1.0, atol=1e-12)


class TestSurvivalExpansion:
    def test_figure_point_value(self):
        n_fn = km.Normalizer.half_log()
        got = asy.survival_expansion(0.2, 0.9, n_fn, 50.0)
        assert got == pytest.approx(7.319e-5, rel=1e-3)
        # the three factors behind that number
        assert n_fn(50.0) == pytest.approx(1.127168, abs=1e-6)
        assert (0.2 * 50.0) ** 5.0 == pytest.approx(1e5)
        assert 1.0 + math.log(9.0) / 0.4 == pytest.approx(6.49306, abs=1e-5)

    def test_second_preset_accepted(self):
        assert asy.survival_expansion(0.9, 0.2, km.Normalizer.log_power(0.9), 50.0) > 0.0

    @pytest.mark.parametrize("nu", [0.2, 0.5, 0.9, 1.0])
    def test_canonical_gap_bound(self, nu):
        for t in (10.0 / nu, 100.0 / nu):
            q = closed_form_gf(nu, 1.0, t, 0.0).R
            assert abs((nu * t) ** (1.0 / nu) * q - 1.0) <= 2.0 / (nu**2 * t)


class TestBalanceResiduals:
    def test_canonical_is_exact(self):
        L = HALF.slowly_varying()
        res = asy.balance_residuals(HALF, L, 20.0, 0.3)
        assert abs(res.residual_exact) <= 1e-9
        # with a flat factor the drift term vanishes and lhs equals nu t
        assert res.lhs == pytest.approx(0.5 * 20.0, abs=1e-7)

    def test_time_zero(self):
        res = asy.balance_residuals(HALF, HALF.slowly_varying(), 0.0, 0.3)
        assert res.residual_exact == 0.0 and res.residual_asymptotic == 0.0

    def test_power_corrected_factor(self):
        law = make_perturbed_offspring(0.5, 1.0, rho=0.3, p=0.5)
        L = law.slowly_varying()
        for t in (5.0, 50.0, 500.0):
            res = asy.balance_residuals(law, L, t, 0.2)
            assert abs(res.residual_exact) <= 1e-8
            assert abs(res.residual_asymptotic) <= 5.0 * math.log(t + 2.0)


class TestLocalRatio:
    def test_unit_index_measured_closed_form(self):
        for t in (5.0, 50.0):
            measured = asy.local_ratio_measured(BINARY, t)
            assert measured == pytest.approx(1.0 / (1.0 + t), abs=1e-9)
            assert measured * t == pytest.approx(1.0, abs=2.0 / t)

    def test_predicted_factor_at_figure_point(self):
        # 1 + ln(a0 nu t)/(nu^2 t) at (0.2, 0.9, 50) is 1 + ln(9)/2
        got = asy.local_ratio_predicted(0.2, 0.9, 50.0)
        assert got * (0.9 * 0.2 * 50.0) == pytest.approx(1.0 + math.log(9.0) / 2.0, abs=1e-12)

    def test_large_time_agreement(self):
        t = 1e4
        measured = asy.local_ratio_measured(BINARY, t)
        assert abs(measured * t - 1.0) <= 10.0 * math.log(t) / t


class TestSlowVariationReport:
    def test_unit_index_ratio(self):
        report = asy.slow_variation_report(BINARY, [1e3, 2e3])
        assert report.errors.size == 1
        assert report.errors[0] < 0.01
        assert report.passes

    def test_half_index_level(self):
        report = asy.slow_variation_report(HALF, [1e3, 2e3])
        # (nu t)^(1+1/nu) p1(t) a0 settles at a0^(-1/nu) = 1 here
        assert report.values[0] == pytest.approx(1.0, rel=2e-2)

    def test_single_point_grid(self):
        report = asy.slow_variation_report(HALF, [100.0])
        assert report.errors.size == 0
        assert report.passes

    def test_grid_must_increase(self):
        with pytest.raises(ValueError):
            asy.slow_variation_report(HALF, [10.0, 10.0])


class TestLimitGf:
    def test_flat_ratio_gives_pure_exponent(self):
        assert asy.limit_gf(REGIME, RATIO, 0.0) == pytest.approx(math.e, abs=1e-14)
        assert asy.limit_gf(REGIME, RATIO, 0.5) == pytest.approx(math.exp(2.0**0.1), abs=1e-12)

    def test_eligibility_errors(self):
        bad_regime = classify(HALF, make_stable_immigration(0.9, 0.1))
        with pytest.raises(asy.EligibilityError):
            asy.limit_gf(bad_regime, RATIO, 0.0)
        mismatched = km.ratio_of(km.constant(1.0), km.constant(0.2))
        with pytest.raises(asy.EligibilityError):
            asy.limit_gf(REGIME, mismatched, 0.0)

    def test_perturbed_tail_integral_scaling(self):
        # B(s) = -(kappa/a0) (1-s)^mu / mu exactly for the shipped family
        g = abs(REGIME.gamma)
        for s in (0.9, 0.99, 0.999):
            got = asy._tail_gap_integral(RATIO_PERTURBED, g, 1.0 / (1.0 - s))
            want = -(0.25 / 1.0) * (1.0 - s) ** REGIME.mu / REGIME.mu
            assert got == pytest.approx(want, rel=1e-6)

    def test_series_anchor_and_positivity(self):
        measure = asy.limit_gf_series(HALF, IMM, REGIME, RATIO, 32)
        assert measure.coeffs[0] == pytest.approx(math.e, abs=1e-12)
        assert measure.coeffs[1] == pytest.approx(0.1 * math.e, abs=1e-12)
        assert np.all(measure.coeffs >= -1e-10)


class TestScaledGfConvergence:
    def test_canonical_limit_hit_at_origin(self):
        report = asy.scaled_gf_convergence(HALF, IMM, REGIME, RATIO, [10.0, 100.0, 1000.0], 0.0)
        assert np.max(np.abs(report.values)) <= 1e-6
        assert report.passes
        assert "flat" in report.note

    def test_perturbed_rate_exponent(self):
        grid = np.logspace(2, 4, 7)
        report = asy.scaled_gf_convergence(
            HALF, IMM_PERTURBED, REGIME, RATIO_PERTURBED, grid, 0.5
        )
        assert report.target == pytest.approx(-REGIME.mu / REGIME.nu)
        assert report.passes
        assert abs(report.slope - report.target) <= 0.15 * abs(report.target)


class TestRatioLimit:
    def test_normalization(self):
        assert asy.ratio_limit_gf(HALF, IMM, 0.0) == 1.0
        series = asy.ratio_limit_series(HALF, IMM, 24)
        assert series.coeffs[0] == 1.0
        assert np.all(series.coeffs >= -1e-10)

    def test_half_point_value(self):
        assert asy.ratio_limit_gf(HALF, IMM, 0.5) == pytest.approx(
            math.exp(2.0**0.1 - 1.0), abs=1e-10
        )

    def test_first_coefficient(self):
        series = asy.ratio_limit_series(HALF, IMM, 8)
        assert series.coeffs[1] == pytest.approx(0.1, abs=1e-14)


class TestScalingConstant:
    def test_canonical_values(self):
        res = asy.scaling_constant(HALF, IMM, REGIME, RATIO, 100.0)
        assert res.u0 == pytest.approx(math.e, abs=1e-14)
        assert res.J_mu == 0.0
        assert abs(res.residual) <= 1e-8

    @pytest.mark.parametrize("s", [0.0, 0.3, 0.7])
    def test_measure_factorization_identity(self, s):
        u0 = asy.scaling_constant(HALF, IMM, REGIME, RATIO, 10.0).u0
        assert u0 * asy.ratio_limit_gf(HALF, IMM, s) == pytest.approx(
            asy.limit_gf(REGIME, RATIO, s), abs=1e-10
        )

    def test_perturbed_constant_and_defect_scaling(self):
        res = asy.scaling_constant(HALF, IMM_PERTURBED, REGIME, RATIO_PERTURBED, 100.0)
        assert res.u0 == pytest.approx(math.exp(1.0 - 0.25 / REGIME.mu), rel=1e-10)
        # defect scales like q(t)^mu; fitted exponent within 10%
        ts = [50.0, 200.0, 800.0, 3200.0]
        js, qs = [], []
        for t in ts:
            js.append(abs(asy.scaling_constant(HALF, IMM_PERTURBED, REGIME, RATIO_PERTURBED, t).J_mu))
            qs.append(solve_gf(HALF, t, 0.0).R)
        slope = np.polyfit(np.log(qs), np.log(js), 1)[0]
        assert slope == pytest.approx(REGIME.mu, rel=0.1)
        # residual is second order in the defect
        x = 0.8333333333333333 * qs[0] ** REGIME.mu
        assert abs(res.residual) <= res.u0 * x**2


class TestConditionedGf:
    def test_vanishes_at_origin(self):
        res = asy.conditioned_gf(HALF, 10.0, 0.0)
        assert res.value == 0.0 and res.slack == 0.0

    def test_slack_value_at_hundred(self):
        res = asy.conditioned_gf(HALF, 100.0, 0.5)
        assert res.slack == pytest.approx(0.80239, abs=1e-4)
        assert res.error == pytest.approx(res.slack / (2.0 * (math.sqrt(2.0) - 1.0)) - 1.0)
        assert abs(res.error) == pytest.approx(0.031, abs=5e-3)

    def test_argwise_consistency(self):
        t, s = 25.0, 0.4
        q = solve_gf(HALF, t, 0.0).R
        r = solve_gf(HALF, t, s).R
        value = asy.conditioned_gf(HALF, t, s).value
        assert abs(value * q + r - q) <= 1e-14

    def test_log_corrected_decay_of_gap(self):
        grid = np.logspace(2, 5, 7)
        errs = np.array([abs(asy.conditioned_gf(HALF, t, 0.5).error) for t in grid])
        slope = np.polyfit(np.log(grid), np.log(errs), 1)[0]
        assert slope == pytest.approx(-1.0, abs=0.1)


class TestRelativeLocalGf:
    def test_vanishes_at_origin(self):
        assert asy.relative_local_gf(BINARY, 5.0, 0.0) == 0.0

    def test_unit_index_limit(self):
        got = asy.relative_local_gf(BINARY, 1000.0, 0.5)
        want = BINARY.a0 * asy.invariant_gf(BINARY, 0.5)
        assert got == pytest.approx(want, rel=5e-3)

    def test_unit_index_coefficient_ratio(self):
        # p_2(t)/p_1(t) approaches v_2 = 1 for the unit-index family
        from criticalbranch.kolmogorov import solve_gf_series

        sol = solve_gf_series(BINARY, 1000.0, 4)
        assert sol.F[2] / sol.F[1] == pytest.approx(1.0, abs=2e-3)

    def test_measure_scaling(self):
        law = make_stable_offspring(0.5, 0.2)
        v = asy.relative_measure_series(law, 16).coeffs[1:]
        mu = asy.invariant_series(law, 16).coeffs[1:]
        assert np.allclose(v / mu, law.a0, atol=1e-12)


class TestInvarianceResidual:
    def test_time_zero_exact(self):
        measure = asy.limit_gf_series(HALF, IMM, REGIME, RATIO, 64)
        resid, _ = asy.invariance_residual(measure, HALF, IMM, 0.0, 16)
        assert resid <= 1e-14

    def test_pi_tag_equivalent(self):
        measure = asy.ratio_limit_series(HALF, IMM, 128)
        resid, _ = asy.invariance_residual(measure, HALF, IMM, 1.0, 32)
        assert resid <= 1e-6

    def test_rejects_wrong_tag(self):
        with pytest.raises(ValueError):
            asy.invariance_residual(asy.invariant_series(HALF, 16), HALF, IMM, 1.0, 8)

    def test_window_must_fit(self):
        measure = asy.ratio_limit_series(HALF, IMM, 16)
        with pytest.raises(ValueError):
            asy.invariance_residual(measure, HALF, IMM, 1.0, 32)


class TestPartialSums:
    def test_unit_index_exact(self):
        report = asy.partial_sum_report(BINARY, [10, 100, 1000])
        assert np.allclose(report.values, [10.0, 100.0, 1000.0], rtol=1e-12)
        assert report.passes

    def test_half_index_window(self):
        report = asy.partial_sum_report(HALF, [100, 1000, 10000])
        assert 0.98 <= report.values[-1] / (10000.0**0.5 / (0.25 * math.gamma(0.5))) <= 1.02
        assert report.slope == pytest.approx(0.5, abs=0.02)

    def test_single_point_grid_has_no_slope(self):
        report = asy.partial_sum_report(HALF, [1000])
        assert report.slope is None

    def test_requires_canonical(self):
        with pytest.raises(ValueError):
            asy.partial_sum_report(make_perturbed_offspring(0.5, 1.0, 0.3, 0.5), [10])
