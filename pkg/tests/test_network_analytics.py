import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from blockage_net.link_stats import derive_beta_p
from blockage_net.network_analytics import (
    NetworkParams, QuadratureConfig, QuadratureError, average_rate, baseline_coverage_no_blockage,
    baseline_rho, conditional_coverage, coverage_curve, coverage_probability, db_to_linear,
    effective_visible_range, linear_to_db, mean_visible_area, mean_visible_bs, nearest_visible_ccdf,
    nearest_visible_pdf, rate_from_coverage, silent_fraction,
)

LAM0, MU0 = 4.4e-4, 3.85e-5
BETA0, P0 = derive_beta_p(LAM0, 15.0, 15.0)
NET0 = NetworkParams(MU0, 4.0, BETA0, P0)


def rho_alpha4(T):
    return math.sqrt(T) * (math.pi / 2 - math.atan(1 / math.sqrt(T)))


def coverage_by_independent_thinning(T, params, trials, seed):
    """Simulate the analytic model itself: every base station is visible
    independently with probability exp(-(beta r + p))."""
    rng = np.random.default_rng(seed)
    radius = 2500.0
    covered = 0
    for _ in range(trials):
        n = rng.poisson(params.mu * math.pi * radius**2)
        r = radius * np.sqrt(rng.random(n))
        vis = rng.random(n) < np.exp(-(params.beta * r + params.p))
        r = r[vis]
        if len(r) == 0:
            continue
        power = rng.exponential(1.0, len(r)) * r ** (-params.alpha)
        k = np.argmin(r)
        interference = power.sum() - power[k]
        covered += power[k] > T * interference
    return covered / trials


class TestUnits:
    def test_db(self):
        assert db_to_linear(10.0) == pytest.approx(10.0)
        assert linear_to_db(100.0) == pytest.approx(20.0)
        np.testing.assert_allclose(db_to_linear([-10, 0]), [0.1, 1.0])


class TestParams:
    @pytest.mark.parametrize("alpha", [2.0, 1.5])
    def test_alpha_rejected(self, alpha):
        with pytest.raises(ValueError, match="exceed 2"):
            NetworkParams(MU0, alpha, BETA0, P0)

    def test_mu_rejected(self):
        with pytest.raises(ValueError):
            NetworkParams(0.0, 4.0, BETA0, P0)

    def test_quadrature_config(self):
        with pytest.raises(ValueError):
            QuadratureConfig(rel_tol=0.0)
        with pytest.raises(ValueError):
            QuadratureConfig(outer_tail_mass=1.0)


class TestConnectivity:
    def test_reference_values(self):
        assert mean_visible_area(1.0, 0.0) == pytest.approx(2 * math.pi)
        assert mean_visible_area(BETA0, P0) == pytest.approx(8.06e4, rel=1e-3)
        assert effective_visible_range(1.0, 0.0) == pytest.approx(math.sqrt(2))
        assert effective_visible_range(BETA0, P0) == pytest.approx(160.2, abs=0.1)
        assert mean_visible_bs(MU0, BETA0, P0) == pytest.approx(3.10, abs=0.005)
        assert mean_visible_bs(0.0, BETA0, P0) == 0.0
        assert silent_fraction(MU0, BETA0, P0) == pytest.approx(0.045, abs=5e-4)
        assert mean_visible_area(0.0, 0.1) == math.inf

    def test_area_by_quadrature(self):
        ref, _ = integrate.quad(lambda r: 2 * math.pi * r * math.exp(-(BETA0 * r + P0)), 0, math.inf)
        assert mean_visible_area(BETA0, P0) == pytest.approx(ref, rel=1e-10)

    def test_scaling(self):
        assert mean_visible_area(2 * BETA0, P0) == pytest.approx(mean_visible_area(BETA0, P0) / 4)
        assert math.pi * effective_visible_range(BETA0, P0) ** 2 == pytest.approx(mean_visible_area(BETA0, P0))

    def test_ccdf_limits(self):
        assert nearest_visible_ccdf(0.0, MU0, BETA0, P0) == 1.0
        assert nearest_visible_ccdf(1e6, MU0, BETA0, P0) == pytest.approx(silent_fraction(MU0, BETA0, P0), rel=1e-12)
        assert silent_fraction(1.0, BETA0, P0) == pytest.approx(0.0, abs=1e-300)

    def test_ccdf_by_quadrature(self):
        for x in [1.0, 50.0, 100.0, 400.0]:
            U, _ = integrate.quad(lambda t: t * math.exp(-(BETA0 * t + P0)), 0, x)
            assert nearest_visible_ccdf(x, MU0, BETA0, P0) == pytest.approx(math.exp(-2 * math.pi * MU0 * U), rel=1e-12)

    def test_small_beta_stable(self):
        # the incomplete-gamma form must not cancel for tiny beta * x
        x = 30.0
        expected = math.exp(-2 * math.pi * MU0 * math.exp(-P0) * x * x / 2)
        assert nearest_visible_ccdf(x, MU0, 1e-12, P0) == pytest.approx(expected, rel=1e-9)

    @pytest.mark.parametrize("x", [10.0, 100.0, 500.0])
    def test_pdf_is_ccdf_derivative(self, x):
        h = 1e-4 * x
        fd = -(nearest_visible_ccdf(x + h, MU0, BETA0, P0) - nearest_visible_ccdf(x - h, MU0, BETA0, P0)) / (2 * h)
        assert nearest_visible_pdf(x, MU0, BETA0, P0) == pytest.approx(fd, rel=1e-6)

    def test_pdf_mass(self):
        f = lambda x: nearest_visible_pdf(x, MU0, BETA0, P0)
        mass = sum(integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
                   for a, b in [(0, 100), (100, 500), (500, 5000)])
        assert mass == pytest.approx(1 - silent_fraction(MU0, BETA0, P0), abs=1e-8)

    def test_pdf_linear_near_zero(self):
        a = nearest_visible_pdf(1e-4, MU0, BETA0, P0)
        b = nearest_visible_pdf(2e-4, MU0, BETA0, P0)
        assert b / a == pytest.approx(2.0, rel=1e-5)

    def test_domain(self):
        with pytest.raises(ValueError):
            nearest_visible_ccdf(-1.0, MU0, BETA0, P0)
        with pytest.raises(ValueError):
            mean_visible_area(-1.0, 0.0)


class TestBaseline:
    @pytest.mark.parametrize("T_db", [-10.0, -5.0, 0.0, 5.0, 20.0])
    def test_alpha4_closed_form(self, T_db):
        T = db_to_linear(T_db)
        assert baseline_rho(T, 4.0) == pytest.approx(rho_alpha4(T), rel=1e-9)

    def test_spot_value(self):
        assert baseline_coverage_no_blockage(1.0, 4.0) == pytest.approx(1 / (1 + math.pi / 4), abs=1e-9)

    def test_limits(self):
        assert baseline_coverage_no_blockage(1e-8, 4.0) == pytest.approx(1.0, abs=1e-3)
        assert baseline_coverage_no_blockage(1e8, 3.0) < 1e-3

    @pytest.mark.parametrize("alpha", [2.5, 3.0, 5.0])
    def test_general_alpha_by_substitution(self, alpha):
        # oracle: rho = int_1^inf T / (T + v^(alpha/2)) dv with v = u T^(2/alpha)
        T = 2.0
        ref, _ = integrate.quad(lambda v: T / (T + v ** (alpha / 2)), 1, math.inf, limit=200)
        assert baseline_rho(T, alpha) == pytest.approx(ref, rel=1e-7)

    def test_mu_invariance(self):
        a = coverage_probability(1.0, NetworkParams(MU0, 4.0, 0.0, 0.0))
        b = coverage_probability(1.0, NetworkParams(10 * MU0, 4.0, 0.0, 0.0))
        assert a == b


class TestCoverage:
    def test_bounds_and_monotone(self):
        grid = np.linspace(-10, 30, 20)
        pc = coverage_curve(grid, NET0)
        xi = silent_fraction(MU0, BETA0, P0)
        assert np.all(pc >= 0) and np.all(pc <= 1 - xi + 1e-12)
        assert np.all(np.diff(pc) <= 1e-9)

    def test_conditional(self):
        xi = silent_fraction(MU0, BETA0, P0)
        assert conditional_coverage(1.0, NET0) == pytest.approx(coverage_probability(1.0, NET0) / (1 - xi))

    def test_large_threshold(self):
        # only users seeing exactly one base station stay covered as T grows
        nbar = mean_visible_bs(MU0, BETA0, P0)
        assert coverage_probability(1e15, NET0) == pytest.approx(nbar * math.exp(-nbar), abs=1e-5)
        assert coverage_probability(1e9, NetworkParams(MU0, 4.0, 0.0, 0.0)) < 1e-3

    def test_threshold_domain(self):
        with pytest.raises(ValueError):
            coverage_probability(0.0, NET0)

    @pytest.mark.parametrize("T_db", [-5.0, 0.0, 5.0])
    def test_vanishing_blockages_reach_baseline(self, T_db):
        T = db_to_linear(T_db)
        pc = coverage_probability(T, NetworkParams(MU0, 4.0, 1e-7, 0.0))
        assert pc == pytest.approx(baseline_coverage_no_blockage(T, 4.0), abs=1e-3)

    def test_against_direct_double_integral(self):
        # oracle: integrate the original form without substitution or truncation
        T = 1.0
        mu, beta, p, a = MU0, BETA0, P0, 4.0

        def inner(x):
            f = lambda t: T * x**a * math.exp(-(beta * t + p)) * t / (t**a + T * x**a)
            return integrate.quad(f, x, math.inf, limit=200, epsabs=1e-12)[0]

        outer = lambda x: math.exp(-2 * math.pi * mu * inner(x)) * nearest_visible_pdf(x, mu, beta, p)
        ref = sum(integrate.quad(outer, lo, hi, limit=200, epsabs=1e-11)[0]
                  for lo, hi in [(0, 100), (100, 400), (400, 1500), (1500, 6000)])
        assert coverage_probability(T, NET0) == pytest.approx(ref, abs=1e-6)

    @pytest.mark.parametrize("T_db", [-3.0, 3.0])
    def test_against_independent_thinning_simulation(self, T_db):
        T = db_to_linear(T_db)
        n = 20_000
        est = coverage_by_independent_thinning(T, NET0, n, seed=int(T_db) + 10)
        pc = coverage_probability(T, NET0)
        assert abs(est - pc) < 3 * math.sqrt(pc * (1 - pc) / n)

    def test_blockages_help_and_mu_matters(self):
        pc0 = coverage_probability(1.0, NET0)
        assert pc0 > baseline_coverage_no_blockage(1.0, 4.0)
        pc10 = coverage_probability(1.0, NetworkParams(10 * MU0, 4.0, BETA0, P0))
        assert abs(pc10 - pc0) > 0.01

    @settings(max_examples=15, deadline=None)
    @given(T_db=st.floats(-10, 20), scale=st.floats(0.3, 3.0))
    def test_in_bounds(self, T_db, scale):
        params = NetworkParams(MU0 * scale, 4.0, BETA0, P0)
        pc = coverage_probability(db_to_linear(T_db), params)
        assert 0.0 <= pc <= 1 - silent_fraction(params.mu, BETA0, P0) + 1e-12

    def test_quadrature_failure_reported(self):
        cfg = QuadratureConfig(rel_tol=1e-14, abs_tol=1e-300, max_depth=2)
        with pytest.raises(QuadratureError) as err:
            coverage_probability(1.0, NET0, cfg)
        assert math.isfinite(err.value.estimate)


class TestRate:
    def test_zero_coverage(self):
        assert rate_from_coverage(lambda t: 0.0, 1e4, 0.0) == 0.0

    def test_full_coverage_is_log_cap(self):
        assert rate_from_coverage(lambda t: 1.0, 1e4, 1.0) == pytest.approx(math.log2(1 + 1e4), rel=1e-8)

    def test_baseline_by_quadrature(self):
        params = NetworkParams(MU0, 4.0, 0.0, 0.0)
        t_max = params.t_max
        f = lambda s: 1.0 / (1.0 + rho_alpha4(math.exp(s))) * math.exp(s) / (1 + math.exp(s))
        ref = integrate.quad(f, -40, math.log(t_max), limit=400)[0] / math.log(2)
        assert average_rate(params) == pytest.approx(ref, rel=1e-5)

    def test_blockage_rate_exceeds_baseline(self):
        assert average_rate(NET0) > average_rate(NetworkParams(MU0, 4.0, 0.0, 0.0))
