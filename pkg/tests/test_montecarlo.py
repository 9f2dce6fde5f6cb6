import math

import numpy as np
import pytest

from blockage_net.geometry import hits_by_clipping
from blockage_net.link_stats import GammaModel, expected_blockages, los_probability
from blockage_net.montecarlo import (
    THREADS_ENV, Scenario, _thread_count, compare_models, connectivity_from_batch,
    coverage_from_batch, default_window_radius, estimate_connectivity, estimate_coverage,
    run_trial, run_trials, sample_lattice_blockages, simulate_link_blockages, wilson_half_width,
)
from blockage_net.network_analytics import (
    baseline_coverage_no_blockage, db_to_linear, nearest_visible_ccdf, silent_fraction,
)
from blockage_net.processes import BlockageParams, Constant, Uniform, Window
from helpers import poisson_gof_pvalue

LAM0, MU0 = 4.4e-4, 3.85e-5
BP0 = BlockageParams(LAM0, Constant(15.0), Constant(15.0))
NO_BLOCKAGE = BP0.with_density(0.0)


@pytest.fixture(scope="module")
def batch0():
    sc = Scenario(BP0, MU0, trials=1500, seed=21)
    return run_trials(sc, n_rays=16, link_lengths=(50.0, 100.0, 200.0))


class TestScenario:
    def test_window_invariant(self):
        sc = Scenario(BP0, MU0)
        xi = silent_fraction(MU0, BP0.beta, BP0.p)
        assert nearest_visible_ccdf(sc.window.radius, MU0, BP0.beta, BP0.p) - xi < 1e-4
        assert sc.window.guard == pytest.approx(0.5 * math.hypot(15, 15))

    def test_window_radius_cases(self):
        cell = 1 / math.sqrt(math.pi * MU0)
        assert default_window_radius(NO_BLOCKAGE, MU0) == pytest.approx(20 * cell)
        sparse = default_window_radius(BlockageParams(1e-6, Constant(1.0), Constant(1.0)), MU0)
        assert cell < sparse <= 30 * cell

    def test_invalid(self):
        with pytest.raises(ValueError):
            Scenario(BP0, MU0, trials=0)
        with pytest.raises(ValueError):
            Scenario(BP0, MU0, geometry="voronoi")
        with pytest.raises(ValueError):
            Scenario(BP0, -1.0)

    def test_with_recomputes_window(self):
        sc = Scenario(BP0, MU0)
        assert sc.with_(mu=10 * MU0).window.radius < sc.window.radius
        assert sc.with_(trials=5).window == sc.window

    def test_lattice_guard(self):
        sc = Scenario(BP0, MU0, geometry="lattice")
        assert sc.window.guard == pytest.approx(0.5 * math.hypot(15, 15))


class TestTrial:
    def test_empty_window_disconnected(self):
        sc = Scenario(BP0, 1e-12, window=Window(100.0))
        s = run_trial(sc, 0)
        assert not s.connected and s.sir == 0.0 and math.isinf(s.serving_distance)

    def test_lone_base_station_hits_cap(self):
        sc = Scenario(NO_BLOCKAGE, 1e-4, window=Window(60.0), trials=200, seed=3)
        batch = run_trials(sc)
        lone = batch.num_visible == 1
        assert lone.any()
        assert np.all(batch.sir[lone] == sc.t_max)
        assert np.all(batch.sir <= sc.t_max)

    def test_serving_link_clear_and_nearest(self, batch0):
        assert np.all(batch0.num_blockages_serving == 0)
        assert np.all(batch0.sir[~batch0.connected] == 0.0)

    def test_serving_is_nearest_visible(self):
        sc = Scenario(BP0, MU0, trials=1, seed=9)
        from blockage_net.montecarlo import _sample_blockages, stream_seed
        from blockage_net.processes import sample_ppp
        s = run_trial(sc, 4)
        rng = np.random.default_rng(stream_seed(sc.seed, 4))
        rects = _sample_blockages(sc, rng)
        bs = sample_ppp(sc.mu, sc.window, rng)
        blocked = hits_by_clipping(0.0, 0.0, bs[:, :1], bs[:, 1:], rects[None]).any(axis=1)
        d = np.hypot(bs[:, 0], bs[:, 1])
        assert s.serving_distance == pytest.approx(d[~blocked].min())

    def test_penetrable_keeps_association(self):
        sc = Scenario(BP0, MU0, gamma=GammaModel.uniform01(), trials=300, seed=1)
        batch = run_trials(sc)
        assert np.all(batch.num_blockages_serving == 0)
        imp = run_trials(sc.with_(gamma=GammaModel.impenetrable()))
        # leakage through buildings only adds interference
        assert np.mean(batch.sir) <= np.mean(imp.sir)

    def test_outdoor_conditioning(self):
        sc = Scenario(BP0, MU0, trials=400, seed=2, condition_outdoor_user=True)
        assert not run_trials(sc).indoor.any()
        free = run_trials(sc.with_(condition_outdoor_user=False))
        assert free.indoor.any()


class TestReplay:
    def test_sequential_bitwise(self):
        sc = Scenario(BP0, MU0, trials=50, seed=123)
        a, b = run_trials(sc), run_trials(sc)
        assert np.array_equal(a.sir, b.sir)

    def test_threaded_matches_sequential(self):
        sc = Scenario(BP0, MU0, trials=60, seed=5)
        a = run_trials(sc, n_rays=4, link_lengths=(100.0,), n_jobs=1)
        b = run_trials(sc, n_rays=4, link_lengths=(100.0,), n_jobs=3)
        assert np.array_equal(a.sir, b.sir)
        assert np.array_equal(a.link_counts, b.link_counts)
        ca, cb = coverage_from_batch(a, [0.0]), coverage_from_batch(b, [0.0])
        assert abs(ca.values[0] - cb.values[0]) <= 1e-12

    def test_split_runs_concatenate(self):
        sc = Scenario(BP0, MU0, trials=20, seed=8)
        whole = run_trials(sc)
        head = run_trials(sc.with_(trials=10, window=sc.window))
        tail = run_trials(sc.with_(trials=10, window=sc.window), start=10)
        assert np.array_equal(whole.sir, np.concatenate([head.sir, tail.sir]))

    def test_thread_env_cap(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "2")
        assert _thread_count(8) == 2
        assert _thread_count(None) == 2
        monkeypatch.delenv(THREADS_ENV)
        assert _thread_count(None) == 1
        assert _thread_count(4) == 4


class TestEstimators:
    def test_wilson(self):
        assert wilson_half_width(0, 100) > 0
        assert wilson_half_width(50, 100) == pytest.approx(0.09617, abs=1e-5)

    def test_threshold_above_cap(self, batch0):
        cov = coverage_from_batch(batch0, [40.0, 45.0])
        assert np.all(cov.values == 0.0)

    def test_coverage_curve_shape(self, batch0):
        cov = coverage_from_batch(batch0, [-5.0, 0.0, 5.0])
        assert np.all(np.diff(cov.values) <= 0)
        assert np.all(cov.half_widths > 0) and cov.n == 1500

    def test_no_blockage_matches_baseline(self):
        sc = Scenario(NO_BLOCKAGE, MU0, trials=3000, seed=17)
        grid = [-5.0, 0.0, 5.0]
        cov = estimate_coverage(sc, grid)
        base = np.array([baseline_coverage_no_blockage(db_to_linear(t), 4.0) for t in grid])
        assert np.all(np.abs(cov.values - base) <= cov.half_widths)

    def test_no_blockage_connectivity(self):
        est = estimate_connectivity(Scenario(NO_BLOCKAGE, MU0, trials=50, seed=1), n_rays=4)
        assert est.silent_fraction == 0.0
        assert np.all(est.los_prob == 1.0)

    def test_link_counts_poisson(self, batch0):
        est = connectivity_from_batch(batch0)
        for k, R in enumerate(est.link_lengths):
            mean = expected_blockages(BP0.beta, BP0.p, R)
            assert abs(est.mean_blockages[k] - mean) < 1.5 * est.mean_blockages_hw[k]
            assert abs(est.los_prob[k] - los_probability(BP0.beta, BP0.p, R)) < 1.5 * est.los_prob_hw[k]
            assert poisson_gof_pvalue(batch0.link_counts[:, k], mean) > 0.01

    def test_indoor_fraction(self, batch0):
        frac = 1 - math.exp(-BP0.p)
        assert abs(batch0.indoor.mean() - frac) < 3 * math.sqrt(frac * (1 - frac) / batch0.n)
        # an indoor user sees no base station
        assert not np.any(batch0.connected & batch0.indoor)

    def test_test_links_must_fit(self):
        with pytest.raises(ValueError):
            run_trials(Scenario(BP0, MU0, trials=1, window=Window(50.0)), link_lengths=(100.0,))

    def test_window_robustness(self):
        sc = Scenario(BP0, MU0, trials=2000, seed=31)
        big = sc.with_(window=Window(2 * sc.window.radius, guard=sc.window.guard), seed=32)
        a = coverage_from_batch(run_trials(sc), [0.0])
        b = coverage_from_batch(run_trials(big), [0.0])
        joint = math.hypot(a.half_widths[0], b.half_widths[0])
        assert abs(a.values[0] - b.values[0]) < joint


class TestLattice:
    def test_empty_and_full(self):
        w = Window(100.0)
        assert sample_lattice_blockages(15, 15, 0.0, w, 1).shape == (0, 5)
        full = sample_lattice_blockages(15, 15, 1.0, w, 1)
        rng = np.random.default_rng(0)
        phi = rng.uniform(0, 2 * math.pi, 200)
        R = 25.0  # longer than the cell diagonal
        x0, y0 = rng.uniform(-40, 40, (2, 200))
        hit = hits_by_clipping(x0[:, None], y0[:, None], (x0 + R * np.cos(phi))[:, None],
                               (y0 + R * np.sin(phi))[:, None], full[None])
        assert hit.any(axis=1).all()

    def test_occupancy(self):
        w = Window(2700.0)
        p = 0.3
        rects = sample_lattice_blockages(15, 15, p, w, 4)
        empty = sample_lattice_blockages(15, 15, 1.0, w, 4)
        n = len(empty)
        assert n > 100_000
        frac = len(rects) / n
        assert abs(frac - p) < 3 * math.sqrt(p * (1 - p) / n)

    def test_grid_axis_aligned(self):
        rects = sample_lattice_blockages(10, 20, 0.5, Window(200.0), 2)
        assert np.all(rects[:, 4] == 0.0)
        assert np.allclose(np.diff(np.unique(np.round(rects[:, 0], 9))), 10.0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            sample_lattice_blockages(0, 10, 0.5, Window(10.0))
        with pytest.raises(ValueError):
            sample_lattice_blockages(10, 10, 1.5, Window(10.0))

    def test_matched_mean_count(self):
        # lattice occupancy p with cells E[L] x E[W] has the same density lam = p / (E[L] E[W])
        bp = BlockageParams(0.3 / 225.0, Constant(15.0), Constant(15.0))
        sc = Scenario(bp, MU0, trials=400, seed=3, geometry="lattice")
        batch = run_trials(sc, link_lengths=(100.0,))
        assert batch.link_counts.mean() > 0


class TestCompare:
    def test_identical_without_blockages(self):
        grid = [-5.0, 0.0, 5.0]
        sb = Scenario(NO_BLOCKAGE, MU0, trials=200, seed=4)
        sl = sb.with_(geometry="lattice", window=sb.window)
        cmp = compare_models(sb, sl, grid)
        assert np.array_equal(cmp.boolean.values, cmp.lattice.values)
        assert cmp.max_gap == 0.0
        assert not cmp.separated.any()

    def test_order_checked(self):
        sb = Scenario(BP0, MU0, trials=1)
        with pytest.raises(ValueError):
            compare_models(sb, sb, [0.0])


class TestLinkSimulation:
    def test_validation(self):
        with pytest.raises(ValueError):
            simulate_link_blockages(BP0, -1.0, 10)
        with pytest.raises(ValueError):
            simulate_link_blockages(BP0, 10.0, 0)

    def test_zero_length_link_is_indoor_indicator(self):
        res = simulate_link_blockages(BP0, 0.0, 20_000, seed=6)
        frac = 1 - math.exp(-BP0.p)
        assert abs((res.counts > 0).mean() - frac) < 3 * math.sqrt(frac * (1 - frac) / 20_000)

    def test_chunking_is_consistent(self):
        a = simulate_link_blockages(BP0, 100.0, 5000, seed=1, chunk=5000).counts
        b = simulate_link_blockages(BP0, 100.0, 5000, seed=1, chunk=700).counts
        # different chunking changes the stream but not the law
        assert abs(a.mean() - b.mean()) < 0.1
        assert len(b) == 5000

    def test_constant_gamma_losses(self):
        res = simulate_link_blockages(BP0, 100.0, 2000, seed=2, gamma=GammaModel.constant(0.5))
        np.testing.assert_allclose(res.losses, 0.5 ** res.counts)

    def test_uniform_sizes(self):
        bp = BlockageParams(LAM0, Uniform(0.0, 30.0), Uniform(0.0, 30.0))
        counts = simulate_link_blockages(bp, 100.0, 20_000, seed=7).counts
        mean = expected_blockages(bp.beta, bp.p, 100.0)
        assert poisson_gof_pvalue(counts, mean) > 0.01
