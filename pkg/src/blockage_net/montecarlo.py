"""Monte Carlo engine: exact geometric blockage counting and SIR sampling.

Each trial draws blockages and base stations around a typical user at the
origin, counts the rectangles crossing every link, draws Rayleigh fading and
per-building losses and records the SIR under nearest-visible association.
Trial ``i`` uses the RNG stream ``stream_seed(scenario.seed, i)``, so results
do not depend on how trials are split across workers.
"""
from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from . import geometry
from .link_stats import GammaModel, HeightContext
from .network_analytics import db_to_linear, nearest_visible_ccdf, silent_fraction
from .processes import (BlockageParams, Window, guard_margin, make_rng,
                        sample_boolean_scheme, sample_ppp, stream_seed)

logger = logging.getLogger(__name__)

THREADS_ENV = "BLOCKAGE_NET_THREADS"
Z95 = 1.959963984540054
MAX_OUTDOOR_REDRAWS = 1000


# ---------------------------------------------------------------------------
# scenario


def default_window_radius(params: BlockageParams, mu: float, tol: float = 1e-4,
                          max_cells: float = 30.0) -> float:
    """Smallest disk radius leaving under ``tol`` connected-user mass outside.

    Without blockages the radius instead bounds ``P{R0 > r}`` by ``tol`` and
    leaves room for interferers. Capped at ``max_cells`` typical cell radii.
    """
    cell = 1.0 / math.sqrt(math.pi * mu)
    cap = max_cells * cell
    beta, p = params.beta, params.p
    if beta == 0:
        return min(cap, max(math.sqrt(-math.log(tol)) * cell, 20.0 * cell))
    xi = silent_fraction(mu, beta, p)
    f = lambda r: nearest_visible_ccdf(r, mu, beta, p) - xi - tol
    if f(cap) > 0:
        warnings.warn(f"window capped at {cap:.0f} m; connected users beyond it exceed {tol}",
                      RuntimeWarning, stacklevel=2)
        return cap
    if f(cell) <= 0:
        return cell
    # step past the bracketed root so the tolerance holds at the returned radius
    return optimize.brentq(f, cell, cap, xtol=1e-3) + 2e-3


@dataclass
class Scenario:
    """Everything needed to replay a Monte Carlo experiment.

    ``window`` defaults to :func:`default_window_radius` with a guard from
    :func:`~blockage_net.processes.guard_margin`. ``geometry`` is
    ``"boolean"`` (random rectangles) or ``"lattice"`` (occupied grid cells of
    the mean size).
    """

    blockage: BlockageParams
    mu: float
    alpha: float = 4.0
    gamma: GammaModel = field(default_factory=GammaModel.impenetrable)
    t_max_db: float = 40.0
    window: Optional[Window] = None
    trials: int = 1000
    seed: int = 0
    geometry: str = "boolean"
    condition_outdoor_user: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.geometry not in ("boolean", "lattice"):
            raise ValueError(f"unknown blockage geometry {self.geometry!r}")
        if not self.mu >= 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.window is None:
            radius = default_window_radius(self.blockage, self.mu) if self.mu > 0 else 1000.0
            self.window = Window(radius, guard=self._guard())

    def _guard(self) -> float:
        if self.geometry == "lattice":
            return 0.5 * math.hypot(self.blockage.length.mean, self.blockage.width.mean)
        return guard_margin(self.blockage)

    @property
    def t_max(self) -> float:
        return db_to_linear(self.t_max_db)

    def with_(self, **changes) -> "Scenario":
        """Copy with changes; the window is recomputed unless given."""
        changes.setdefault("window", None)
        return replace(self, **changes)


@dataclass(frozen=True)
class SirSample:
    sir: float
    connected: bool
    serving_distance: float
    num_blockages_serving: int


@dataclass
class TrialBatch:
    """Per-trial outputs of :func:`run_trials`, one array entry per trial."""

    sir: np.ndarray
    connected: np.ndarray
    serving_distance: np.ndarray
    num_blockages_serving: np.ndarray
    num_visible: np.ndarray
    indoor: np.ndarray
    visible_area: Optional[np.ndarray] = None
    link_lengths: tuple = ()
    link_counts: Optional[np.ndarray] = None  # shape (trials, len(link_lengths))

    @property
    def n(self) -> int:
        return len(self.sir)


@dataclass
class EmpiricalCurve:
    grid: np.ndarray
    values: np.ndarray
    half_widths: np.ndarray
    n: int


@dataclass
class ConnectivityEstimate:
    link_lengths: np.ndarray
    mean_blockages: np.ndarray
    mean_blockages_hw: np.ndarray
    los_prob: np.ndarray
    los_prob_hw: np.ndarray
    mean_visible_bs: float
    mean_visible_bs_hw: float
    silent_fraction: float
    silent_fraction_hw: float
    mean_visible_area: float
    mean_visible_area_hw: float
    indoor_fraction: float
    nearest_visible_ccdf: EmpiricalCurve
    n: int


@dataclass
class ModelComparison:
    boolean: EmpiricalCurve
    lattice: EmpiricalCurve
    max_gap: float
    max_gap_at_db: float
    joint_half_widths: np.ndarray

    @property
    def separated(self) -> np.ndarray:
        """Grid points where the gap exceeds the joint 95% half-width."""
        return np.abs(self.boolean.values - self.lattice.values) > self.joint_half_widths


# ---------------------------------------------------------------------------
# blockage layouts


def sample_lattice_blockages(mean_length: float, mean_width: float, p: float,
                             window: Window, seed=None) -> np.ndarray:
    """Axis-aligned grid of ``mean_length x mean_width`` cells, each occupied
    with probability ``p``. The grid gets a uniform random offset so the
    typical user is uniformly placed relative to it."""
    if not (mean_length > 0 and mean_width > 0):
        raise ValueError("cell sides must be > 0")
    if not 0 <= p <= 1:
        raise ValueError(f"occupancy must lie in [0, 1], got {p}")
    rng = make_rng(seed)
    reach = window.radius + window.guard + math.hypot(mean_length, mean_width)
    off_x, off_y = rng.uniform(0, mean_length), rng.uniform(0, mean_width)
    nx = int(math.ceil(reach / mean_length)) + 1
    ny = int(math.ceil(reach / mean_width)) + 1
    xs = window.center.x + off_x + mean_length * (np.arange(-nx, nx + 1) + 0.5)
    ys = window.center.y + off_y + mean_width * (np.arange(-ny, ny + 1) + 0.5)
    cx, cy = np.meshgrid(xs, ys, indexing="ij")
    cx, cy = cx.ravel(), cy.ravel()
    keep = np.hypot(cx - window.center.x, cy - window.center.y) <= window.radius + window.guard
    cx, cy = cx[keep], cy[keep]
    occupied = rng.random(len(cx)) < p
    n = int(occupied.sum())
    return np.column_stack([cx[occupied], cy[occupied], np.full(n, float(mean_length)),
                            np.full(n, float(mean_width)), np.zeros(n)])


def _sample_blockages(scenario: Scenario, rng) -> np.ndarray:
    # empty layouts draw nothing, so both geometries replay the same base stations
    if scenario.blockage.lam == 0:
        return np.empty((0, 5))
    if scenario.geometry == "lattice":
        b = scenario.blockage
        return sample_lattice_blockages(b.length.mean, b.width.mean, b.p, scenario.window, rng)
    return sample_boolean_scheme(scenario.blockage, scenario.window, rng)


# ---------------------------------------------------------------------------
# single trial


def _link_losses(scenario: Scenario, n_bs: int, ii: np.ndarray, counts: np.ndarray, rng) -> np.ndarray:
    """Product of per-building power ratios for every base-station link."""
    gm = scenario.gamma
    if gm.is_impenetrable:
        return (counts == 0).astype(float)
    if gm.kind == "constant":
        return gm.gamma ** counts
    gam = gm.sample(rng, len(ii))
    with np.errstate(divide="ignore"):
        log_s = np.bincount(ii, weights=np.log(gam), minlength=n_bs)
    return np.exp(log_s)


def _trial(scenario: Scenario, index: int, n_rays: int, link_lengths: Sequence[float]):
    rng = np.random.default_rng(stream_seed(scenario.seed, index))
    rects = _sample_blockages(scenario, rng)
    indoor = bool(len(rects) and geometry.points_in_rects(0.0, 0.0, rects).any())
    if scenario.condition_outdoor_user:
        redraws = 0
        while indoor:
            redraws += 1
            if redraws > MAX_OUTDOOR_REDRAWS:
                raise RuntimeError("could not draw an outdoor user; is p close to 1?")
            rects = _sample_blockages(scenario, rng)
            indoor = bool(len(rects) and geometry.points_in_rects(0.0, 0.0, rects).any())

    bs = sample_ppp(scenario.mu, scenario.window, rng)
    n_bs = len(bs)
    dist = np.hypot(bs[:, 0], bs[:, 1])
    ii, _, _ = geometry.origin_link_hits(bs, rects)
    counts = np.bincount(ii, minlength=n_bs)
    fading = rng.exponential(1.0, n_bs)
    losses = _link_losses(scenario, n_bs, ii, counts, rng)

    visible = np.flatnonzero(counts == 0)
    t_max = scenario.t_max
    if len(visible):
        # stable sort: distance ties go to the lower index
        serving = visible[np.argsort(dist[visible], kind="stable")[0]]
        power = fading * losses * dist ** (-scenario.alpha)
        interference = power.sum() - power[serving]
        signal = power[serving]
        if interference <= 0:
            sir = t_max
        else:
            sir = min(signal / interference, t_max)
        sample = (sir, True, dist[serving], int(counts[serving]))
    else:
        sample = (0.0, False, math.inf, 0)

    extras = {"num_visible": len(visible), "indoor": indoor}
    if n_rays:
        angles = (np.arange(n_rays) + rng.random()) * (2 * math.pi / n_rays)
        free = geometry.ray_free_distance(angles, rects, scenario.window.radius)
        extras["visible_area"] = math.pi * float(np.mean(free**2))
    if len(link_lengths):
        phi = rng.uniform(0, 2 * math.pi)
        tips = np.outer(link_lengths, [math.cos(phi), math.sin(phi)])
        extras["link_counts"] = geometry.count_origin_link_hits(tips, rects)
    return sample, extras


def run_trial(scenario: Scenario, trial_index: int) -> SirSample:
    sample, _ = _trial(scenario, trial_index, 0, ())
    return SirSample(*sample)


def _thread_count(n_jobs: Optional[int]) -> int:
    cap = os.environ.get(THREADS_ENV)
    n = n_jobs if n_jobs is not None else 1
    if cap:
        n = min(n, max(1, int(cap))) if n_jobs is not None else max(1, int(cap))
    return max(1, n)


def run_trials(scenario: Scenario, n_rays: int = 0, link_lengths: Sequence[float] = (),
               n_jobs: Optional[int] = None, start: int = 0) -> TrialBatch:
    """Run ``scenario.trials`` trials and collect per-trial outputs.

    ``n_rays`` rays per trial estimate the visible area; ``link_lengths``
    adds blockage counts on links of those lengths in a random direction.
    Worker count comes from ``n_jobs``, capped by ``$BLOCKAGE_NET_THREADS``.
    """
    link_lengths = tuple(float(r) for r in link_lengths)
    if link_lengths and max(link_lengths) > scenario.window.radius:
        raise ValueError("test links must fit inside the window")
    indices = range(start, start + scenario.trials)
    work = lambda i: _trial(scenario, i, n_rays, link_lengths)
    workers = _thread_count(n_jobs)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, indices))
    else:
        results = [work(i) for i in indices]

    n = len(results)
    batch = TrialBatch(
        sir=np.array([r[0][0] for r in results], dtype=float),
        connected=np.array([r[0][1] for r in results], dtype=bool),
        serving_distance=np.array([r[0][2] for r in results], dtype=float),
        num_blockages_serving=np.array([r[0][3] for r in results], dtype=int),
        num_visible=np.array([r[1]["num_visible"] for r in results], dtype=int),
        indoor=np.array([r[1]["indoor"] for r in results], dtype=bool),
        link_lengths=link_lengths,
    )
    if n_rays:
        batch.visible_area = np.array([r[1]["visible_area"] for r in results])
    if link_lengths:
        batch.link_counts = np.array([r[1]["link_counts"] for r in results]).reshape(n, len(link_lengths))
    return batch


# ---------------------------------------------------------------------------
# estimators


def wilson_half_width(successes, n: int, z: float = Z95):
    """Half-width of the Wilson score interval for a binomial proportion."""
    successes = np.asarray(successes, dtype=float)
    phat = successes / n
    denom = 1.0 + z * z / n
    out = z / denom * np.sqrt(phat * (1 - phat) / n + z * z / (4.0 * n * n))
    return out if out.ndim else float(out)


def _mean_hw(x: np.ndarray):
    n = len(x)
    if n < 2:
        return float(np.mean(x)), math.inf
    return float(np.mean(x)), Z95 * float(np.std(x, ddof=1)) / math.sqrt(n)


def coverage_from_batch(batch: TrialBatch, t_grid_db) -> EmpiricalCurve:
    grid = np.asarray(t_grid_db, dtype=float)
    thresholds = db_to_linear(grid)
    hits = (batch.sir[None, :] > np.atleast_1d(thresholds)[:, None]).sum(axis=1)
    n = batch.n
    return EmpiricalCurve(grid, hits / n, np.asarray(wilson_half_width(hits, n)), n)


def estimate_coverage(scenario: Scenario, t_grid_db, n_jobs: Optional[int] = None) -> EmpiricalCurve:
    """Fraction of trials with ``SIR > T`` on a dB grid, with 95% Wilson half-widths."""
    return coverage_from_batch(run_trials(scenario, n_jobs=n_jobs), t_grid_db)


def connectivity_from_batch(batch: TrialBatch, ccdf_grid=(50.0, 100.0, 200.0)) -> ConnectivityEstimate:
    n = batch.n
    lengths = np.asarray(batch.link_lengths, dtype=float)
    if batch.link_counts is not None:
        counts = batch.link_counts
        mean_k = counts.mean(axis=0)
        hw_k = Z95 * counts.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(len(lengths), math.inf)
        los_hits = (counts == 0).sum(axis=0)
        los = los_hits / n
        los_hw = np.asarray(wilson_half_width(los_hits, n))
    else:
        mean_k = hw_k = los = los_hw = np.empty(0)
    vis_mean, vis_hw = _mean_hw(batch.num_visible.astype(float))
    silent = int((~batch.connected).sum())
    if batch.visible_area is not None:
        area_mean, area_hw = _mean_hw(batch.visible_area)
    else:
        area_mean = area_hw = math.nan
    grid = np.asarray(ccdf_grid, dtype=float)
    beyond = (batch.serving_distance[None, :] > grid[:, None]).sum(axis=1)
    ccdf = EmpiricalCurve(grid, beyond / n, np.asarray(wilson_half_width(beyond, n)), n)
    return ConnectivityEstimate(
        link_lengths=lengths, mean_blockages=mean_k, mean_blockages_hw=hw_k,
        los_prob=los, los_prob_hw=los_hw,
        mean_visible_bs=vis_mean, mean_visible_bs_hw=vis_hw,
        silent_fraction=silent / n, silent_fraction_hw=float(wilson_half_width(silent, n)),
        mean_visible_area=area_mean, mean_visible_area_hw=area_hw,
        indoor_fraction=float(batch.indoor.mean()),
        nearest_visible_ccdf=ccdf, n=n)


def estimate_connectivity(scenario: Scenario, link_lengths=(50.0, 100.0, 200.0),
                          ccdf_grid=(50.0, 100.0, 200.0), n_rays: int = 32,
                          n_jobs: Optional[int] = None) -> ConnectivityEstimate:
    """Empirical counterparts of the connectivity closed forms."""
    batch = run_trials(scenario, n_rays=n_rays, link_lengths=link_lengths, n_jobs=n_jobs)
    return connectivity_from_batch(batch, ccdf_grid)


def compare_models(scenario_boolean: Scenario, scenario_lattice: Scenario, t_grid_db,
                   n_jobs: Optional[int] = None) -> ModelComparison:
    """Coverage under the Boolean and lattice layouts on a common grid."""
    if scenario_boolean.geometry != "boolean" or scenario_lattice.geometry != "lattice":
        raise ValueError("expected a boolean and a lattice scenario, in that order")
    cb = estimate_coverage(scenario_boolean, t_grid_db, n_jobs)
    cl = estimate_coverage(scenario_lattice, t_grid_db, n_jobs)
    gap = np.abs(cb.values - cl.values)
    k = int(np.argmax(gap))
    joint = np.sqrt(cb.half_widths**2 + cl.half_widths**2)
    return ModelComparison(cb, cl, float(gap[k]), float(cb.grid[k]), joint)


# ---------------------------------------------------------------------------
# single-link experiments


@dataclass
class LinkBlockages:
    counts: np.ndarray
    effective_counts: Optional[np.ndarray] = None
    losses: Optional[np.ndarray] = None


def simulate_link_blockages(params: BlockageParams, R: float, trials: int, seed=None,
                            height: Optional[HeightContext] = None,
                            gamma: Optional[GammaModel] = None,
                            chunk: int = 20000) -> LinkBlockages:
    """Blockages crossing a fixed link ``(0,0)-(R,0)`` over independent layouts.

    With ``height`` the rectangles carry heights from ``height.height`` and a
    crossing counts as effective when the building is taller than the 3-D
    ray from the user (origin) to the base station at the crossing point.
    With ``gamma`` the link loss ``S`` (product of per-building ratios) is
    also returned.
    """
    if R < 0 or trials < 1:
        raise ValueError("need R >= 0 and trials >= 1")
    rng = make_rng(seed)
    guard = guard_margin(params)
    radius = 0.5 * R + guard
    area = math.pi * radius**2
    counts = np.zeros(trials, dtype=int)
    eff = np.zeros(trials, dtype=int) if height is not None else None
    log_s = np.zeros(trials) if gamma is not None else None
    for lo in range(0, trials, chunk):
        hi = min(trials, lo + chunk)
        per = rng.poisson(params.lam * area, hi - lo)
        owner = np.repeat(np.arange(lo, hi), per)
        m = len(owner)
        r = radius * np.sqrt(rng.random(m))
        phi = rng.uniform(0, 2 * math.pi, m)
        rects = np.column_stack([0.5 * R + r * np.cos(phi), r * np.sin(phi),
                                 np.maximum(params.length.sample(rng, m), 1e-12),
                                 params.width.sample(rng, m),
                                 rng.uniform(0, 2 * math.pi, m)])
        t_in, t_out = geometry.clip_segments(0.0, 0.0, R, 0.0, rects)
        hit = t_in <= t_out
        counts[lo:hi] += np.bincount(owner[hit], minlength=trials)[lo:hi]
        if height is not None:
            h = height.height.sample(rng, m)
            # ray height at the crossing, measured from the user end
            ray = height.h_user + 0.5 * (t_in + t_out) * (height.h_base - height.h_user)
            blocks = hit & (h > ray)
            eff[lo:hi] += np.bincount(owner[blocks], minlength=trials)[lo:hi]
        if gamma is not None and m:
            gam = gamma.sample(rng, int(hit.sum()))
            with np.errstate(divide="ignore"):
                log_s[lo:hi] += np.bincount(owner[hit], weights=np.log(gam), minlength=trials)[lo:hi]
    losses = np.exp(log_s) if gamma is not None else None
    return LinkBlockages(counts, eff, losses)


def sample_link_losses(params: BlockageParams, gamma: GammaModel, R: float, n: int, seed=None) -> np.ndarray:
    """Link loss ``S`` for ``n`` independent links of length ``R``."""
    return simulate_link_blockages(params, R, n, seed, gamma=gamma).losses
