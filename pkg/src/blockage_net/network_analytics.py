"""Network-level closed forms for impenetrable blockages.

Connectivity (visible area, nearest visible base station, silent fraction),
SIR coverage under nearest-visible association and the capped average rate.
Base stations form a PPP of density ``mu``; a link of length ``t`` is
line-of-sight with probability ``exp(-(beta*t + p))``, independently across
links.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

INNER_TAIL_EXPONENT = 40.0  # inner integral stops where exp(-beta * t) < e^-40


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach its tolerance.

    ``estimate`` holds the partial result.
    """

    def __init__(self, message, estimate=math.nan):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class NetworkParams:
    mu: float
    alpha: float
    beta: float
    p: float
    t_max_db: float = 40.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"base station density must be > 0, got {self.mu}")
        if not self.alpha > 2:
            raise ValueError(
                f"path-loss exponent must exceed 2 (got {self.alpha}); "
                "interference diverges otherwise")
        if self.beta < 0 or self.p < 0:
            raise ValueError("beta and p must be non-negative")

    @property
    def t_max(self) -> float:
        return db_to_linear(self.t_max_db)


@dataclass(frozen=True)
class QuadratureConfig:
    rel_tol: float = 1e-6
    abs_tol: float = 1e-10
    outer_tail_mass: float = 1e-8
    max_depth: int = 200

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be > 0")
        if not 0 < self.outer_tail_mass < 1:
            raise ValueError("outer_tail_mass must lie in (0, 1)")


DEFAULT_QUAD = QuadratureConfig()


def db_to_linear(db):
    out = np.power(10.0, np.asarray(db, dtype=float) / 10.0)
    return out if out.ndim else float(out)


def linear_to_db(x):
    out = 10.0 * np.log10(np.asarray(x, dtype=float))
    return out if out.ndim else float(out)


def _quad(fn, a, b, cfg: QuadratureConfig, what: str, **kw):
    if kw.get("points") is not None:
        limit = max(cfg.max_depth, len(kw["points"]) + 1)
    else:
        limit = cfg.max_depth
    val, err, _info, *rest = integrate.quad(
        fn, a, b, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol, limit=limit, full_output=1, **kw)
    # QUADPACK only appends a message when it flags a problem
    if rest:
        msg = str(rest[0]).strip()
        within = err <= 10.0 * max(cfg.abs_tol, cfg.rel_tol * abs(val))
        # roundoff warnings on a result already inside tolerance are benign
        if not ("roundoff" in msg and within):
            raise QuadratureError(f"{what}: quadrature failed ({msg.splitlines()[0]})", val)
    return val


# ---------------------------------------------------------------------------
# connectivity


def mean_visible_area(beta: float, p: float) -> float:
    """Mean area of the line-of-sight region of a typical location.

    Unbounded (``math.inf``) without blockages.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if beta == 0:
        return math.inf
    return 2.0 * math.pi * math.exp(-p) / beta**2


def effective_visible_range(beta: float, p: float) -> float:
    if beta == 0:
        return math.inf
    return math.sqrt(2.0 * math.exp(-p)) / beta


def mean_visible_bs(mu: float, beta: float, p: float) -> float:
    if mu == 0:
        return 0.0
    return mu * mean_visible_area(beta, p)


def _visible_measure(x, beta, p):
    """``int_0^x exp(-(beta t + p)) t dt``, written with the regularised
    incomplete gamma so small ``beta*x`` does not cancel."""
    x = np.asarray(x, dtype=float)
    if beta == 0:
        return math.exp(-p) * 0.5 * x * x
    return math.exp(-p) * special.gammainc(2.0, beta * x) / beta**2


def nearest_visible_ccdf(x, mu: float, beta: float, p: float):
    """``P{R0 > x}`` for the distance ``R0`` to the nearest visible base station."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("distance must be >= 0")
    out = np.exp(-2.0 * math.pi * mu * _visible_measure(x, beta, p))
    return out if out.ndim else float(out)


def nearest_visible_pdf(x, mu: float, beta: float, p: float):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("distance must be >= 0")
    out = 2.0 * math.pi * mu * x * np.exp(-(beta * x + p) - 2.0 * math.pi * mu * _visible_measure(x, beta, p))
    return out if out.ndim else float(out)


def silent_fraction(mu: float, beta: float, p: float) -> float:
    """Fraction of locations with no visible base station."""
    if beta == 0:
        return 0.0
    return math.exp(-2.0 * math.pi * mu * math.exp(-p) / beta**2)


def _outer_limit(mu, beta, p, tail_mass):
    """Distance beyond which the connected-user mass is below ``tail_mass``."""
    xi = silent_fraction(mu, beta, p)
    connected = 1.0 - xi
    target = tail_mass * connected
    f = lambda x: nearest_visible_ccdf(x, mu, beta, p) - xi - target
    hi = 1.0 / math.sqrt(mu)
    while f(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            raise QuadratureError("could not bracket the outer truncation point")
    return optimize.brentq(f, 0.0, hi, xtol=1e-9, rtol=1e-12)


# ---------------------------------------------------------------------------
# coverage


def _interference_exponent(x, T, params: NetworkParams, cfg: QuadratureConfig):
    """``int_x^inf T x^a e^{-(beta t+p)} t / (t^a + T x^a) dt`` with ``t = x u``."""
    a, beta, p = params.alpha, params.beta, params.p
    bx = beta * x

    def integrand(u):
        return T * math.exp(-(bx * u + p)) * u / (u**a + T)

    upper = 1.0 + INNER_TAIL_EXPONENT / bx if bx > 0 else math.inf
    if upper > 1e4:
        # power-law tail dominates; let QUADPACK map the infinite range
        head = _quad(integrand, 1.0, 10.0, cfg, "inner integral")
        tail = _quad(integrand, 10.0, math.inf, cfg, "inner integral")
        return x * x * (head + tail)
    return x * x * _quad(integrand, 1.0, upper, cfg, "inner integral")


def coverage_probability(T: float, params: NetworkParams, quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """``P{SIR > T}`` (linear threshold) with nearest-visible association.

    Users with no visible base station count as not covered, so the result
    lies in ``[0, 1 - silent_fraction]``. Without blockages (``beta == 0``)
    the no-blockage closed form is returned.
    """
    if not T > 0:
        raise ValueError("threshold must be > 0 (linear scale)")
    if params.beta == 0 and params.p == 0:
        return baseline_coverage_no_blockage(T, params.alpha, quad)
    mu, beta, p = params.mu, params.beta, params.p
    x_star = _outer_limit(mu, beta, p, quad.outer_tail_mass)

    def outer(x):
        if x <= 0:
            return 0.0
        g = _interference_exponent(x, T, params, quad)
        return math.exp(-2.0 * math.pi * mu * g) * float(nearest_visible_pdf(x, mu, beta, p))

    # breakpoints around the bulk of the nearest-distance law help QUADPACK
    scale = 1.0 / math.sqrt(math.pi * mu)
    pts = [pt for pt in (0.25 * scale, scale, 3.0 * scale) if pt < x_star]
    val = _quad(outer, 0.0, x_star, quad, "coverage outer integral", points=pts or None)
    return min(max(val, 0.0), 1.0 - silent_fraction(mu, beta, p))


def conditional_coverage(T: float, params: NetworkParams, quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Coverage given the user sees at least one base station."""
    connected = 1.0 - silent_fraction(params.mu, params.beta, params.p)
    if connected <= 0:
        return math.nan
    return coverage_probability(T, params, quad) / connected


def coverage_curve(t_grid_db, params: NetworkParams, quad: QuadratureConfig = DEFAULT_QUAD) -> np.ndarray:
    return np.array([coverage_probability(db_to_linear(t), params, quad) for t in t_grid_db])


def baseline_rho(T: float, alpha: float, quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """``T^{2/a} int_{T^{-2/a}}^inf du / (1 + u^{a/2})``."""
    if not alpha > 2:
        raise ValueError(f"path-loss exponent must exceed 2, got {alpha}")
    lo = T ** (-2.0 / alpha)
    half = alpha / 2.0
    fn = lambda u: 1.0 / (1.0 + u**half)
    split = max(lo, 1.0)
    val = _quad(fn, split, math.inf, quad, "baseline integral")
    if lo < split:
        val += _quad(fn, lo, split, quad, "baseline integral")
    return T ** (2.0 / alpha) * val


def baseline_coverage_no_blockage(T: float, alpha: float, quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Interference-limited coverage of a PPP network without blockages,
    Rayleigh fading, nearest-base-station association. Independent of the
    base station density."""
    if not T > 0:
        raise ValueError("threshold must be > 0 (linear scale)")
    return 1.0 / (1.0 + baseline_rho(T, alpha, quad))


# ---------------------------------------------------------------------------
# rate


def rate_from_coverage(coverage: Callable[[float], float], t_max: float, p0: float,
                       quad: QuadratureConfig = DEFAULT_QUAD, t_floor: float = 1e-4,
                       panel_db: float = 10.0) -> float:
    """``(1/ln 2) int_0^{t_max} Pc(t) / (1 + t) dt`` in log-spaced panels.

    ``p0`` is ``Pc(0+)``; below ``t_floor`` the coverage is taken as ``p0``.
    """
    total = p0 * math.log1p(min(t_floor, t_max))
    if t_max > t_floor:
        lo, hi = math.log(t_floor), math.log(t_max)
        n_panels = max(1, int(math.ceil((hi - lo) / (panel_db * math.log(10.0) / 10.0))))
        edges = np.linspace(lo, hi, n_panels + 1)
        fn = lambda s: coverage(math.exp(s)) * math.exp(s) / (1.0 + math.exp(s))
        for a, b in zip(edges[:-1], edges[1:]):
            total += _quad(fn, a, b, quad, "rate integral")
    return total / math.log(2.0)


def average_rate(params: NetworkParams, quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Mean spectral efficiency ``E[log2(1 + min(SIR, Tmax))]`` in bit/s/Hz."""
    rate_quad = QuadratureConfig(max(quad.rel_tol, 1e-5), max(quad.abs_tol, 1e-8),
                                 quad.outer_tail_mass, quad.max_depth)
    if params.beta == 0 and params.p == 0:
        cov = lambda t: baseline_coverage_no_blockage(t, params.alpha, quad)
        p0 = 1.0
    else:
        cov = lambda t: coverage_probability(t, params, quad)
        p0 = 1.0 - silent_fraction(params.mu, params.beta, params.p)
    return rate_from_coverage(cov, params.t_max, p0, rate_quad)
