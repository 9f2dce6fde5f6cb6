"""Sampling of Poisson point processes and the rectangle Boolean scheme."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import integrate, optimize

from .geometry import Point2, rects_from_array

logger = logging.getLogger(__name__)

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]

DEFAULT_GUARD_QUANTILE = 0.9999


# ---------------------------------------------------------------------------
# size / height distributions


@dataclass(frozen=True)
class Constant:
    value: float
    kind = "constant"

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"constant value must be >= 0, got {self.value}")

    @property
    def mean(self):
        return float(self.value)

    @property
    def second_moment(self):
        return float(self.value) ** 2

    @property
    def upper(self):
        return float(self.value)

    def sample(self, rng, size):
        return np.full(size, float(self.value))

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.value, 1.0, 0.0)

    def integrated_cdf(self, x):
        """``int_0^x cdf(h) dh``."""
        return np.maximum(np.asarray(x, dtype=float) - self.value, 0.0)

    def quantile(self, q):
        return float(self.value)

    def to_dict(self):
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float
    kind = "uniform"

    def __post_init__(self):
        if not (0 <= self.lo <= self.hi):
            raise ValueError(f"uniform needs 0 <= lo <= hi, got ({self.lo}, {self.hi})")

    @property
    def mean(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def second_moment(self):
        return (self.lo**2 + self.lo * self.hi + self.hi**2) / 3.0

    @property
    def upper(self):
        return float(self.hi)

    def sample(self, rng, size):
        return rng.uniform(self.lo, self.hi, size)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.hi == self.lo:
            return np.where(x >= self.lo, 1.0, 0.0)
        return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def integrated_cdf(self, x):
        x = np.asarray(x, dtype=float)
        span = self.hi - self.lo
        if span == 0:
            return np.maximum(x - self.lo, 0.0)
        inside = (np.clip(x, self.lo, self.hi) - self.lo) ** 2 / (2.0 * span)
        return inside + np.maximum(x - self.hi, 0.0)

    def quantile(self, q):
        return self.lo + q * (self.hi - self.lo)

    def to_dict(self):
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Exponential:
    mean_value: float
    kind = "exponential"

    def __post_init__(self):
        if not self.mean_value > 0:
            raise ValueError(f"exponential mean must be > 0, got {self.mean_value}")

    @property
    def mean(self):
        return float(self.mean_value)

    @property
    def second_moment(self):
        return 2.0 * self.mean_value**2

    @property
    def upper(self):
        return math.inf

    def sample(self, rng, size):
        return rng.exponential(self.mean_value, size)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -np.expm1(-np.maximum(x, 0.0) / self.mean_value), 0.0)

    def integrated_cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return x + self.mean_value * np.expm1(-x / self.mean_value)

    def quantile(self, q):
        return -self.mean_value * math.log1p(-q)

    def to_dict(self):
        return {"kind": "exponential", "mean": self.mean_value}


DistSpec = Union[Constant, Uniform, Exponential]


def dist_from_dict(d) -> DistSpec:
    """Build a distribution from its JSON form, e.g. ``{"kind": "uniform", "lo": 0, "hi": 30}``.

    A bare number is read as a constant.
    """
    if isinstance(d, (int, float)):
        return Constant(float(d))
    kind = d.get("kind")
    if kind == "constant":
        return Constant(float(d["value"]))
    if kind == "uniform":
        return Uniform(float(d["lo"]), float(d["hi"]))
    if kind == "exponential":
        return Exponential(float(d["mean"]))
    raise ValueError(f"unknown distribution kind {kind!r}")


# ---------------------------------------------------------------------------
# parameters and windows


@dataclass(frozen=True)
class BlockageParams:
    """Boolean scheme of rectangles: center density plus size laws.

    ``lam`` is the number of blockage centers per square meter.
    """

    lam: float
    length: DistSpec
    width: DistSpec
    height: Optional[DistSpec] = None

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"blockage density must be >= 0, got {self.lam}")
        if self.p >= 1:
            warnings.warn(
                f"p = lam*E[L]*E[W] = {self.p:.3g} >= 1; land coverage is not physical",
                RuntimeWarning,
                stacklevel=3,
            )

    @property
    def beta(self) -> float:
        return 2.0 * self.lam * (self.length.mean + self.width.mean) / math.pi

    @property
    def p(self) -> float:
        return self.lam * self.length.mean * self.width.mean

    def with_density(self, lam: float) -> "BlockageParams":
        return BlockageParams(lam, self.length, self.width, self.height)

    def to_dict(self):
        out = {"lambda": self.lam, "length": self.length.to_dict(), "width": self.width.to_dict()}
        if self.height is not None:
            out["height"] = self.height.to_dict()
        return out


@dataclass(frozen=True)
class Window:
    """Disk observation window; blockage centers are sampled out to
    ``radius + guard`` so rectangles poking into the disk are not missed."""

    radius: float
    center: Point2 = field(default_factory=lambda: Point2(0.0, 0.0))
    guard: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"window radius must be > 0, got {self.radius}")
        if not self.guard >= 0:
            raise ValueError(f"window guard must be >= 0, got {self.guard}")

    @property
    def area(self) -> float:
        return math.pi * self.radius**2

    def dilated(self) -> "Window":
        return Window(self.radius + self.guard, self.center, 0.0)


@dataclass
class Realization:
    """One draw of base stations and blockages.

    ``blockages`` is an ``(n, 5)`` array (see :mod:`blockage_net.geometry`);
    :meth:`rects` gives the same data as :class:`~blockage_net.geometry.Rect`
    values.
    """

    base_stations: np.ndarray
    blockages: np.ndarray
    seed: object = None
    heights: Optional[np.ndarray] = None

    def rects(self):
        return rects_from_array(self.blockages, self.heights)


# ---------------------------------------------------------------------------
# RNG streams


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def stream_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Per-realization seed: the realization index is appended to the master
    seed's entropy, so streams are reproducible regardless of execution order."""
    return np.random.SeedSequence([int(master_seed), int(index)])


# ---------------------------------------------------------------------------
# sampling


def sample_uniform_disk(n: int, window: Window, rng: np.random.Generator) -> np.ndarray:
    r = window.radius * np.sqrt(rng.random(n))
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    return np.column_stack([window.center.x + r * np.cos(phi), window.center.y + r * np.sin(phi)])


def sample_ppp(density: float, window: Window, seed: SeedLike = None) -> np.ndarray:
    """Homogeneous PPP in the disk window, returned as an ``(n, 2)`` array."""
    if not density >= 0:
        raise ValueError(f"density must be >= 0, got {density}")
    rng = make_rng(seed)
    n = rng.poisson(density * window.area)
    return sample_uniform_disk(n, window, rng)


def sample_boolean_scheme(params: BlockageParams, window: Window, seed: SeedLike = None,
                          return_heights: bool = False):
    """Rectangles whose centers form a PPP over the guard-dilated window.

    Length, width, orientation (uniform on ``[0, 2*pi)``) and, if a height law
    is given, height are drawn independently per rectangle. Zero-length draws
    (possible with a uniform law starting at 0) are nudged to a tiny positive
    length so every row is a valid rectangle.
    """
    rng = make_rng(seed)
    centers = sample_ppp(params.lam, window.dilated(), rng)
    n = len(centers)
    length = np.maximum(params.length.sample(rng, n), 1e-12)
    width = params.width.sample(rng, n)
    theta = rng.uniform(0.0, 2.0 * math.pi, n)
    rects = np.column_stack([centers, length, width, theta]) if n else np.empty((0, 5))
    if not return_heights:
        return rects
    heights = params.height.sample(rng, n) if params.height is not None else None
    return rects, heights


def sample_realization(mu: float, params: BlockageParams, window: Window, seed: SeedLike = None) -> Realization:
    rng = make_rng(seed)
    bs = sample_ppp(mu, window, rng)
    rects, heights = sample_boolean_scheme(params, window, rng, return_heights=True)
    return Realization(bs, rects, seed, heights)


# ---------------------------------------------------------------------------
# guard margin


def _half_diagonal_cdf(length: DistSpec, width: DistSpec, m: float) -> float:
    """P{sqrt(L^2 + W^2) / 2 <= m}."""
    s = (2.0 * m) ** 2
    if isinstance(length, Constant) and isinstance(width, Constant):
        return 1.0 if length.value**2 + width.value**2 <= s else 0.0
    if isinstance(length, Constant) or isinstance(width, Constant):
        fixed, free = (length, width) if isinstance(length, Constant) else (width, length)
        rest = s - fixed.value**2
        return float(free.cdf(math.sqrt(rest))) if rest >= 0 else 0.0

    def integrand(ell):
        rest = s - ell * ell
        return float(width.cdf(math.sqrt(rest))) if rest > 0 else 0.0

    # integrate F_W(sqrt(s - l^2)) against the density of L
    if isinstance(length, Uniform):
        lo, hi = length.lo, min(length.hi, 2.0 * m)
        if hi <= lo:
            return 0.0
        val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-12, epsrel=1e-10, limit=200)
        return val / (length.hi - length.lo)
    mean = length.mean_value
    val, _ = integrate.quad(lambda ell: integrand(ell) * math.exp(-ell / mean) / mean,
                            0.0, 2.0 * m, epsabs=1e-12, epsrel=1e-10, limit=200)
    return val


def guard_margin(params: BlockageParams, quantile_target: float = DEFAULT_GUARD_QUANTILE) -> float:
    """Half-diagonal bound ``m`` with ``P{sqrt(L^2+W^2)/2 > m} <= 1 - quantile_target``."""
    if not 0 < quantile_target < 1:
        raise ValueError(f"quantile_target must lie in (0, 1), got {quantile_target}")
    length, width = params.length, params.width
    if isinstance(length, Constant) and isinstance(width, Constant):
        return 0.5 * math.hypot(length.value, width.value)
    # upper bracket: each side at its own quantile bounds the joint quantile
    q_side = 1.0 - 0.5 * (1.0 - quantile_target)
    hi = 0.5 * math.hypot(length.quantile(q_side), width.quantile(q_side))
    if not math.isfinite(hi):
        raise ValueError("size distribution has no finite quantile")
    hi = max(hi, 1e-9)
    f = lambda m: _half_diagonal_cdf(length, width, m) - quantile_target
    if f(hi) < 0:
        hi *= 1.0 + 1e-9
        if f(hi) < 0:
            return hi
    return optimize.brentq(f, 0.0, hi, xtol=1e-10, rtol=1e-12)
