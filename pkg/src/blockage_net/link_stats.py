"""Single-link blockage analytics.

The number of blockages ``K`` crossing a link of length ``R`` is Poisson with
mean ``beta*R + p``. Everything here follows from that law: line-of-sight and
indoor probabilities, the height thinning factor, the distribution of the
penetration loss ``S`` (product of per-building power ratios) and mean
received power.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .processes import DistSpec

DB_RATE = 0.1 * math.log(10.0)  # natural-log units per dB

LINK_TYPES = ("general", "outdoorOutdoor", "indoorOutdoor")


# ---------------------------------------------------------------------------
# modified Bessel function I1

_SERIES_TERMS = 60
_ASYMPTOTIC_TERMS = 30
_SERIES_LIMIT = 15.0


def _i1_series(x):
    half = 0.5 * x
    q = half * half
    term = half.copy()
    total = half.copy()
    for k in range(_SERIES_TERMS):
        term = term * q / ((k + 1) * (k + 2))
        total = total + term
    return total


def _i1e_asymptotic(x):
    # e^{-x} I1(x) ~ (2 pi x)^{-1/2} sum_k (-1)^k prod_{j<=k} (4 - (2j-1)^2) / (k! (8x)^k)
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, _ASYMPTOTIC_TERMS + 1):
        term = -term * (4.0 - (2 * k - 1) ** 2) / (k * 8.0 * x)
        total = total + term
    return total / np.sqrt(2.0 * math.pi * x)


def bessel_i1e(x):
    """Exponentially scaled ``exp(-|x|) * I1(x)``."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    out = np.empty_like(ax)
    small = ax < _SERIES_LIMIT
    out[small] = _i1_series(ax[small]) * np.exp(-ax[small])
    out[~small] = _i1e_asymptotic(ax[~small])
    out = np.copysign(out, x)
    return out if out.ndim else float(out)


def bessel_i1(x):
    """First-order modified Bessel function of the first kind.

    Power series below 15, asymptotic expansion above.
    """
    x = np.asarray(x, dtype=float)
    out = np.asarray(bessel_i1e(x)) * np.exp(np.abs(x))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# penetration loss per building


@dataclass(frozen=True)
class GammaModel:
    """Law of the per-building power ratio ``gamma`` in ``[0, 1]``.

    Build with :meth:`impenetrable`, :meth:`constant`, :meth:`uniform01` or
    :meth:`custom` (first two moments only).
    """

    kind: str
    gamma: Optional[float] = None
    mean_gamma: Optional[float] = None
    mean_gamma_sq: Optional[float] = None

    def __post_init__(self):
        if self.kind == "constant":
            if self.gamma is None or not 0 <= self.gamma <= 1:
                raise ValueError(f"constant gamma must be in [0, 1], got {self.gamma}")
        elif self.kind == "custom":
            m1, m2 = self.mean_gamma, self.mean_gamma_sq
            if m1 is None or m2 is None or not (0 <= m1 <= 1 and 0 <= m2 <= 1):
                raise ValueError("custom gamma needs moments in [0, 1]")
            # tolerance absorbs rounding in user-supplied moments
            if m2 < m1 * m1 - 1e-12 or m2 > m1 + 1e-12:
                raise ValueError(f"infeasible moments E[g]={m1}, E[g^2]={m2} for g in [0, 1]")
        elif self.kind not in ("impenetrable", "uniform01"):
            raise ValueError(f"unknown gamma model {self.kind!r}")

    @classmethod
    def impenetrable(cls):
        return cls("impenetrable")

    @classmethod
    def constant(cls, gamma: float):
        return cls("constant", gamma=float(gamma))

    @classmethod
    def uniform01(cls):
        return cls("uniform01")

    @classmethod
    def custom(cls, mean_gamma: float, mean_gamma_sq: float):
        return cls("custom", mean_gamma=float(mean_gamma), mean_gamma_sq=float(mean_gamma_sq))

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind")
        if kind == "constant":
            return cls.constant(d["gamma"])
        if kind == "custom":
            return cls.custom(d["meanGamma"], d["meanGammaSq"])
        return cls(kind)

    def to_dict(self):
        if self.kind == "constant":
            return {"kind": "constant", "gamma": self.gamma}
        if self.kind == "custom":
            return {"kind": "custom", "meanGamma": self.mean_gamma, "meanGammaSq": self.mean_gamma_sq}
        return {"kind": self.kind}

    @property
    def is_impenetrable(self) -> bool:
        return self.kind == "impenetrable" or (self.kind == "constant" and self.gamma == 0)

    @property
    def mean(self) -> float:
        return self.moment(1)

    def moment(self, n: int) -> float:
        """``E[gamma**n]`` for ``n >= 0``."""
        if n < 0:
            raise ValueError("moment order must be >= 0")
        if n == 0:
            return 1.0
        if self.kind == "impenetrable":
            return 0.0
        if self.kind == "constant":
            return self.gamma**n
        if self.kind == "uniform01":
            return 1.0 / (n + 1)
        if n == 1:
            return self.mean_gamma
        if n == 2:
            return self.mean_gamma_sq
        raise ValueError("custom gamma model only supplies the first two moments")

    def laplace_db(self, t):
        """Laplace transform of the per-building loss in dB, ``-10*log10(gamma)``.

        Equals ``E[gamma**(t / DB_RATE)]``.
        """
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("Laplace argument must be >= 0")
        if self.is_impenetrable:
            raise ValueError("impenetrable blockages have an infinite dB loss")
        if self.kind == "constant":
            out = self.gamma ** (t / DB_RATE)
        elif self.kind == "uniform01":
            out = DB_RATE / (DB_RATE + t)
        else:
            raise ValueError("custom gamma model does not define a full loss law")
        return out if np.ndim(out) else float(out)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "impenetrable":
            return np.zeros(size)
        if self.kind == "constant":
            return np.full(size, self.gamma)
        if self.kind == "uniform01":
            return rng.random(size)
        # custom: beta law with the supplied mean and variance
        m1, m2 = self.mean_gamma, self.mean_gamma_sq
        var = m2 - m1 * m1
        if var <= 1e-15 or var >= m1 * (1 - m1) - 1e-15:
            if var <= 1e-15:
                return np.full(size, m1)
            return (rng.random(size) < m1).astype(float)
        k = m1 * (1 - m1) / var - 1.0
        return rng.beta(m1 * k, (1 - m1) * k, size)


# ---------------------------------------------------------------------------
# blockage count law


def derive_beta_p(lam: float, mean_length: float, mean_width: float):
    """``(beta, p)`` of a Boolean scheme with center density ``lam``."""
    if lam < 0 or mean_length < 0 or mean_width < 0:
        raise ValueError("inputs must be non-negative")
    beta = 2.0 * lam * (mean_length + mean_width) / math.pi
    return beta, lam * mean_length * mean_width


def expected_blockages(beta: float, p: float, R):
    R = np.asarray(R, dtype=float)
    if np.any(R < 0):
        raise ValueError("link length must be >= 0")
    out = beta * R + p
    return out if out.ndim else float(out)


def los_probability(beta: float, p: float, R):
    out = np.exp(-np.asarray(expected_blockages(beta, p, R)))
    return out if out.ndim else float(out)


def indoor_probability(p: float) -> float:
    if p < 0:
        raise ValueError("p must be >= 0")
    return -math.expm1(-p)


@dataclass(frozen=True)
class HeightContext:
    h_base: float
    h_user: float
    height: DistSpec

    def __post_init__(self):
        if not self.h_base > self.h_user >= 0:
            raise ValueError(f"need h_base > h_user >= 0, got {self.h_base}, {self.h_user}")


def height_factor(ctx: HeightContext) -> float:
    """Probability that a building crossing the ground link also cuts the
    3-D ray from the user (height ``h_user``) to the base station.

    The ray height is uniform along the link, so this is one minus the mean
    of the height CDF over ``[h_user, h_base]``.
    """
    span = ctx.h_base - ctx.h_user
    mean_cdf = (ctx.height.integrated_cdf(ctx.h_base) - ctx.height.integrated_cdf(ctx.h_user)) / span
    return float(min(max(1.0 - mean_cdf, 0.0), 1.0))


# ---------------------------------------------------------------------------
# distribution of the penetration loss S


def laplace_S_dB(t, gamma_model: GammaModel, beta: float, p: float, R: float):
    """Laplace transform of the link loss in dB, ``-10*log10(S)``."""
    c = expected_blockages(beta, p, R)
    out = np.exp(c * (np.asarray(gamma_model.laplace_db(t)) - 1.0))
    return out if np.ndim(out) else float(out)


def moment_S(n: int, gamma_model: GammaModel, beta: float, p: float, R: float) -> float:
    if n < 1:
        raise ValueError("moment order must be >= 1")
    c = expected_blockages(beta, p, R)
    return math.exp(-c * (1.0 - gamma_model.moment(n)))


def _uniform_loss_density_z(z, c):
    """Density of ``-ln S`` (continuous part) for uniform per-building ratios."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z > 0
    zp = z[pos]
    arg = 2.0 * np.sqrt(c * zp)
    out[pos] = np.exp(-c - zp + arg) * np.sqrt(c / zp) * np.asarray(bessel_i1e(arg))
    out[~pos] = c * math.exp(-c)
    return out


def pdf_S_uniform_gamma(y, beta: float, p: float, R: float):
    """Law of ``S`` when every building passes a uniform fraction of power.

    Returns ``(atom, density)``: the point mass at ``S = 1`` (line of sight)
    and the density of the continuous part evaluated at ``y`` in ``(0, 1]``.
    """
    c = expected_blockages(beta, p, R)
    if not c > 0:
        raise ValueError("mean blockage count must be > 0")
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0) or np.any(y > 1):
        raise ValueError("y must lie in (0, 1]")
    z = -np.log(y)
    # f_S(y) = g(z) / y with g the density of z = -ln S
    dens = _uniform_loss_density_z(z, c) / y
    return math.exp(-c), (dens if dens.ndim else float(dens))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _gl_integral(fn, a, b):
    """Vectorised 20-point Gauss-Legendre over arrays of intervals."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = mid[..., None] + half[..., None] * _GL_X
    return half * (fn(nodes) @ _GL_W)


def cdf_S_uniform_gamma(y, beta: float, p: float, R: float):
    """``P{S <= y}`` under uniform per-building ratios (atom at 1 included)."""
    c = expected_blockages(beta, p, R)
    if not c > 0:
        raise ValueError("mean blockage count must be > 0")
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    out = np.ones_like(y)
    below = (y > 0) & (y < 1)
    out[y <= 0] = 0.0
    if np.any(below):
        z = -np.log(y[below])
        g = lambda zz: _uniform_loss_density_z(zz, c)
        # panels of width 0.1 in z; mass beyond z_max is below 1e-16
        z_max = (math.sqrt(c) + 9.0) ** 2
        edges = np.arange(0.0, z_max + 0.1, 0.1)
        cum = np.concatenate([[0.0], np.cumsum(_gl_integral(g, edges[:-1], edges[1:]))])
        idx = np.clip(np.searchsorted(edges, z, side="right") - 1, 0, len(edges) - 1)
        mass_below_z = cum[idx] + _gl_integral(g, edges[idx], z)
        # P{S <= y} = P{-ln S >= z} = continuous mass minus mass on (0, z)
        out[below] = np.clip(-math.expm1(-c) - mass_below_z, 0.0, 1.0)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# beta-mixture approximation


@dataclass(frozen=True)
class LossModel:
    """Law of ``S``: a point mass ``delta0`` at 1 plus ``(1 - delta0)`` times a
    Beta(a, b) density. ``exact`` marks the impenetrable (Bernoulli) case,
    where the continuous part is a point mass at 0 and ``a, b`` are unused."""

    delta0: float
    a: float = math.nan
    b: float = math.nan
    exact: bool = False

    def moment(self, n: int) -> float:
        if self.exact:
            return self.delta0 if n >= 1 else 1.0
        beta_moment = 1.0
        for k in range(n):
            beta_moment *= (self.a + k) / (self.a + self.b + k)
        return (1.0 - self.delta0) * beta_moment + self.delta0

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.exact:
            cont = np.where(x >= 0, 1.0, 0.0)
        else:
            cont = special.betainc(self.a, self.b, np.clip(x, 0.0, 1.0))
        out = (1.0 - self.delta0) * cont + self.delta0 * (x >= 1)
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        los = rng.random(size) < self.delta0
        cont = np.zeros(size) if self.exact else rng.beta(self.a, self.b, size)
        return np.where(los, 1.0, cont)


def moment_matched_beta(delta0: float, delta1: float, delta2: float):
    """Beta(a, b) shape parameters so the mixture has moments ``delta1, delta2``.

    The continuous part must carry mean ``m1 = (delta1-delta0)/(1-delta0)``
    and second moment ``m2 = (delta2-delta0)/(1-delta0)``.
    """
    if not 0 <= delta0 < 1:
        raise ValueError(f"delta0 must lie in [0, 1), got {delta0}")
    m1 = (delta1 - delta0) / (1.0 - delta0)
    m2 = (delta2 - delta0) / (1.0 - delta0)
    var = m2 - m1 * m1
    if not (0 < m1 < 1) or not (0 < var < m1 * (1 - m1)):
        raise ValueError(
            f"degenerate moment system (delta0={delta0}, delta1={delta1}, delta2={delta2})")
    total = (m1 - m2) / var
    return m1 * total, (1.0 - m1) * total


def beta_approx(gamma_model: GammaModel, beta: float, p: float, R: float) -> LossModel:
    if gamma_model.is_impenetrable:
        raise ValueError("beta approximation needs penetrable blockages; use loss_model()")
    c = expected_blockages(beta, p, R)
    if not c > 0:
        raise ValueError("mean blockage count must be > 0")
    d0 = math.exp(-c)
    d1 = math.exp(-c * (1.0 - gamma_model.moment(1)))
    d2 = math.exp(-c * (1.0 - gamma_model.moment(2)))
    a, b = moment_matched_beta(d0, d1, d2)
    return LossModel(d0, a, b, exact=False)


def loss_model(gamma_model: GammaModel, beta: float, p: float, R: float) -> LossModel:
    """Exact Bernoulli law when impenetrable, beta mixture otherwise."""
    if gamma_model.is_impenetrable:
        return LossModel(float(los_probability(beta, p, R)), exact=True)
    return beta_approx(gamma_model, beta, p, R)


# ---------------------------------------------------------------------------
# link budget


def mean_received_power(M: float, R: float, alpha: float, gamma_model: GammaModel,
                        beta: float, p: float, link_type: str = "general") -> float:
    """Mean received power averaged over fading and blockages.

    ``link_type`` is ``"general"`` (no condition on the endpoints),
    ``"outdoorOutdoor"`` (both endpoints outside buildings) or
    ``"indoorOutdoor"`` (exactly one endpoint inside).
    """
    if not R > 0:
        raise ValueError("link length must be > 0")
    g = gamma_model.mean
    path = M / R**alpha
    if link_type == "general":
        return path * math.exp(-(beta * R + p) * (1.0 - g))
    if link_type == "outdoorOutdoor":
        return path * math.exp(-(beta * R - p) * (1.0 - g))
    if link_type == "indoorOutdoor":
        if p == 0:
            raise ValueError("indoor links need p > 0")
        # (1 - e^{-g p}) / (1 - e^{-p}), written with expm1 for small p
        ratio = math.expm1(-g * p) / math.expm1(-p)
        return path * ratio * math.exp(-beta * R * (1.0 - g))
    raise ValueError(f"unknown link type {link_type!r}; expected one of {LINK_TYPES}")
