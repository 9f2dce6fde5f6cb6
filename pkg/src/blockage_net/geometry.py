"""Planar predicates for links (segments) and rectangular blockages.

Rectangles are handled either as :class:`Rect` values or, in bulk, as an
``(n, 5)`` float array with columns ``cx, cy, length, width, orientation``.
The bulk kernels broadcast over segments and rectangles so the Monte Carlo
engine never loops over pairs in Python.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

TWO_PI = 2.0 * math.pi

RECT_COLUMNS = ("cx", "cy", "length", "width", "orientation")


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")


@dataclass(frozen=True)
class Segment:
    a: Point2
    b: Point2

    @property
    def length(self) -> float:
        return math.hypot(self.b.x - self.a.x, self.b.y - self.a.y)

    @classmethod
    def from_coords(cls, ax, ay, bx, by) -> "Segment":
        return cls(Point2(float(ax), float(ay)), Point2(float(bx), float(by)))


@dataclass(frozen=True)
class Rect:
    """Blockage footprint: a rotated rectangle with an optional height mark.

    ``orientation`` is the angle of the length axis and is normalised to
    ``[0, 2*pi)``. A zero width gives a line segment.
    """

    center: Point2
    length: float
    width: float
    orientation: float = 0.0
    height: Optional[float] = None

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"rect length must be > 0, got {self.length}")
        if not self.width >= 0:
            raise ValueError(f"rect width must be >= 0, got {self.width}")
        if self.height is not None and not self.height >= 0:
            raise ValueError(f"rect height must be >= 0, got {self.height}")
        object.__setattr__(self, "orientation", normalize_angle(self.orientation))

    @property
    def half_diagonal(self) -> float:
        return 0.5 * math.hypot(self.length, self.width)

    def corners(self) -> np.ndarray:
        """The four corners, counter-clockwise, as a ``(4, 2)`` array."""
        c, s = math.cos(self.orientation), math.sin(self.orientation)
        hl, hw = 0.5 * self.length, 0.5 * self.width
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.center.x, self.center.y])


def normalize_angle(theta: float) -> float:
    out = math.fmod(theta, TWO_PI)
    if out < 0:
        out += TWO_PI
    # fmod of a value just below 0 can round up to exactly 2*pi
    return 0.0 if out >= TWO_PI else out


RectLike = Union[Sequence[Rect], np.ndarray]


def as_rect_array(rects: RectLike) -> np.ndarray:
    """Return blockages as an ``(n, 5)`` array (see module docstring)."""
    if isinstance(rects, np.ndarray):
        arr = np.asarray(rects, dtype=float)
        if arr.ndim == 1 and arr.size == 0:
            return arr.reshape(0, 5)
        if arr.ndim != 2 or arr.shape[1] != 5:
            raise ValueError(f"rect array must have shape (n, 5), got {arr.shape}")
        return arr
    rows = [(r.center.x, r.center.y, r.length, r.width, r.orientation) for r in rects]
    if not rows:
        return np.empty((0, 5))
    return np.array(rows, dtype=float)


def rects_from_array(arr: np.ndarray, heights: Optional[np.ndarray] = None) -> list:
    out = []
    for i, (cx, cy, ln, wd, th) in enumerate(np.asarray(arr, dtype=float)):
        h = None if heights is None else float(heights[i])
        out.append(Rect(Point2(float(cx), float(cy)), float(ln), float(wd), float(th), h))
    return out


# ---------------------------------------------------------------------------
# point containment


def rect_contains_point(r: Rect, q: Point2) -> bool:
    dx, dy = q.x - r.center.x, q.y - r.center.y
    c, s = math.cos(r.orientation), math.sin(r.orientation)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return abs(u) <= 0.5 * r.length and abs(v) <= 0.5 * r.width


def points_in_rects(px, py, rects: np.ndarray) -> np.ndarray:
    """Broadcast containment test; ``px, py`` broadcast against the rect rows."""
    cx, cy, ln, wd, th = (rects[..., i] for i in range(5))
    dx, dy = px - cx, py - cy
    c, s = np.cos(th), np.sin(th)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (np.abs(u) <= 0.5 * ln) & (np.abs(v) <= 0.5 * wd)


# ---------------------------------------------------------------------------
# segment / rectangle intersection


def clip_segments(ax, ay, bx, by, rects: np.ndarray):
    """Liang-Barsky clipping of segments against rectangles.

    All arguments broadcast together (``rects[..., k]`` supplies the k-th
    rect column). Returns ``(t_in, t_out)`` in units of the segment
    parameter; the closed segment meets the closed rectangle iff
    ``t_in <= t_out``.
    """
    cx, cy, ln, wd, th = (rects[..., i] for i in range(5))
    c, s = np.cos(th), np.sin(th)
    ox, oy = ax - cx, ay - cy
    dx, dy = bx - ax, by - ay
    u0 = ox * c + oy * s
    v0 = -ox * s + oy * c
    du = dx * c + dy * s
    dv = -dx * s + dy * c
    t_in = np.zeros(np.broadcast(u0, du).shape)
    t_out = np.ones_like(t_in)
    for p0, dp, half in ((u0, du, 0.5 * ln), (v0, dv, 0.5 * wd)):
        p0, dp, half = np.broadcast_arrays(p0, dp, half)
        moving = dp != 0
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-half - p0) / dp
            t2 = (half - p0) / dp
        lo = np.where(moving, np.minimum(t1, t2), -np.inf)
        hi = np.where(moving, np.maximum(t1, t2), np.inf)
        # parallel to this slab: either always inside it or never
        outside = ~moving & (np.abs(p0) > half)
        lo = np.where(outside, np.inf, lo)
        hi = np.where(outside, -np.inf, hi)
        t_in = np.maximum(t_in, lo)
        t_out = np.minimum(t_out, hi)
    return t_in, t_out


def hits_by_clipping(ax, ay, bx, by, rects: np.ndarray) -> np.ndarray:
    t_in, t_out = clip_segments(ax, ay, bx, by, rects)
    return t_in <= t_out


def hits_by_dilation(ax, ay, bx, by, rects: np.ndarray) -> np.ndarray:
    """Intersection test via the dilation (hit) region of the segment.

    A rectangle meets the segment iff its center lies in the Minkowski sum of
    the segment with the rectangle's (centrally symmetric) body. That sum is
    a convex hexagon whose edge normals are the two rectangle axes and the
    segment normal, so membership is three support-function inequalities.
    """
    cx, cy, ln, wd, th = (rects[..., i] for i in range(5))
    c, s = np.cos(th), np.sin(th)
    mx, my = 0.5 * (ax + bx), 0.5 * (ay + by)
    hx, hy = 0.5 * (bx - ax), 0.5 * (by - ay)
    qx, qy = cx - mx, cy - my
    hl, hw = 0.5 * ln, 0.5 * wd

    # rectangle length axis (c, s) and width axis (-s, c)
    along_u = np.abs(qx * c + qy * s) <= np.abs(hx * c + hy * s) + hl
    along_v = np.abs(-qx * s + qy * c) <= np.abs(-hx * s + hy * c) + hw

    # segment normal (-hy, hx), unnormalised; a point segment has no normal
    nq = np.abs(-qx * hy + qy * hx)
    reach = hl * np.abs(-c * hy + s * hx) + hw * np.abs(s * hy + c * hx)
    along_n = (nq <= reach) | ((hx == 0) & (hy == 0))
    return along_u & along_v & along_n


def segment_intersects_rect(s: Segment, r: Rect, method: str = "clip") -> bool:
    """True iff the closed segment and the closed rectangle share a point.

    ``method`` selects one of two independent implementations: ``"clip"``
    (slab clipping in the rectangle frame) or ``"dilation"`` (center inside
    the segment's hit hexagon).
    """
    arr = as_rect_array([r])[0]
    if method == "clip":
        fn = hits_by_clipping
    elif method == "dilation":
        fn = hits_by_dilation
    else:
        raise ValueError(f"unknown method {method!r}")
    return bool(fn(s.a.x, s.a.y, s.b.x, s.b.y, arr))


def dilation_area(R: float, length: float, width: float, theta: float) -> float:
    """Area of the set of rectangle centers whose rectangle meets a link of
    length ``R`` (the Minkowski sum of segment and rectangle)."""
    if R < 0 or length < 0 or width < 0:
        raise ValueError("R, length and width must be non-negative")
    return R * length * abs(math.sin(theta)) + R * width * abs(math.cos(theta)) + length * width


def count_intersections(s: Segment, blockages: RectLike) -> int:
    arr = as_rect_array(blockages)
    if len(arr) == 0:
        return 0
    return int(np.count_nonzero(hits_by_clipping(s.a.x, s.a.y, s.b.x, s.b.y, arr)))


# ---------------------------------------------------------------------------
# links anchored at the origin (the typical user)


def _origin_candidates(points: np.ndarray, rects: np.ndarray, n_sectors: int = 512):
    """Conservative candidate pairs for links from the origin to ``points``.

    Each rectangle's bounding circle spans an angular interval seen from the
    origin; rectangles are bucketed into the angular sectors they touch and a
    point is paired only with the rectangles in its own sector that are not
    farther than the point. Returns ``(point_index, rect_index)``.
    """
    width = TWO_PI / n_sectors
    cx, cy = rects[:, 0], rects[:, 1]
    rad = 0.5 * np.hypot(rects[:, 2], rects[:, 3])
    dc = np.hypot(cx, cy)
    phi_c = np.arctan2(cy, cx) % TWO_PI
    near = dc <= rad
    with np.errstate(divide="ignore", invalid="ignore"):
        half_span = np.where(near, np.pi, np.arcsin(np.minimum(rad / dc, 1.0)))
    # slack keeps the filter conservative under rounding
    half_span = half_span + 1e-9
    lo = np.floor((phi_c - half_span) / width).astype(np.int64)
    hi = np.floor((phi_c + half_span) / width).astype(np.int64)
    span = np.minimum(hi - lo + 1, n_sectors)
    lo = np.where(near, 0, lo)
    span = np.where(near, n_sectors, span)

    rect_of = np.repeat(np.arange(len(rects)), span)
    offsets = np.arange(len(rect_of)) - np.repeat(np.cumsum(span) - span, span)
    sector_of = (np.repeat(lo, span) + offsets) % n_sectors
    order = np.argsort(sector_of, kind="stable")
    rect_sorted = rect_of[order]
    per_sector = np.bincount(sector_of, minlength=n_sectors)
    first = np.cumsum(per_sector) - per_sector

    r = np.hypot(points[:, 0], points[:, 1])
    sec = (np.floor((np.arctan2(points[:, 1], points[:, 0]) % TWO_PI) / width).astype(np.int64)) % n_sectors
    take = per_sector[sec]
    ii = np.repeat(np.arange(len(points)), take)
    pos = np.repeat(first[sec], take) + np.arange(len(ii)) - np.repeat(np.cumsum(take) - take, take)
    jj = rect_sorted[pos]
    keep = r[ii] >= dc[jj] - rad[jj] - 1e-9
    return ii[keep], jj[keep]


def origin_link_hits(points: np.ndarray, rects: np.ndarray):
    """Exact (point, rect) hit pairs for links from the origin to ``points``.

    Returns ``(point_index, rect_index, t_in)`` for every hit, where ``t_in``
    is the entry parameter along the link measured from the origin.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    rects = as_rect_array(rects)
    empty = (np.empty(0, int), np.empty(0, int), np.empty(0))
    if len(points) == 0 or len(rects) == 0:
        return empty
    ii, jj = _origin_candidates(points, rects)
    if len(ii) == 0:
        return empty
    t_in, t_out = clip_segments(0.0, 0.0, points[ii, 0], points[ii, 1], rects[jj])
    hit = t_in <= t_out
    return ii[hit], jj[hit], t_in[hit]


def count_origin_link_hits(points: np.ndarray, rects: np.ndarray) -> np.ndarray:
    """Number of rectangles crossing each link from the origin to a point."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    ii, _, _ = origin_link_hits(points, rects)
    return np.bincount(ii, minlength=len(points))


def ray_free_distance(angles: np.ndarray, rects: np.ndarray, max_dist: float) -> np.ndarray:
    """Distance from the origin to the first blockage along each direction.

    Rays are truncated at ``max_dist``; an origin inside a blockage gives 0.
    """
    angles = np.asarray(angles, dtype=float)
    tips = max_dist * np.column_stack([np.cos(angles), np.sin(angles)])
    out = np.full(len(angles), float(max_dist))
    ii, _, t_in = origin_link_hits(tips, rects)
    if len(ii):
        np.minimum.at(out, ii, t_in * max_dist)
    return out


def segments_hit_counts(segments: Iterable[Segment], rects: RectLike) -> np.ndarray:
    arr = as_rect_array(rects)
    segs = list(segments)
    if not segs or len(arr) == 0:
        return np.zeros(len(segs), dtype=int)
    a = np.array([[s.a.x, s.a.y, s.b.x, s.b.y] for s in segs])
    hits = hits_by_clipping(a[:, 0:1], a[:, 1:2], a[:, 2:3], a[:, 3:4], arr[None, :, :])
    return hits.sum(axis=1)
