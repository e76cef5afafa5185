"""Exact 2D primitives: points, unit directions, rays and segments.

All lengths are millimetres and all angles radians. The scalar functions
here are the reference semantics; :func:`nearest_hits` is a vectorised
kernel that evaluates the same arithmetic (operation for operation) over
many rays and segments at once, so both paths agree bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

# Self-intersection guard on ray origins.
EPS = 1e-9
UNIT_TOL = 1e-12
MIN_SEGMENT_LENGTH = 1e-9


@dataclass(frozen=True, slots=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y

    def __add__(self, other: "Point2") -> "Point2":
        return Point2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Point2") -> "Point2":
        return Point2(self.x - other.x, self.y - other.y)

    def scaled(self, k: float) -> "Point2":
        return Point2(self.x * k, self.y * k)

    def dist(self, other: "Point2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True, slots=True)
class Dir2:
    dx: float
    dy: float

    def __post_init__(self):
        n = math.hypot(self.dx, self.dy)
        if not abs(n - 1.0) <= UNIT_TOL:
            raise ValueError(f"direction ({self.dx}, {self.dy}) is not unit norm (|d|={n!r})")

    def __iter__(self):
        yield self.dx
        yield self.dy

    @classmethod
    def normalized(cls, dx: float, dy: float) -> "Dir2":
        n = math.hypot(dx, dy)
        if n == 0.0 or not math.isfinite(n):
            raise ValueError("cannot normalize a zero or non-finite vector")
        return cls(dx / n, dy / n)

    @classmethod
    def from_angle(cls, angle: float) -> "Dir2":
        return cls(math.cos(angle), math.sin(angle))

    @property
    def angle(self) -> float:
        return math.atan2(self.dy, self.dx)

    def dot(self, other) -> float:
        ox, oy = other
        return self.dx * ox + self.dy * oy

    def rotated(self, angle: float) -> "Dir2":
        c, s = math.cos(angle), math.sin(angle)
        return Dir2.normalized(c * self.dx - s * self.dy, s * self.dx + c * self.dy)

    def left(self) -> "Dir2":
        """Counter-clockwise perpendicular."""
        return Dir2(-self.dy, self.dx)

    def right(self) -> "Dir2":
        return Dir2(self.dy, -self.dx)

    def __neg__(self) -> "Dir2":
        return Dir2(-self.dx, -self.dy)


@dataclass(frozen=True, slots=True)
class Segment2:
    a: Point2
    b: Point2

    def __post_init__(self):
        if self.a.dist(self.b) <= MIN_SEGMENT_LENGTH:
            raise ValueError(f"degenerate segment {self.a} -> {self.b}")

    @property
    def length(self) -> float:
        return self.a.dist(self.b)

    @property
    def midpoint(self) -> Point2:
        return Point2(0.5 * (self.a.x + self.b.x), 0.5 * (self.a.y + self.b.y))

    @property
    def direction(self) -> Dir2:
        return Dir2.normalized(self.b.x - self.a.x, self.b.y - self.a.y)


@dataclass(frozen=True, slots=True)
class Ray2:
    origin: Point2
    dir: Dir2

    def at(self, t: float) -> Point2:
        return Point2(self.origin.x + t * self.dir.dx, self.origin.y + t * self.dir.dy)


def cross(ax: float, ay: float, bx: float, by: float) -> float:
    return ax * by - ay * bx


def reflect(d: Dir2, n: Dir2) -> Dir2:
    """Mirror ``d`` about a surface with unit normal ``n``: d - 2(d.n)n."""
    k = 2.0 * (d.dx * n.dx + d.dy * n.dy)
    return Dir2(d.dx - k * n.dx, d.dy - k * n.dy)


def intersect_ray_segment(ray: Ray2, seg: Segment2, eps: float = EPS) -> Optional[Tuple[float, Point2]]:
    """Nearest intersection ``(t, p)`` of ``ray`` with ``seg`` for ``t > eps``.

    A ray running along the segment's supporting line resolves to the nearest
    segment endpoint ahead of the origin. Returns None when there is no hit.
    """
    ox, oy = ray.origin.x, ray.origin.y
    dx, dy = ray.dir.dx, ray.dir.dy
    ax, ay = seg.a.x, seg.a.y
    ex = seg.b.x - ax
    ey = seg.b.y - ay
    wx = ax - ox
    wy = ay - oy
    denom = dx * ey - dy * ex
    if denom == 0.0:
        if wx * dy - wy * dx != 0.0:
            return None
        ta = wx * dx + wy * dy
        tb = (seg.b.x - ox) * dx + (seg.b.y - oy) * dy
        ahead = [t for t in (ta, tb) if t > eps]
        if not ahead:
            return None
        t = min(ahead)
    else:
        t = (wx * ey - wy * ex) / denom
        u = (wx * dy - wy * dx) / denom
        if not (t > eps and 0.0 <= u <= 1.0):
            return None
    return t, Point2(ox + t * dx, oy + t * dy)


def point_segment_distance(p: Point2, seg: Segment2) -> float:
    ex = seg.b.x - seg.a.x
    ey = seg.b.y - seg.a.y
    px = p.x - seg.a.x
    py = p.y - seg.a.y
    u = (px * ex + py * ey) / (ex * ex + ey * ey)
    u = min(1.0, max(0.0, u))
    return math.hypot(px - u * ex, py - u * ey)


def segments_intersect(s1: Segment2, s2: Segment2) -> bool:
    """True iff the closed segments share at least one point.

    Solved parametrically; the parallel case falls back to interval overlap
    along the shared line.
    """
    ax, ay = s1.a.x, s1.a.y
    rx, ry = s1.b.x - ax, s1.b.y - ay
    cx, cy = s2.a.x, s2.a.y
    sx, sy = s2.b.x - cx, s2.b.y - cy
    qx, qy = cx - ax, cy - ay
    denom = rx * sy - ry * sx
    num_t = qx * sy - qy * sx
    num_u = qx * ry - qy * rx
    if denom == 0.0:
        if num_u != 0.0:
            return False
        rr = rx * rx + ry * ry
        t0 = (qx * rx + qy * ry) / rr
        t1 = ((s2.b.x - ax) * rx + (s2.b.y - ay) * ry) / rr
        lo, hi = min(t0, t1), max(t0, t1)
        return hi >= 0.0 and lo <= 1.0
    if denom < 0.0:
        denom, num_t, num_u = -denom, -num_t, -num_u
    return 0.0 <= num_t <= denom and 0.0 <= num_u <= denom


def nearest_hits(origins: np.ndarray, dirs: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray,
                 eps: float = EPS, allowed: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised nearest ray-segment intersection.

    ``origins`` and ``dirs`` are (R, 2); ``seg_a``/``seg_b`` are (S, 2). Returns
    ``(t, index)`` per ray, with ``t = inf`` and ``index = -1`` on a miss. Ties
    in ``t`` resolve to the lowest segment index. ``allowed`` is an optional
    (R, S) mask; segments masked out are transparent for that ray.
    """
    ox = origins[:, 0:1]
    oy = origins[:, 1:2]
    dx = dirs[:, 0:1]
    dy = dirs[:, 1:2]
    ax = seg_a[None, :, 0]
    ay = seg_a[None, :, 1]
    bx = seg_b[None, :, 0]
    by = seg_b[None, :, 1]
    ex = bx - ax
    ey = by - ay
    wx = ax - ox
    wy = ay - oy
    denom = dx * ey - dy * ex
    num_u = wx * dy - wy * dx
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (wx * ey - wy * ex) / denom
        u = num_u / denom
    ok = (denom != 0.0) & (t > eps) & (u >= 0.0) & (u <= 1.0)
    tt = np.where(ok, t, np.inf)
    collinear = (denom == 0.0) & (num_u == 0.0)
    if collinear.any():
        ta = wx * dx + wy * dy
        tb = (bx - ox) * dx + (by - oy) * dy
        ta = np.where(ta > eps, ta, np.inf)
        tb = np.where(tb > eps, tb, np.inf)
        tt = np.where(collinear, np.minimum(ta, tb), tt)
    if allowed is not None:
        tt = np.where(allowed, tt, np.inf)
    if tt.shape[1] == 0:
        return np.full(tt.shape[0], np.inf), np.full(tt.shape[0], -1, dtype=np.int64)
    idx = np.argmin(tt, axis=1)
    tmin = tt[np.arange(tt.shape[0]), idx]
    idx = np.where(np.isfinite(tmin), idx, -1)
    return tmin, idx
