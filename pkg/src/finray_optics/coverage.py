"""Ray-fan tracing and the coverage objective.

A camera ray either lands on the pad directly, lands on it after exactly one
reflection from a mirror's reflective face, or misses. Each discrete ray
stands for an angular bin of width ``fov / (m - 1)``; the target footprint
around its pad hit has radius ``path_length * tan(fov / (2 (m - 1)))``.

The objective sums, over deformation states, rays and pad targets, the number
of (ray, target) pairs with the target inside the ray's footprint, divided by
the number of states. States where a mirror interferes with a beam score
zero; a layout outside its bounds scores zero everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .deformation import DeformationSet
from .geometry import EPS, Dir2, Point2, Ray2, intersect_ray_segment, nearest_hits, reflect
from .scene import (KIND_MIRROR, KIND_PAD, Bounds, LayoutVector, SceneInstance, Violation, build_scene,
                    check_bounds, check_safety)

DIRECT, REFLECTED, MISS = "direct", "reflected", "miss"


@dataclass(frozen=True)
class TraceResult:
    path: Tuple[Tuple[Point2, Point2], ...]  # finite legs, origin -> end
    hit_point: Optional[Point2]
    reflections: int
    path_length: float
    status: str
    escape: Optional[Ray2] = None  # set when the ray leaves the scene without hitting anything

    @property
    def hit(self) -> bool:
        return self.hit_point is not None


@dataclass
class CoverageReport:
    objective_value: float
    per_state_covered: List[np.ndarray]
    unique_coverage_fraction: float
    per_state_counts: List[int] = field(default_factory=list)
    per_state_safe: List[bool] = field(default_factory=list)
    violations: List[Violation] = field(default_factory=list)

    @property
    def per_state_fraction(self) -> List[float]:
        return [float(m.mean()) if m.size else 0.0 for m in self.per_state_covered]


def fan_offsets(fov: float, m: int) -> List[float]:
    return [fov * (j / (m - 1) - 0.5) for j in range(m)]


def fan_directions(axis: Dir2, fov: float, m: int) -> List[Tuple[float, float]]:
    out = []
    for off in fan_offsets(fov, m):
        c, s = math.cos(off), math.sin(off)
        x, y = c * axis.dx - s * axis.dy, s * axis.dx + c * axis.dy
        n = math.hypot(x, y)
        out.append((x / n, y / n))
    return out


def cast_fan(camera_origin: Point2, camera_axis: Dir2, fov: float, m: int) -> List[Ray2]:
    if m < 3:
        raise ValueError("need at least 3 rays")
    if not 0.0 < fov < math.pi:
        raise ValueError("fov must lie in (0, pi)")
    return [Ray2(camera_origin, Dir2(x, y)) for x, y in fan_directions(camera_axis, fov, m)]


def coverage_radius(path_length: float, fov: float, m: int) -> float:
    if path_length < 0:
        raise ValueError("path_length must be non-negative")
    return path_length * math.tan(fov / (2 * (m - 1)))


class _RawSeg:
    """Duck-typed segment that skips Segment2's validation in the hot loop."""

    __slots__ = ("a", "b")

    def __init__(self, a: Point2, b: Point2):
        self.a, self.b = a, b


def _nearest(ray: Ray2, scene: SceneInstance, candidates) -> Optional[Tuple[int, float, Point2]]:
    best = None
    for i in candidates:
        seg = _RawSeg(Point2(*scene.seg_a[i]), Point2(*scene.seg_b[i]))
        r = intersect_ray_segment(ray, seg)
        if r is not None and (best is None or r[0] < best[1]):
            best = (i, r[0], r[1])
    return best


def _facing(d: Dir2, normal) -> bool:
    return d.dx * float(normal[0]) + d.dy * float(normal[1]) < 0.0


def trace(ray: Ray2, scene: SceneInstance, occlusion: bool = True) -> TraceResult:
    """Follow one camera ray through the scene (at most one reflection).

    With ``occlusion=False`` only surfaces that could produce a hit are
    considered: the pad from the interior side and mirror reflective faces
    on the first leg, the pad alone on the second.
    """
    kind, normals = scene.kind, scene.normals
    n_seg = kind.shape[0]

    def cands(first_leg: bool, d: Dir2):
        if occlusion:
            return range(n_seg)
        keep = []
        for i in range(n_seg):
            if kind[i] == KIND_PAD or (first_leg and kind[i] == KIND_MIRROR):
                if _facing(d, normals[i]):
                    keep.append(i)
        return keep

    o = ray.origin
    r1 = _nearest(ray, scene, cands(True, ray.dir))
    if r1 is None:
        return TraceResult((), None, 0, 0.0, MISS, escape=ray)
    i1, t1, p1 = r1
    leg1 = (o, p1)
    if kind[i1] == KIND_PAD and _facing(ray.dir, normals[i1]):
        return TraceResult((leg1,), p1, 0, t1, DIRECT)
    if not (kind[i1] == KIND_MIRROR and _facing(ray.dir, normals[i1])):
        return TraceResult((leg1,), None, 0, t1, MISS)

    n = Dir2(float(normals[i1][0]), float(normals[i1][1]))
    d2 = reflect(ray.dir, n)
    ray2 = Ray2(p1, d2)
    r2 = _nearest(ray2, scene, cands(False, d2))
    if r2 is None:
        return TraceResult((leg1,), None, 1, t1, MISS, escape=ray2)
    i2, t2, p2 = r2
    legs = (leg1, (p1, p2))
    if kind[i2] == KIND_PAD and _facing(d2, normals[i2]):
        return TraceResult(legs, p2, 1, t1 + t2, REFLECTED)
    return TraceResult(legs, None, 1, t1 + t2, MISS)


def indicator(ray: Ray2, target: Point2, scene: SceneInstance, occlusion: bool = True) -> int:
    if not check_safety(scene):
        return 0
    tr = trace(ray, scene, occlusion)
    if tr.hit_point is None:
        return 0
    r = coverage_radius(tr.path_length, scene.fov, scene.ray_count)
    dx = tr.hit_point.x - target.x
    dy = tr.hit_point.y - target.y
    return int(dx * dx + dy * dy <= r * r)


@dataclass
class BatchTrace:
    """Vectorised trace of the whole fan; arrays are indexed by ray."""

    dirs: np.ndarray
    hit: np.ndarray
    hit_points: np.ndarray
    path_length: np.ndarray
    reflected: np.ndarray
    first_t: np.ndarray
    first_idx: np.ndarray
    second_t: np.ndarray
    second_idx: np.ndarray
    second_dirs: np.ndarray


def trace_fan(scene: SceneInstance, occlusion: bool = True) -> BatchTrace:
    """Same semantics as :func:`trace`, applied to every ray of the camera fan."""
    D = np.array(fan_directions(scene.camera_axis, scene.fov, scene.ray_count), dtype=float)
    R = D.shape[0]
    O = np.empty_like(D)
    O[:, 0] = scene.camera_origin.x
    O[:, 1] = scene.camera_origin.y
    kind, normals = scene.kind, scene.normals
    is_pad = kind == KIND_PAD
    is_mirror = kind == KIND_MIRROR

    facing_all = (D[:, 0:1] * normals[None, :, 0] + D[:, 1:2] * normals[None, :, 1]) < 0.0
    allowed = None if occlusion else facing_all & (is_pad | is_mirror)[None, :]
    t1, i1 = nearest_hits(O, D, scene.seg_a, scene.seg_b, EPS, allowed)
    found = i1 >= 0
    ii = np.where(found, i1, 0)
    facing1 = found & facing_all[np.arange(R), ii]
    direct = facing1 & is_pad[ii]
    refl = facing1 & is_mirror[ii]

    P1 = np.column_stack([O[:, 0] + t1 * D[:, 0], O[:, 1] + t1 * D[:, 1]])
    hit = direct.copy()
    hit_points = np.where(direct[:, None], P1, np.nan)
    path = np.where(found, t1, 0.0)
    t2_all = np.full(R, np.inf)
    i2_all = np.full(R, -1, dtype=np.int64)
    D2_all = np.full((R, 2), np.nan)

    if refl.any():
        rows = np.nonzero(refl)[0]
        n = normals[ii[rows]]
        d = D[rows]
        k = 2.0 * (d[:, 0] * n[:, 0] + d[:, 1] * n[:, 1])
        D2 = np.column_stack([d[:, 0] - k * n[:, 0], d[:, 1] - k * n[:, 1]])
        O2 = P1[rows]
        facing2 = (D2[:, 0:1] * normals[None, :, 0] + D2[:, 1:2] * normals[None, :, 1]) < 0.0
        allowed2 = None if occlusion else facing2 & is_pad[None, :]
        t2, i2 = nearest_hits(O2, D2, scene.seg_a, scene.seg_b, EPS, allowed2)
        f2 = i2 >= 0
        jj = np.where(f2, i2, 0)
        ok2 = f2 & is_pad[jj] & facing2[np.arange(rows.size), jj]
        P2 = np.column_stack([O2[:, 0] + t2 * D2[:, 0], O2[:, 1] + t2 * D2[:, 1]])
        hit[rows] = ok2
        hit_points[rows[ok2]] = P2[ok2]
        path[rows] = np.where(f2, t1[rows] + t2, t1[rows])
        t2_all[rows] = t2
        i2_all[rows] = i2
        D2_all[rows] = D2

    return BatchTrace(D, hit, hit_points, path, refl, t1, i1, t2_all, i2_all, D2_all)


def covered_pairs(scene: SceneInstance, occlusion: bool = True, bt: Optional[BatchTrace] = None) -> np.ndarray:
    """(rays, targets) boolean indicator matrix for one scene (safety not applied)."""
    if bt is None:
        bt = trace_fan(scene, occlusion)
    tan_half = math.tan(scene.fov / (2 * (scene.ray_count - 1)))
    r = bt.path_length * tan_half
    hp = np.where(bt.hit[:, None], bt.hit_points, 0.0)
    dx = hp[:, 0:1] - scene.pad_points[None, :, 0]
    dy = hp[:, 1:2] - scene.pad_points[None, :, 1]
    return bt.hit[:, None] & (dx * dx + dy * dy <= (r * r)[:, None])


def evaluate(layout: LayoutVector, defset: DeformationSet, bounds: Bounds, *,
             occlusion: bool = True, use_mirrors: bool = True) -> CoverageReport:
    if len(layout.mirrors) != defset.n_back_nodes - 1:
        raise ValueError(f"layout has {len(layout.mirrors)} mirrors but the deformation set "
                         f"has {defset.n_back_nodes} back nodes (needs {defset.n_back_nodes - 1} mirrors)")
    K = len(defset)
    n_t = defset.n_pad_points
    violations = check_bounds(layout, bounds)
    if violations:
        masks = [np.zeros(n_t, dtype=bool) for _ in range(K)]
        return CoverageReport(0.0, masks, 0.0, [0] * K, [False] * K, violations)

    counts, masks, safe = [], [], []
    for state in defset.states:
        count, mask, ok = state_coverage(layout, state, occlusion=occlusion, use_mirrors=use_mirrors,
                                         reference=defset.states[0])
        counts.append(count)
        masks.append(mask)
        safe.append(ok)
    total = 0
    for c in counts:
        total += c
    frac = sum(float(m.mean()) for m in masks) / K
    return CoverageReport(total / K, masks, frac, counts, safe, [])


def state_coverage(layout: LayoutVector, state, *, occlusion: bool = True, use_mirrors: bool = True,
                   reference=None) -> Tuple[int, np.ndarray, bool]:
    """(indicator count, covered-target mask, safe) for one in-bounds state.

    ``reference`` is the undeformed state of the set (fixes mirror faces).
    """
    scene = build_scene(layout, state, use_mirrors=use_mirrors, reference=reference)
    if not check_safety(scene):
        return 0, np.zeros(state.pad_points.shape[0], dtype=bool), False
    pairs = covered_pairs(scene, occlusion)
    return int(pairs.sum()), pairs.any(axis=0), True
