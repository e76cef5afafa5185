"""World-space realisation of a layout under one deformation state."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .deformation import DeformationState, FingerParams, undeformed_profile
from .geometry import Dir2, Point2, Segment2

DEFAULT_FOV = math.radians(135.0)
DEFAULT_RAY_COUNT = 61
MOUNT_TOL = 1e-6

KIND_MIRROR, KIND_PAD, KIND_BACK = 0, 1, 2


@dataclass(frozen=True)
class MirrorParams:
    theta: float  # rad, rotation from the host segment direction (CCW)
    offset: float  # mm, signed shift of the midpoint along the host segment
    length: float  # mm


@dataclass(frozen=True)
class CameraParams:
    u: float  # fraction of the baseline N_1 -> P_1
    phi: float  # rad, optical axis vs. baseline (CCW)
    fov: float = DEFAULT_FOV
    ray_count: int = DEFAULT_RAY_COUNT

    def __post_init__(self):
        if not 0.0 < self.fov < math.pi:
            raise ValueError("fov must lie in (0, pi)")
        if self.ray_count < 3:
            raise ValueError("ray_count must be >= 3")


@dataclass(frozen=True)
class LayoutVector:
    mirrors: Tuple[MirrorParams, ...]
    camera: CameraParams

    def __post_init__(self):
        object.__setattr__(self, "mirrors", tuple(self.mirrors))

    @property
    def dim(self) -> int:
        return 3 * len(self.mirrors) + 2

    def to_vector(self) -> np.ndarray:
        v = [x for m in self.mirrors for x in (m.theta, m.offset, m.length)]
        v += [self.camera.u, self.camera.phi]
        return np.array(v, dtype=float)

    @classmethod
    def from_vector(cls, x: Sequence[float], fov: float = DEFAULT_FOV,
                    ray_count: int = DEFAULT_RAY_COUNT) -> "LayoutVector":
        x = [float(v) for v in x]
        if len(x) < 5 or (len(x) - 2) % 3:
            raise ValueError(f"layout vector length {len(x)} is not 3(n-1)+2")
        mirrors = tuple(MirrorParams(*x[i:i + 3]) for i in range(0, len(x) - 2, 3))
        return cls(mirrors, CameraParams(x[-2], x[-1], fov, ray_count))

    def without_mirrors(self) -> "LayoutVector":
        return LayoutVector((), self.camera)


@dataclass(frozen=True)
class Bounds:
    theta: Tuple[float, float]
    offset: Tuple[float, float]
    length: Tuple[float, float]
    u: Tuple[float, float]
    phi: Tuple[float, float]

    def __post_init__(self):
        for name in ("theta", "offset", "length", "u", "phi"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"bounds for {name} need min < max, got ({lo}, {hi})")

    def vector_bounds(self, n_mirrors: int) -> Tuple[np.ndarray, np.ndarray]:
        lo = [self.theta[0], self.offset[0], self.length[0]] * n_mirrors + [self.u[0], self.phi[0]]
        hi = [self.theta[1], self.offset[1], self.length[1]] * n_mirrors + [self.u[1], self.phi[1]]
        return np.array(lo, dtype=float), np.array(hi, dtype=float)

    def midpoint_layout(self, n_mirrors: int, fov: float = DEFAULT_FOV,
                        ray_count: int = DEFAULT_RAY_COUNT) -> LayoutVector:
        lo, hi = self.vector_bounds(n_mirrors)
        return LayoutVector.from_vector(0.5 * (lo + hi), fov, ray_count)


def default_bounds(params: FingerParams) -> Bounds:
    """Permissive defaults scaled by the shortest undeformed back-beam segment."""
    back = undeformed_profile(params).back_nodes
    seg = float(np.min(np.hypot(*np.diff(back, axis=0).T)))
    return Bounds(
        theta=(math.radians(-80.0), math.radians(80.0)),
        offset=(-0.4 * seg, 0.4 * seg),
        length=(2.0, 1.2 * seg),
        u=(0.05, 0.95),
        phi=(math.radians(-60.0), math.radians(60.0)),
    )


@dataclass(frozen=True)
class Violation:
    parameter: str
    value: float
    lo: float
    hi: float

    def __str__(self):
        side = "below min" if self.value < self.lo else "above max" if self.value > self.hi else "non-finite"
        return f"{self.parameter} = {self.value!r} {side} of [{self.lo!r}, {self.hi!r}]"


def check_bounds(layout: LayoutVector, bounds: Bounds) -> List[Violation]:
    out = []

    def test(name, value, lim):
        lo, hi = lim
        if not (lo <= value <= hi):
            out.append(Violation(name, value, lo, hi))

    for i, m in enumerate(layout.mirrors, start=1):
        test(f"mirror {i} theta", m.theta, bounds.theta)
        test(f"mirror {i} offset", m.offset, bounds.offset)
        test(f"mirror {i} length", m.length, bounds.length)
    test("camera u", layout.camera.u, bounds.u)
    test("camera phi", layout.camera.phi, bounds.phi)
    return out


def _mirror_frames(layout: LayoutVector, state: DeformationState):
    """Per mirror: (a, b, midpoint, unit direction, host interior normal)."""
    back = state.back_nodes
    if len(layout.mirrors) != back.shape[0] - 1:
        raise ValueError(f"layout has {len(layout.mirrors)} mirrors, state needs {back.shape[0] - 1}")
    h = state.handedness
    out = []
    for i, m in enumerate(layout.mirrors):
        seg = Segment2(Point2(*back[i]), Point2(*back[i + 1]))
        e = seg.direction
        mid = seg.midpoint + Point2(m.offset * e.dx, m.offset * e.dy)
        c, s = math.cos(m.theta), math.sin(m.theta)
        mx, my = c * e.dx - s * e.dy, s * e.dx + c * e.dy
        half = 0.5 * m.length
        a = Point2(mid.x - half * mx, mid.y - half * my)
        b = Point2(mid.x + half * mx, mid.y + half * my)
        n_in = e.left() if h > 0 else e.right()
        out.append((a, b, mid, (mx, my), n_in))
    return out


def mirror_face_signs(layout: LayoutVector, reference: DeformationState) -> List[float]:
    """+1 when a mirror's reflective face is the left side of a -> b, else -1.

    The face is fixed at assembly: it is the side facing the pad centroid in
    the reference (undeformed) state. A mirror whose line passes exactly
    through the centroid faces the finger interior.
    """
    cx, cy = (float(v) for v in reference.pad_points.mean(axis=0))
    signs = []
    for a, b, mid, (mx, my), n_in in _mirror_frames(layout, reference):
        lx, ly = -my, mx
        toward = lx * (cx - mid.x) + ly * (cy - mid.y)
        if toward == 0.0:
            toward = lx * n_in.dx + ly * n_in.dy
        signs.append(1.0 if toward >= 0.0 else -1.0)
    return signs


def instantiate_mirrors(layout: LayoutVector, state: DeformationState,
                        reference: Optional[DeformationState] = None) -> List[Tuple[Segment2, Dir2]]:
    """Mirror segments and their reflective-face normals for one state.

    ``reference`` is the undeformed state that decides which face reflects
    (see :func:`mirror_face_signs`); it defaults to ``state`` itself.
    """
    frames = _mirror_frames(layout, state)
    signs = mirror_face_signs(layout, reference if reference is not None else state)
    out = []
    for (a, b, _, (mx, my), _), sg in zip(frames, signs):
        out.append((Segment2(a, b), Dir2.normalized(-sg * my, sg * mx)))
    return out


def place_camera(layout: LayoutVector, state: DeformationState) -> Tuple[Point2, Dir2]:
    n1 = state.back_nodes[0]
    p1 = state.pad_points[0]
    u = layout.camera.u
    origin = Point2(float(n1[0] + u * (p1[0] - n1[0])), float(n1[1] + u * (p1[1] - n1[1])))
    base = Dir2.normalized(float(p1[0] - n1[0]), float(p1[1] - n1[1]))
    phi = layout.camera.phi
    c, s = math.cos(phi), math.sin(phi)
    axis = Dir2.normalized(c * base.dx - s * base.dy, s * base.dx + c * base.dy)
    return origin, axis


def _polyline_normals(pts: np.ndarray, left: bool) -> np.ndarray:
    d = np.diff(pts, axis=0)
    d = d / np.hypot(d[:, 0], d[:, 1])[:, None]
    return np.column_stack([-d[:, 1], d[:, 0]]) if left else np.column_stack([d[:, 1], -d[:, 0]])


@dataclass(frozen=True, eq=False)
class SceneInstance:
    """Obstacles are stored in a fixed order: mirrors, pad segments, back segments.

    ``normals`` holds the reflective normal for mirrors and the interior-facing
    normal for beam segments. Lower index wins ties in nearest-hit queries.
    """

    mirror_segments: Tuple[Tuple[Segment2, Dir2], ...]
    camera_origin: Point2
    camera_axis: Dir2
    fov: float
    ray_count: int
    back_nodes: np.ndarray
    pad_points: np.ndarray
    seg_a: np.ndarray = field(repr=False)
    seg_b: np.ndarray = field(repr=False)
    kind: np.ndarray = field(repr=False)
    normals: np.ndarray = field(repr=False)
    mount_points: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)

    @property
    def n_mirrors(self) -> int:
        return len(self.mirror_segments)

    @property
    def pad_targets(self) -> List[Point2]:
        return [Point2(float(x), float(y)) for x, y in self.pad_points]

    @property
    def obstacles(self) -> List[Segment2]:
        return [Segment2(Point2(*a), Point2(*b)) for a, b in zip(self.seg_a, self.seg_b)]

    @property
    def pad_slice(self) -> slice:
        k = self.n_mirrors
        return slice(k, k + self.pad_points.shape[0] - 1)

    @property
    def back_slice(self) -> slice:
        k = self.n_mirrors + self.pad_points.shape[0] - 1
        return slice(k, k + self.back_nodes.shape[0] - 1)

    def pad_segments(self) -> List[Segment2]:
        p = self.pad_points
        return [Segment2(Point2(*p[j]), Point2(*p[j + 1])) for j in range(p.shape[0] - 1)]

    def back_segments(self) -> List[Segment2]:
        b = self.back_nodes
        return [Segment2(Point2(*b[j]), Point2(*b[j + 1])) for j in range(b.shape[0] - 1)]


def build_scene(layout: LayoutVector, state: DeformationState, use_mirrors: bool = True,
                reference: Optional[DeformationState] = None) -> SceneInstance:
    """``reference`` is the undeformed state fixing each mirror's reflective face."""
    mirrors = instantiate_mirrors(layout, state, reference) if use_mirrors and layout.mirrors else []
    origin, axis = place_camera(layout, state)
    h = state.handedness
    pad, back = state.pad_points, state.back_nodes

    m_a = np.array([[s.a.x, s.a.y] for s, _ in mirrors], dtype=float).reshape(-1, 2)
    m_b = np.array([[s.b.x, s.b.y] for s, _ in mirrors], dtype=float).reshape(-1, 2)
    m_n = np.array([[n.dx, n.dy] for _, n in mirrors], dtype=float).reshape(-1, 2)
    seg_a = np.concatenate([m_a, pad[:-1], back[:-1]])
    seg_b = np.concatenate([m_b, pad[1:], back[1:]])
    # the interior lies left of the back beam when h > 0, and then right of the pad
    normals = np.concatenate([m_n, _polyline_normals(pad, left=h < 0), _polyline_normals(back, left=h > 0)])
    kind = np.concatenate([np.full(len(mirrors), KIND_MIRROR), np.full(pad.shape[0] - 1, KIND_PAD),
                           np.full(back.shape[0] - 1, KIND_BACK)]).astype(np.int8)
    mounts = np.array([[s.midpoint.x, s.midpoint.y] for s, _ in mirrors], dtype=float).reshape(-1, 2)
    theta = np.array([m.theta for m in layout.mirrors] if mirrors else [], dtype=float)
    for arr in (seg_a, seg_b, normals, kind, mounts, theta):
        arr.setflags(write=False)
    return SceneInstance(tuple(mirrors), origin, axis, layout.camera.fov, layout.camera.ray_count,
                         back, pad, seg_a, seg_b, kind, normals, mounts, theta)


def _seg_pairs_intersect(a1, b1, a2, b2) -> np.ndarray:
    """Vectorised closed-segment intersection, (P, 2) inputs; same arithmetic as
    :func:`geometry.segments_intersect`."""
    ax, ay = a1[:, 0], a1[:, 1]
    rx, ry = b1[:, 0] - ax, b1[:, 1] - ay
    cx, cy = a2[:, 0], a2[:, 1]
    sx, sy = b2[:, 0] - cx, b2[:, 1] - cy
    qx, qy = cx - ax, cy - ay
    denom = rx * sy - ry * sx
    num_t = qx * sy - qy * sx
    num_u = qx * ry - qy * rx
    neg = denom < 0.0
    denom = np.where(neg, -denom, denom)
    num_t = np.where(neg, -num_t, num_t)
    num_u = np.where(neg, -num_u, num_u)
    cross_hit = (denom != 0.0) & (num_t >= 0.0) & (num_t <= denom) & (num_u >= 0.0) & (num_u <= denom)
    par = (denom == 0.0) & (num_u == 0.0)
    if par.any():
        with np.errstate(divide="ignore", invalid="ignore"):
            rr = rx * rx + ry * ry
            t0 = (qx * rx + qy * ry) / rr
            t1 = ((b2[:, 0] - ax) * rx + (b2[:, 1] - ay) * ry) / rr
        lo, hi = np.minimum(t0, t1), np.maximum(t0, t1)
        cross_hit = cross_hit | (par & (hi >= 0.0) & (lo <= 1.0))
    return cross_hit


def _touches_host_only_at_mount(mirror: Segment2, mount: Point2, host: Segment2) -> bool:
    rx, ry = mirror.b.x - mirror.a.x, mirror.b.y - mirror.a.y
    sx, sy = host.b.x - host.a.x, host.b.y - host.a.y
    denom = rx * sy - ry * sx
    if abs(denom) <= 1e-12 * math.hypot(rx, ry) * math.hypot(sx, sy):
        # flat-bonded: the mirror lies along its own host segment
        return True
    qx, qy = host.a.x - mirror.a.x, host.a.y - mirror.a.y
    t = (qx * sy - qy * sx) / denom
    p = Point2(mirror.a.x + t * rx, mirror.a.y + t * ry)
    return p.dist(mount) <= MOUNT_TOL


def mirror_beam_conflicts(scene: SceneInstance) -> List[Tuple[int, str, int]]:
    """All (mirror index, 'pad'|'back', segment index) pairs that interfere."""
    k = scene.n_mirrors
    if k == 0:
        return []
    beams = np.r_[scene.pad_slice.start:scene.back_slice.stop]
    mi = np.repeat(np.arange(k), beams.size)
    bi = np.tile(beams, k)
    hit = _seg_pairs_intersect(scene.seg_a[mi], scene.seg_b[mi], scene.seg_a[bi], scene.seg_b[bi])
    out = []
    n_pad = scene.pad_points.shape[0] - 1
    for m, b in zip(mi[hit], bi[hit]):
        local = int(b) - k
        if local >= n_pad:
            j = local - n_pad
            if j == m:
                seg, _ = scene.mirror_segments[m]
                host = Segment2(Point2(*scene.seg_a[b]), Point2(*scene.seg_b[b]))
                if _touches_host_only_at_mount(seg, Point2(*scene.mount_points[m]), host):
                    continue
            out.append((int(m), "back", j))
        else:
            out.append((int(m), "pad", local))
    return out


def check_safety(scene: SceneInstance) -> bool:
    return not mirror_beam_conflicts(scene)
