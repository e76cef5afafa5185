"""Force-to-deformation mapping for the Fin Ray cross-section.

Frame convention: the pad (front beam) of the undeformed finger runs along
``x = 0`` from the base ``(0, 0)`` to the tip ``(0, L)``; the back beam runs on
the ``x < 0`` side from ``(-base_width, 0)`` to the tip. The baseline
``N_1 -> P_1`` therefore points along ``+x`` and the finger interior lies to
the left of the pad walked base->tip.

The synthetic model pushes every pad point inward (toward the back beam) by
``compliance_gain * load * (s / L) ** curvature_profile_exp`` and carries each
crossbeam rigidly with the local rotation of the pad, so crossbeam lengths
are preserved exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .geometry import Point2

TABLE_HEADER_NAMES = "load_n,back_count,pad_count"


class DeformationTableError(ValueError):
    """Base class for deformation table problems."""


class TableParseError(DeformationTableError):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class TableSchemaError(DeformationTableError):
    pass


class TableValidationError(DeformationTableError):
    pass


@dataclass(frozen=True)
class FingerParams:
    n_back_nodes: int = 7
    n_pad_points: int = 40
    finger_length: float = 80.0  # mm
    base_width: float = 30.0  # mm, N_1 -> P_1
    tip_taper: float = 0.85  # tip width = base_width * (1 - tip_taper)
    compliance_gain: float = 2.0  # mm/N at the tip
    curvature_profile_exp: float = 2.0

    def __post_init__(self):
        if self.n_back_nodes < 3:
            raise ValueError("n_back_nodes must be >= 3")
        if self.n_pad_points < self.n_back_nodes:
            raise ValueError("n_pad_points must be >= n_back_nodes")
        if not (self.finger_length > self.base_width > 0):
            raise ValueError("need finger_length > base_width > 0")
        if not (0.0 < self.tip_taper <= 1.0):
            raise ValueError("tip_taper must lie in (0, 1]")
        if not self.compliance_gain > 0:
            raise ValueError("compliance_gain must be positive")
        if not self.curvature_profile_exp >= 0:
            raise ValueError("curvature_profile_exp must be >= 0")

    @property
    def n_mirrors(self) -> int:
        return self.n_back_nodes - 1


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DeformationState:
    """Finger geometry at one load level.

    ``back_nodes`` is (n, 2) and ``pad_points`` is (m, 2), both ordered base to
    tip. The pad points double as the coverage targets and as the vertices of
    the front-beam polyline.
    """

    load: float
    back_nodes: np.ndarray
    pad_points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "back_nodes", _frozen(self.back_nodes))
        object.__setattr__(self, "pad_points", _frozen(self.pad_points))
        if self.back_nodes.ndim != 2 or self.back_nodes.shape[1] != 2:
            raise ValueError("back_nodes must have shape (n, 2)")
        if self.pad_points.ndim != 2 or self.pad_points.shape[1] != 2:
            raise ValueError("pad_points must have shape (m, 2)")
        if not (np.isfinite(self.back_nodes).all() and np.isfinite(self.pad_points).all()):
            raise ValueError("non-finite node coordinates")

    def back_points(self) -> List[Point2]:
        return [Point2(float(x), float(y)) for x, y in self.back_nodes]

    def pad_targets(self) -> List[Point2]:
        return [Point2(float(x), float(y)) for x, y in self.pad_points]

    @property
    def handedness(self) -> float:
        """+1 when the pad lies left of the back beam (walked base to tip), else -1."""
        n1, nn = self.back_nodes[0], self.back_nodes[-1]
        p1 = self.pad_points[0]
        c = (nn[0] - n1[0]) * (p1[1] - n1[1]) - (nn[1] - n1[1]) * (p1[0] - n1[0])
        return 1.0 if c > 0 else -1.0

    def __eq__(self, other):
        if not isinstance(other, DeformationState):
            return NotImplemented
        return (self.load == other.load
                and np.array_equal(self.back_nodes, other.back_nodes)
                and np.array_equal(self.pad_points, other.pad_points))

    __hash__ = None


@dataclass(frozen=True)
class DeformationSet:
    states: Tuple[DeformationState, ...]
    source: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        if self.source not in ("synthetic", "table"):
            raise ValueError(f"unknown source {self.source!r}")
        if not self.states:
            raise TableValidationError("a deformation set needs at least one state")
        loads = [s.load for s in self.states]
        if any(b <= a for a, b in zip(loads, loads[1:])):
            raise TableValidationError(f"loads must be strictly increasing, got {loads}")
        if loads[0] != 0.0:
            raise TableValidationError("the first state must be the zero-load reference")
        nb = {s.back_nodes.shape[0] for s in self.states}
        npad = {s.pad_points.shape[0] for s in self.states}
        if len(nb) != 1 or len(npad) != 1:
            raise TableSchemaError("node counts differ between states")

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i) -> DeformationState:
        return self.states[i]

    @property
    def loads(self) -> List[float]:
        return [s.load for s in self.states]

    @property
    def n_back_nodes(self) -> int:
        return self.states[0].back_nodes.shape[0]

    @property
    def n_pad_points(self) -> int:
        return self.states[0].pad_points.shape[0]


def _undeformed(params: FingerParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (back_nodes, pad_points, back_heights)."""
    L = params.finger_length
    n, m = params.n_back_nodes, params.n_pad_points
    s_pad = np.array([L * j / (m - 1) for j in range(m)])
    s_pad[-1] = L
    pad = np.column_stack([np.zeros(m), s_pad])
    y_back = np.array([L * i / (n - 1) for i in range(n)])
    y_back[-1] = L
    width = params.base_width * (1.0 - params.tip_taper * y_back / L)
    back = np.column_stack([-width, y_back])
    return back, pad, y_back


def undeformed_profile(params: FingerParams) -> DeformationState:
    back, pad, _ = _undeformed(params)
    return DeformationState(0.0, back, pad)


def deflection(params: FingerParams, load: float, s) -> np.ndarray:
    """Inward pad deflection at arc position(s) ``s`` (mm)."""
    s = np.asarray(s, dtype=float)
    return params.compliance_gain * load * (s / params.finger_length) ** params.curvature_profile_exp


def _deflection_slope(params: FingerParams, load: float, s: np.ndarray) -> np.ndarray:
    p = params.curvature_profile_exp
    L = params.finger_length
    if p == 0:
        return np.zeros_like(s)
    with np.errstate(divide="ignore"):
        return params.compliance_gain * load * p * (s / L) ** (p - 1.0) / L


def synth_deform(params: FingerParams, load: float) -> DeformationState:
    if not load >= 0:
        raise ValueError(f"load must be non-negative, got {load}")
    back0, pad0, y_back = _undeformed(params)
    if load == 0:
        return DeformationState(0.0, back0, pad0)

    # the undeformed pad is straight along +y, so its inward normal is -x
    pad = pad0.copy()
    pad[:, 0] -= deflection(params, load, pad0[:, 1])

    anchors = np.column_stack([-deflection(params, load, y_back), y_back])
    psi = np.arctan(_deflection_slope(params, load, y_back))
    c, s = np.cos(psi), np.sin(psi)
    beam = back0 - np.column_stack([np.zeros_like(y_back), y_back])  # crossbeam vectors (-w_i, 0)
    rotated = np.column_stack([c * beam[:, 0] - s * beam[:, 1], s * beam[:, 0] + c * beam[:, 1]])
    return DeformationState(float(load), anchors + rotated, pad)


def max_pad_displacement(params: FingerParams, state: DeformationState) -> float:
    ref = undeformed_profile(params).pad_points
    return float(np.max(np.hypot(*(state.pad_points - ref).T)))


def crossbeam_anchors(params: FingerParams, state: DeformationState) -> np.ndarray:
    """Pad-side crossbeam endpoints paired with each back node, for ``state``."""
    _, _, y_back = _undeformed(params)
    return np.column_stack([-deflection(params, state.load, y_back), y_back])


def sample_loads(params: FingerParams, f_max: float, k: int) -> DeformationSet:
    if not f_max > 0:
        raise ValueError("f_max must be positive")
    if k < 2:
        raise ValueError("k must be >= 2")
    loads = [f_max * i / (k - 1) for i in range(k)]
    loads[-1] = f_max
    return DeformationSet(tuple(synth_deform(params, f) for f in loads), source="synthetic")


# --- table format -----------------------------------------------------------------

def _fmt_points(a: np.ndarray) -> str:
    return " ".join(f"{float(x)!r}:{float(y)!r}" for x, y in a)


def format_deformation_table(defset: DeformationSet) -> str:
    lines = [f"{len(defset)},{defset.n_back_nodes},{defset.n_pad_points}"]
    for st in defset.states:
        lines.append(f"F={float(st.load)!r}")
        lines.append(_fmt_points(st.back_nodes))
        lines.append(_fmt_points(st.pad_points))
    return "\n".join(lines) + "\n"


def write_deformation_table(defset: DeformationSet, path) -> Path:
    path = Path(path)
    path.write_text(format_deformation_table(defset), encoding="utf-8")
    return path


def _parse_points(text: str, lineno: int) -> np.ndarray:
    pts = []
    for tok in text.split():
        parts = tok.split(":")
        if len(parts) != 2:
            raise TableParseError(lineno, f"expected x:y pair, got {tok!r}")
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError:
            raise TableParseError(lineno, f"bad number in {tok!r}") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise TableParseError(lineno, f"non-finite coordinate in {tok!r}")
        pts.append((x, y))
    if not pts:
        raise TableParseError(lineno, "empty point list")
    return np.array(pts, dtype=float)


def parse_deformation_table(text: str) -> DeformationSet:
    lines: List[Tuple[int, str]] = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise TableParseError(1, "empty deformation table")
    if lines[0][1].replace(" ", "") == TABLE_HEADER_NAMES:
        lines = lines[1:]
        if not lines:
            raise TableParseError(1, "missing count header")
    lineno, header = lines[0]
    fields = header.split(",")
    if len(fields) != 3:
        raise TableParseError(lineno, f"header must be {TABLE_HEADER_NAMES}")
    try:
        k, n_back, n_pad = (int(f) for f in fields)
    except ValueError:
        raise TableParseError(lineno, f"header must hold three integers ({TABLE_HEADER_NAMES})") from None
    body = lines[1:]
    if len(body) % 3:
        raise TableParseError(body[-1][0] if body else lineno, "incomplete state record (need F=, back, pad lines)")
    if len(body) // 3 != k:
        raise TableSchemaError(f"header declares {k} states, file holds {len(body) // 3}")

    states = []
    for r in range(0, len(body), 3):
        (lf, fline), (lb, bline), (lp, pline) = body[r:r + 3]
        if not fline.startswith("F="):
            raise TableParseError(lf, f"expected 'F=<value>', got {fline!r}")
        try:
            load = float(fline[2:])
        except ValueError:
            raise TableParseError(lf, f"bad load value {fline[2:]!r}") from None
        if not (math.isfinite(load) and load >= 0):
            raise TableParseError(lf, f"load must be finite and non-negative, got {load}")
        back = _parse_points(bline, lb)
        pad = _parse_points(pline, lp)
        if back.shape[0] != n_back:
            raise TableSchemaError(f"line {lb}: expected {n_back} back nodes, found {back.shape[0]}")
        if pad.shape[0] != n_pad:
            raise TableSchemaError(f"line {lp}: expected {n_pad} pad points, found {pad.shape[0]}")
        states.append(DeformationState(load, back, pad))

    loads = [s.load for s in states]
    if loads != sorted(loads):
        warnings.warn("deformation table loads were not ascending; re-sorted", UserWarning, stacklevel=3)
        states.sort(key=lambda s: s.load)
    if states[0].load != 0.0:
        raise TableValidationError("deformation table has no zero-load (undeformed) state")
    return DeformationSet(tuple(states), source="table")


def load_deformation_table(path) -> DeformationSet:
    return parse_deformation_table(Path(path).read_text(encoding="utf-8"))


def states_close(a: Sequence[DeformationState], b: Sequence[DeformationState], tol: float = 1e-9) -> bool:
    if len(a) != len(b):
        return False
    for sa, sb in zip(a, b):
        if sa.load != sb.load or sa.back_nodes.shape != sb.back_nodes.shape or sa.pad_points.shape != sb.pad_points.shape:
            return False
        if np.max(np.abs(sa.back_nodes - sb.back_nodes)) > tol or np.max(np.abs(sa.pad_points - sb.pad_points)) > tol:
            return False
    return True
