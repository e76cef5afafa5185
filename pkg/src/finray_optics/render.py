"""Deterministic SVG drawing of a layout under one deformation state."""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from typing import Iterable, Optional, Tuple

import numpy as np

from .coverage import MISS, REFLECTED, cast_fan, state_coverage, trace
from .deformation import DeformationState
from .scene import Bounds, LayoutVector, build_scene, check_bounds, check_safety

STYLE = """
.back { fill: none; stroke: #444; stroke-width: 0.8; }
.pad { fill: none; stroke: #b5651d; stroke-width: 1.2; }
.mirror { stroke: #1f77b4; stroke-width: 1.0; }
.mirror-face { stroke: #1f77b4; stroke-width: 0.3; }
.camera { fill: #d62728; }
.axis { stroke: #d62728; stroke-width: 0.4; }
.ray-direct { stroke: #2ca02c; stroke-width: 0.15; }
.ray-reflected { stroke: #9467bd; stroke-width: 0.15; }
.ray-miss { stroke: #999; stroke-width: 0.1; stroke-dasharray: 0.6 0.4; }
.target.covered { fill: #2ca02c; }
.target.uncovered { fill: none; stroke: #d62728; stroke-width: 0.2; }
"""


def _f(v: float) -> str:
    s = f"{v:.4f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _pts(points: Iterable[Tuple[float, float]]) -> str:
    return " ".join(f"{_f(x)},{_f(-y)}" for x, y in points)


def _line(parent, cls, a, b):
    ET.SubElement(parent, "line", {"class": cls, "x1": _f(a[0]), "y1": _f(-a[1]),
                                   "x2": _f(b[0]), "y2": _f(-b[1])})


def render_svg(layout: LayoutVector, state: DeformationState, bounds: Bounds, *,
               reference: Optional[DeformationState] = None, occlusion: bool = True,
               title: str = "") -> Tuple[str, int]:
    """Returns ``(svg_text, covered_target_count)``.

    Covered targets follow the objective's rules, so an unsafe state or an
    out-of-bounds layout draws every target as uncovered. ``reference`` is the
    undeformed state that fixes mirror faces (defaults to ``state``).
    """
    scene = build_scene(layout, state, reference=reference)
    if check_bounds(layout, bounds):
        mask = np.zeros(state.pad_points.shape[0], dtype=bool)
    else:
        _, mask, _ = state_coverage(layout, state, occlusion=occlusion, reference=reference)

    pts = np.concatenate([state.back_nodes, state.pad_points, scene.seg_a, scene.seg_b,
                          [[scene.camera_origin.x, scene.camera_origin.y]]])
    xmin, ymin = pts.min(axis=0)
    xmax, ymax = pts.max(axis=0)
    margin = 0.08 * max(xmax - xmin, ymax - ymin)
    xmin, ymin, xmax, ymax = xmin - margin, ymin - margin, xmax + margin, ymax + margin
    reach = 2.0 * math.hypot(xmax - xmin, ymax - ymin)

    svg = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "viewBox": f"{_f(xmin)} {_f(-ymax)} {_f(xmax - xmin)} {_f(ymax - ymin)}",
        "width": f"{_f(8 * (xmax - xmin))}", "height": f"{_f(8 * (ymax - ymin))}",
    })
    if title:
        ET.SubElement(svg, "title").text = title
    ET.SubElement(svg, "style").text = STYLE
    ET.SubElement(svg, "rect", {"x": _f(xmin), "y": _f(-ymax), "width": _f(xmax - xmin),
                                "height": _f(ymax - ymin), "fill": "white"})

    rays = ET.SubElement(svg, "g", {"id": "rays"})
    for ray in cast_fan(scene.camera_origin, scene.camera_axis, scene.fov, scene.ray_count):
        tr = trace(ray, scene, occlusion)
        if tr.status == MISS:
            for a, b in tr.path:
                _line(rays, "ray-miss", (a.x, a.y), (b.x, b.y))
            if tr.escape is not None:
                e = tr.escape
                _line(rays, "ray-miss", (e.origin.x, e.origin.y),
                      (e.origin.x + reach * e.dir.dx, e.origin.y + reach * e.dir.dy))
        else:
            cls = "ray-reflected" if tr.status == REFLECTED else "ray-direct"
            for a, b in tr.path:
                _line(rays, cls, (a.x, a.y), (b.x, b.y))

    ET.SubElement(svg, "polyline", {"class": "back", "points": _pts(state.back_nodes)})
    ET.SubElement(svg, "polyline", {"class": "pad", "points": _pts(state.pad_points)})

    safe = check_safety(scene)
    mirrors = ET.SubElement(svg, "g", {"id": "mirrors", "data-safe": "true" if safe else "false"})
    for seg, n in scene.mirror_segments:
        _line(mirrors, "mirror", (seg.a.x, seg.a.y), (seg.b.x, seg.b.y))
        mid = seg.midpoint
        _line(mirrors, "mirror-face", (mid.x, mid.y), (mid.x + 1.5 * n.dx, mid.y + 1.5 * n.dy))

    o, ax = scene.camera_origin, scene.camera_axis
    ET.SubElement(svg, "circle", {"class": "camera", "cx": _f(o.x), "cy": _f(-o.y), "r": "0.8"})
    _line(svg, "axis", (o.x, o.y), (o.x + 4 * ax.dx, o.y + 4 * ax.dy))

    targets = ET.SubElement(svg, "g", {"id": "targets"})
    for (x, y), cov in zip(state.pad_points, mask):
        ET.SubElement(targets, "circle", {"class": "target covered" if cov else "target uncovered",
                                          "cx": _f(x), "cy": _f(-y), "r": "0.45"})

    ET.indent(svg)
    return ET.tostring(svg, encoding="unicode") + "\n", int(mask.sum())
