"""Flat text layout files, one labelled parameter per line.

    # 6 mirrors
    mirror.1.theta_deg = 31.5
    mirror.1.offset_mm = -0.8
    mirror.1.length_mm = 9.25
    ...
    camera.u = 0.42
    camera.phi_deg = 12.0

Values are written with ``repr`` so a file re-reads to the same floats.
Because angles cross a degree/radian conversion, :func:`canonical_layout`
iterates write/read to a fixed point; layouts saved by the optimiser are
canonical, so evaluating a re-read file reproduces the stored objective.
"""

from __future__ import annotations

import math
import re
from pathlib import Path
from typing import Dict, List

from .scene import DEFAULT_FOV, DEFAULT_RAY_COUNT, CameraParams, LayoutVector, MirrorParams


class LayoutFileError(ValueError):
    pass


_LINE = re.compile(r"^(mirror\.(\d+)\.(theta_deg|offset_mm|length_mm)|camera\.(u|phi_deg))\s*=\s*(\S+)$")


def format_layout(layout: LayoutVector) -> str:
    lines = [f"# {len(layout.mirrors)} mirrors"]
    for i, m in enumerate(layout.mirrors, start=1):
        lines.append(f"mirror.{i}.theta_deg = {math.degrees(m.theta)!r}")
        lines.append(f"mirror.{i}.offset_mm = {m.offset!r}")
        lines.append(f"mirror.{i}.length_mm = {m.length!r}")
    lines.append(f"camera.u = {layout.camera.u!r}")
    lines.append(f"camera.phi_deg = {math.degrees(layout.camera.phi)!r}")
    return "\n".join(lines) + "\n"


def parse_layout(text: str, fov: float = DEFAULT_FOV, ray_count: int = DEFAULT_RAY_COUNT) -> LayoutVector:
    mirrors: Dict[int, Dict[str, float]] = {}
    camera: Dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _LINE.match(line)
        if not m:
            raise LayoutFileError(f"line {lineno}: expected 'mirror.<i>.<param> = <value>' "
                                  f"or 'camera.<param> = <value>', got {raw!r}")
        try:
            value = float(m.group(5))
        except ValueError:
            raise LayoutFileError(f"line {lineno}: {m.group(5)!r} is not a number") from None
        if not math.isfinite(value):
            raise LayoutFileError(f"line {lineno}: value must be finite")
        if m.group(2) is not None:
            idx = int(m.group(2))
            slot = mirrors.setdefault(idx, {})
            key = m.group(3)
        else:
            slot, key = camera, m.group(4)
        if key in slot:
            raise LayoutFileError(f"line {lineno}: duplicate entry {m.group(1)}")
        slot[key] = value

    n = len(mirrors)
    if sorted(mirrors) != list(range(1, n + 1)):
        raise LayoutFileError(f"mirror indices must run 1..{n}, got {sorted(mirrors)}")
    params: List[MirrorParams] = []
    for i in range(1, n + 1):
        missing = [k for k in ("theta_deg", "offset_mm", "length_mm") if k not in mirrors[i]]
        if missing:
            raise LayoutFileError(f"mirror {i} is missing {', '.join(missing)}")
        d = mirrors[i]
        params.append(MirrorParams(math.radians(d["theta_deg"]), d["offset_mm"], d["length_mm"]))
    missing = [k for k in ("u", "phi_deg") if k not in camera]
    if missing:
        raise LayoutFileError(f"camera is missing {', '.join(missing)}")
    return LayoutVector(tuple(params), CameraParams(camera["u"], math.radians(camera["phi_deg"]), fov, ray_count))


def canonical_layout(layout: LayoutVector, max_rounds: int = 8) -> LayoutVector:
    """Nearest layout that survives a write/read round trip unchanged."""
    cam = layout.camera
    text = format_layout(layout)
    for _ in range(max_rounds):
        cur = parse_layout(text, cam.fov, cam.ray_count)
        nxt = format_layout(cur)
        if nxt == text:
            return cur
        text = nxt
    raise LayoutFileError("layout text did not reach a fixed point")


def write_layout(layout: LayoutVector, path) -> Path:
    path = Path(path)
    path.write_text(format_layout(layout), encoding="utf-8")
    return path


def load_layout(path, fov: float = DEFAULT_FOV, ray_count: int = DEFAULT_RAY_COUNT) -> LayoutVector:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise LayoutFileError(f"cannot read layout {path}: {e.strerror}") from None
    return parse_layout(text, fov, ray_count)
