"""Run configuration: a TOML document with nested sections.

Angles are written in degrees in every file this package reads or writes and
converted to radians only when the config is resolved into domain objects.
The config keeps the file-level values, so echoing it back out reproduces the
run exactly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import tomli
import tomli_w

from .deformation import DeformationSet, FingerParams, load_deformation_table, sample_loads, undeformed_profile
from .scene import Bounds


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


Pair = Tuple[float, float]


@dataclass(frozen=True)
class BoundsConfig:
    theta_deg: Pair
    offset_mm: Pair
    length_mm: Pair
    u: Pair
    phi_deg: Pair

    def to_bounds(self) -> Bounds:
        return Bounds(
            theta=(math.radians(self.theta_deg[0]), math.radians(self.theta_deg[1])),
            offset=tuple(self.offset_mm),
            length=tuple(self.length_mm),
            u=tuple(self.u),
            phi=(math.radians(self.phi_deg[0]), math.radians(self.phi_deg[1])),
        )

    @classmethod
    def default_for(cls, finger: FingerParams) -> "BoundsConfig":
        back = undeformed_profile(finger).back_nodes
        seg = float(np.min(np.hypot(*np.diff(back, axis=0).T)))
        return cls((-80.0, 80.0), (-0.4 * seg, 0.4 * seg), (2.0, 1.2 * seg), (0.05, 0.95), (-60.0, 60.0))


@dataclass(frozen=True)
class CameraConfig:
    fov_deg: float = 135.0
    ray_count: int = 61

    @property
    def fov(self) -> float:
        return math.radians(self.fov_deg)


@dataclass(frozen=True)
class LoadsConfig:
    f_max: float = 7.5
    k: int = 5
    table: Optional[str] = None  # relative paths resolve against the config file


@dataclass(frozen=True)
class CmaesConfig:
    seed: int
    population: Optional[int] = None
    parents: Optional[int] = None
    sigma0: float = 0.15  # in normalised [0, 1] coordinates
    max_generations: int = 500
    target_objective: Optional[float] = None
    sigma_tol: float = 1e-12


@dataclass(frozen=True)
class RunConfig:
    finger: FingerParams
    bounds: BoundsConfig
    camera: CameraConfig
    loads: LoadsConfig
    cmaes: CmaesConfig
    output_dir: str = "out"
    base_dir: Path = field(default=Path("."), compare=False)

    def resolved_bounds(self) -> Bounds:
        return self.bounds.to_bounds()

    def deformation_set(self) -> DeformationSet:
        if self.loads.table is not None:
            path = Path(self.loads.table)
            if not path.is_absolute():
                path = self.base_dir / path
            return load_deformation_table(path)
        return sample_loads(self.finger, self.loads.f_max, self.loads.k)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, cmaes=replace(self.cmaes, seed=int(seed)))

    def with_output_dir(self, out: str) -> "RunConfig":
        return replace(self, output_dir=str(out))

    def to_document(self) -> Dict[str, Any]:
        """Plain TOML-ready mapping; ``None`` values are left out."""
        def clean(d):
            return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items() if v is not None}
        return {
            "finger": clean(asdict(self.finger)),
            "bounds": clean(asdict(self.bounds)),
            "camera": clean(asdict(self.camera)),
            "loads": clean(asdict(self.loads)),
            "cmaes": clean(asdict(self.cmaes)),
            "output": {"dir": self.output_dir},
        }

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_document())


_SECTIONS = {"finger", "bounds", "camera", "loads", "cmaes", "output"}


def _take(section: str, data: Dict[str, Any], cls, **extra):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"[{section}] unknown key(s): {', '.join(unknown)}")
    try:
        return cls(**data, **extra)
    except TypeError as e:
        raise ConfigError(f"[{section}] {e}") from None
    except ValueError as e:
        raise ConfigError(f"[{section}] {e}") from None


def _pair(section: str, key: str, v) -> Pair:
    if not (isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
        raise ConfigError(f"[{section}] {key} must be a [min, max] pair of numbers")
    lo, hi = float(v[0]), float(v[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ConfigError(f"[{section}] {key} needs finite min < max, got [{lo}, {hi}]")
    return lo, hi


def _check_types(section: str, data: Dict[str, Any], ints=(), floats=(), strs=()):
    for k, v in data.items():
        if k in ints and (isinstance(v, bool) or not isinstance(v, int)):
            raise ConfigError(f"[{section}] {k} must be an integer")
        if k in floats:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"[{section}] {k} must be a finite number")
            data[k] = float(v)
        if k in strs and not isinstance(v, str):
            raise ConfigError(f"[{section}] {k} must be a string")


def parse_config(text: str, base_dir: Path = Path(".")) -> RunConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"config is not valid TOML: {e}") from None
    unknown = sorted(set(doc) - _SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    for name, sec in doc.items():
        if not isinstance(sec, dict):
            raise ConfigError(f"{name} must be a [section]")

    finger_d = dict(doc.get("finger", {}))
    _check_types("finger", finger_d, ints=("n_back_nodes", "n_pad_points"),
                 floats=("finger_length", "base_width", "tip_taper", "compliance_gain", "curvature_profile_exp"))
    finger = _take("finger", finger_d, FingerParams)

    if "bounds" in doc:
        b = dict(doc["bounds"])
        names = [f.name for f in fields(BoundsConfig)]
        missing = [n for n in names if n not in b]
        if missing:
            raise ConfigError(f"[bounds] missing key(s): {', '.join(missing)} (omit the section for defaults)")
        extra = sorted(set(b) - set(names))
        if extra:
            raise ConfigError(f"[bounds] unknown key(s): {', '.join(extra)}")
        bounds = BoundsConfig(**{n: _pair("bounds", n, b[n]) for n in names})
        if bounds.length_mm[0] <= 0:
            raise ConfigError("[bounds] length_mm minimum must be positive")
        if not (0.0 < bounds.u[0] and bounds.u[1] < 1.0):
            raise ConfigError("[bounds] u must stay inside (0, 1)")
    else:
        bounds = BoundsConfig.default_for(finger)

    cam_d = dict(doc.get("camera", {}))
    _check_types("camera", cam_d, ints=("ray_count",), floats=("fov_deg",))
    camera = _take("camera", cam_d, CameraConfig)
    if not 0.0 < camera.fov_deg < 180.0:
        raise ConfigError("[camera] fov_deg must lie in (0, 180)")
    if camera.ray_count < 3:
        raise ConfigError("[camera] ray_count must be >= 3")

    loads_d = dict(doc.get("loads", {}))
    _check_types("loads", loads_d, ints=("k",), floats=("f_max",), strs=("table",))
    loads = _take("loads", loads_d, LoadsConfig)
    if loads.table is None and not (loads.f_max > 0 and loads.k >= 2):
        raise ConfigError("[loads] need f_max > 0 and k >= 2")

    cm_d = dict(doc.get("cmaes", {}))
    if "seed" not in cm_d:
        raise ConfigError("[cmaes] seed is required")
    _check_types("cmaes", cm_d, ints=("seed", "population", "parents", "max_generations"),
                 floats=("sigma0", "target_objective", "sigma_tol"))
    cmaes = _take("cmaes", cm_d, CmaesConfig)
    if not 0 <= cmaes.seed < 2 ** 64:
        raise ConfigError("[cmaes] seed must be an unsigned 64-bit integer")
    if cmaes.population is not None and cmaes.population < 2:
        raise ConfigError("[cmaes] population must be >= 2")
    if cmaes.parents is not None and not (1 <= cmaes.parents <= (cmaes.population or cmaes.parents)):
        raise ConfigError("[cmaes] need 1 <= parents <= population")
    if not cmaes.sigma0 > 0:
        raise ConfigError("[cmaes] sigma0 must be positive")
    if cmaes.max_generations < 1:
        raise ConfigError("[cmaes] max_generations must be >= 1")

    out_d = dict(doc.get("output", {}))
    _check_types("output", out_d, strs=("dir",))
    extra = sorted(set(out_d) - {"dir"})
    if extra:
        raise ConfigError(f"[output] unknown key(s): {', '.join(extra)}")
    return RunConfig(finger, bounds, camera, loads, cmaes, out_d.get("dir", "out"), Path(base_dir))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config(text, path.parent)
