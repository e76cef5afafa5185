"""Subcommand implementations behind the CLI.

Each command takes a resolved :class:`RunConfig` and writes its artefacts
into ``config.output_dir``. Nothing here reads the clock or iterates an
unordered container into an output file, so reruns are byte-identical.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import tomli_w

from . import __version__
from .cmaes import RunOutcome, StopCriteria, default_hyperparams, run
from .config import RunConfig
from .coverage import CoverageReport, evaluate
from .deformation import DeformationSet, write_deformation_table
from .layoutfile import canonical_layout, load_layout, write_layout
from .render import render_svg
from .scene import Bounds, LayoutVector

log = logging.getLogger(__name__)

RESULT_FILE = "result.toml"
HISTORY_FILE = "history.csv"
LAYOUT_FILE = "best_layout.txt"
REPORT_FILE = "report.toml"
TABLE_FILE = "deformation.txt"
SELF_CONSISTENCY_TOL = 1e-9


class SelfConsistencyError(ArithmeticError):
    pass


@dataclass
class RunResult:
    best_layout: LayoutVector
    best_objective: float
    unique_coverage_fraction: float
    report: CoverageReport
    loads: List[float]
    history: List[Tuple[int, float, float]]
    config: RunConfig
    stop_reason: str
    evaluations: int
    tool_version: str = __version__


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


class NormalizedObjective:
    """Maps a point of the unit cube onto the layout box and scores it.

    The optimiser works in these coordinates so one step size suits angles,
    lengths and the baseline fraction alike.
    """

    def __init__(self, defset: DeformationSet, bounds: Bounds, fov: float, ray_count: int):
        self.defset, self.bounds = defset, bounds
        self.fov, self.ray_count = fov, ray_count
        self.lo, self.hi = bounds.vector_bounds(defset.n_back_nodes - 1)

    @property
    def dim(self) -> int:
        return self.lo.size

    def layout(self, z) -> LayoutVector:
        z = np.asarray(z, dtype=float)
        return LayoutVector.from_vector(self.lo + (self.hi - self.lo) * z, self.fov, self.ray_count)

    def __call__(self, z) -> float:
        return evaluate(self.layout(z), self.defset, self.bounds).objective_value


def state_summaries(report: CoverageReport, loads: List[float]) -> List[Dict[str, Any]]:
    rows = []
    for load, mask, count, safe in zip(loads, report.per_state_covered, report.per_state_counts,
                                       report.per_state_safe):
        rows.append({
            "load_n": float(load),
            "indicator_count": int(count),
            "covered_fraction": float(mask.mean()) if mask.size else 0.0,
            "safe": bool(safe),
            "covered_mask": "".join("1" if v else "0" for v in mask),
        })
    return rows


def layout_document(layout: LayoutVector) -> Dict[str, Any]:
    return {
        "mirrors": [{"theta_deg": math.degrees(m.theta), "offset_mm": m.offset, "length_mm": m.length}
                    for m in layout.mirrors],
        "camera": {"u": layout.camera.u, "phi_deg": math.degrees(layout.camera.phi)},
    }


def report_document(report: CoverageReport, loads: List[float]) -> Dict[str, Any]:
    doc: Dict[str, Any] = {
        "objective_value": float(report.objective_value),
        "unique_coverage_fraction": float(report.unique_coverage_fraction),
        "violations": [str(v) for v in report.violations],
        "states": state_summaries(report, loads),
    }
    return doc


def result_document(res: RunResult) -> Dict[str, Any]:
    return {
        "tool_version": res.tool_version,
        "best_objective": float(res.best_objective),
        "unique_coverage_fraction": float(res.unique_coverage_fraction),
        "stop_reason": res.stop_reason,
        "evaluations": int(res.evaluations),
        "generations": len(res.history),
        "best_layout": layout_document(res.best_layout),
        "states": state_summaries(res.report, res.loads),
        "history_file": HISTORY_FILE,
        "config": res.config.to_document(),
    }


def format_history(history: List[Tuple[int, float, float]]) -> str:
    lines = ["generation,best_f,sigma"]
    lines += [f"{int(g)},{float(f)!r},{float(s)!r}" for g, f, s in history]
    return "\n".join(lines) + "\n"


def optimize(config: RunConfig, *, progress_every: int = 0) -> RunResult:
    """Run CMA-ES from the centre of the bounds box; no files are written."""
    defset = config.deformation_set()
    bounds = config.resolved_bounds()
    fov, m = config.camera.fov, config.camera.ray_count
    objective = NormalizedObjective(defset, bounds, fov, m)
    cm = config.cmaes
    hp = default_hyperparams(objective.dim, cm.population, cm.parents)
    stop = StopCriteria(max_generations=cm.max_generations, target=cm.target_objective, sigma_tol=cm.sigma_tol)
    z0 = np.full(objective.dim, 0.5)

    def callback(state, best_f):
        if progress_every and state.generation % progress_every == 0:
            log.info("generation %d: best %.4f, sigma %.3g", state.generation, best_f, state.sigma)

    outcome: RunOutcome = run(objective, z0, cm.sigma0, (np.zeros(objective.dim), np.ones(objective.dim)), stop,
                              seed=cm.seed, hp=hp, callback=callback)
    best = canonical_layout(objective.layout(outcome.best_x))
    report = evaluate(best, defset, bounds)
    if report.objective_value != outcome.best_f:
        log.info("best objective after layout canonicalisation: %r (search reported %r)",
                 report.objective_value, outcome.best_f)
    return RunResult(best, report.objective_value, report.unique_coverage_fraction, report, defset.loads,
                     outcome.history, config, outcome.stop_reason, outcome.evaluations)


def save_result(res: RunResult, out: Path) -> Dict[str, Path]:
    """Write layout, history, result and per-state SVGs, then verify the round trip."""
    paths = {
        "layout": write_layout(res.best_layout, out / LAYOUT_FILE),
        "history": out / HISTORY_FILE,
        "result": out / RESULT_FILE,
    }
    paths["history"].write_text(format_history(res.history), encoding="utf-8")
    paths["result"].write_text(tomli_w.dumps(result_document(res)), encoding="utf-8")

    defset = res.config.deformation_set()
    bounds = res.config.resolved_bounds()
    reread = load_layout(paths["layout"], res.config.camera.fov, res.config.camera.ray_count)
    again = evaluate(reread, defset, bounds).objective_value
    if abs(again - res.best_objective) > SELF_CONSISTENCY_TOL:
        raise SelfConsistencyError(f"stored objective {res.best_objective!r} but the saved layout "
                                   f"re-evaluates to {again!r}")
    for i, state in enumerate(defset.states):
        svg, _ = render_svg(res.best_layout, state, bounds, reference=defset.states[0],
                            title=f"state {i}, load {state.load!r} N")
        p = out / f"best_state_{i}.svg"
        p.write_text(svg, encoding="utf-8")
        paths[f"svg{i}"] = p
    return paths


def cmd_optimize(config: RunConfig, *, progress_every: int = 0) -> RunResult:
    out = _out_dir(config)
    res = optimize(config, progress_every=progress_every)
    save_result(res, out)
    return res


def cmd_evaluate(config: RunConfig, layout_file) -> CoverageReport:
    defset = config.deformation_set()
    layout = load_layout(layout_file, config.camera.fov, config.camera.ray_count)
    report = evaluate(layout, defset, config.resolved_bounds())
    out = _out_dir(config)
    (out / REPORT_FILE).write_text(tomli_w.dumps(report_document(report, defset.loads)), encoding="utf-8")
    return report


def cmd_render(config: RunConfig, layout_file, state_index: int) -> Tuple[Path, int]:
    defset = config.deformation_set()
    if not 0 <= state_index < len(defset):
        raise IndexError(f"state index {state_index} out of range (config has {len(defset)} states)")
    layout = load_layout(layout_file, config.camera.fov, config.camera.ray_count)
    if len(layout.mirrors) != defset.n_back_nodes - 1:
        raise ValueError(f"layout has {len(layout.mirrors)} mirrors but the finger needs {defset.n_back_nodes - 1}")
    state = defset[state_index]
    svg, covered = render_svg(layout, state, config.resolved_bounds(), reference=defset.states[0],
                              title=f"state {state_index}, load {state.load!r} N")
    path = _out_dir(config) / f"state_{state_index}.svg"
    path.write_text(svg, encoding="utf-8")
    return path, covered


def cmd_deform_gen(config: RunConfig) -> Path:
    defset = config.deformation_set()
    return write_deformation_table(defset, _out_dir(config) / TABLE_FILE)
