import math
import re

import numpy as np
import pytest
import tomli
import tomli_w

from finray_optics import __version__
from finray_optics.cli import main
from finray_optics.commands import (HISTORY_FILE, LAYOUT_FILE, REPORT_FILE, RESULT_FILE, TABLE_FILE, cmd_deform_gen,
                                    cmd_evaluate, cmd_optimize, cmd_render)
from finray_optics.config import ConfigError, load_config, parse_config
from finray_optics.coverage import evaluate
from finray_optics.deformation import (DeformationSet, FingerParams, format_deformation_table,
                                       load_deformation_table, sample_loads, states_close, undeformed_profile)
from finray_optics.layoutfile import (LayoutFileError, canonical_layout, format_layout, load_layout, parse_layout,
                                      write_layout)
from finray_optics.scene import CameraParams, LayoutVector, MirrorParams

SMALL = """
[finger]
n_back_nodes = 4
n_pad_points = 12

[camera]
ray_count = 21

[loads]
f_max = 7.5
k = 3

[cmaes]
seed = 1
max_generations = {gens}

[output]
dir = "{out}"
"""


def write_config(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def small_config(tmp_path, gens=30, out="out"):
    return write_config(tmp_path, SMALL.format(gens=gens, out=(tmp_path / out).as_posix()))


@pytest.fixture(scope="module")
def optimized(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("opt")
    cfg = load_config(small_config(tmp, gens=40))
    res = cmd_optimize(cfg)
    return cfg, res, tmp / "out"


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("[cmaes]\nseed = 3\n")
        assert cfg.finger == FingerParams()
        assert (cfg.camera.fov_deg, cfg.camera.ray_count) == (135.0, 61)
        assert (cfg.loads.f_max, cfg.loads.k) == (7.5, 5)
        assert cfg.cmaes.seed == 3 and cfg.cmaes.max_generations == 500
        b = cfg.resolved_bounds()
        assert b.theta == pytest.approx((-math.radians(80), math.radians(80)))

    def test_seed_required(self):
        with pytest.raises(ConfigError, match="seed"):
            parse_config("[finger]\nn_back_nodes = 5\n")

    @pytest.mark.parametrize("text,match", [
        ("[cmaes]\nseed = 1\n[bogus]\nx = 1\n", "unknown section"),
        ("[cmaes]\nseed = 1\nfoo = 2\n", "unknown key"),
        ("[cmaes]\nseed = 1.5\n", "integer"),
        ("[cmaes]\nseed = 1\n[finger]\nn_back_nodes = 2\n", "finger"),
        ("[cmaes]\nseed = 1\n[camera]\nfov_deg = 190.0\n", "fov"),
        ("[cmaes]\nseed = 1\n[bounds]\ntheta_deg = [-10, 10]\n", "missing"),
        ("[cmaes]\nseed = -1\n", "unsigned"),
        ("[cmaes]\nseed = 1\npopulation = 4\nparents = 6\n", "parents"),
        ("not toml at all [", "TOML"),
    ])
    def test_rejects(self, text, match):
        with pytest.raises(ConfigError, match=match):
            parse_config(text)

    def test_echo_round_trip(self):
        cfg = parse_config("[cmaes]\nseed = 9\npopulation = 16\n[finger]\nbase_width = 35.0\n")
        again = parse_config(cfg.dumps())
        assert again == cfg

    def test_table_path_relative_to_config(self, tmp_path):
        ds = sample_loads(FingerParams(n_back_nodes=3, n_pad_points=6), 2.0, 3)
        (tmp_path / "tables").mkdir()
        (tmp_path / "tables" / "t.txt").write_text(format_deformation_table(ds))
        p = write_config(tmp_path, '[cmaes]\nseed = 1\n[loads]\ntable = "tables/t.txt"\n')
        assert load_config(p).deformation_set().loads == [0.0, 1.0, 2.0]


class TestLayoutFile:
    def _lv(self):
        return LayoutVector((MirrorParams(0.1, -0.5, 3.0), MirrorParams(-1.2, 0.25, 7.0)), CameraParams(0.3, 0.2))

    def test_round_trip(self):
        lv = canonical_layout(self._lv())
        assert parse_layout(format_layout(lv)) == lv

    def test_canonical_is_text_fixed_point(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            lv = canonical_layout(LayoutVector.from_vector(rng.uniform(-2, 2, 8) * [1, 1, 1, 1, 1, 1, 0.1, 1]
                                                           + [0, 0, 5, 0, 0, 5, 0.5, 0]))
            text = format_layout(lv)
            assert format_layout(parse_layout(text)) == text

    @pytest.mark.parametrize("text,match", [
        ("camera.u = 0.5\n", "missing"),
        ("mirror.1.theta_deg = 1\nmirror.1.theta_deg = 2\n", "duplicate"),
        ("mirror.0.theta_deg = 1\n", "indices"),
        ("mirror.1.thta = 1\n", "line 1"),
        ("camera.u = abc\n", "line 1"),
    ])
    def test_errors(self, text, match):
        with pytest.raises(LayoutFileError, match=match):
            parse_layout(text)

    def test_file_helpers(self, tmp_path):
        lv = canonical_layout(self._lv())
        assert load_layout(write_layout(lv, tmp_path / "l.txt")) == lv


class TestOptimize:
    def test_outputs_written(self, optimized):
        cfg, res, out = optimized
        for name in (RESULT_FILE, HISTORY_FILE, LAYOUT_FILE, "best_state_0.svg", "best_state_2.svg"):
            assert (out / name).is_file()
        doc = tomli.loads((out / RESULT_FILE).read_text())
        assert doc["best_objective"] == res.best_objective
        assert doc["tool_version"] == __version__
        assert parse_config(tomli_w.dumps(doc["config"])) == cfg
        hist = (out / HISTORY_FILE).read_text().splitlines()
        assert hist[0] == "generation,best_f,sigma" and len(hist) == 41

    def test_self_consistency(self, optimized):
        cfg, res, out = optimized
        rep = evaluate(load_layout(out / LAYOUT_FILE, cfg.camera.fov, cfg.camera.ray_count),
                       cfg.deformation_set(), cfg.resolved_bounds())
        assert abs(rep.objective_value - res.best_objective) <= 1e-9

    def test_deterministic(self, tmp_path):
        outs = []
        for d in ("a", "b"):
            cfg = load_config(small_config(tmp_path, gens=15, out=d))
            cmd_optimize(cfg)
            outs.append(tmp_path / d)
        names = sorted(p.name for p in outs[0].iterdir())
        assert names == sorted(p.name for p in outs[1].iterdir())
        for n in names:
            a, b = (outs[0] / n).read_bytes(), (outs[1] / n).read_bytes()
            if n == RESULT_FILE:  # the echoed output directory differs by design
                a, b = (re.sub(rb'dir = ".*"', b"", x) for x in (a, b))
            assert a == b, n

    def test_target_zero_stops_at_first_generation(self, tmp_path):
        text = SMALL.format(gens=50, out=(tmp_path / "o").as_posix()).replace("seed = 1", "seed = 1\ntarget_objective = 0.0")
        res = cmd_optimize(load_config(write_config(tmp_path, text)))
        assert res.stop_reason == "target" and len(res.history) == 1

    def test_beats_random_search_on_toy_finger(self, tmp_path):
        # one unloaded state and the smallest finger (two mirrors); equal budgets of 10^4 evaluations
        params = FingerParams(n_back_nodes=3, n_pad_points=16)
        table = tmp_path / "one.txt"
        table.write_text(format_deformation_table(DeformationSet((undeformed_profile(params),), source="synthetic")))
        text = (f'[finger]\nn_back_nodes = 3\nn_pad_points = 16\n[camera]\nray_count = 21\n'
                f'[loads]\ntable = "one.txt"\n[cmaes]\nseed = 4\npopulation = 50\nmax_generations = 200\n'
                f'[output]\ndir = "{(tmp_path / "o").as_posix()}"\n')
        cfg = load_config(write_config(tmp_path, text))
        res = cmd_optimize(cfg)
        assert res.evaluations == 10**4
        ds, bounds = cfg.deformation_set(), cfg.resolved_bounds()
        lo, hi = bounds.vector_bounds(2)
        rng = np.random.default_rng(123)
        best_random = max(evaluate(LayoutVector.from_vector(rng.uniform(lo, hi), cfg.camera.fov, 21), ds, bounds)
                          .objective_value for _ in range(10**4))
        assert res.best_objective >= best_random


class TestEvaluate:
    def test_round_trip_and_report(self, optimized):
        cfg, res, out = optimized
        rep = cmd_evaluate(cfg, out / LAYOUT_FILE)
        assert abs(rep.objective_value - res.best_objective) <= 1e-9
        doc = tomli.loads((out / REPORT_FILE).read_text())
        assert len(doc["states"]) == 3 and doc["violations"] == []

    def test_optimized_beats_minimum_length_mirrors(self, optimized):
        # baseline: centre of the bounds box with every mirror at its minimum length
        cfg, res, out = optimized
        b = cfg.resolved_bounds()
        mid = b.midpoint_layout(cfg.finger.n_mirrors, cfg.camera.fov, cfg.camera.ray_count)
        short = LayoutVector(tuple(MirrorParams(m.theta, m.offset, b.length[0]) for m in mid.mirrors), mid.camera)
        rep_short = evaluate(short, cfg.deformation_set(), b)
        assert res.report.per_state_fraction[-1] > rep_short.per_state_fraction[-1]

    def test_bounds_violation(self, optimized, tmp_path):
        cfg, res, _ = optimized
        lv = res.best_layout
        bad = LayoutVector(lv.mirrors, CameraParams(0.99, lv.camera.phi, lv.camera.fov, lv.camera.ray_count))
        path = write_layout(bad, tmp_path / "bad.txt")
        rep = cmd_evaluate(cfg.with_output_dir(str(tmp_path / "r")), path)
        assert rep.objective_value == 0.0
        assert [v.parameter for v in rep.violations] == ["camera u"]
        doc = tomli.loads((tmp_path / "r" / REPORT_FILE).read_text())
        assert doc["objective_value"] == 0.0 and "above max" in doc["violations"][0]


class TestRender:
    def test_count_matches_mask(self, optimized):
        cfg, res, out = optimized
        for i in range(3):
            path, covered = cmd_render(cfg, out / LAYOUT_FILE, i)
            assert covered == int(res.report.per_state_covered[i].sum())
            svg = path.read_text()
            assert svg.startswith("<svg") or svg.startswith("<?xml")
            assert svg.count('class="target covered"') == covered

    def test_byte_identical(self, optimized):
        cfg, _, out = optimized
        a = cmd_render(cfg, out / LAYOUT_FILE, 1)[0].read_bytes()
        b = cmd_render(cfg, out / LAYOUT_FILE, 1)[0].read_bytes()
        assert a == b

    def test_index_out_of_range(self, optimized):
        cfg, _, out = optimized
        with pytest.raises(IndexError):
            cmd_render(cfg, out / LAYOUT_FILE, 3)


class TestDeformGen:
    def test_loads_and_round_trip(self, tmp_path):
        text = f'[cmaes]\nseed = 1\n[loads]\nf_max = 8.0\nk = 5\n[output]\ndir = "{tmp_path.as_posix()}"\n'
        cfg = load_config(write_config(tmp_path, text))
        path = cmd_deform_gen(cfg)
        assert path.name == TABLE_FILE
        ds = load_deformation_table(path)
        assert ds.loads == [0.0, 2.0, 4.0, 6.0, 8.0]
        assert states_close(ds.states, cfg.deformation_set().states, 1e-9)
        assert path.read_text().splitlines()[0] == "5,7,40"


class TestCli:
    def test_full_cycle(self, tmp_path, capsys):
        cfg = small_config(tmp_path, gens=10)
        out = tmp_path / "out"
        assert main(["optimize", str(cfg), "--quiet"]) == 0
        assert main(["evaluate", str(cfg), str(out / LAYOUT_FILE)]) == 0
        assert "objective:" in capsys.readouterr().out
        assert main(["render", str(cfg), str(out / LAYOUT_FILE), "--state", "2", "--quiet"]) == 0
        assert (out / "state_2.svg").is_file()
        assert main(["deform-gen", str(cfg), "--out", str(tmp_path / "t"), "--quiet"]) == 0
        assert (tmp_path / "t" / TABLE_FILE).is_file()

    def test_seed_override(self, tmp_path):
        cfg = small_config(tmp_path, gens=5)
        assert main(["optimize", str(cfg), "--seed", "7", "--out", str(tmp_path / "s"), "--quiet"]) == 0
        doc = tomli.loads((tmp_path / "s" / RESULT_FILE).read_text())
        assert doc["config"]["cmaes"]["seed"] == 7

    def test_config_errors_exit_2(self, tmp_path, capsys):
        bad = write_config(tmp_path, "[cmaes]\n")
        assert main(["optimize", str(bad)]) == 2
        assert "seed" in capsys.readouterr().err
        assert main(["optimize", str(tmp_path / "missing.toml")]) == 2

    def test_bad_state_and_layout_exit_2(self, optimized, tmp_path):
        cfg, _, out = optimized
        p = write_config(tmp_path, cfg.dumps())
        assert main(["render", str(p), str(out / LAYOUT_FILE), "--state", "9", "--quiet"]) == 2
        (tmp_path / "l.txt").write_text("camera.u = 0.5\n")
        assert main(["evaluate", str(p), str(tmp_path / "l.txt"), "--quiet"]) == 2

    def test_mirror_count_mismatch_exit_2(self, optimized, tmp_path):
        cfg, _, out = optimized
        text = cfg.dumps().replace("n_back_nodes = 4", "n_back_nodes = 5")
        p = write_config(tmp_path, text.split("[bounds]")[0] + "[camera]" + text.split("[camera]")[1])
        assert main(["evaluate", str(p), str(out / LAYOUT_FILE), "--quiet"]) == 2

    def test_numerical_failure_exit_3(self, tmp_path, monkeypatch):
        import finray_optics.commands as commands
        monkeypatch.setattr(commands.NormalizedObjective, "__call__", lambda self, z: math.inf)
        assert main(["optimize", str(small_config(tmp_path, gens=3)), "--quiet"]) == 3
