import math
import warnings

import numpy as np
import pytest

from finray_optics.deformation import (DeformationSet, DeformationState, FingerParams, TableParseError,
                                       TableSchemaError, TableValidationError, format_deformation_table,
                                       load_deformation_table, max_pad_displacement, parse_deformation_table,
                                       sample_loads, states_close, synth_deform, undeformed_profile,
                                       write_deformation_table)
from finray_optics.geometry import Point2, Segment2, segments_intersect

P = FingerParams()


class TestFingerParams:
    @pytest.mark.parametrize("kw", [
        dict(n_back_nodes=2), dict(n_pad_points=5), dict(finger_length=20.0),
        dict(base_width=0.0), dict(compliance_gain=0.0), dict(tip_taper=0.0), dict(curvature_profile_exp=-1.0),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            FingerParams(**kw)

    def test_mirror_count(self):
        assert P.n_mirrors == 6


class TestUndeformed:
    def test_triangular_profile(self):
        s = undeformed_profile(P)
        assert s.back_nodes[0].tolist() == [-P.base_width, 0.0]
        assert s.pad_points[0].tolist() == [0.0, 0.0]
        assert s.pad_points[-1].tolist() == [0.0, P.finger_length]
        tip_width = P.base_width * (1 - P.tip_taper)
        assert s.back_nodes[-1].tolist() == pytest.approx([-tip_width, P.finger_length], abs=1e-12)
        # back nodes are collinear: the undeformed back beam is straight
        b = s.back_nodes
        cross = (b[-1, 0] - b[0, 0]) * (b[:, 1] - b[0, 1]) - (b[-1, 1] - b[0, 1]) * (b[:, 0] - b[0, 0])
        assert np.abs(cross).max() < 1e-9

    def test_pad_points_uniform_by_arc_length(self):
        d = np.hypot(*np.diff(undeformed_profile(P).pad_points, axis=0).T)
        assert d == pytest.approx(np.full(P.n_pad_points - 1, P.finger_length / (P.n_pad_points - 1)), abs=1e-12)

    def test_zero_load_is_fixed_point(self):
        assert synth_deform(P, 0.0) == undeformed_profile(P)


class TestSynthDeform:
    def test_calibration_point(self):
        # 2 mm/N at 7.5 N puts the tip 15 mm deep
        assert max_pad_displacement(P, synth_deform(P, 7.5)) == pytest.approx(15.0, abs=1e-3)

    def test_negative_load_rejected(self):
        with pytest.raises(ValueError):
            synth_deform(P, -0.1)

    def test_monotone_in_load(self):
        loads = np.linspace(0.0, 10.0, 100)
        d = [max_pad_displacement(P, synth_deform(P, f)) for f in loads]
        assert all(b > a for a, b in zip(d, d[1:]))

    def test_pad_moves_inward(self):
        s = synth_deform(P, 5.0)
        assert (s.pad_points[1:, 0] < 0).all()
        assert s.pad_points[0, 0] == 0.0

    def test_deflection_profile_shape(self):
        # displacement at arc position s follows g F (s/L)^p
        s = synth_deform(P, 4.0)
        y = undeformed_profile(P).pad_points[:, 1]
        want = P.compliance_gain * 4.0 * (y / P.finger_length) ** P.curvature_profile_exp
        assert -s.pad_points[:, 0] == pytest.approx(want, abs=1e-12)

    @pytest.mark.parametrize("load", [1.0, 3.7, 7.5])
    def test_crossbeam_lengths_preserved(self, load):
        # pair each back node with the nearest pad point of the undeformed finger
        s0, s1 = undeformed_profile(P), synth_deform(P, load)
        for i, n in enumerate(s0.back_nodes):
            j = int(np.argmin(np.abs(s0.pad_points[:, 1] - n[1])))
            d0 = np.hypot(*(n - s0.pad_points[j]))
            d1 = np.hypot(*(s1.back_nodes[i] - s1.pad_points[j]))
            assert abs(d1 - d0) / d0 < 0.02

    @pytest.mark.parametrize("load", [0.0, 2.5, 7.5])
    def test_pad_polyline_simple(self, load):
        p = synth_deform(P, load).pad_points
        segs = [Segment2(Point2(*p[i]), Point2(*p[i + 1])) for i in range(len(p) - 1)]
        for i in range(len(segs)):
            for j in range(i + 2, len(segs)):
                assert not segments_intersect(segs[i], segs[j])

    def test_back_nodes_ordered_base_to_tip(self):
        b = synth_deform(P, 7.5).back_nodes
        arc = np.cumsum(np.hypot(*np.diff(b, axis=0).T))
        assert (np.diff(arc) > 0).all() and (np.diff(b[:, 1]) > 0).all()


class TestSampleLoads:
    def test_linear_spacing(self):
        ds = sample_loads(P, 8.0, 5)
        assert ds.loads == [0.0, 2.0, 4.0, 6.0, 8.0]
        assert sample_loads(P, 10.0, 2).loads == [0.0, 10.0]

    def test_states_equal_direct_synthesis(self):
        ds = sample_loads(P, 7.5, 4)
        for st in ds.states:
            assert st == synth_deform(P, st.load)

    @pytest.mark.parametrize("f_max,k", [(0.0, 3), (5.0, 1)])
    def test_invalid(self, f_max, k):
        with pytest.raises(ValueError):
            sample_loads(P, f_max, k)


class TestDeformationSet:
    def test_first_state_must_be_unloaded(self):
        with pytest.raises(ValueError):
            DeformationSet((synth_deform(P, 1.0),), source="synthetic")

    def test_loads_strictly_increasing(self):
        s = synth_deform(P, 0.0)
        with pytest.raises(ValueError):
            DeformationSet((s, s), source="synthetic")


class TestTable:
    def test_round_trip(self, tmp_path):
        ds = sample_loads(P, 7.5, 5)
        path = write_deformation_table(ds, tmp_path / "t.txt")
        back = load_deformation_table(path)
        assert back.loads == ds.loads
        assert states_close(back.states, ds.states, 1e-9)
        assert back.source == "table"

    def test_header_holds_counts(self):
        text = format_deformation_table(sample_loads(P, 7.5, 3))
        assert text.splitlines()[0] == "3,7,40"

    def test_named_header_and_comments_accepted(self):
        ds = sample_loads(FingerParams(n_back_nodes=3, n_pad_points=4), 2.0, 3)
        text = "# measured\nload_n,back_count,pad_count\n" + format_deformation_table(ds)
        assert len(parse_deformation_table(text)) == 3

    def _three_state_text(self):
        return format_deformation_table(sample_loads(FingerParams(n_back_nodes=3, n_pad_points=4), 2.0, 3))

    def test_descending_loads_are_resorted_with_warning(self):
        lines = self._three_state_text().splitlines()
        recs = [lines[1 + 3 * i: 4 + 3 * i] for i in range(3)]
        text = "\n".join([lines[0]] + [ln for r in reversed(recs) for ln in r]) + "\n"
        with pytest.warns(UserWarning, match="re-sorted"):
            ds = parse_deformation_table(text)
        assert ds.loads == [0.0, 1.0, 2.0]

    def test_malformed_row_names_line(self):
        lines = self._three_state_text().splitlines()
        lines[2] = lines[2].replace(":", ";", 1)
        with pytest.raises(TableParseError, match="line 3"):
            parse_deformation_table("\n".join(lines))

    def test_bad_load_names_line(self):
        lines = self._three_state_text().splitlines()
        lines[4] = "F=abc"
        with pytest.raises(TableParseError, match="line 5"):
            parse_deformation_table("\n".join(lines))

    def test_inconsistent_counts_is_schema_error(self):
        lines = self._three_state_text().splitlines()
        lines[3] = lines[3].rsplit(" ", 1)[0]
        with pytest.raises(TableSchemaError):
            parse_deformation_table("\n".join(lines))

    def test_missing_zero_load(self):
        lines = self._three_state_text().splitlines()
        text = "\n".join(["2,3,4"] + lines[4:]) + "\n"
        with pytest.raises(TableValidationError):
            parse_deformation_table(text)

    def test_state_count_mismatch(self):
        lines = self._three_state_text().splitlines()
        with pytest.raises(TableSchemaError):
            parse_deformation_table("\n".join(["4,3,4"] + lines[1:]))
