import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hggan.dataio import SynthConfig, synth_cohort
from hggan.errors import InputError, SplitError
from hggan.evaluate import (
    EvalReport,
    classify_eval,
    classify_repeated,
    confusion_metrics,
    region_ranking,
    split_indices,
    upper_triangle,
)
from hggan.report import emit_report, read_report

SVG = "{http://www.w3.org/2000/svg}"


class TestConfusion:
    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=40))
    def test_algebra(self, pairs):
        y, p = np.array(pairs).T
        s = confusion_metrics(y, p)
        assert s["tp"] + s["tn"] + s["fp"] + s["fn"] == len(y)
        assert s["acc"] == (s["tp"] + s["tn"]) / len(y)
        for key in ("acc", "sen", "spe"):
            assert 0 <= s[key] <= 1

    def test_constant_predictor(self):
        y = np.array([0, 0, 0, 1, 1])
        ones = confusion_metrics(y, np.ones(5))
        zeros = confusion_metrics(y, np.zeros(5))
        assert (ones["sen"], ones["spe"]) == (1.0, 0.0)
        assert (zeros["sen"], zeros["spe"]) == (0.0, 1.0)
        assert ones["acc"] == pytest.approx(2 / 5)
        assert zeros["acc"] == pytest.approx(3 / 5)


class TestSplit:
    def test_both_classes_each_side(self):
        y = np.array([0] * 10 + [1] * 10)
        tr, te, _ = split_indices(y, 0.65, 3)
        assert len(tr) == 13 and len(te) == 7
        assert set(y[tr]) == {0, 1} and set(y[te]) == {0, 1}
        assert not set(tr) & set(te)

    def test_impossible_split(self):
        with pytest.raises(SplitError):
            split_indices(np.array([0, 0, 0, 0, 1]), 0.99, 0)


def cohort(effect, seed=0, d=130, per_group=20):
    return synth_cohort(SynthConfig(n=12, d=d, subjects_per_group=per_group, group_effect=effect, seed=seed))


class TestClassify:
    def test_separable(self):
        recs = cohort(1.0, d=400)
        rep = classify_eval([r.fc for r in recs], [r.group for r in recs], "fc", seed=0)
        assert rep.acc >= 0.9
        assert rep.connectivity_kind == "FC" and rep.positive == "B"
        assert rep.tp + rep.tn + rep.fp + rep.fn == 14

    def test_shuffled_labels_near_chance(self):
        recs = cohort(1.0, d=400)
        rng = np.random.default_rng(0)
        groups = [r.group for r in recs]
        accs = [
            classify_eval([r.fc for r in recs], list(rng.permutation(groups)), "fc", seed=s).acc
            for s in range(20)
        ]
        assert abs(np.mean(accs) - 0.5) < 0.15

    def test_reproducible(self):
        recs = cohort(0.5)
        mats, groups = [r.sc for r in recs], [r.group for r in recs]
        assert classify_eval(mats, groups, "sc", seed=4) == classify_eval(mats, groups, "sc", seed=4)

    def test_normalisation_removes_scale(self):
        recs = cohort(0.5)
        mats, groups = [r.fc for r in recs], [r.group for r in recs]
        scaled = [m * s for m, s in zip(mats, np.random.default_rng(1).uniform(0.1, 10, len(mats)))]
        a = classify_eval(mats, groups, "fc", seed=2)
        b = classify_eval(scaled, groups, "fc", seed=2)
        assert a.acc == pytest.approx(b.acc)

    def test_repeated_mean(self):
        recs = cohort(0.5)
        reports, mean = classify_repeated([r.fc for r in recs], [r.group for r in recs], "fc")
        assert len(reports) == 5
        assert mean["acc"] == pytest.approx(np.mean([r.acc for r in reports]))

    def test_input_errors(self):
        mats = [np.eye(3)] * 6
        with pytest.raises(InputError):
            classify_eval(mats, ["A"] * 6, "fc")
        with pytest.raises(InputError):
            classify_eval(mats, ["A"] * 3 + ["B"] * 3, "fc")
        with pytest.raises(InputError):
            classify_eval([np.eye(3)] * 8, ["A"] * 4 + ["B"] * 4, "fc", normalize="l1")

    def test_upper_triangle(self):
        np.testing.assert_array_equal(upper_triangle(np.arange(9).reshape(3, 3)), [1, 2, 5])


class TestRanking:
    def test_identical_groups(self):
        co = np.tile(np.arange(5.0), (6, 1))
        r = region_ranking(co, ["A"] * 3 + ["B"] * 3, 3)
        np.testing.assert_array_equal(r.diff, 0)
        assert r.top_k == [0, 1, 2]

    def test_shifted_node_first(self):
        co = np.random.default_rng(0).standard_normal((10, 6)) * 0.01
        co[5:, 4] += 1.0
        assert region_ranking(co, ["A"] * 5 + ["B"] * 5, 2).top_k[0] == 4

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_permutation_equivariant(self, seed):
        rng = np.random.default_rng(seed)
        co = rng.standard_normal((8, 7))
        groups = ["A"] * 4 + ["B"] * 4
        perm = rng.permutation(7)
        base = region_ranking(co, groups, 7)
        moved = region_ranking(co[:, perm], groups, 7)
        np.testing.assert_allclose(moved.diff, base.diff[perm])
        assert [int(perm[v]) for v in moved.top_k] == base.top_k
        assert all(np.diff(base.diff[base.top_k]) <= 0)

    def test_k_out_of_range(self):
        with pytest.raises(InputError):
            region_ranking(np.zeros((4, 3)), ["A", "A", "B", "B"], 4)


def sample_reports():
    return [
        EvalReport("MC", 0.1 + 0.2, 2 / 3, 1 / 7, 3, 0.65, 5, 4, 3, 2, "B"),
        EvalReport("FC", 0.5, 0.25, 0.75, 4, 0.65, 1, 2, 3, 4, "B"),
    ]


class TestReport:
    def test_json_csv_json_exact(self, tmp_path):
        reports = sample_reports()
        first = read_report(emit_report(reports, tmp_path / "r.json"))
        via_csv = read_report(emit_report(first, tmp_path / "r.csv"))
        again = read_report(emit_report(via_csv, tmp_path / "r2.json"))
        assert first == reports == via_csv == again

    def test_ranking_formats(self, tmp_path):
        co = np.random.default_rng(0).standard_normal((6, 5))
        r = region_ranking(co, ["A"] * 3 + ["B"] * 3, 2)
        data = json.loads(emit_report(r, tmp_path / "r.json").read_text())
        assert data["top_k"] == r.top_k
        rows = emit_report(r, tmp_path / "r.csv").read_text().splitlines()
        assert rows[0].startswith("node,") and len(rows) == 6

    @pytest.mark.parametrize("k", [1, 3, 6])
    def test_svg(self, tmp_path, k):
        rng = np.random.default_rng(k)
        co = rng.standard_normal((6, 6))
        r = region_ranking(co, ["A"] * 3 + ["B"] * 3, k)
        m = rng.standard_normal((6, 6))
        path = emit_report(r, tmp_path / "r.svg", matrix=m + m.T)
        root = ET.parse(path).getroot()
        circles = root.findall(f".//{SVG}circle")
        assert len(circles) == 6
        assert sum(c.get("class") == "highlight" for c in circles) == k
        opacities = [float(l.get("stroke-opacity")) for l in root.findall(f".//{SVG}line")]
        assert max(opacities) == pytest.approx(1.0) and min(opacities) > 0

    def test_svg_needs_matrix(self, tmp_path):
        r = region_ranking(np.zeros((4, 3)), ["A", "A", "B", "B"], 1)
        with pytest.raises(InputError):
            emit_report(r, tmp_path / "r.svg")
        with pytest.raises(InputError):
            emit_report(sample_reports(), tmp_path / "r.svg")
        with pytest.raises(InputError):
            emit_report(sample_reports(), tmp_path / "r.xml")
