"""Metrics, dummy baselines, report construction, and SVG scatter output."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from itemdiff.evaluation import (
    EvalReport,
    build_report,
    dummy_predict,
    mae,
    pearson_r,
    rmse,
    safe_pearson,
)
from itemdiff.plots import scatter_plot

# Quantized so that nonzero errors never underflow when squared.
finite_floats = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False).map(
    lambda v: round(v, 6)
)


class TestMetrics:
    def test_perfect_prediction(self):
        assert rmse([1.0, -2.0], [1.0, -2.0]) == 0.0
        assert mae([1.0, -2.0], [1.0, -2.0]) == 0.0

    def test_hand_computation(self):
        assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.sqrt(12.5))
        assert mae([0.0, 0.0], [3.0, 4.0]) == pytest.approx(3.5)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            rmse([1.0], [1.0, 2.0])

    def test_empty_input(self):
        with pytest.raises(ValueError, match="empty"):
            mae([], [])

    def test_two_decimal_report_formatting(self):
        # Human tables round to 2 decimals, the convention of the benchmark
        # tables (e.g. an overall RMSE pair like 0.91 vs dummy 1.01).
        assert f"{0.9134:.2f}" == "0.91"
        assert f"{1.0091:.2f}" == "1.01"

    @given(
        st.lists(st.tuples(finite_floats, finite_floats), min_size=1, max_size=40)
    )
    @settings(max_examples=80, deadline=None)
    def test_rmse_at_least_mae(self, pairs):
        pred = [p for p, _ in pairs]
        truth = [t for _, t in pairs]
        m = mae(pred, truth)
        assert m >= 0.0
        # Relative slack: sqrt(x*x) may round one ulp below |x|.
        assert rmse(pred, truth) >= m * (1.0 - 1e-12)


class TestPearson:
    def test_positive_affine(self):
        a = [1.0, 2.0, 3.0, 4.0]
        b = [2 * x + 3 for x in a]
        assert pearson_r(a, b) == pytest.approx(1.0)

    def test_reflection(self):
        a = [1.0, 2.0, 3.0]
        assert pearson_r(a, [-x for x in a]) == pytest.approx(-1.0)

    def test_hand_computation(self):
        assert pearson_r([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)

    def test_constant_input_raises(self):
        with pytest.raises(ValueError, match="constant"):
            pearson_r([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_safe_pearson_none_cases(self):
        assert safe_pearson([1.0, 2.0], [1.0, 2.0]) is None  # < 3 points
        assert safe_pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]) is None

    @given(
        data=st.lists(
            st.tuples(st.floats(-100, 100), st.floats(-100, 100)),
            min_size=3,
            max_size=30,
        ),
        scale=st.floats(0.1, 50),
        shift=st.floats(-100, 100),
    )
    @settings(max_examples=60, deadline=None)
    def test_affine_invariance_and_sign_flip(self, data, scale, shift):
        a = [p for p, _ in data]
        b = [t for _, t in data]
        # Keep enough spread that the affine map cannot collapse to constant.
        if max(a) - min(a) < 1e-6 or max(b) - min(b) < 1e-6:
            return
        r = pearson_r(a, b)
        assert pearson_r([scale * x + shift for x in a], b) == pytest.approx(r, abs=1e-9)
        assert pearson_r([-x for x in a], b) == pytest.approx(-r, abs=1e-9)


class TestDummyPredict:
    def test_single_group(self):
        out = dummy_predict({"K": [-2.35, -2.35]}, ["K", "K", "K"])
        assert out.tolist() == [-2.35, -2.35, -2.35]

    def test_two_groups_route_by_membership(self):
        out = dummy_predict({"a": [0.0, 0.0], "b": [1.0, 1.0]}, ["b", "a", "b"])
        assert out.tolist() == [1.0, 0.0, 1.0]

    def test_unseen_group(self):
        with pytest.raises(ValueError, match="unseen group"):
            dummy_predict({"a": [0.0]}, ["a", "zz"])

    def test_dummy_rmse_zero_when_test_equals_train_mean(self):
        preds = dummy_predict({"g": [1.0, 3.0]}, ["g", "g"])
        assert rmse(preds, [2.0, 2.0]) == 0.0

    def test_train_set_rmse_is_population_sd(self):
        ys = [1.0, 2.0, 3.0, 4.0]
        preds = dummy_predict({"g": ys}, ["g"] * 4)
        assert rmse(preds, ys) == pytest.approx(np.std(ys))

    def test_shift_invariance(self):
        ys = [0.5, 1.5, -1.0, 2.0]
        base = rmse(dummy_predict({"g": ys}, ["g"] * 4), ys)
        shifted = [y + 10 for y in ys]
        assert rmse(dummy_predict({"g": shifted}, ["g"] * 4), shifted) == pytest.approx(base)


def small_setup():
    truth = {f"i{k}": float(k % 5) - 2.0 for k in range(20)}
    groups = {f"i{k}": ("math", k % 2) for k in range(20)}
    dummy = {i: 0.0 for i in truth}
    return truth, groups, dummy


class TestBuildReport:
    def test_identical_methods_identical_rows(self):
        truth, groups, dummy = small_setup()
        preds = {i: truth[i] + 0.1 for i in truth}
        report = build_report(
            {"rf": preds, "gbm": dict(preds), "dummy": dummy}, truth, groups
        )
        rf_rows = [r for r in report.rows if r.method == "rf"]
        gbm_rows = [r for r in report.rows if r.method == "gbm"]
        for a, b in zip(rf_rows, gbm_rows):
            assert (a.rmse, a.mae, a.pearson_r) == (b.rmse, b.mae, b.pearson_r)

    def test_perfect_method_diff_equals_dummy_error(self):
        truth, groups, dummy = small_setup()
        report = build_report({"rf": dict(truth), "dummy": dummy}, truth, groups)
        for row in report.rows:
            if row.method != "rf":
                continue
            dummy_row = next(
                r for r in report.rows
                if r.method == "dummy" and r.grade == row.grade
            )
            assert row.rmse == 0.0
            assert row.rmse_diff_vs_dummy == pytest.approx(dummy_row.rmse)
            assert row.mae_diff_vs_dummy == pytest.approx(dummy_row.mae)

    def test_diff_convention_dummy_minus_method(self):
        # Convention check: dummy 1.14 vs method 0.66 shows +0.48.
        truth = {f"x{k}": v for k, v in enumerate([0.0, 1.0, -1.0, 2.0, 0.5, -0.5])}
        groups = {i: ("reading", 3) for i in truth}
        rng = np.random.default_rng(0)
        method = {}
        dummy = {}
        for i, t in truth.items():
            method[i] = t + 0.66 * (1 if rng.random() < 0.5 else -1)
            dummy[i] = t + 1.14 * (1 if rng.random() < 0.5 else -1)
        report = build_report({"direct": method, "dummy": dummy}, truth, groups)
        row = next(r for r in report.rows if r.method == "direct" and r.grade == "3")
        assert row.rmse_diff_vs_dummy == pytest.approx(1.14 - 0.66, abs=1e-9)

    def test_row_structure(self):
        truth, groups, dummy = small_setup()
        report = build_report({"rf": dict(truth), "dummy": dummy}, truth, groups)
        grades = [(r.grade, r.method) for r in report.rows]
        # grade K, grade 1, then overall; methods rf then dummy within each
        assert grades == [
            ("K", "rf"), ("K", "dummy"),
            ("1", "rf"), ("1", "dummy"),
            ("overall", "rf"), ("overall", "dummy"),
        ]
        assert all(r.n == 10 for r in report.rows if r.grade != "overall")
        assert all(r.n == 20 for r in report.rows if r.grade == "overall")

    def test_misaligned_ids_rejected(self):
        truth, groups, dummy = small_setup()
        partial = {i: 0.0 for i in list(truth)[:-1]}
        with pytest.raises(ValueError, match="misaligned"):
            build_report({"rf": partial, "dummy": dummy}, truth, groups)

    def test_missing_dummy_rejected(self):
        truth, groups, _ = small_setup()
        with pytest.raises(ValueError, match="dummy"):
            build_report({"rf": dict(truth)}, truth, groups)

    def test_csv_and_text_rendering(self, tmp_path):
        truth, groups, dummy = small_setup()
        report = build_report({"rf": dict(truth), "dummy": dummy}, truth, groups)
        path = tmp_path / "report.csv"
        report.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == ("subject,grade,method,n,rmse,mae,pearson_r,"
                            "rmse_diff_vs_dummy,mae_diff_vs_dummy")
        assert len(lines) == 1 + len(report.rows)
        text = report.render_text()
        assert "n/a" in text  # constant dummy predictions have no correlation
        assert "dRMSE" in text


class TestScatterPlot:
    def test_identity_points_annotate_r_one(self, tmp_path):
        path = tmp_path / "plot.svg"
        scatter_plot([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], path, title="t")
        svg = path.read_text()
        assert svg.startswith("<svg")
        assert "r = 1.00" in svg
        assert svg.count("<circle") == 3

    def test_byte_identical_across_runs(self, tmp_path):
        rng = np.random.default_rng(4)
        pred = rng.normal(size=25).tolist()
        truth = rng.normal(size=25).tolist()
        p1, p2 = tmp_path / "a.svg", tmp_path / "b.svg"
        scatter_plot(pred, truth, p1, title="x")
        scatter_plot(pred, truth, p2, title="x")
        assert p1.read_bytes() == p2.read_bytes()

    def test_single_point_facet(self, tmp_path):
        path = tmp_path / "one.svg"
        scatter_plot([0.5], [0.7], path)
        svg = path.read_text()
        assert "r = n/a" in svg
        assert svg.count("<circle") == 1

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="nothing to plot"):
            scatter_plot([], [], tmp_path / "x.svg")
