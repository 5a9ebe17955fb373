"""Tests for the CSV and SVG reporters."""

import math

import pytest

from locpoly.models import (
    Centering,
    CoveringCurve,
    CurvePoint,
    GridKind,
    LocalPolyFit,
    MomentBoundRow,
    RademacherEstimate,
    RateReport,
    RateRow,
    ScanTarget,
    SummaryRow,
    TailRow,
    TargetKind,
)
from locpoly.reporter import RATE_COLUMNS, CSVReporter, SVGChart, fmt


def make_report(n, stats, replicate=0):
    rows = [RateRow(h=h, sup_dev=s / 10, rate_stat=s) for h, s in stats]
    return RateReport(
        n=n,
        target=ScanTarget(kind=TargetKind.KDE),
        centering=Centering.EXPECTATION,
        rows=rows,
        overall_rate_stat=max(s for _, s in stats),
        xgrid_points=401,
        grid_kind=GridKind.DYADIC,
        seed=7,
        replicate=replicate,
    )


@pytest.fixture
def reports():
    return [
        make_report(1024, [(0.125, 1.0), (0.25, 2.0)], replicate=0),
        make_report(1024, [(0.125, 3.0), (0.25, 4.0)], replicate=1),
        make_report(4096, [(0.125, 1.5), (0.25, 1.0)], replicate=0),
    ]


class TestFmt:
    def test_values(self):
        assert fmt(None) == ""
        assert fmt(True) == "true"
        assert fmt(3) == "3"
        assert fmt(0.1) == "0.1"
        assert fmt(1 / 3) == "0.333333333333"
        assert fmt(math.inf) == "inf"
        assert fmt(math.nan) == "nan"


class TestCSVReporter:
    def test_rate_table(self, reports):
        table = CSVReporter().rate_table(reports)
        assert table.header == RATE_COLUMNS
        assert len(table.rows) == 6
        assert table.rows[0] == ["1024", "0.125", "kde", "expectation", "0.1", "1", "0", "7", "0"]

    def test_summary_table(self):
        row = SummaryRow(n=1024, replicates=20, p10=1.0, median=2.0, p90=3.0, p99=3.5,
                         maximum=4.0, mean_sup_dev=0.05)
        table = CSVReporter().summary_table([row])
        assert table.header[0] == "n"
        assert table.rows == [["1024", "20", "1", "2", "3", "3.5", "4", "0.05"]]

    def test_fit_table_with_failures(self):
        fit = LocalPolyFit(x0=0.5, h=0.2, p=1, beta=[2.0, 1.0], cond_A=3.0, n_in_window=9)
        points = [CurvePoint(x0=0.5, fit=fit), CurvePoint(x0=0.7, status="empty_window")]
        table = CSVReporter().fit_table(points, 0.2, 1, nw=[2.1, None])
        assert table.header == ["x0", "h", "p", "beta0", "beta1", "cond_A", "n_in_window", "status", "nw"]
        assert table.rows[0] == ["0.5", "0.2", "1", "2", "1", "3", "9", "ok", "2.1"]
        assert table.rows[1] == ["0.7", "0.2", "1", "", "", "", "", "empty_window", ""]

    def test_covering_table(self):
        curve = CoveringCurve(eps_grid=[0.4, 0.2], counts=[3, 9], members=41, nu=1.58, constant=0.7)
        table = CSVReporter().covering_table(curve)
        assert [row[:3] for row in table.rows] == [["0.4", "3", "41"], ["0.2", "9", "41"]]

    def test_moment_bound_table(self):
        row = MomentBoundRow(n=64, mu_hat=6.0, stderr=0.1, bound=6.5, ratio=0.92,
                             envelope_condition=True, sigma_admissible=False)
        table = CSVReporter().moment_bound_table([row])
        assert table.rows == [["64", "6", "0.1", "6.5", "0.92", "true", "false"]]

    def test_rademacher_table(self):
        table = CSVReporter().rademacher_table(256, RademacherEstimate(value=4.0, stderr=0.05, draws=4096))
        assert table.header == ["n", "value", "stderr", "draws", "exhaustive"]
        assert table.rows == [["256", "4", "0.05", "4096", "false"]]

    def test_tail_table(self):
        table = CSVReporter().tail_table([TailRow(t=0.0, empirical_prob=0.5, bound_value=4.0)])
        assert table.rows == [["0", "0.5", "4"]]

    def test_write_uses_lf(self, tmp_path, reports):
        reporter = CSVReporter()
        path = tmp_path / "nested" / "rate.csv"
        reporter.write(reporter.rate_table(reports), path)
        data = path.read_bytes()
        assert b"\r\n" not in data
        assert data.decode("utf-8").splitlines()[0] == ",".join(RATE_COLUMNS)

    def test_repeated_writes_identical(self, tmp_path, reports):
        reporter = CSVReporter()
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        reporter.write(reporter.rate_table(reports), a)
        reporter.write(reporter.rate_table(reports), b)
        assert a.read_bytes() == b.read_bytes()


class TestSVGChart:
    def test_one_polyline_per_n(self, reports):
        svg = SVGChart().render(reports)
        assert svg.startswith("<svg")
        assert svg.count("<polyline") == 2
        assert 'data-n="1024"' in svg
        assert 'data-n="4096"' in svg
        assert svg.count("<path") == 1

    def test_median_merges_replicates(self, reports):
        series = SVGChart._series(reports)
        assert series[1024] == [(-3.0, 2.0), (-2.0, 3.0)]

    def test_degenerate_rows_left_out(self):
        report = make_report(1024, [(0.125, 1.0), (0.25, 2.0)])
        report.rows[0] = report.rows[0].model_copy(update={"status": "degenerate"})
        assert SVGChart._series([report])[1024] == [(-2.0, 2.0)]

    def test_empty(self):
        svg = SVGChart().render([])
        assert "<polyline" not in svg
        assert svg.rstrip().endswith("</svg>")

    def test_write(self, tmp_path, reports):
        chart = SVGChart()
        path = tmp_path / "chart" / "rate_vs_h.svg"
        chart.write(chart.render(reports), path)
        assert path.read_text(encoding="utf-8").count("<polyline") == 2
