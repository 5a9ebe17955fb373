"""Tests for the locpoly command line."""

import csv
from pathlib import Path

import pytest
from typer.testing import CliRunner

from locpoly.cli import app
from locpoly.reporter import RATE_COLUMNS

FIXTURES_DIR = Path(__file__).parent / "fixtures"

SMALL_STUDY = ["--set", "sample_sizes=[256]", "--set", "xgrid_points=21"]


@pytest.fixture
def runner():
    return CliRunner()


def read_rows(path):
    with path.open(encoding="utf-8", newline="") as handle:
        return list(csv.reader(handle))


class TestMoments:
    def test_uniform_gram(self, runner):
        result = runner.invoke(app, ["moments", "--kernel", "uniform", "--p", "1"])
        assert result.exit_code == 0
        assert "Gram matrix: [[1, 0], [0, 1/12]]" in result.output

    def test_negative_degree(self, runner):
        result = runner.invoke(app, ["moments", "--p", "-1"])
        assert result.exit_code == 2

    def test_unknown_kernel(self, runner):
        result = runner.invoke(app, ["moments", "--kernel", "gaussian"])
        assert result.exit_code == 2
        assert "unknown kernel" in result.output


class TestFit:
    def test_linear_fixture(self, runner, tmp_path):
        result = runner.invoke(
            app,
            ["fit", str(FIXTURES_DIR / "linear.csv"), "--h", "0.2", "--p", "1",
             "--xgrid", "11", "-o", str(tmp_path), "--threads", "2"],
        )
        assert result.exit_code == 0
        rows = read_rows(tmp_path / "fit.csv")
        assert rows[0] == ["x0", "h", "p", "beta0", "beta1", "cond_A", "n_in_window", "status", "nw"]
        assert len(rows) == 12
        for row in rows[1:]:
            x0 = float(row[0])
            assert row[7] == "ok"
            assert float(row[3]) == pytest.approx(2 * x0 + 1, abs=1e-9)
            assert float(row[4]) == pytest.approx(2.0, abs=1e-9)

    def test_malformed_row(self, runner, tmp_path):
        result = runner.invoke(
            app, ["fit", str(FIXTURES_DIR / "malformed.csv"), "--h", "0.2", "-o", str(tmp_path)]
        )
        assert result.exit_code == 2
        assert "row 17" in result.output

    def test_no_successful_fit(self, runner, tmp_path):
        result = runner.invoke(
            app,
            ["fit", str(FIXTURES_DIR / "linear.csv"), "--h", "0.01", "--p", "1",
             "--xgrid", "10", "-o", str(tmp_path)],
        )
        assert result.exit_code == 3
        statuses = {row[7] for row in read_rows(tmp_path / "fit.csv")[1:]}
        assert "ok" not in statuses


class TestScan:
    def test_writes_rate_csv_and_svg(self, runner, tmp_path):
        result = runner.invoke(app, ["scan", *SMALL_STUDY, "-o", str(tmp_path)])
        assert result.exit_code == 0
        rows = read_rows(tmp_path / "rate.csv")
        assert rows[0] == RATE_COLUMNS
        assert len(rows) > 2
        assert all(row[2] == "kde" for row in rows[1:])
        assert "<polyline" in (tmp_path / "rate_vs_h.svg").read_text(encoding="utf-8")

    def test_target_flag_and_no_svg(self, runner, tmp_path):
        result = runner.invoke(
            app, ["scan", *SMALL_STUDY, "--target", "ftilde:1", "--no-svg", "-o", str(tmp_path)]
        )
        assert result.exit_code == 0
        assert read_rows(tmp_path / "rate.csv")[1][2] == "ftilde(1)"
        assert not (tmp_path / "rate_vs_h.svg").exists()

    def test_input_sample(self, runner, tmp_path):
        result = runner.invoke(
            app, ["scan", "--input", str(FIXTURES_DIR / "linear.csv"), "--no-svg", "-o", str(tmp_path)]
        )
        assert result.exit_code == 0
        assert read_rows(tmp_path / "rate.csv")[1][0] == "41"
        assert "truth model" in result.output

    def test_invalid_config(self, runner, tmp_path):
        result = runner.invoke(app, ["scan", "--set", "h0=2", "-o", str(tmp_path)])
        assert result.exit_code == 2

    def test_config_file(self, runner, tmp_path):
        config = tmp_path / "scan.json"
        config.write_text('{"sample_sizes": [256], "xgrid_points": 11, "kernel": "triangular"}',
                          encoding="utf-8")
        result = runner.invoke(app, ["scan", "--config", str(config), "-o", str(tmp_path)])
        assert result.exit_code == 0


class TestStudy:
    def test_outputs(self, runner, tmp_path):
        result = runner.invoke(
            app, ["study", *SMALL_STUDY, "--replicates", "2", "--seed", "3", "-o", str(tmp_path)]
        )
        assert result.exit_code == 0
        rates = read_rows(tmp_path / "study_rates.csv")
        assert {row[8] for row in rates[1:]} == {"0", "1"}
        assert {row[7] for row in rates[1:]} == {"3"}
        summary = read_rows(tmp_path / "study_summary.csv")
        assert summary[0] == ["n", "replicates", "p10", "median", "p90", "p99", "max", "mean_sup_dev"]
        assert summary[1][:2] == ["256", "2"]
        assert (tmp_path / "rate_vs_h.svg").exists()

    def test_threads_give_identical_files(self, runner, tmp_path):
        one, three = tmp_path / "one", tmp_path / "three"
        args = ["study", *SMALL_STUDY, "--replicates", "3", "--no-svg"]
        assert runner.invoke(app, [*args, "--threads", "1", "-o", str(one)]).exit_code == 0
        assert runner.invoke(app, [*args, "-o", str(three)], env={"LOCPOLY_THREADS": "3"}).exit_code == 0
        for name in ("study_rates.csv", "study_summary.csv"):
            assert (one / name).read_bytes() == (three / name).read_bytes()

    def test_all_replicates_fail(self, runner, tmp_path):
        result = runner.invoke(
            app,
            ["study", "--set", "sample_sizes=[16]", "--set", "h0=0.05", "--replicates", "1",
             "-o", str(tmp_path)],
        )
        assert result.exit_code == 3
        assert "FAILED" in result.output

    def test_unknown_scenario(self, runner, tmp_path):
        result = runner.invoke(app, ["study", "--scenario", "S7", "-o", str(tmp_path)])
        assert result.exit_code == 2


class TestEmpProc:
    ARGS = ["--set", "x_count=41", "--set", "n=128", "--set", "draws=256"]

    def test_indicator_windows(self, runner, tmp_path):
        result = runner.invoke(
            app, ["empproc", "--class", "indicator-windows", *self.ARGS, "-o", str(tmp_path)]
        )
        assert result.exit_code == 0
        covering = read_rows(tmp_path / "covering.csv")
        counts = [int(row[1]) for row in covering[1:]]
        assert counts == sorted(counts)
        rademacher = read_rows(tmp_path / "rademacher.csv")
        assert rademacher[1][0] == "128"

    def test_selected_checks(self, runner, tmp_path):
        result = runner.invoke(
            app,
            ["empproc", "--class", "kernel-translates", *self.ARGS,
             "--check", "symmetrization", "-o", str(tmp_path)],
        )
        assert result.exit_code == 0
        assert (tmp_path / "symmetrization.csv").exists()
        assert not (tmp_path / "covering.csv").exists()

    def test_unknown_check(self, runner, tmp_path):
        result = runner.invoke(app, ["empproc", "--check", "entropy", "-o", str(tmp_path)])
        assert result.exit_code == 2

    def test_failed_precondition(self, runner, tmp_path):
        result = runner.invoke(
            app,
            ["empproc", "--class", "kernel-translates", *self.ARGS, "--set", "sigma=0.1",
             "--set", "sample_sizes=[64]", "--check", "moment-bound", "-o", str(tmp_path)],
        )
        assert result.exit_code == 3
        assert "second-moment bound" in result.output
