"""Tests for the command-line entry point and its exit codes."""

import json

import pytest

from app.schemas.report import BoundRow, RunReport
from main import main

SYMMETRIC_TN = {
    "rho": {"first": [[0.0]], "second": [[0.0]]},
    "gammas": [{"p": [1.0], "a": [1.0], "B": [[0.0]]}, {"p": [-1.0], "a": [1.0], "B": [[0.0]]}],
    "kappas": [2.0, 2.0],
}


def _run_report(rows: list[BoundRow]) -> RunReport:
    return RunReport(
        scenario="two-branch",
        K=0,
        delta=0.1,
        seed=42,
        lambdas=[0.7],
        radii=[0.002],
        eps=[],
        stages=[],
        rows=rows,
        graph_l1=[0.6],
        persistence=[],
    )


class TestValidateTN:
    """Tests for the validate-tn command."""

    def test_writes_summary(self, tmp_path, out_dir):
        """Test a valid fixture exits 0 and writes row sums of one."""
        fixture = tmp_path / "tn.json"
        fixture.write_text(json.dumps(SYMMETRIC_TN))
        assert main(["validate-tn", str(fixture), "--out", str(out_dir)]) == 0
        summary = json.loads((out_dir / "tn.json").read_text())
        assert summary["N"] == 2
        assert summary["row_sums"] == [pytest.approx(1.0), pytest.approx(1.0)]

    def test_invalid_fixture(self, tmp_path, out_dir):
        """Test κ ≤ 1 exits with the validation code."""
        fixture = tmp_path / "tn.json"
        fixture.write_text(json.dumps(dict(SYMMETRIC_TN, kappas=[0.5, 2.0])))
        assert main(["validate-tn", str(fixture), "--out", str(out_dir)]) == 2
        assert not (out_dir / "tn.json").exists()


class TestValidateScenario:
    """Tests for the validate-scenario command."""

    def test_builtin_passes(self, out_dir):
        """Test the built-in scenario passes and its checks are written."""
        assert main(["validate-scenario", "--out", str(out_dir)]) == 0
        report = json.loads((out_dir / "validation.json").read_text())
        assert report["scenario"] == "two-branch"
        assert report["samples"] == 1000

    def test_corrupt_fixture(self, tmp_path, out_dir):
        """Test an unreadable scenario fixture exits with the scenario code."""
        fixture = tmp_path / "scenario.json"
        fixture.write_text("{ not json")
        assert main(["validate-scenario", "--scenario", str(fixture), "--out", str(out_dir)]) == 3

    def test_too_few_samples(self, out_dir):
        """Test fewer than 1000 samples exits with the domain code."""
        assert main(["validate-scenario", "--samples", "10", "--out", str(out_dir)]) == 4


class TestRun:
    """Tests for the run command."""

    def test_bad_config(self, tmp_path, out_dir):
        """Test an invalid configuration exits with the config code before any work."""
        path = tmp_path / "run.toml"
        path.write_text("[run]\ndelta = 1.5\n")
        assert main(["run", "--config", str(path), "--out", str(out_dir)]) == 2
        assert not (out_dir / "report.json").exists()

    def test_base_only_run(self, tmp_path, out_dir):
        """Test a run without stages passes and writes its report and exports."""
        path = tmp_path / "run.toml"
        path.write_text(
            "[run]\nK = 0\nmc_samples = 500\nprobes = 4\nquad_depth = 4\n\n"
            '[[export]]\nkind = "field"\npath = "field.csv"\ngrid = 5\n\n'
            '[[export]]\nkind = "raster"\npath = "gap.pgm"\ncomponent = "graph_gap"\n'
        )
        code = main(["run", "--config", str(path), "--out", str(out_dir)])
        report = RunReport.model_validate_json((out_dir / "report.json").read_text())
        assert code == 0
        assert report.passed
        assert report.K == 0
        assert (out_dir / "field.csv").read_text().startswith("x_1,u_1,Du_11,V_11,graph_gap\n")
        assert (out_dir / "gap.pgm.txt").exists()

    @pytest.mark.slow
    def test_same_seed_same_bytes(self, tmp_path):
        """Test two runs with one configuration and seed write identical report, CSV and PGM files."""
        path = tmp_path / "run.toml"
        path.write_text(
            "[run]\nK = 1\nseed = 11\nmc_samples = 500\nprobes = 4\nquad_depth = 4\n\n"
            '[[export]]\nkind = "field"\npath = "field.csv"\ngrid = 17\n\n'
            '[[export]]\nkind = "raster"\npath = "labels.pgm"\ncomponent = "branch_label"\n'
        )
        first, second = tmp_path / "first", tmp_path / "second"
        main(["run", "--config", str(path), "--out", str(first)])
        main(["run", "--config", str(path), "--out", str(second)])
        for name in ("report.json", "field.csv", "labels.pgm"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_smooth_base_run(self, tmp_path, out_dir):
        """Test a base with a Hessian runs without stages and exports its quadratic u."""
        path = tmp_path / "run.toml"
        path.write_text(
            "[run]\nK = 0\nmc_samples = 500\nprobes = 4\nquad_depth = 4\n\n"
            "[base]\ngradient = [[1.4]]\nflux = [[0.0]]\nhessian = [[[0.2]]]\ncenter = [0.5]\n\n"
            '[[export]]\nkind = "field"\npath = "field.csv"\ngrid = 3\n'
        )
        assert main(["run", "--config", str(path), "--out", str(out_dir)]) == 0
        lines = (out_dir / "field.csv").read_text().splitlines()[1:]
        x, u, Du = (float(value) for value in lines[0].split(",")[:3])
        assert u == pytest.approx(1.4 * (x - 0.5) + 0.1 * (x - 0.5) ** 2, abs=1e-9)
        assert Du == pytest.approx(1.4 + 0.2 * (x - 0.5), abs=1e-9)


class TestReport:
    """Tests for summarizing a written report."""

    def test_passing_report(self, out_dir):
        """Test a report whose rows pass exits 0."""
        path = out_dir / "report.json"
        path.write_text(_run_report([BoundRow.check("boundary", 0.0, 1e-12, "<=")]).model_dump_json())
        assert main(["report", str(path), "--out", str(out_dir)]) == 0

    def test_failing_report(self, out_dir):
        """Test a failed bound exits with the stage code."""
        path = out_dir / "report.json"
        path.write_text(_run_report([BoundRow.check("lipschitz", 3.0, 2.0, "<=")]).model_dump_json())
        assert main(["report", str(path), "--out", str(out_dir)]) == 5

    def test_not_a_report(self, out_dir):
        """Test a file of another shape exits with the config code."""
        path = out_dir / "other.json"
        path.write_text(json.dumps({"scenario": "two-branch"}))
        assert main(["report", str(path), "--out", str(out_dir)]) == 2

    def test_missing_report(self, out_dir):
        """Test a missing file exits with the config code."""
        assert main(["report", str(out_dir / "nowhere.json"), "--out", str(out_dir)]) == 2
