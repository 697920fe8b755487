import json
import os

from conftest import corpus_path
from strongmin import cli, report


def run_cli(args):
    return cli.main(args)


class TestExitCodes:
    def test_missing_file_is_input_error(self, capsys):
        assert run_cli(["analyze", "missing.prob"]) == 1
        assert "error" in capsys.readouterr().err

    def test_malformed_file_is_input_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.prob"
        bad.write_text("vars: x1\nobjective: x1 +\npoint: 0\n")
        assert run_cli(["analyze", str(bad)]) == 1

    def test_missing_point_is_input_error(self, tmp_path):
        p = tmp_path / "nopoint.prob"
        p.write_text("vars: x1\nobjective: x1^2\n")
        assert run_cli(["analyze", str(p)]) == 1

    def test_infeasible_point_is_input_error(self, tmp_path, capsys):
        p = tmp_path / "infeas.prob"
        p.write_text("vars: x1\nobjective: x1\n"
                     "block orthant 1:\n  row: x1\npoint: 1\n")
        assert run_cli(["analyze", str(p)]) == 1
        assert "infeasible" in capsys.readouterr().err

    def test_completed_analysis_is_zero_even_when_not_stationary(self, tmp_path,
                                                                 capsys):
        p = tmp_path / "nonstat.prob"
        p.write_text("vars: x1\nobjective: x1^2\npoint: 1\n")
        code = run_cli(["analyze", str(p), "--samples", "500"])
        out = capsys.readouterr().out
        assert code == 0
        rep = json.loads(out)
        assert rep["stationarity"]["holds"] is False
        assert rep["sosc"]["skipped"] == "point is not stationary"


class TestReports:
    def test_report_to_file(self, tmp_path):
        out = tmp_path / "rep.json"
        code = run_cli(["qgc", corpus_path("licq", "problem.prob"),
                        "--samples", "500", "--report", str(out)])
        assert code == 0
        rep = json.loads(out.read_text())
        assert rep["oracle"]["verdict"] == "Holds"

    def test_byte_identical_reports(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for path in (a, b):
            code = run_cli(["analyze", corpus_path("quad3", "problem.prob"),
                            "--samples", "1000", "--seed", "3",
                            "--report", str(path)])
            assert code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_byte_identical_pw1d(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for path in (a, b):
            assert run_cli(["pw1d", corpus_path("ex31", "function.pw"),
                            "--report", str(path)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_seventeen_digit_floats(self, tmp_path):
        out = tmp_path / "rep.json"
        run_cli(["pw1d", corpus_path("ex31", "function.pw"),
                 "--report", str(out)])
        text = out.read_text()
        # a representative value that needs full precision round-trips
        rep = json.loads(text)
        val = rep["qgc"]["per_radius"][0]
        assert format(val, ".17g") in text

    def test_verdicts_carry_condition_and_certification(self, capsys):
        run_cli(["analyze", corpus_path("quad3", "problem.prob"),
                 "--samples", "500"])
        rep = json.loads(capsys.readouterr().out)
        for key in ("stationarity",):
            assert rep[key]["condition"]
            assert rep[key]["certification"]
        for key in ("mfcq", "crcq", "rcq"):
            assert "condition" in rep["cq"][key]
        assert rep["sosc"]["sonc"]["condition"]
        assert rep["sosc"]["certification"] in ("Exact", "Sampled")
        assert rep["oracle"]["certification"] == "Sampled"

    def test_timings_flag_adds_field(self, capsys):
        run_cli(["analyze", corpus_path("quad3", "problem.prob"),
                 "--samples", "500", "--timings"])
        rep = json.loads(capsys.readouterr().out)
        assert "timings_ms" in rep and rep["timings_ms"]

    def test_pw1d_d2_flag(self, capsys):
        run_cli(["pw1d", corpus_path("sq", "function.pw"), "--d2"])
        rep = json.loads(capsys.readouterr().out)
        assert abs(rep["second_subderivative"]["w=1"]["value"] - 2.0) <= 1e-4

    def test_pw1d_nonstationary_point_completes(self, capsys):
        code = run_cli(["pw1d", corpus_path("sq", "function.pw"),
                        "--point", "0.5", "--radii", "0.1"])
        rep = json.loads(capsys.readouterr().out)
        assert code == 0
        assert rep["proximally_stationary"] is False
        assert "skipped" in rep["conditions"]
        assert rep["qgc"]["verdict"] == "Fails"  # no growth at a slope point

    def test_digest_matches_canonical_form(self, capsys):
        from strongmin import problem
        run_cli(["cq", corpus_path("licq", "problem.prob")])
        rep = json.loads(capsys.readouterr().out)
        p = problem.load(corpus_path("licq", "problem.prob"))
        assert rep["problem"]["digest"] == p.digest()


def test_numeric_failure_maps_to_exit_two(monkeypatch, capsys):
    from strongmin import oracle

    def boom(*args, **kwargs):
        raise FloatingPointError("synthetic blowup")

    monkeypatch.setattr(oracle, "estimate_qg_modulus", boom)
    code = run_cli(["analyze", corpus_path("quad3", "problem.prob"),
                    "--samples", "500"])
    assert code == 2
    out = capsys.readouterr()
    rep = json.loads(out.out)
    assert rep["failed_stage"].startswith("oracle")


def test_nonfinite_serialization():
    text = report.dumps_report({"a": float("inf"), "b": float("-inf"),
                                "c": float("nan"), "d": 1.5})
    rep = json.loads(text)
    assert rep == {"a": "inf", "b": "-inf", "c": "nan", "d": 1.5}
