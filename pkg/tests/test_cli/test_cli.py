"""Tests for the cohort-avn command line."""

import json

import pytest

from cohort_avn.cli import EXIT_FAILED, EXIT_INVALID, EXIT_INVARIANT, EXIT_OK, main
from cohort_avn.errors import InvariantViolation
from cohort_avn.sim.runner import AttackSuiteReport


class TestCommands:
    def test_list(self, capsys):
        assert main(["list"]) == EXIT_OK
        assert "fig2-join" in capsys.readouterr().out

    def test_validate(self, capsys):
        assert main(["validate", "fig2-join"]) == EXIT_OK
        assert "is valid" in capsys.readouterr().out

    def test_run_writes_trace_and_metrics(self, tmp_path):
        trace = tmp_path / "trace.jsonl"
        metrics = tmp_path / "metrics.json"
        code = main(
            ["run", "fig2-join", "--trace", str(trace), "--metrics", str(metrics), "--json"]
        )
        assert code == EXIT_OK
        assert trace.read_text().count("\n") > 0
        assert json.loads(metrics.read_text())["joins_ok"] == 1

    def test_inspect(self, tmp_path, mocker):
        trace = tmp_path / "trace.jsonl"
        main(["run", "fig2-join", "--trace", str(trace)])
        view = mocker.patch("cohort_avn.cli.quick_trace_view")
        assert main(["inspect", str(trace), "--subject", "5", "--view", "timeline"]) == EXIT_OK
        view.assert_called_once_with(str(trace), 5, "timeline")

    @pytest.mark.parametrize(
        "argv, expected",
        [
            (["analyze", "pki"], "thrashing"),
            (["analyze", "ldm", "--lost", "1"], "25.00"),
            (["analyze", "pseudo"], "250 days"),
            (["analyze", "margin"], "contention_v2x"),
            (["analyze", "crowd", "--size", "4", "--rounds", "2"], "Broadcasting"),
        ],
    )
    def test_analyze(self, argv, expected, capsys):
        assert main(argv) == EXIT_OK
        assert expected in capsys.readouterr().out


class TestExitCodes:
    def test_invalid_scenario(self, tmp_path, small_scenario, capsys):
        small_scenario["cohorts"][0]["members"] = [1, 3, 2]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(small_scenario))
        assert main(["validate", str(path)]) == EXIT_INVALID
        assert "out of order" in capsys.readouterr().out

    def test_unknown_scenario(self):
        assert main(["run", "no-such-scenario"]) == EXIT_INVALID

    def test_invariant_breach(self, mocker):
        mocker.patch(
            "cohort_avn.cli.run_scenario",
            side_effect=InvariantViolation("vehicle 3 belongs to no cohort", event="TICK"),
        )
        assert main(["run", "fig2-join", "--checked"]) == EXIT_INVARIANT

    def test_failed_attack_suite(self, mocker):
        mocker.patch(
            "cohort_avn.cli.run_attack_suite",
            return_value=AttackSuiteReport("attack-base", [], 1, 0),
        )
        assert main(["attack-suite", "attack-base"]) == EXIT_FAILED

    def test_bad_analysis_input(self):
        assert main(["analyze", "crowd", "--mode", "probabilistic"]) == EXIT_FAILED
