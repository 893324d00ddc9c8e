from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from higgsbal.config import (
    EXIT_CHECK_FAILED,
    EXIT_DEGENERATE,
    EXIT_INPUT_ERROR,
    EXIT_OK,
)
from higgsbal.main import main
from higgsbal.tasks import REPORT_FILENAME, TIMING_FILENAME, load_report


def _write_json(path: Path, payload: dict[str, object]) -> None:
    path.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def _config(tmp_path: Path, payload: dict[str, object]) -> Path:
    path = tmp_path / "config.json"
    _write_json(path, payload)
    return path


def _run(tmp_path: Path, command: str, payload: dict[str, object], *flags: str) -> int:
    config = _config(tmp_path, payload)
    return main([command, "--config", str(config), "--out", str(tmp_path / "out"), *flags])


TRIVIAL = {"twist_degree": 0, "bundle_degrees": [0]}
POLYSTABLE = {"twist_degree": 0, "bundle_degrees": [0, 0], "phi": [[0, 2], [1, 0]]}
SPLIT = {"twist_degree": 0, "bundle_degrees": [2, 0]}
UNSTABLE = {"twist_degree": 2, "bundle_degrees": [1, -1], "phi": [[0, [1]], [0, 0]]}


def test_balance_writes_report_and_steps(tmp_path: Path) -> None:
    assert _run(tmp_path, "balance", {"instance": TRIVIAL, "k": 2}) == EXIT_OK
    out = tmp_path / "out"
    report = load_report(out / REPORT_FILENAME)
    assert report.command == "balance"
    assert report.verdicts == {"2": "converged"}
    assert report.results["2"]["steps"] == 1
    assert (out / TIMING_FILENAME).is_file()
    with (out / "steps.csv").open(encoding="utf-8") as file:
        rows = list(csv.DictReader(file))
    assert rows[0]["step"] == "0"


def test_balance_sweep_writes_one_csv_per_level(tmp_path: Path) -> None:
    payload = {"instance": POLYSTABLE, "k_range": "1:2", "max_iter": 300}
    assert _run(tmp_path, "balance", payload) == EXIT_OK
    out = tmp_path / "out"
    assert (out / "steps_k1.csv").is_file() and (out / "steps_k2.csv").is_file()
    report = json.loads((out / REPORT_FILENAME).read_text(encoding="utf-8"))
    assert set(report["verdicts"]) == {"1", "2"}
    assert report["results"]["1"]["witness"]["verdict"] == "polystable"


def test_flags_override_config(tmp_path: Path) -> None:
    payload = {"instance": TRIVIAL, "k_range": "1:3"}
    assert _run(tmp_path, "balance", payload, "--k", "4") == EXIT_OK
    report = load_report(tmp_path / "out" / REPORT_FILENAME)
    assert report.verdicts == {"4": "converged"}
    assert report.config["k_range"] is None


def test_weight_command(tmp_path: Path) -> None:
    payload = {"instance": SPLIT, "one_param": {"subsheaf_summands": [1], "k": 3}}
    assert _run(tmp_path, "weight", payload) == EXIT_OK
    report = load_report(tmp_path / "out" / REPORT_FILENAME)
    assert report.results["unnormalized_weight"] == -2
    assert report.results["invariant"] is True
    assert report.results["weight"]["mu1"] == "-1/5"
    assert report.verdicts == {"classification": "unstable"}


def test_weight_rejects_non_special_weights(tmp_path: Path) -> None:
    weights = [1] * 10
    weights[0] = 2
    payload = {"instance": SPLIT, "k": 3, "one_param": {"weights": weights}}
    assert _run(tmp_path, "weight", payload) == EXIT_INPUT_ERROR


def test_asymptotics_skips_higgs_checks_for_zero_field(tmp_path: Path) -> None:
    payload = {"instance": TRIVIAL, "k_range": "1:4"}
    assert _run(tmp_path, "asymptotics", payload) == EXIT_OK
    report = load_report(tmp_path / "out" / REPORT_FILENAME)
    assert report.verdicts["bergman"] == "passed"
    assert report.verdicts["hitchin"] == "skipped"
    assert (tmp_path / "out" / "bergman.csv").is_file()


def test_asymptotics_needs_four_levels(tmp_path: Path) -> None:
    payload = {"instance": TRIVIAL, "k_range": "1:2", "checks": ["bergman"]}
    assert _run(tmp_path, "asymptotics", payload) == EXIT_INPUT_ERROR


def test_asymptotics_bergman_check_is_exact_for_reference_metric(tmp_path: Path) -> None:
    payload = {
        "instance": {"twist_degree": 0, "bundle_degrees": [1]},
        "k_range": "2:5",
        "checks": ["bergman"],
    }
    assert _run(tmp_path, "asymptotics", payload) == EXIT_OK
    report = load_report(tmp_path / "out" / REPORT_FILENAME)
    assert report.verdicts == {"bergman": "passed"}
    assert report.exit_code == EXIT_OK


def test_asymptotics_hitchin_check_passes_for_polystable_instance(tmp_path: Path) -> None:
    payload = {"instance": POLYSTABLE, "k_range": "4:12", "checks": ["hitchin"]}
    assert _run(tmp_path, "asymptotics", payload) == EXIT_OK
    report = load_report(tmp_path / "out" / REPORT_FILENAME)
    assert report.verdicts == {"hitchin": "passed"}
    assert report.results["hitchin"]["combo_nonincreasing"] is True


def test_asymptotics_reports_failed_check(tmp_path: Path) -> None:
    # the unstable instance never balances, so the Hitchin comparison fails
    payload = {
        "instance": UNSTABLE,
        "k_range": "1:4",
        "checks": ["hitchin"],
        "max_iter": 40,
    }
    assert _run(tmp_path, "asymptotics", payload) == EXIT_CHECK_FAILED
    report = load_report(tmp_path / "out" / REPORT_FILENAME)
    assert report.verdicts == {"hitchin": "failed"}


def test_indefinite_p_is_a_degenerate_exit(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    # with l = 16 the reference P has a negative eigenvalue at k = 4
    payload = {"instance": POLYSTABLE, "k_range": "4:7", "checks": ["expansion"], "ell": "16"}
    assert _run(tmp_path, "asymptotics", payload) == EXIT_DEGENERATE
    assert "[degenerate]" in capsys.readouterr().err


def test_repeated_runs_write_identical_reports(tmp_path: Path) -> None:
    payload = {"instance": POLYSTABLE, "k_range": "1:2", "max_iter": 300}
    assert _run(tmp_path, "balance", payload) == EXIT_OK
    first = (tmp_path / "out" / REPORT_FILENAME).read_bytes()
    assert _run(tmp_path, "balance", payload) == EXIT_OK
    assert (tmp_path / "out" / REPORT_FILENAME).read_bytes() == first


def test_validate_command(tmp_path: Path) -> None:
    assert _run(tmp_path, "validate", {"instance": POLYSTABLE, "k": 2}) == EXIT_OK
    report = load_report(tmp_path / "out" / REPORT_FILENAME)
    assert report.verdicts == {"instance": "valid"}
    assert report.results["witness"]["verdict"] == "polystable"

    ascending = {"twist_degree": 0, "bundle_degrees": [0, 1]}
    assert _run(tmp_path, "validate", {"instance": ascending}) == EXIT_INPUT_ERROR
    report = load_report(tmp_path / "out" / REPORT_FILENAME)
    assert report.verdicts == {"instance": "invalid"}
    assert report.results["violations"]


def test_malformed_json_is_an_input_error(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    config = tmp_path / "config.json"
    config.write_text("{\n  \"k\": 2,\n  oops\n}", encoding="utf-8")
    assert main(["balance", "--config", str(config)]) == EXIT_INPUT_ERROR
    assert "config.json:3:" in capsys.readouterr().err


def test_unknown_field_is_located(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    payload = {"instance": TRIVIAL, "k": 2, "bogus": 1}
    assert _run(tmp_path, "balance", payload) == EXIT_INPUT_ERROR
    assert "bogus" in capsys.readouterr().err


def test_missing_level_and_bad_flags(tmp_path: Path) -> None:
    assert _run(tmp_path, "balance", {"instance": TRIVIAL}) == EXIT_INPUT_ERROR
    assert _run(tmp_path, "balance", {"instance": TRIVIAL}, "--k-range", "5:1") == EXIT_INPUT_ERROR
    assert _run(tmp_path, "balance", {"instance": TRIVIAL}, "--ell", "-1") == EXIT_INPUT_ERROR
    assert main(["balance"]) == EXIT_INPUT_ERROR
    assert main(["frobnicate", "--config", "x.json"]) == EXIT_INPUT_ERROR


def test_inadmissible_level(tmp_path: Path) -> None:
    instance = {"twist_degree": 2, "bundle_degrees": [1, -1], "phi": [[0, [1]], [0, 0]]}
    assert _run(tmp_path, "balance", {"instance": instance, "k": 0}) == EXIT_INPUT_ERROR
