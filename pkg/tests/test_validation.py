from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

import pytest

from higgsbal.components.models import OneParamPayload, RunConfig
from higgsbal.validation import (
    ConfigValidationError,
    key_position,
    parse_level_range,
    parse_orders,
    parse_rational,
    read_json,
    safe_path_join,
    validate_filename,
)


def _write_json(path: Path, payload: dict[str, object]) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2), encoding="utf-8")


def test_filenames() -> None:
    assert validate_filename("report.json")
    for name in ("", "../x.json", "a/b.csv", "x;y", "a" * 300):
        with pytest.raises(ConfigValidationError):
            validate_filename(name)


def test_safe_path_join(tmp_path: Path) -> None:
    assert safe_path_join(tmp_path, "steps.csv") == (tmp_path / "steps.csv").resolve()
    with pytest.raises(ConfigValidationError):
        safe_path_join(tmp_path, "..")


def test_parsers() -> None:
    assert parse_level_range("3:6") == [3, 4, 5, 6]
    assert parse_level_range(" 2 : 2 ") == [2]
    assert parse_orders("20:40") == (20, 40)
    assert parse_rational("1/2") == Fraction(1, 2)
    assert parse_rational(3) == 3
    for bad in ("3-6", "6:3", "a:b"):
        with pytest.raises(ConfigValidationError):
            parse_level_range(bad)
    for bad in ("0", "-1/2", "x", "1/0"):
        with pytest.raises(ConfigValidationError):
            parse_rational(bad)


def test_key_position() -> None:
    text = '{\n  "instance": {\n    "twist_degree": -1\n  }\n}'
    assert key_position(text, ("instance", "twist_degree")) == (3, 5)
    assert key_position(text, ("missing",)) == (1, 1)


def test_read_json_errors(tmp_path: Path) -> None:
    with pytest.raises(ConfigValidationError, match="does not exist"):
        read_json(tmp_path / "absent.json")
    path = tmp_path / "list.json"
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigValidationError, match="list.json:1:1"):
        read_json(path)


def test_run_config_from_file(tmp_path: Path) -> None:
    path = tmp_path / "config.json"
    _write_json(
        path,
        {
            "instance": {"twist_degree": 0, "bundle_degrees": [0, 0], "phi": [[0, "1+2j"], [1, 0]]},
            "k_range": "2:5",
            "ell": "1/2",
            "quadrature": "20:40",
        },
    )
    config = RunConfig.from_file(path)
    assert config.levels == [2, 3, 4, 5]
    assert config.ell_fraction == Fraction(1, 2)
    assert config.orders == (20, 40)
    assert config.checks[0] == "bergman"
    instance = config.instance.to_instance()
    assert instance.phi.entry(0, 1) == (1 + 2j,)


def test_run_config_errors_point_at_the_key(tmp_path: Path) -> None:
    path = tmp_path / "config.json"
    _write_json(path, {"instance": {"twist_degree": -1, "bundle_degrees": [0]}})
    with pytest.raises(ConfigValidationError) as error:
        RunConfig.from_file(path)
    message = str(error.value)
    assert message.startswith("config.json:")
    assert "instance.twist_degree" in message


def test_one_param_payload() -> None:
    assert OneParamPayload(subsheaf_summands=[2, 1]).zero_based() == [1, 0]
    assert OneParamPayload(weights=[1, -1]).zero_based() is None
    with pytest.raises(ValueError):
        OneParamPayload()
    with pytest.raises(ValueError):
        OneParamPayload(weights=[1, -1], subsheaf_summands=[1])
    with pytest.raises(ValueError):
        OneParamPayload(subsheaf_summands=[0])
