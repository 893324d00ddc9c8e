from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from higgsbal.components.models import RunReport, RunTiming
from higgsbal.config import Singleton, get_package_version
from higgsbal.storage import Storage, StorageEntry
from higgsbal.tasks import (
    REPORT_FILENAME,
    TIMING_FILENAME,
    SweepQueue,
    load_report,
    save_report,
    to_jsonable,
    write_csv,
)


def _square(k: int, offset: int = 0) -> int:
    return k * k + offset


def _fail_on_three(k: int) -> int:
    if k == 3:
        raise ValueError("three")
    return k


def test_sweep_queue_orders_results() -> None:
    sweep = SweepQueue(threads=3)
    for k in (5, 1, 3):
        sweep.add_task(k, _square, offset=1)
    assert sweep.run() == [(1, 2), (3, 10), (5, 26)]
    assert set(sweep.timings()) == {"1", "3", "5"}
    assert all(entry.status == "Completed" for entry in sweep.history)
    with pytest.raises(ValueError):
        sweep.add_task(5, _square)


def test_sweep_queue_reraises_failures() -> None:
    sweep = SweepQueue(threads=2)
    for k in (1, 2, 3, 4):
        sweep.add_task(k, _fail_on_three)
    with pytest.raises(ValueError, match="three"):
        sweep.run()
    failed = [entry.to_json() for entry in sweep.history if entry.status == "Failed"]
    assert [entry["k"] for entry in failed] == [3]


def test_to_jsonable() -> None:
    data = {
        1: Fraction(3, 4),
        "z": 1 + 2j,
        "array": np.arange(3),
        "nan": float("nan"),
        "numpy": np.float64(0.5),
        "tuple": (True, None),
    }
    assert to_jsonable(data) == {
        "1": "3/4",
        "z": [1.0, 2.0],
        "array": [0, 1, 2],
        "nan": None,
        "numpy": 0.5,
        "tuple": [True, None],
    }
    with pytest.raises(TypeError):
        to_jsonable(object())


def test_write_csv_uses_first_row_columns(tmp_path: Path) -> None:
    path = write_csv(tmp_path / "out", "series.csv", [{"k": 1, "value": 0.5}, {"k": 2}])
    assert path.read_text(encoding="utf-8").splitlines() == ["k,value", "1,0.5", "2,"]


def test_report_round_trip_keeps_timing_apart(tmp_path: Path) -> None:
    report = RunReport(command="validate", version="0.1.0", config={}, verdicts={"a": "b"})
    timing = RunTiming(started=1, finished=2, elapsed=1.0)
    path = save_report(tmp_path, report, timing)
    assert path.name == REPORT_FILENAME
    assert load_report(path) == report
    assert "elapsed" not in path.read_text(encoding="utf-8")
    assert json.loads((tmp_path / TIMING_FILENAME).read_text(encoding="utf-8"))["elapsed"] == 1.0


def test_storage_is_a_shared_cache() -> None:
    storage = Storage()
    assert Storage() is storage
    calls: list[int] = []

    def build() -> int:
        calls.append(1)
        return 42

    assert storage.get_or_create(("test", "answer"), build) == 42
    assert storage.get_or_create(("test", "answer"), build) == 42
    assert len(calls) == 1
    storage.add_entry("manual", StorageEntry(7))
    assert storage.get_entry("manual").value == 7
    storage.remove_entry("manual")
    assert storage.get_entry("manual") is None


def test_singleton_and_version() -> None:
    class Counter(metaclass=Singleton):
        pass

    assert Counter() is Counter()
    assert isinstance(get_package_version(), str)
