"""This module runs level sweeps on worker threads and persists their results."""

import csv
import dataclasses
import json
import math
import queue
import threading
from fractions import Fraction
from pathlib import Path
from time import perf_counter
from typing import Any, Callable, Literal, NamedTuple, Sequence

import numpy as np
from pydantic import BaseModel

from higgsbal.components.models import RunConfig, RunReport, RunTiming
from higgsbal.config import THREADS, logger, rounded_time_now
from higgsbal.core.geometry import QuadratureScheme, build_quadrature
from higgsbal.core.model import HiggsInstance, require_valid
from higgsbal.validation import ConfigValidationError, safe_path_join

REPORT_FILENAME = "report.json"
TIMING_FILENAME = "timing.json"


class SweepEntry(NamedTuple):
    """A named tuple representing an entry in the sweep history."""

    k: int
    status: Literal["Added to queue", "Completed", "Failed"]
    elapsed: float  # Seconds, zero while queued.

    def to_json(self) -> dict[str, str | int | float]:
        """Convert the SweepEntry to a JSON-serializable dictionary.

        Returns:
            dict[str, str | int | float]: A dictionary representation of the SweepEntry.
        """
        return {"k": self.k, "status": self.status, "elapsed": round(self.elapsed, 3)}


class SweepQueue:
    """A queue of per-level jobs processed by at most HB_THREADS worker threads."""

    def __init__(self, threads: int = THREADS):
        self.threads = max(1, threads)
        self.tasks: queue.Queue = queue.Queue()
        self.history: list[SweepEntry] = []
        self.results: dict[int, Any] = {}
        self.errors: dict[int, Exception] = {}
        self.lock = threading.Lock()

    def add_task(self, k: int, func: Callable, *args, **kwargs) -> None:
        """Adds the job of one level to the queue.

        Arguments:
            k (int): The level, also the key of the result.
            func (Callable): The job, called as func(k, *args, **kwargs).
            *args: Positional arguments to pass to the function.
            **kwargs: Keyword arguments to pass to the function.
        """
        if k in self.results or any(entry.k == k for entry in self.history):
            raise ValueError(f"Level {k} is already part of the sweep")
        self.history.append(SweepEntry(k, "Added to queue", 0.0))
        self.tasks.put((k, func, args, kwargs))
        logger.debug("Adding %s for k=%d, queue size: %d", func.__name__, k, self.tasks.qsize())

    def run(self) -> list[tuple[int, Any]]:
        """Processes every queued job and returns the results ordered by level.

        Returns:
            list[tuple[int, Any]]: (k, result) pairs in increasing k.

        Raises:
            Exception: The failure of the smallest failing level, after all jobs ended.
        """
        workers = [
            threading.Thread(target=self._worker, daemon=True)
            for _ in range(min(self.threads, self.tasks.qsize()))
        ]
        for worker in workers:
            worker.start()
        for worker in workers:
            worker.join()

        if self.errors:
            k = min(self.errors)
            logger.error("Sweep failed for levels %s", sorted(self.errors))
            raise self.errors[k]
        return sorted(self.results.items())

    def timings(self) -> dict[str, float]:
        """Elapsed seconds of every finished level."""
        return {
            str(entry.k): round(entry.elapsed, 3)
            for entry in self.history
            if entry.status != "Added to queue"
        }

    def _worker(self) -> None:
        while True:
            try:
                k, func, args, kwargs = self.tasks.get_nowait()
            except queue.Empty:
                return
            start = perf_counter()
            try:
                result = func(k, *args, **kwargs)
            except Exception as e:  # pylint: disable=broad-exception-caught
                logger.error("Job %s failed for k=%d: %s", func.__name__, k, e)
                self._finish(k, "Failed", perf_counter() - start)
                with self.lock:
                    self.errors[k] = e
            else:
                self._finish(k, "Completed", perf_counter() - start)
                with self.lock:
                    self.results[k] = result
            finally:
                self.tasks.task_done()

    def _finish(self, k: int, status: Literal["Completed", "Failed"], elapsed: float) -> None:
        with self.lock:
            self.history = [
                SweepEntry(k, status, elapsed) if entry.k == k else entry for entry in self.history
            ]
        logger.info("Level k=%d %s in %.2fs", k, status.lower(), elapsed)


def to_jsonable(value: Any) -> Any:
    """Converts results into plain JSON data.

    Fractions become "p/q" strings, complex numbers [re, im] pairs and non-finite floats
    null, so that the output is valid JSON and stable across runs.

    Arguments:
        value (Any): Dataclasses, pydantic models, numpy data, mappings and sequences.

    Returns:
        Any: JSON-serializable data.
    """
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump(mode="python"))
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {
            f.name: to_jsonable(getattr(value, f.name))
            for f in dataclasses.fields(value)
            if not f.name.startswith("_")
        }
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.generic):
        return to_jsonable(value.item())
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, complex):
        return [to_jsonable(value.real), to_jsonable(value.imag)]
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def write_json(out_dir: str | Path, filename: str, data: Any) -> Path:
    """Writes JSON with sorted keys.

    Arguments:
        out_dir (str | Path): Output directory, created when missing.
        filename (str): Plain file name.
        data (Any): Data accepted by to_jsonable.

    Returns:
        Path: The written file.
    """
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    path = safe_path_join(out_dir, filename)
    path.write_text(
        json.dumps(to_jsonable(data), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    logger.debug("Saved %s", path)
    return path


def write_csv(out_dir: str | Path, filename: str, rows: Sequence[dict[str, Any]]) -> Path:
    """Writes rows to a CSV file, columns in the order of the first row.

    Arguments:
        out_dir (str | Path): Output directory, created when missing.
        filename (str): Plain file name.
        rows (Sequence[dict[str, Any]]): The rows.

    Returns:
        Path: The written file.
    """
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    path = safe_path_join(out_dir, filename)
    columns: list[str] = list(rows[0]) if rows else []
    with path.open("w", newline="", encoding="utf-8") as file:
        writer = csv.DictWriter(file, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: to_jsonable(row.get(key)) for key in columns})
    logger.debug("Saved %s", path)
    return path


def save_report(out_dir: str | Path, report: RunReport, timing: RunTiming) -> Path:
    """Writes report.json and, separately, timing.json.

    Returns:
        Path: The report file.
    """
    write_json(out_dir, TIMING_FILENAME, timing)
    path = write_json(out_dir, REPORT_FILENAME, report)
    logger.info("Report saved to %s", path)
    return path


def load_report(path: str | Path) -> RunReport:
    """Parses a report written by save_report."""
    return RunReport.model_validate_json(Path(path).read_text(encoding="utf-8"))


def prepare_instance(config: RunConfig) -> HiggsInstance:
    """Builds and validates the instance of a configuration.

    Raises:
        InvalidInstanceError: Listing every violation.
    """
    instance = config.instance.to_instance()
    require_valid(instance)
    return instance


def require_levels(config: RunConfig) -> list[int]:
    """Levels of a configuration, with a clear error when neither k nor k_range is set."""
    levels = config.levels
    if not levels:
        raise ConfigValidationError("Set 'k' or 'k_range' in the config or on the command line")
    return levels


def quadrature_for(config: RunConfig) -> QuadratureScheme | None:
    """The configured quadrature, None for per-level defaults."""
    orders = config.orders
    return build_quadrature(*orders) if orders is not None else None


def finish_run(
    config: RunConfig,
    report: RunReport,
    started: int,
    clock: float,
    per_level: dict[str, float] | None = None,
) -> RunReport:
    """Saves the report and its timing in the configured output directory."""
    timing = RunTiming(
        started=started,
        finished=rounded_time_now(),
        elapsed=round(perf_counter() - clock, 3),
        per_level=per_level or {},
    )
    save_report(config.out, report, timing)
    return report
