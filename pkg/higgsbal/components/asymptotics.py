"""The asymptotics command: large-k checks over a sweep of levels."""

from time import perf_counter
from typing import Any

import numpy as np

from higgsbal.components.balance import balance_level
from higgsbal.components.models import HIGGS_CHECKS, RunConfig, RunReport
from higgsbal.config import (
    EXIT_CHECK_FAILED,
    EXIT_OK,
    get_package_version,
    logger,
    rounded_time_now,
)
from higgsbal.core.bergman import (
    MIN_POINTS,
    BalancedHitchinRecord,
    HormanderResult,
    ShortRangeError,
    balanced_to_hitchin_check,
    bergman_expansion_check,
    c_bounds,
    default_hormander_metric,
    expansion_convergence_check,
    hormander_check,
    summarize_balanced_series,
)
from higgsbal.core.geometry import BundleMetric, QuadratureScheme
from higgsbal.core.model import HiggsInstance
from higgsbal.core.quantization import QuantParams, section_basis, weakly_geometric_report
from higgsbal.tasks import (
    SweepQueue,
    finish_run,
    prepare_instance,
    quadrature_for,
    require_levels,
    to_jsonable,
    write_csv,
)

HORMANDER_SPREAD = 5.0
COMBO_NOISE = 100.0


def bergman_metric(instance: HiggsInstance, config: RunConfig) -> BundleMetric:
    """Metric of the Bergman sweep: the reference one or the conformal perturbation."""
    if config.bergman_metric == "reference":
        return BundleMetric.reference(instance.bundle.degrees)
    return default_hormander_metric(instance.bundle.degrees, config.metric_amplitude)


def run_bergman(
    instance: HiggsInstance, config: RunConfig, levels: list[int], _scheme: Any
) -> tuple[dict, list[dict], bool]:
    """Bergman expansion sweep."""
    report = bergman_expansion_check(bergman_metric(instance, config), levels)
    result = {
        "metric": config.bergman_metric,
        "slope": report.slope,
        "intercept": report.intercept,
        "exact": report.exact,
        "threshold": report.threshold,
    }
    return result, report.to_rows(), report.passed


def run_expansion(
    instance: HiggsInstance, config: RunConfig, levels: list[int], _scheme: Any
) -> tuple[dict, list[dict], bool]:
    """Expansion sweep at orders 0 .. expansion_order."""
    result: dict[str, Any] = {}
    rows: list[dict] = []
    passed = True
    for order in range(config.expansion_order + 1):
        report = expansion_convergence_check(
            instance, levels, order, config.ell_fraction, config.t_steps
        )
        result[f"order_{order}"] = {
            "slope": report.slope,
            "intercept": report.intercept,
            "exact": report.exact,
            "threshold": report.threshold,
            "passed": report.passed,
        }
        for row in report.to_rows():
            rows.append({"order": order, **row})
        passed = passed and report.passed
    # rows of different orders carry different norm columns
    columns = sorted({key for row in rows for key in row} - {"order", "k", "value"})
    rows = [
        {"order": r["order"], "k": r["k"], "value": r["value"], **{c: r.get(c) for c in columns}}
        for r in rows
    ]
    return result, rows, passed


def _hitchin_level(
    k: int, instance: HiggsInstance, config: RunConfig, scheme: QuadratureScheme | None
) -> tuple[str, BalancedHitchinRecord | None, np.ndarray | None]:
    iteration = balance_level(k, instance, config, scheme)
    if iteration.verdict != "converged":
        return iteration.verdict, None, None
    params = QuantParams.for_basis(section_basis(instance.bundle, k), config.ell_fraction)
    record = balanced_to_hitchin_check(
        iteration.final_state, instance, k, params, scheme, tol=10 * config.tol
    )
    return iteration.verdict, record, iteration.final_state.gram.G


def _combo_above_noise(
    record: BalancedHitchinRecord, instance: HiggsInstance, config: RunConfig
) -> float:
    """Combination norm, zero when it sits under the balancing tolerance scaled by chi."""
    chi = float(QuantParams.for_basis(section_basis(instance.bundle, record.k)).chi)
    return record.combo_norm if record.combo_norm > COMBO_NOISE * config.tol * chi else 0.0


def run_hitchin(
    instance: HiggsInstance, config: RunConfig, levels: list[int], scheme: Any
) -> tuple[dict, list[dict], bool]:
    """Balances every level and compares the balanced metrics with the Hitchin equation."""
    sweep = SweepQueue()
    for k in levels:
        sweep.add_task(k, _hitchin_level, instance, config, scheme)
    outcomes = sweep.run()

    unbalanced = {k: verdict for k, (verdict, _, _) in outcomes if verdict != "converged"}
    if unbalanced:
        logger.warning("Levels %s did not converge, Hitchin check fails", sorted(unbalanced))
        return {"unbalanced": {str(k): v for k, v in unbalanced.items()}}, [], False

    records = [record for _, (_, record, _) in outcomes]
    grams = {k: gram for k, (_, _, gram) in outcomes}
    series = summarize_balanced_series(records)
    weak = weakly_geometric_report(instance, levels, grams)
    bounds = c_bounds(
        series.epsilon_limit, weak.c_lower, weak.c_upper, config.ell_fraction, instance.rank
    )
    combos = [_combo_above_noise(record, instance, config) for record in series.records]
    nonincreasing = all(b <= a * (1 + 1e-6) for a, b in zip(combos, combos[1:]))
    passed = nonincreasing and series.increments_decreasing and bounds.contained
    result = {
        "epsilon_limit": series.epsilon_limit,
        "increments_decreasing": series.increments_decreasing,
        "combo_nonincreasing": nonincreasing,
        "c_prime_interval": [weak.c_lower, weak.c_upper],
        "c_bounds": to_jsonable(bounds),
    }
    return result, series.to_rows(), passed


def _hormander_level(k: int, instance: HiggsInstance, metric: BundleMetric) -> HormanderResult:
    return hormander_check(instance, k, metric)


def run_hormander(
    instance: HiggsInstance, config: RunConfig, levels: list[int], _scheme: Any
) -> tuple[dict, list[dict], bool]:
    """Hormander ratios per level; the check asks for a bounded spread."""
    metric = default_hormander_metric(instance.bundle.degrees, config.metric_amplitude)
    sweep = SweepQueue()
    for k in levels:
        sweep.add_task(k, _hormander_level, instance, metric)
    outcomes = sweep.run()

    rows = [{"k": k, "ratio": r.ratio, "skipped": r.skipped} for k, r in outcomes]
    ratios = [r.ratio for _, r in outcomes if r.ratio is not None]
    if len(ratios) < len(outcomes) or min(ratios, default=0.0) <= 0:
        return {"spread": None}, rows, False
    spread = max(ratios) / min(ratios)
    return {"spread": spread, "max_ratio": max(ratios)}, rows, spread <= HORMANDER_SPREAD


def run_weakly_geometric(
    instance: HiggsInstance, _config: RunConfig, levels: list[int], _scheme: Any
) -> tuple[dict, list[dict], bool]:
    """Weakly geometric diagnostics of the reference metrics."""
    report = weakly_geometric_report(instance, levels)
    rows = [to_jsonable(record) for record in report.records]
    result = {"c_lower": report.c_lower, "c_upper": report.c_upper, "metric": report.metric}
    return result, rows, not report.violation


CHECK_RUNNERS = {
    "bergman": run_bergman,
    "expansion": run_expansion,
    "hitchin": run_hitchin,
    "hormander": run_hormander,
    "weakly_geometric": run_weakly_geometric,
}


def cmd_asymptotics(config: RunConfig) -> RunReport:
    """Runs the configured checks over the level range and writes <check>.csv series.

    Checks needing a Higgs field are reported as skipped when phi = 0.

    Arguments:
        config (RunConfig): The configuration.

    Returns:
        RunReport: Fits and verdicts, exit code 4 when some check fails.

    Raises:
        ShortRangeError: For fewer than four levels.
        InvalidInstanceError: If the instance is invalid.
        DegenerateFormError: If some P is indefinite, e.g. for large l.
    """
    started, clock = rounded_time_now(), perf_counter()
    instance = prepare_instance(config)
    levels = require_levels(config)
    if len(levels) < MIN_POINTS:
        raise ShortRangeError(f"Need at least {MIN_POINTS} levels, got {levels}")
    for k in levels:
        section_basis(instance.bundle, k)
    scheme = quadrature_for(config)

    results: dict[str, Any] = {}
    verdicts: dict[str, str] = {}
    timings: dict[str, float] = {}
    for check in config.checks:
        if check in HIGGS_CHECKS and instance.phi.is_zero:
            logger.info("Skipping %s: the Higgs field is zero", check)
            verdicts[check] = "skipped"
            continue
        start = perf_counter()
        result, rows, passed = CHECK_RUNNERS[check](instance, config, levels, scheme)
        timings[check] = round(perf_counter() - start, 3)
        write_csv(config.out, f"{check}.csv", rows)
        results[check] = result
        verdicts[check] = "passed" if passed else "failed"
        logger.info("Check %s %s", check, verdicts[check])

    failed = [check for check, verdict in verdicts.items() if verdict == "failed"]
    exit_code = EXIT_CHECK_FAILED if failed else EXIT_OK
    report = RunReport(
        command="asymptotics",
        version=get_package_version(),
        config=to_jsonable(config.model_dump(mode="json")),
        results=to_jsonable(results),
        verdicts=verdicts,
        exit_code=exit_code,
    )
    return finish_run(config, report, started, clock, timings)
