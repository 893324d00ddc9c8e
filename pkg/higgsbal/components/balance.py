"""The balance command: the balancing iteration at one or several levels."""

from time import perf_counter

from higgsbal.components.models import RunConfig, RunReport
from higgsbal.config import (
    EXIT_DEGENERATE,
    EXIT_MAX_ITER,
    EXIT_OK,
    get_package_version,
    logger,
    rounded_time_now,
)
from higgsbal.core.balanced import IterationControls, IterationReport, iterate
from higgsbal.core.geometry import QuadratureScheme
from higgsbal.core.model import HiggsInstance, destabilizing_witness
from higgsbal.core.quantization import QuantParams, section_basis
from higgsbal.tasks import (
    SweepQueue,
    finish_run,
    prepare_instance,
    quadrature_for,
    require_levels,
    to_jsonable,
    write_csv,
)


def controls_from(config: RunConfig) -> IterationControls:
    """Stopping rules of a configuration."""
    return IterationControls(
        tol=config.tol,
        max_iter=config.max_iter,
        degeneration_threshold=config.degeneration_threshold,
        burn_in=config.burn_in,
    )


def balance_level(
    k: int,
    instance: HiggsInstance,
    config: RunConfig,
    scheme: QuadratureScheme | None,
) -> IterationReport:
    """Runs the iteration at one level.

    Arguments:
        k (int): The level.
        instance (HiggsInstance): A valid instance.
        config (RunConfig): The configuration.
        scheme (QuadratureScheme | None): Quadrature, per-level default when None.

    Returns:
        IterationReport: The iteration outcome.
    """
    params = QuantParams.for_basis(section_basis(instance.bundle, k), config.ell_fraction)
    return iterate(instance, k, params, controls_from(config), scheme)


def level_summary(k: int, instance: HiggsInstance, report: IterationReport) -> dict:
    """Report entry of one level."""
    witness = destabilizing_witness(instance, k)
    last = report.records[-1] if report.records else None
    return {
        "verdict": report.verdict,
        "steps": report.steps,
        "final_residual": report.final_residual,
        "min_eig": report.final_state.min_eig,
        "max_eig": report.final_state.max_eig,
        "kn_monotone": report.kn_monotone,
        "epsilon": last.epsilon if last else None,
        "frob2": last.frob2 if last else None,
        "witness": to_jsonable(witness),
    }


def exit_code_for(verdicts: list[str]) -> int:
    """Degenerate wins over max_iter, which wins over converged."""
    if "degenerate" in verdicts:
        return EXIT_DEGENERATE
    if "max_iter" in verdicts:
        return EXIT_MAX_ITER
    return EXIT_OK


def cmd_balance(config: RunConfig) -> RunReport:
    """Runs the balancing iteration and writes report.json and the per-step CSV.

    A single level writes steps.csv; a sweep writes steps_k<k>.csv per level.

    Arguments:
        config (RunConfig): The configuration.

    Returns:
        RunReport: The report, exit code 0 when every level converged, 2 when some
            level degenerated and 3 when some level ran out of iterations.

    Raises:
        ConfigValidationError: If no level is configured.
        InvalidInstanceError: If the instance is invalid.
        InadmissibleLevelError: If a level is inadmissible.
    """
    started, clock = rounded_time_now(), perf_counter()
    instance = prepare_instance(config)
    levels = require_levels(config)
    for k in levels:
        section_basis(instance.bundle, k)
    scheme = quadrature_for(config)

    sweep = SweepQueue()
    for k in levels:
        sweep.add_task(k, balance_level, instance, config, scheme)
    outcomes = sweep.run()

    results, verdicts = {}, {}
    for k, outcome in outcomes:
        filename = "steps.csv" if len(levels) == 1 else f"steps_k{k}.csv"
        write_csv(config.out, filename, outcome.to_rows())
        results[str(k)] = level_summary(k, instance, outcome)
        verdicts[str(k)] = outcome.verdict

    exit_code = exit_code_for(list(verdicts.values()))
    logger.info("Balance finished with verdicts %s (exit %d)", verdicts, exit_code)
    report = RunReport(
        command="balance",
        version=get_package_version(),
        config=to_jsonable(config.model_dump(mode="json")),
        results=to_jsonable(results),
        verdicts=verdicts,
        exit_code=exit_code,
    )
    return finish_run(config, report, started, clock, sweep.timings())
