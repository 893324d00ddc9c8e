"""The validate command: structural checks of an instance and its stability witness."""

from time import perf_counter

from higgsbal.components.models import RunConfig, RunReport
from higgsbal.config import EXIT_INPUT_ERROR, EXIT_OK, get_package_version, rounded_time_now
from higgsbal.core.model import destabilizing_witness, min_level, validate
from higgsbal.tasks import finish_run, to_jsonable


def cmd_validate(config: RunConfig) -> RunReport:
    """Validates the configured instance.

    For a valid instance the report also carries the stability witness at the first
    configured level, or at the smallest admissible level when none is set.

    Arguments:
        config (RunConfig): The configuration.

    Returns:
        RunReport: Violations and witness, exit code 0 when valid and 1 otherwise.
    """
    started, clock = rounded_time_now(), perf_counter()
    instance = config.instance.to_instance()
    outcome = validate(instance)
    results: dict = {"violations": outcome.violations, "zero_higgs": outcome.zero_higgs}
    if outcome.valid:
        k = config.levels[0] if config.levels else min_level(instance.bundle)
        results["k"] = k
        results["witness"] = to_jsonable(destabilizing_witness(instance, k))

    report = RunReport(
        command="validate",
        version=get_package_version(),
        config=to_jsonable(config.model_dump(mode="json")),
        results=to_jsonable(results),
        verdicts={"instance": "valid" if outcome.valid else "invalid"},
        exit_code=EXIT_OK if outcome.valid else EXIT_INPUT_ERROR,
    )
    return finish_run(config, report, started, clock)
