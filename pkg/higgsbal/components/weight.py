"""The weight command: Hilbert-Mumford weight of a one-parameter subgroup."""

from time import perf_counter

from higgsbal.components.models import RunConfig, RunReport
from higgsbal.config import EXIT_OK, get_package_version, rounded_time_now
from higgsbal.core.git import OneParamSubgroup, total_weight
from higgsbal.core.model import is_invariant_summand_set
from higgsbal.core.quantization import QuantParams, section_basis
from higgsbal.tasks import finish_run, prepare_instance, require_levels, to_jsonable
from higgsbal.validation import ConfigValidationError


def cmd_weight(config: RunConfig) -> RunReport:
    """Computes mu = mu1 + epsilon mu2 of the configured subgroup.

    The level is one_param.k when given, otherwise the first configured level.

    Arguments:
        config (RunConfig): The configuration with a one_param section.

    Returns:
        RunReport: The weight report, exit code 0.

    Raises:
        ConfigValidationError: If the one_param section or the level is missing.
        InvalidSubgroupError: If the weights do not define a subgroup of SL(H^0(E(k))).
        InvalidSubsetError: If the subsheaf summands are not a proper subset.
    """
    started, clock = rounded_time_now(), perf_counter()
    if config.one_param is None:
        raise ConfigValidationError("The weight command needs a 'one_param' section")
    instance = prepare_instance(config)
    k = config.one_param.k if config.one_param.k is not None else require_levels(config)[0]
    basis = section_basis(instance.bundle, k)
    params = QuantParams.for_basis(basis, config.ell_fraction)

    summands = config.one_param.zero_based()
    if summands is not None:
        subgroup = OneParamSubgroup.from_subsheaf(basis, summands)
    else:
        subgroup = OneParamSubgroup(
            weights=tuple(config.one_param.weights or ()),
            special_linear=config.one_param.special_linear,
        )
    weight = total_weight(subgroup, instance, k, params, summands, seed=config.seed)

    results = {
        "k": k,
        "weights": list(subgroup.weights),
        "unnormalized_weight": weight.theta_sum,
        "weight": to_jsonable(weight),
    }
    if summands is not None:
        results["invariant"] = is_invariant_summand_set(instance, summands)
    report = RunReport(
        command="weight",
        version=get_package_version(),
        config=to_jsonable(config.model_dump(mode="json")),
        results=to_jsonable(results),
        verdicts={"classification": weight.classification},
        exit_code=EXIT_OK,
    )
    return finish_run(config, report, started, clock)
