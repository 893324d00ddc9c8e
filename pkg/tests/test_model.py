from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from higgsbal.core.model import (
    HiggsInstance,
    InadmissibleLevelError,
    InvalidInstanceError,
    InvalidSubsetError,
    SplitBundle,
    destabilizing_witness,
    evaluate_higgs,
    hilbert_value,
    is_invariant_summand_set,
    min_level,
    require_valid,
    splits_along,
    unitary_higgs,
    validate,
)


def test_hilbert_value_and_levels() -> None:
    bundle = SplitBundle((1, -1))
    assert hilbert_value(bundle, 1) == 4
    assert hilbert_value(bundle, 3) == 8
    assert min_level(bundle) == 1
    with pytest.raises(InadmissibleLevelError):
        hilbert_value(bundle, 0)


def test_valid_fixtures(polystable: HiggsInstance, unstable: HiggsInstance) -> None:
    for instance in (polystable, unstable):
        report = validate(instance)
        assert report.valid, report.violations
        assert not report.zero_higgs


def test_validation_lists_every_violation() -> None:
    ascending = HiggsInstance.build(0, [0, 1])
    assert any("descending" in v for v in validate(ascending).violations)
    assert validate(ascending).zero_higgs

    # e_12 = 0 - 0 - 1 < 0 and e_11 = -1: every nonzero entry is forbidden
    negative = HiggsInstance.build(1, [0, 0], [[1, 0], [0, 0]])
    assert any("must vanish" in v for v in validate(negative).violations)

    # e_12 = 2 needs three coefficients
    short = HiggsInstance.build(0, [2, 0], [[0, [1, 2]], [0, 0]])
    assert any("needs 3 coefficients" in v for v in validate(short).violations)
    with pytest.raises(InvalidInstanceError):
        require_valid(short)


def test_invariant_summand_sets(unstable: HiggsInstance, polystable: HiggsInstance) -> None:
    assert is_invariant_summand_set(unstable, [0])
    assert not is_invariant_summand_set(unstable, [1])
    assert not splits_along(unstable, [0])
    assert not is_invariant_summand_set(polystable, [0])
    with pytest.raises(InvalidSubsetError):
        is_invariant_summand_set(unstable, [])
    with pytest.raises(InvalidSubsetError):
        is_invariant_summand_set(unstable, [0, 1])
    with pytest.raises(InvalidSubsetError):
        is_invariant_summand_set(unstable, [2])


def test_witness_of_unstable_instance(unstable: HiggsInstance) -> None:
    witness = destabilizing_witness(unstable, 1)
    assert witness is not None
    assert witness.verdict == "unstable"
    assert witness.summands == (0,)
    assert witness.margin == Fraction(1)
    assert not witness.heuristic


def test_witness_of_constant_field(polystable: HiggsInstance) -> None:
    witness = destabilizing_witness(polystable, 2)
    assert witness is not None
    assert witness.verdict == "polystable"
    assert witness.margin == 0
    assert witness.subspace is not None

    nilpotent = HiggsInstance.build(0, [0, 0], [[0, 1], [0, 0]])
    assert destabilizing_witness(nilpotent, 2).verdict == "strictly_semistable"


def test_witness_of_zero_field(split: HiggsInstance) -> None:
    witness = destabilizing_witness(split, 3)
    assert witness.verdict == "unstable"
    assert witness.summands == (0,)
    assert witness.margin == Fraction(6) - Fraction(10, 2)

    balanced = HiggsInstance.build(0, [1, 1])
    assert destabilizing_witness(balanced, 0).verdict == "polystable"


def test_evaluate_higgs_in_both_charts() -> None:
    # phi_12 = 1 + 2z on O(1) + O with m = 0
    instance = HiggsInstance.build(0, [1, 0], [[0, [1, 2]], [0, 0]])
    z = np.array([0.5 + 0.5j])
    near = evaluate_higgs(instance, z, chart=0)
    assert np.isclose(near[0, 0, 1], 1 + 2 * z[0])
    far = evaluate_higgs(instance, 1.0 / z, chart=1)
    # reversed polynomial w (1 + 2/w) = w + 2
    assert np.isclose(far[0, 0, 1], 1.0 / z[0] + 2)
    assert np.allclose(far[0, 1], 0)


def test_unitary_higgs_scales_by_frame() -> None:
    instance = HiggsInstance.build(0, [1, 0], [[0, [1, 2]], [0, 0]])
    z = np.array([0.3 - 0.4j])
    rho = np.sqrt(1 + 0.25)
    assert np.isclose(unitary_higgs(instance, z)[0, 0, 1], (1 + 2 * z[0]) / rho)
