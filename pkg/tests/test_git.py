from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from higgsbal.core.git import (
    InvalidSubgroupError,
    OneParamSubgroup,
    generic_rank,
    kempf_ness_direction,
    maximal_weight,
    mu1,
    mu2,
    sample_points,
    total_weight,
    w2_profile,
)
from higgsbal.core.model import HiggsInstance, InvalidSubsetError
from higgsbal.core.quantization import QuantParams, pushforward, section_basis


def test_subgroup_validation() -> None:
    with pytest.raises(InvalidSubgroupError):
        OneParamSubgroup((1, 1, 1))
    with pytest.raises(InvalidSubgroupError):
        OneParamSubgroup((1, 0, 0))
    subgroup = OneParamSubgroup((1, 0, 0), special_linear=False)
    assert subgroup.levels == [0, 1]
    with pytest.raises(InvalidSubgroupError):
        OneParamSubgroup((1, -1), basis_change=np.ones((2, 2)))


def test_subsheaf_subgroup_weights(split: HiggsInstance) -> None:
    basis = section_basis(split.bundle, 3)
    subgroup = OneParamSubgroup.from_subsheaf(basis, [0])
    assert subgroup.weights == (-4,) * 6 + (6,) * 4
    assert sum(subgroup.weights) == 0
    with pytest.raises(InvalidSubsetError):
        OneParamSubgroup.from_subsheaf(basis, [0, 1])


def test_sample_points_are_seeded() -> None:
    assert np.allclose(sample_points(8, seed=3), sample_points(8, seed=3))
    assert sample_points(8).shape == (16,)


def test_generic_rank_of_summand_sections(split: HiggsInstance) -> None:
    basis = section_basis(split.bundle, 3)
    inside = np.eye(basis.N)[:, basis.summand_indices([0])]
    assert generic_rank(inside, basis) == 1
    assert generic_rank(np.eye(basis.N), basis) == 2


def test_weight_of_destabilizing_subsheaf(split: HiggsInstance) -> None:
    basis = section_basis(split.bundle, 3)
    subgroup = OneParamSubgroup.from_subsheaf(basis, [0])
    grassmannian = mu1(subgroup, basis)
    assert grassmannian.theta_by_level == {-4: -2, 6: 0}
    assert grassmannian.theta_sum == -2
    assert grassmannian.mu1 == Fraction(-1, 5)
    assert grassmannian.filtration_weight == -2

    params = QuantParams.for_basis(basis)
    report = total_weight(subgroup, split, 3, params, summands=[0])
    assert report.mu2 == 0
    assert report.mu_total == Fraction(-1, 5)
    assert report.classification == "unstable"
    assert report.maximal is not None
    assert report.maximal.w1 == Fraction(-1, 4)
    assert report.maximal.nu == Fraction(3, 2)
    assert report.maximal.w2_limit == 0


def test_mu2_detects_non_invariant_direction(unstable: HiggsInstance) -> None:
    basis = section_basis(unstable.bundle, 1)
    pushed = pushforward(unstable, 1)
    # O(1) is invariant: phi maps into it, so no block raises the weight
    invariant = OneParamSubgroup.from_subsheaf(basis, [0])
    assert mu2(invariant, pushed) == 0
    # the complement O(-1) is not invariant
    complement = OneParamSubgroup.from_subsheaf(basis, [1])
    assert mu2(complement, pushed) == 4


def test_maximal_weight_of_non_invariant_subsheaf(unstable: HiggsInstance) -> None:
    result = maximal_weight(unstable, 1, [1])
    assert result.nu == Fraction(1, 3)
    assert result.w2_limit == 1 + result.nu
    assert result.norms.e21 > 0
    assert np.isclose(w2_profile(result.norms, result.nu, 30.0), float(result.w2_limit))

    invariant = maximal_weight(unstable, 1, [0])
    assert invariant.w2_limit == 0
    assert np.isclose(invariant.norms.e21, 0)


def test_kempf_ness_direction_is_traceless() -> None:
    zeta = kempf_ness_direction(OneParamSubgroup((2, -1, -1)))
    assert np.isclose(np.trace(zeta), 0)
    assert np.allclose(np.diag(zeta).real, [-1.0, 0.5, 0.5])
