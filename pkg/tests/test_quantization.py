from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from higgsbal.core.geometry import BundleMetric
from higgsbal.core.model import HiggsInstance, InadmissibleLevelError, SplitBundle
from higgsbal.core.quantization import (
    NotInducedError,
    QuantParams,
    ZeroHiggsError,
    beta_weights,
    l2_gram_of_metric,
    multiplication_norm_check,
    p_endomorphism,
    pushforward,
    reconstruct_higgs,
    reference_l2_gram,
    section_basis,
    twist_l2_gram,
    weakly_geometric_report,
)


def test_section_basis_layout() -> None:
    basis = section_basis(SplitBundle((1, -1)), 2)
    assert basis.N == 6
    assert basis.section_degrees == (3, 1)
    assert basis.offsets == (0, 4)
    assert basis.index(1, 1) == 5
    assert basis.summand_indices([1]) == [4, 5]
    with pytest.raises(InadmissibleLevelError):
        section_basis(SplitBundle((1, -3)), 2)


def test_reference_gram_is_diagonal_beta() -> None:
    basis = section_basis(SplitBundle((2, 0)), 1)
    gram = reference_l2_gram(basis.bundle, 1)
    assert np.allclose(gram.G, np.diag(beta_weights(basis)), atol=1e-13)
    assert np.isclose(beta_weights(basis)[1], Fraction(1 * 2, 24))


def test_l2_gram_of_reference_metric_matches(split: HiggsInstance) -> None:
    basis = section_basis(split.bundle, 2)
    gram = l2_gram_of_metric(BundleMetric.reference(split.bundle.degrees), basis)
    assert np.allclose(gram.G, np.diag(beta_weights(basis)), atol=1e-13)
    with pytest.raises(ValueError):
        l2_gram_of_metric(BundleMetric.reference([1, 0]), basis)


def test_twist_gram() -> None:
    assert np.allclose(twist_l2_gram(2).G, np.diag([1 / 3, 1 / 6, 1 / 3]), atol=1e-13)


def test_quant_params() -> None:
    params = QuantParams(k=3, ell=Fraction(1, 2), rank=2, N=10)
    assert params.delta == Fraction(1, 2)
    assert params.chi == 5
    assert params.weight_epsilon == Fraction(1, 10)
    assert np.isclose(params.epsilon(2.0), 0.5)
    with pytest.raises(ValueError):
        QuantParams(k=3, ell=Fraction(0), rank=2, N=10)


def test_pushforward_places_coefficients(polystable: HiggsInstance) -> None:
    pushed = pushforward(polystable, 1)
    expected = np.zeros((4, 4))
    expected[0, 2] = expected[1, 3] = 2
    expected[2, 0] = expected[3, 1] = 1
    assert np.allclose(pushed.A, expected)
    assert pushed.n_twist == 1


def test_pushforward_of_twisted_field(unstable: HiggsInstance) -> None:
    pushed = pushforward(unstable, 1)
    # O(2) + O at k = 1, H^0(M) = span(1, z, z^2)
    assert pushed.A.shape == (4, 12)
    blocks = pushed.blocks()
    assert np.isclose(blocks[0][0, 3], 1)
    assert np.isclose(blocks[2][2, 3], 1)


def test_reconstruct_inverts_pushforward(unstable: HiggsInstance) -> None:
    pushed = pushforward(unstable, 2)
    field = reconstruct_higgs(pushed, unstable.bundle, 2, 2)
    assert np.allclose(field.entry(0, 1), (1,))
    assert field.entry_is_zero(1, 0)


def test_reconstruct_inverts_pushforward_of_random_field() -> None:
    rng = np.random.default_rng(5)
    diagonal = rng.normal(size=2) + 1j * rng.normal(size=2)
    upper = rng.normal(size=3) + 1j * rng.normal(size=3)
    instance = HiggsInstance.build(0, [2, 0], [[diagonal[0], list(upper)], [0, diagonal[1]]])
    field = reconstruct_higgs(pushforward(instance, 2), instance.bundle, 0, 2)
    assert np.allclose(field.entry(0, 0), [diagonal[0]], atol=1e-10)
    assert np.allclose(field.entry(0, 1), upper, atol=1e-10)
    assert np.allclose(field.entry(1, 1), [diagonal[1]], atol=1e-10)
    assert field.entry_is_zero(1, 0)


def test_reconstruct_rejects_foreign_matrix(polystable: HiggsInstance) -> None:
    matrix = np.zeros((4, 4))
    # sends 1 to z inside the same summand, which no constant field does
    matrix[1, 0] = 1
    with pytest.raises(NotInducedError):
        reconstruct_higgs(matrix, polystable.bundle, 0, 1)


def test_p_endomorphism_traces_to_rank(polystable: HiggsInstance) -> None:
    pushed = pushforward(polystable, 2)
    form = reference_l2_gram(polystable.bundle, 2)
    params = QuantParams.for_basis(pushed.basis)
    result = p_endomorphism(pushed, form, twist_l2_gram(0), params)
    # tr P = N / chi = rk E because the commutator is traceless
    assert np.isclose(np.trace(result.P).real, 2)
    assert result.frob2 > 0


def test_weakly_geometric_report(polystable: HiggsInstance, split: HiggsInstance) -> None:
    report = weakly_geometric_report(polystable, [1, 2, 3])
    assert [record.k for record in report.records] == [1, 2, 3]
    assert report.metric == "reference"
    assert report.c_lower == max(r.operator_norm for r in report.records)
    with pytest.raises(ZeroHiggsError):
        weakly_geometric_report(split, [1])


def test_multiplication_norm_bound() -> None:
    assert multiplication_norm_check(1, SplitBundle((0,)), 2).holds
