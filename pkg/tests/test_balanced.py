from __future__ import annotations

import numpy as np
import pytest

from higgsbal.core.balanced import (
    IterationControls,
    MetricState,
    balanced_residual,
    frame_quantities,
    fs_bundle_metric,
    fs_pullback_metric,
    iterate,
    kempf_ness,
    kempf_ness_at,
    kempf_ness_slope,
    l2_gram_fs,
    moment_map,
    t_step,
)
from higgsbal.core.geometry import ChartPoint
from higgsbal.core.git import OneParamSubgroup, kempf_ness_direction, total_weight
from higgsbal.core.model import HiggsInstance
from higgsbal.core.quantization import (
    QuantParams,
    beta_weights,
    pushforward,
    section_basis,
    twist_l2_gram,
)


def _setup(instance: HiggsInstance, k: int):
    pushed = pushforward(instance, k)
    params = QuantParams.for_basis(pushed.basis)
    return pushed, twist_l2_gram(instance.twist.m), params


def test_reference_state_of_line_bundle_is_balanced(trivial_line: HiggsInstance) -> None:
    k = 3
    pushed, twist_form, params = _setup(trivial_line, k)
    state = MetricState.reference(pushed.basis.N)
    assert np.allclose(l2_gram_fs(state, pushed.basis), np.eye(k + 1) / (k + 1), atol=1e-12)
    assert balanced_residual(state, pushed, twist_form, params) < 1e-10
    moment = moment_map(state, pushed, twist_form, params)
    assert np.allclose(moment, -0.5j * np.eye(k + 1) / (k + 1), atol=1e-12)
    stepped = t_step(state, pushed, twist_form, params)
    assert np.allclose(stepped.gram.G, np.eye(k + 1), atol=1e-10)
    assert stepped.step == 1 and stepped.parent == 0


def test_fs_pullback_of_reference_state(trivial_line: HiggsInstance) -> None:
    basis = section_basis(trivial_line.bundle, 2)
    state = MetricState.reference(basis.N)
    for point in (ChartPoint(0, 0.2 + 0.1j), ChartPoint(0, 3.0j)):
        assert np.allclose(fs_pullback_metric(state, basis, point), [[1 / 3]])
    metric = fs_bundle_metric(state, basis)
    assert np.allclose(metric.unitary(0, np.array([0.5, 2.0])), 1 / 3)


def test_monomial_gram_of_reference_state(split: HiggsInstance) -> None:
    basis = section_basis(split.bundle, 1)
    gram = MetricState.reference(basis.N).monomial_gram(basis)
    assert np.allclose(gram.G, np.diag(beta_weights(basis)))


def test_iteration_converges_for_line_bundle(trivial_line: HiggsInstance) -> None:
    basis = section_basis(trivial_line.bundle, 2)
    report = iterate(trivial_line, 2, QuantParams.for_basis(basis))
    assert report.verdict == "converged"
    assert report.steps == 1
    assert report.to_rows()[0]["step"] == 0


def test_iteration_balances_polystable_instance(polystable: HiggsInstance) -> None:
    basis = section_basis(polystable.bundle, 1)
    controls = IterationControls(tol=1e-9, max_iter=200)
    report = iterate(polystable, 1, QuantParams.for_basis(basis), controls)
    assert report.verdict == "converged"
    assert report.final_residual < 1e-9
    # the summands are rescaled until both entries of phi have equal norm
    assert np.isclose(report.final_state.condition, 2.0, rtol=1e-6)
    assert np.isclose(report.records[-1].epsilon, 1 / 9, rtol=1e-6)


def test_iteration_degenerates_for_unstable_instance(unstable: HiggsInstance) -> None:
    basis = section_basis(unstable.bundle, 1)
    controls = IterationControls(burn_in=10, degeneration_threshold=1e9, record_kempf_ness=False)
    report = iterate(unstable, 1, QuantParams.for_basis(basis), controls)
    assert report.verdict == "degenerate"
    assert report.final_state.condition > 1e9
    assert all(np.isnan(record.kn_value) for record in report.records)
    # the sections of the destabilizing summand collapse
    tail = [record.min_eig for record in report.records[10:]]
    assert len(tail) > 1
    assert all(b < a for a, b in zip(tail, tail[1:]))


def test_kempf_ness_functional(polystable: HiggsInstance) -> None:
    pushed, twist_form, params = _setup(polystable, 1)
    state = MetricState.reference(pushed.basis.N)
    zeta = np.diag([1.0, 1.0, -1.0, -1.0]).astype(complex)
    assert np.isclose(kempf_ness(state, zeta, 0.0, pushed, twist_form, params), 0.0)
    assert np.isclose(kempf_ness_at(state, np.eye(4), pushed, twist_form, params), 0.0)
    at_t = kempf_ness(state, zeta, 0.3, pushed, twist_form, params)
    at_g = kempf_ness_at(state, np.diag(np.exp(0.3 * np.diag(zeta))), pushed, twist_form, params)
    assert np.isclose(at_t, at_g, atol=1e-10)
    with pytest.raises(ValueError):
        kempf_ness(state, np.eye(4), 1.0, pushed, twist_form, params)


@pytest.mark.parametrize("k", [4, 7, 10])
def test_iteration_balances_polystable_instance_at_larger_levels(
    polystable: HiggsInstance, k: int
) -> None:
    basis = section_basis(polystable.bundle, k)
    controls = IterationControls(tol=1e-9, max_iter=500, record_kempf_ness=False)
    report = iterate(polystable, k, QuantParams.for_basis(basis), controls)
    assert report.verdict == "converged"
    assert report.final_residual < 1e-8


def test_iteration_does_not_balance_nilpotent_field() -> None:
    # phi is nilpotent, so O + O is semistable but not polystable
    nilpotent = HiggsInstance.build(0, [0, 0], [[0, 1], [0, 0]], label="nilpotent")
    basis = section_basis(nilpotent.bundle, 2)
    controls = IterationControls(max_iter=100, record_kempf_ness=False)
    report = iterate(nilpotent, 2, QuantParams.for_basis(basis), controls)
    assert report.verdict in ("degenerate", "max_iter")
    assert report.final_residual > controls.tol


def test_frame_quantities_are_unitarily_equivariant(polystable: HiggsInstance) -> None:
    pushed, twist_form, params = _setup(polystable, 2)
    rng = np.random.default_rng(11)
    state = MetricState.from_matrix(np.diag(rng.uniform(0.5, 2.0, pushed.basis.N)))
    raw = rng.normal(size=(pushed.basis.N,) * 2) + 1j * rng.normal(size=(pushed.basis.N,) * 2)
    rotation, _ = np.linalg.qr(raw)

    plain = frame_quantities(state, pushed, twist_form, params)
    rotated = frame_quantities(state, pushed, twist_form, params, rotation=rotation)
    adjoint = np.conj(rotation.T)
    assert np.allclose(rotated.Q, adjoint @ plain.Q @ rotation, atol=1e-10)
    assert np.allclose(rotated.P, adjoint @ plain.P @ rotation, atol=1e-10)
    assert np.isclose(rotated.residual, plain.residual, atol=1e-10)
    assert abs(kempf_ness_at(state, rotation, pushed, twist_form, params)) < 1e-10


@pytest.mark.parametrize(
    "fixture, k",
    [("split", 3), ("polystable", 2), ("unstable", 1)],
)
def test_kempf_ness_slope_has_the_sign_of_the_weight(
    fixture: str, k: int, request: pytest.FixtureRequest
) -> None:
    instance: HiggsInstance = request.getfixturevalue(fixture)
    pushed, twist_form, params = _setup(instance, k)
    subgroup = OneParamSubgroup.from_subsheaf(pushed.basis, [0])
    zeta = kempf_ness_direction(subgroup)
    state = MetricState.reference(pushed.basis.N)

    assert np.isclose(kempf_ness(state, zeta, 0.0, pushed, twist_form, params), 0.0)
    slope = kempf_ness_slope(state, zeta, pushed, twist_form, params)
    weight = total_weight(subgroup, instance, k, params).mu_total
    assert weight != 0
    assert abs(slope) > 1e-3
    assert np.sign(slope) == np.sign(float(weight))


def test_kempf_ness_is_convex_along_subgroups(unstable: HiggsInstance) -> None:
    pushed, twist_form, params = _setup(unstable, 1)
    state = MetricState.reference(pushed.basis.N)
    rng = np.random.default_rng(3)
    size = pushed.basis.N
    raw = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
    zeta = (raw + np.conj(raw.T)) / 2
    zeta -= np.trace(zeta) / size * np.eye(size)

    values = [
        kempf_ness(state, zeta, t, pushed, twist_form, params) for t in np.linspace(-1, 1, 9)
    ]
    second = np.diff(values, n=2)
    assert np.all(second >= -1e-8)
