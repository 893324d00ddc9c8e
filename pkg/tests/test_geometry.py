from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from higgsbal.core.geometry import (
    BundleMetric,
    ChartPoint,
    QuadratureError,
    SampledField,
    build_quadrature,
    curvature_field,
    default_orders,
    fs_line_weight,
    integrate,
    numeric_curvature,
    scalar_curvature,
)


def test_quadrature_weights_sum_to_volume() -> None:
    scheme = build_quadrature(6, 12)
    assert scheme.size == 72
    assert np.all(scheme.weights > 0)
    assert np.isclose(np.sum(scheme.weights), 1.0, atol=1e-14)


def test_quadrature_is_cached() -> None:
    assert build_quadrature(5, 9) is build_quadrature(5, 9)


def test_quadrature_rejects_small_orders() -> None:
    with pytest.raises(QuadratureError):
        build_quadrature(1, 8)
    with pytest.raises(QuadratureError):
        build_quadrature(4, 3)


def test_default_orders_grow_with_degree() -> None:
    assert default_orders(0) == (16, 16)
    assert default_orders(3) == (22, 28)


def test_integrate_constant_field() -> None:
    scheme = build_quadrature(4, 8)
    value = integrate(SampledField.constant(3.0, scheme))
    assert np.allclose(value, 3.0)


def test_integrate_fs_monomial_norms() -> None:
    # integral of |z|^2a (1+|z|^2)^-k equals a!(k-a)!/(k+1)!
    scheme = build_quadrature(6, 8)
    modulus = np.abs(scheme.z) ** 2
    values = modulus**2 * (1.0 + modulus) ** -5
    field = SampledField(values.astype(complex), scheme)
    assert np.isclose(integrate(field).real[0, 0], 2 * 6 / 720, atol=1e-13)


def test_chart_point_canonical_and_coordinates() -> None:
    point = ChartPoint(0, 2.0 + 0j)
    canonical = point.canonical()
    assert canonical.chart == 1
    assert np.isclose(canonical.z, 0.5)
    assert np.isclose(point.coordinate(1), 0.5)
    with pytest.raises(ValueError):
        ChartPoint(0, 0j).coordinate(1)
    with pytest.raises(ValueError):
        ChartPoint(2, 1j)


def test_fs_line_weight_agrees_across_charts() -> None:
    point = ChartPoint(0, 3.0 + 1.0j)
    assert np.isclose(fs_line_weight(point, 2), (1 + 0.1) ** -2)
    assert np.isclose(fs_line_weight(point, 2), fs_line_weight(point.canonical(), 2))


@pytest.mark.parametrize("degree", [1, 3])
def test_fubini_study_curvature_is_degree(degree: int) -> None:
    metric = BundleMetric.reference([degree])
    for point in (ChartPoint(0, 0.3 + 0.2j), ChartPoint(1, -0.4j)):
        curvature = numeric_curvature(metric.holomorphic, point)
        assert np.isclose(curvature.real[0, 0], degree, atol=1e-5)


def test_scalar_curvature_is_two() -> None:
    assert np.isclose(scalar_curvature(ChartPoint(0, 0.5 - 0.1j)), 2.0, atol=1e-5)


def test_reference_metric_is_fs_in_holomorphic_frame() -> None:
    metric = BundleMetric.reference([2, 0])
    coords = np.array([0.5 + 0.5j])
    holomorphic = metric.holomorphic(0, coords)[0]
    assert np.allclose(np.diag(holomorphic).real, [(1.5) ** -2, 1.0])


def test_conformal_metric_is_chart_consistent() -> None:
    metric = BundleMetric.conformal([1, 0], [0.5, 1.0])
    z = np.array([0.6 + 0.2j])
    near = metric.unitary(0, z)
    far = metric.unitary(1, 1.0 / z)
    assert np.allclose(near, far)


def test_reference_curvature_is_closed_form() -> None:
    metric = BundleMetric.reference([2, 0])
    scheme = build_quadrature(6, 8)
    closed = curvature_field(metric, scheme).values
    assert np.array_equal(closed, np.repeat(np.diag([2.0, 0.0])[None], scheme.size, axis=0))
    numeric = curvature_field(dataclasses.replace(metric, curvature=None), scheme).values
    assert np.allclose(numeric, closed, atol=1e-5)
