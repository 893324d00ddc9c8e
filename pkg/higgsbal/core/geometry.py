"""Model of the projective line with L = O(1): charts, Fubini-Study weights, quadrature,
sampled fields and finite-difference curvature.

Chart 0 has coordinate z, chart 1 has coordinate w = 1/z. The Kähler form is
omega = (i/2pi) d d-bar log(1+|z|^2), normalized to volume 1. In the polar variable
t = (|z|^2-1)/(|z|^2+1) and azimuth theta it reads omega = dt dtheta / (4 pi).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from higgsbal.config import DEFAULT_FD_STEP, logger
from higgsbal.storage import Storage

MIN_POLAR = 2
MIN_AZIMUTHAL = 4
MIN_FD_STEP = 1e-8

# (chart, coordinates) -> metric matrices of shape (n, r, r)
FrameMetric = Callable[[int, np.ndarray], np.ndarray]


class QuadratureError(ValueError):
    """Raised for invalid quadrature orders or field/scheme mismatches."""


class CurvatureError(ArithmeticError):
    """Raised when a finite-difference curvature evaluation is not possible."""


@dataclass(frozen=True)
class ChartPoint:
    """A point of the projective line given in one of the two standard charts.

    Attributes:
        chart (int): 0 for the z-chart, 1 for the w = 1/z chart.
        z (complex): The coordinate in that chart.
    """

    chart: int
    z: complex

    def __post_init__(self):
        if self.chart not in (0, 1):
            raise ValueError(f"Chart index must be 0 or 1, got {self.chart}")

    @property
    def is_canonical(self) -> bool:
        """Points with |z| <= 1 are canonical in their chart."""
        return abs(self.z) <= 1.0

    def canonical(self) -> ChartPoint:
        """Returns the canonical representation of the point.

        Returns:
            ChartPoint: The same point in the chart where |z| <= 1.
        """
        if self.is_canonical:
            return self
        return ChartPoint(chart=1 - self.chart, z=1.0 / complex(self.z))

    def coordinate(self, chart: int) -> complex:
        """Returns the coordinate of the point in the requested chart.

        Arguments:
            chart (int): The target chart.

        Raises:
            ValueError: If the point is the origin of the other chart.

        Returns:
            complex: The coordinate.
        """
        if chart == self.chart:
            return complex(self.z)
        if self.z == 0:
            raise ValueError("The point is not covered by the requested chart.")
        return 1.0 / complex(self.z)


@dataclass(frozen=True, eq=False)
class QuadratureScheme:
    """Tensor Gauss-Legendre (polar) x trapezoid (azimuth) quadrature on the sphere.

    Nodes are stored through their chart-0 coordinates, which are finite and nonzero
    because Gauss-Legendre nodes avoid the poles t = -1 and t = 1.

    Attributes:
        orders (tuple[int, int]): (n_polar, n_azimuthal).
        z (np.ndarray): Chart-0 coordinates of the nodes, polar index major.
        weights (np.ndarray): Positive weights summing to the volume 1.
    """

    orders: tuple[int, int]
    z: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        """Number of nodes."""
        return int(self.z.shape[0])

    @property
    def nodes(self) -> list[ChartPoint]:
        """The nodes as canonical chart points."""
        return [ChartPoint(0, complex(z)).canonical() for z in self.z]

    @property
    def canonical_charts(self) -> np.ndarray:
        """Chart index in which every node is canonical."""
        return (np.abs(self.z) > 1.0).astype(int)

    def coordinates(self, chart: int) -> np.ndarray:
        """Node coordinates in the requested chart.

        Arguments:
            chart (int): 0 or 1.

        Returns:
            np.ndarray: Complex coordinates, one per node.
        """
        return self.z if chart == 0 else 1.0 / self.z

    def compatible(self, other: QuadratureScheme) -> bool:
        """Whether two schemes share nodes (same orders)."""
        return self is other or self.orders == other.orders


def _build_quadrature(n_polar: int, n_azimuthal: int) -> QuadratureScheme:
    t, w_polar = leggauss(n_polar)
    theta = 2.0 * np.pi * np.arange(n_azimuthal) / n_azimuthal
    radius = np.sqrt((1.0 + t) / (1.0 - t))
    z = (radius[:, None] * np.exp(1j * theta)[None, :]).ravel()
    weights = np.repeat(w_polar / 2.0, n_azimuthal) / n_azimuthal
    z.flags.writeable = False
    weights.flags.writeable = False
    return QuadratureScheme(orders=(n_polar, n_azimuthal), z=z, weights=weights)


def build_quadrature(n_polar: int, n_azimuthal: int) -> QuadratureScheme:
    """Builds (or fetches from the artifact storage) a quadrature scheme.

    The scheme integrates z^p z-bar^q (1+|z|^2)^(-k-2) dx dy exactly when
    n_polar > k and n_azimuthal > 2k.

    Arguments:
        n_polar (int): Number of Gauss-Legendre nodes in t.
        n_azimuthal (int): Number of uniform azimuthal nodes.

    Raises:
        QuadratureError: If the orders are below the minimum.

    Returns:
        QuadratureScheme: The scheme.
    """
    if n_polar < MIN_POLAR or n_azimuthal < MIN_AZIMUTHAL:
        raise QuadratureError(
            f"Quadrature orders must satisfy n_polar >= {MIN_POLAR} and "
            f"n_azimuthal >= {MIN_AZIMUTHAL}, got ({n_polar}, {n_azimuthal})"
        )
    return Storage().get_or_create(
        ("quadrature", n_polar, n_azimuthal),
        lambda: _build_quadrature(n_polar, n_azimuthal),
    )


def default_orders(max_degree: int) -> tuple[int, int]:
    """Quadrature orders for products of sections of degree <= max_degree against
    smooth metrics.

    Arguments:
        max_degree (int): Largest line-bundle degree entering the integrands.

    Returns:
        tuple[int, int]: (n_polar, n_azimuthal).
    """
    degree = max(max_degree, 0)
    return 2 * degree + 16, 4 * degree + 16


@dataclass(frozen=True, eq=False)
class SampledField:
    """Matrix-valued field sampled at the nodes of a quadrature scheme.

    Attributes:
        values (np.ndarray): Array of shape (nodes, rows, cols).
        scheme (QuadratureScheme): The scheme the values belong to.
    """

    values: np.ndarray
    scheme: QuadratureScheme

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim == 1:
            values = values.reshape(-1, 1, 1)
        if values.ndim != 3:
            raise QuadratureError(f"Field values must have 3 dimensions, got {values.ndim}")
        if values.shape[0] != self.scheme.size:
            raise QuadratureError(
                f"Field has {values.shape[0]} values but the scheme has {self.scheme.size} nodes"
            )
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        """Shape (rows, cols) shared by every node value."""
        return int(self.values.shape[1]), int(self.values.shape[2])

    def __add__(self, other: SampledField) -> SampledField:
        if not self.scheme.compatible(other.scheme) or self.shape != other.shape:
            raise QuadratureError("Cannot add fields sampled on different schemes or shapes.")
        return SampledField(self.values + other.values, self.scheme)

    @classmethod
    def constant(cls, value: np.ndarray | complex, scheme: QuadratureScheme) -> SampledField:
        """A field with the same value at every node."""
        matrix = np.atleast_2d(np.asarray(value, dtype=complex))
        return cls(np.broadcast_to(matrix, (scheme.size, *matrix.shape)).copy(), scheme)


def sample(
    scheme: QuadratureScheme, function: Callable[[np.ndarray], np.ndarray], chart: int = 0
) -> SampledField:
    """Samples a coordinate function at the nodes presented in the given chart.

    Arguments:
        scheme (QuadratureScheme): The scheme.
        function (Callable[[np.ndarray], np.ndarray]): Vectorized function of the chart
            coordinate, returning (n,), (n, rows, cols) values.
        chart (int): The chart the function is written in.

    Returns:
        SampledField: The sampled field.
    """
    return SampledField(np.asarray(function(scheme.coordinates(chart))), scheme)


def pairwise_sum(values: np.ndarray) -> np.ndarray:
    """Sums along the first axis in a fixed pairwise order.

    Arguments:
        values (np.ndarray): Array to reduce along axis 0.

    Returns:
        np.ndarray: The sum.
    """
    values = np.asarray(values)
    if values.shape[0] == 0:
        return np.zeros(values.shape[1:], dtype=values.dtype)
    while values.shape[0] > 1:
        if values.shape[0] % 2:
            values = np.concatenate([values, np.zeros_like(values[:1])])
        values = values[0::2] + values[1::2]
    return values[0]


def integrate(field: SampledField, scheme: QuadratureScheme | None = None) -> np.ndarray:
    """Integrates a sampled field against omega.

    Arguments:
        field (SampledField): The field.
        scheme (QuadratureScheme | None): The scheme to integrate with, defaults to the
            field's own scheme.

    Raises:
        QuadratureError: If the field was sampled on another scheme.

    Returns:
        np.ndarray: The (rows, cols) integral.
    """
    scheme = scheme or field.scheme
    if not scheme.compatible(field.scheme):
        raise QuadratureError(
            f"Field sampled on orders {field.scheme.orders}, integrated with {scheme.orders}"
        )
    return pairwise_sum(scheme.weights[:, None, None] * field.values)


def integrate_values(values: np.ndarray, scheme: QuadratureScheme) -> np.ndarray:
    """Integrates raw per-node values of any trailing shape."""
    weights = scheme.weights.reshape((-1,) + (1,) * (np.ndim(values) - 1))
    return pairwise_sum(weights * values)


def fs_line_weight(point: ChartPoint, k: int) -> float:
    """Fubini-Study weight of L^k in the frame of the point's canonical chart.

    The chart-1 value differs from the chart-0 value by the transition factor |z|^(2k).

    Arguments:
        point (ChartPoint): The point.
        k (int): The power of L.

    Returns:
        float: (1+|z|^2)^(-k).
    """
    z = point.canonical().z
    return float((1.0 + abs(z) ** 2) ** (-k))


def _curvature_at(metric: FrameMetric, chart: int, coords: np.ndarray, step: float) -> np.ndarray:
    if step <= 0 or step < MIN_FD_STEP:
        raise CurvatureError(f"Finite-difference step {step} underflows")
    offsets = np.array([0.0, step, -step, 1j * step, -1j * step])
    stencil = (coords[:, None] + offsets[None, :]).ravel()
    values = np.asarray(metric(chart, stencil), dtype=complex)
    rank = values.shape[-1]
    values = values.reshape(coords.shape[0], 5, rank, rank)
    if np.min(np.linalg.eigvalsh(values)) <= 0:
        raise CurvatureError("Metric lost positivity on the finite-difference stencil")

    center = values[:, 0]
    d_x = (values[:, 1] - values[:, 2]) / (2 * step)
    d_y = (values[:, 3] - values[:, 4]) / (2 * step)
    d_z = (d_x - 1j * d_y) / 2
    d_zbar = (d_x + 1j * d_y) / 2
    laplacian = (values[:, 1] + values[:, 2] + values[:, 3] + values[:, 4] - 4 * center) / step**2
    inverse = np.linalg.inv(center)
    # d-bar(H^-1 dH) = H^-1 d d-bar H - H^-1 (d-bar H) H^-1 (dH)
    curvature = inverse @ (laplacian / 4) - inverse @ d_zbar @ inverse @ d_z
    density = (1.0 + np.abs(coords) ** 2) ** 2
    return -curvature * density[:, None, None]


def curvature_points(
    metric: FrameMetric,
    chart: int,
    coords: np.ndarray,
    step: float = DEFAULT_FD_STEP,
    richardson: bool = False,
) -> np.ndarray:
    """Degree-normalized i Lambda F_h at many points of one chart.

    Arguments:
        metric (FrameMetric): Holomorphic-frame metric as a function of (chart, coords).
        chart (int): The chart of the coordinates.
        coords (np.ndarray): Points, ideally with |z| <= 1.
        step (float): Finite-difference step.
        richardson (bool): Combine steps h and h/2 to cancel the leading error.

    Returns:
        np.ndarray: Endomorphisms of shape (n, r, r) in the holomorphic frame.
    """
    coords = np.asarray(coords, dtype=complex).ravel()
    coarse = _curvature_at(metric, chart, coords, step)
    if not richardson:
        return coarse
    fine = _curvature_at(metric, chart, coords, step / 2)
    return (4 * fine - coarse) / 3


def numeric_curvature(
    metric: FrameMetric,
    point: ChartPoint,
    step: float = DEFAULT_FD_STEP,
    richardson: bool = False,
) -> np.ndarray:
    """Evaluates i Lambda F_h at a point by central differences of d-bar(h^-1 dh).

    The contraction is normalized so that the Fubini-Study metric on O(d) gives the
    constant d. Points with |z| > 1 are moved to the other chart first, so the metric
    must be evaluable in both charts.

    Arguments:
        metric (FrameMetric): Holomorphic-frame metric as a function of (chart, coords).
        point (ChartPoint): The point.
        step (float): Finite-difference step.
        richardson (bool): Whether to apply Richardson extrapolation.

    Raises:
        CurvatureError: On step underflow or loss of positivity on the stencil.

    Returns:
        np.ndarray: The r x r endomorphism (self-adjoint with respect to h).
    """
    point = point.canonical()
    return curvature_points(metric, point.chart, np.array([point.z]), step, richardson)[0]


def scalar_curvature(point: ChartPoint, step: float = DEFAULT_FD_STEP) -> float:
    """Scalar curvature of omega, from the metric induced on the anticanonical frame.

    Arguments:
        point (ChartPoint): The point.
        step (float): Finite-difference step.

    Returns:
        float: The scalar curvature (2 under the degree normalization).
    """

    def anticanonical(_chart: int, coords: np.ndarray) -> np.ndarray:
        return ((1.0 + np.abs(coords) ** 2) ** -2)[:, None, None]

    return float(numeric_curvature(anticanonical, point, step).real[0, 0])


def _unitary_phases(degrees: Sequence[int], coords: np.ndarray) -> np.ndarray:
    """Diagonal of the transition from the chart-0 to the chart-1 unitary frame,
    evaluated at chart-1 coordinates."""
    phase = coords / np.abs(coords)
    return phase[:, None] ** np.asarray(degrees)[None, :]


@dataclass(frozen=True, eq=False)
class BundleMetric:
    """A hermitian metric on E = sum O(d_i), given in unitary frames.

    The unitary frame of a chart is e_i * (1+|c|^2)^(d_i/2), so the reference metric
    (Fubini-Study on every summand) is the identity there. The chart-1 unitary frame
    differs from the chart-0 one by the diagonal phases (w/|w|)^(d_i).

    Attributes:
        degrees (tuple[int, ...]): Degrees d_i of the summands.
        unitary (FrameMetric): (chart, coords) -> (n, r, r) metric in that chart's
            unitary frame.
        label (str): Human readable provenance.
        curvature (Callable[[np.ndarray], np.ndarray] | None): Closed-form i Lambda F_h
            at chart-0 coordinates in the chart-0 unitary frame, when known.
    """

    degrees: tuple[int, ...]
    unitary: FrameMetric
    label: str = "custom"
    curvature: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def rank(self) -> int:
        """Rank of the bundle."""
        return len(self.degrees)

    @property
    def degree(self) -> int:
        """Degree of the bundle."""
        return int(sum(self.degrees))

    def holomorphic(self, chart: int, coords: np.ndarray) -> np.ndarray:
        """Metric matrices in the holomorphic frame of a chart.

        Arguments:
            chart (int): The chart.
            coords (np.ndarray): Coordinates in that chart.

        Returns:
            np.ndarray: Array of shape (n, r, r).
        """
        coords = np.asarray(coords, dtype=complex).ravel()
        scale = (1.0 + np.abs(coords) ** 2)[:, None] ** (-np.asarray(self.degrees) / 2.0)
        return scale[:, :, None] * np.asarray(self.unitary(chart, coords)) * scale[:, None, :]

    def at_nodes(self, scheme: QuadratureScheme) -> np.ndarray:
        """Metric values at the nodes in the chart-0 unitary frame."""
        return np.asarray(self.unitary(0, scheme.z), dtype=complex)

    @classmethod
    def reference(cls, degrees: Sequence[int]) -> BundleMetric:
        """Fubini-Study metric on every summand."""
        rank = len(degrees)

        def unitary(_chart: int, coords: np.ndarray) -> np.ndarray:
            return np.broadcast_to(np.eye(rank, dtype=complex), (len(coords), rank, rank))

        # Fubini-Study on O(d) has constant curvature d
        diagonal = np.diag(np.asarray(degrees, dtype=float)).astype(complex)

        def curvature(coords: np.ndarray) -> np.ndarray:
            return np.repeat(diagonal[None], len(coords), axis=0)

        return cls(
            degrees=tuple(degrees), unitary=unitary, label="reference", curvature=curvature
        )

    @classmethod
    def conformal(cls, degrees: Sequence[int], amplitudes: Sequence[float]) -> BundleMetric:
        """Fubini-Study metrics rescaled by exp(-a_i t), t = (|z|^2-1)/(|z|^2+1).

        Arguments:
            degrees (Sequence[int]): Degrees of the summands.
            amplitudes (Sequence[float]): One amplitude a_i per summand.

        Returns:
            BundleMetric: The perturbed metric.
        """
        if len(amplitudes) != len(degrees):
            raise ValueError("One amplitude per summand is required.")
        amps = np.asarray(amplitudes, dtype=float)

        def unitary(chart: int, coords: np.ndarray) -> np.ndarray:
            modulus = np.abs(coords) ** 2
            t = (modulus - 1.0) / (modulus + 1.0)
            if chart == 1:
                t = -t
            diagonal = np.exp(-t[:, None] * amps[None, :])
            return np.einsum("ni,ij->nij", diagonal, np.eye(len(amps))).astype(complex)

        label = "conformal(" + ",".join(f"{a:g}" for a in amplitudes) + ")"
        return cls(degrees=tuple(degrees), unitary=unitary, label=label)


def holomorphic_to_unitary(
    endomorphisms: np.ndarray, degrees: Sequence[int], chart: int, coords: np.ndarray
) -> np.ndarray:
    """Converts endomorphisms from a chart's holomorphic frame to the chart-0 unitary frame.

    Arguments:
        endomorphisms (np.ndarray): Array (n, r, r) in the holomorphic frame of the chart.
        degrees (Sequence[int]): Degrees of the summands.
        chart (int): The chart of the input.
        coords (np.ndarray): Coordinates of the points in that chart.

    Returns:
        np.ndarray: Array (n, r, r) in the chart-0 unitary frame.
    """
    coords = np.asarray(coords, dtype=complex).ravel()
    rho = (1.0 + np.abs(coords) ** 2)[:, None] ** (np.asarray(degrees) / 2.0)
    # holomorphic coefficients are rho^d times unitary ones
    result = endomorphisms * rho[:, None, :] / rho[:, :, None]
    if chart == 1:
        phases = _unitary_phases(degrees, coords)
        result = np.conj(phases)[:, :, None] * result * phases[:, None, :]
    return result


def curvature_field(
    metric: BundleMetric,
    scheme: QuadratureScheme,
    step: float = DEFAULT_FD_STEP,
    richardson: bool = False,
) -> SampledField:
    """i Lambda F_h at every node, computed in the node's canonical chart and returned in
    the chart-0 unitary frame.

    Arguments:
        metric (BundleMetric): The metric.
        scheme (QuadratureScheme): The scheme.
        step (float): Finite-difference step.
        richardson (bool): Whether to apply Richardson extrapolation.

    Returns:
        SampledField: The curvature endomorphisms, closed-form when the metric has one.
    """
    if metric.curvature is not None:
        return SampledField(np.asarray(metric.curvature(scheme.z), dtype=complex), scheme)
    rank = metric.rank
    values = np.zeros((scheme.size, rank, rank), dtype=complex)
    charts = scheme.canonical_charts
    for chart in (0, 1):
        mask = charts == chart
        if not np.any(mask):
            continue
        coords = scheme.coordinates(chart)[mask]
        local = curvature_points(metric.holomorphic, chart, coords, step, richardson)
        values[mask] = holomorphic_to_unitary(local, metric.degrees, chart, coords)
    logger.debug("Curvature field of %s evaluated on %d nodes", metric.label, scheme.size)
    return SampledField(values, scheme)
