"""Bergman functions, Hitchin-equation residuals and the large-k checks relating balanced
metrics to solutions of the twisted Hitchin equation.

All pointwise endomorphisms are returned in the chart-0 unitary frame. Norms of
endomorphisms are taken with respect to the metric of the bundle they act on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from higgsbal.config import DEFAULT_FD_STEP, EXACT_REMAINDER, C_BOUNDS_SLACK, logger
from higgsbal.core.balanced import (
    MetricState,
    fs_bundle_metric,
    frame_quantities,
    t_step,
)
from higgsbal.core.geometry import (
    BundleMetric,
    QuadratureScheme,
    SampledField,
    curvature_field,
    curvature_points,
    holomorphic_to_unitary,
    integrate_values,
)
from higgsbal.core.hermitian import (
    HermitianForm,
    ShapeMismatchError,
    blocks_dagger,
    commutator,
    operator_norm_wrt,
)
from higgsbal.core.model import HiggsInstance, SplitBundle, evaluate_higgs, unitary_higgs
from higgsbal.core.quantization import (
    QuantParams,
    SectionBasis,
    ZeroHiggsError,
    default_scheme,
    l2_gram_of_metric,
    node_evaluations,
    pushforward,
    section_basis,
    twist_l2_gram,
)

MIN_POINTS = 4
MAX_ORDER = 6


class ShortRangeError(ValueError):
    """Raised when a fit is requested over fewer than four levels."""


class NotBalancedError(ValueError):
    """Raised when a check needs a balanced metric and gets another one."""


def _require_range(k_range: Sequence[int]) -> list[int]:
    levels = sorted(set(int(k) for k in k_range))
    if len(levels) < MIN_POINTS:
        raise ShortRangeError(f"Need at least {MIN_POINTS} levels, got {levels}")
    return levels


def _h_transform(metric: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(L^H, L^-H) for metric = L L^H; X -> L^H X L^-H is an isometry to the standard
    inner product."""
    lower = np.linalg.cholesky(metric)
    upper = np.conj(np.swapaxes(lower, -1, -2))
    return upper, np.linalg.inv(upper)


def endomorphism_norms(
    values: np.ndarray, metric: np.ndarray | None = None, kind: str = "operator"
) -> np.ndarray:
    """Pointwise norms of endomorphisms with respect to a fibre metric.

    Arguments:
        values (np.ndarray): Endomorphisms (n, r, r).
        metric (np.ndarray | None): Fibre metrics (n, r, r) in the same frame, identity
            when omitted.
        kind (str): "operator" or "frobenius".

    Returns:
        np.ndarray: One norm per point.
    """
    if metric is not None:
        upper, upper_inverse = _h_transform(metric)
        values = upper @ values @ upper_inverse
    if kind == "operator":
        return np.linalg.norm(values, ord=2, axis=(1, 2))
    return np.sqrt(np.sum(np.abs(values) ** 2, axis=(1, 2)))


def _l2_norm(values: np.ndarray, metric: np.ndarray | None, scheme: QuadratureScheme) -> float:
    pointwise = endomorphism_norms(values, metric, kind="frobenius") ** 2
    return float(np.sqrt(max(float(np.real(integrate_values(pointwise, scheme))), 0.0)))


@dataclass(frozen=True, eq=False)
class BergmanField:
    """Bergman endomorphism B_k sampled at the nodes.

    Attributes:
        field (SampledField): Values in the chart-0 unitary frame.
        provenance (str): Description of the metric.
    """

    field: SampledField
    provenance: str

    def trace_integral(self) -> float:
        """Integral of tr B_k, equal to N."""
        traces = np.trace(self.field.values, axis1=1, axis2=2)
        return float(np.real(integrate_values(traces, self.field.scheme)))

    def min_eigenvalue(self) -> float:
        """Smallest eigenvalue of B_k over the nodes."""
        return float(np.min(np.real(np.linalg.eigvals(self.field.values))))


def bergman_values(sections: np.ndarray, metric: np.ndarray | None = None) -> np.ndarray:
    """B = S S^H H for an orthonormal basis S evaluated at points."""
    outer = sections @ np.conj(np.swapaxes(sections, 1, 2))
    return outer if metric is None else outer @ metric


def bergman_function(
    gram: HermitianForm,
    basis: SectionBasis,
    scheme: QuadratureScheme | None = None,
    metric: BundleMetric | None = None,
) -> BergmanField:
    """Bergman endomorphism of the L^2 metric gram of h on E.

    Arguments:
        gram (HermitianForm): L^2 Gram of the monomial basis under h (x) h_L^k.
        basis (SectionBasis): The basis.
        scheme (QuadratureScheme | None): Quadrature, default orders when omitted.
        metric (BundleMetric | None): The metric h, the reference metric when omitted.

    Raises:
        DegenerateFormError: If the Gram is degenerate.

    Returns:
        BergmanField: The sampled endomorphisms.
    """
    scheme = scheme or default_scheme(basis)
    sections = node_evaluations(basis, scheme, False) @ gram.orthonormal_frame
    values = bergman_values(sections, metric.at_nodes(scheme) if metric is not None else None)
    label = metric.label if metric is not None else "reference"
    return BergmanField(SampledField(values, scheme), provenance=label)


@dataclass
class SlopeReport:
    """Log-log fit of a remainder series against k.

    Attributes:
        ks (list[int]): Levels.
        values (list[float]): Remainders.
        slope (float | None): Fitted exponent, None when the series is exact.
        intercept (float | None): Fitted log-intercept.
        exact (bool): All remainders below the exactness threshold.
        threshold (float): Largest slope accepted.
        extra (dict[str, list[float]]): Additional per-level series.
    """

    ks: list[int]
    values: list[float]
    slope: float | None
    intercept: float | None
    exact: bool
    threshold: float
    extra: dict[str, list[float]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        """Whether the decay is at least as fast as required."""
        return self.exact or (self.slope is not None and self.slope <= self.threshold)

    def to_rows(self) -> list[dict[str, float]]:
        """Rows for the CSV series."""
        rows = []
        for n, k in enumerate(self.ks):
            row: dict[str, float] = {"k": k, "value": self.values[n]}
            for name, series in self.extra.items():
                row[name] = series[n]
            rows.append(row)
        return rows


def fit_slope(ks: Sequence[int], values: Sequence[float], threshold: float) -> SlopeReport:
    """Least-squares fit of log(value) = slope log(k) + intercept.

    Arguments:
        ks (Sequence[int]): Levels.
        values (Sequence[float]): Positive remainders.
        threshold (float): Largest accepted slope.

    Returns:
        SlopeReport: The fit, flagged exact when every value is negligible.
    """
    values = [float(v) for v in values]
    if max(values) < EXACT_REMAINDER:
        return SlopeReport(list(ks), values, None, None, True, threshold)
    logs = np.log(np.maximum(values, EXACT_REMAINDER))
    slope, intercept = np.polyfit(np.log(np.asarray(ks, dtype=float)), logs, 1)
    return SlopeReport(list(ks), values, float(slope), float(intercept), False, threshold)


def bergman_expansion_check(
    metric: BundleMetric,
    k_range: Sequence[int],
    step: float = DEFAULT_FD_STEP,
    richardson: bool = False,
) -> SlopeReport:
    """Fits sup || B_k / k - Id - (i Lambda F_h + S/2) / k || against k.

    Arguments:
        metric (BundleMetric): Metric h on E, fixed across k.
        k_range (Sequence[int]): At least four admissible levels.
        step (float): Finite-difference step for the curvature.
        richardson (bool): Whether to extrapolate the curvature.

    Raises:
        ShortRangeError: For fewer than four levels.

    Returns:
        SlopeReport: Remainders and their fitted decay (threshold -2 + 0.3).
    """
    levels = _require_range(k_range)
    rank = metric.rank
    remainders, first_order = [], []
    for k in levels:
        basis = section_basis(_bundle_of(metric), k)
        scheme = default_scheme(basis)
        gram = l2_gram_of_metric(metric, basis, scheme)
        bergman = bergman_function(gram, basis, scheme, metric).field.values
        curvature = curvature_field(metric, scheme, step, richardson).values
        identity = np.eye(rank)[None]
        # the scalar curvature of omega is 2 under the degree normalization
        correction = curvature + identity
        remainder = bergman / k - identity - correction / k
        metric_values = metric.at_nodes(scheme)
        remainders.append(float(np.max(endomorphism_norms(remainder, metric_values))))
        first_order.append(
            float(np.max(endomorphism_norms(bergman - k * identity - correction, metric_values)))
        )
        logger.debug("Bergman remainder at k=%d: %.3e", k, remainders[-1])
    report = fit_slope(levels, remainders, threshold=-2.0 + 0.3)
    report.extra["first_order"] = first_order
    return report


def _bundle_of(metric: BundleMetric) -> SplitBundle:
    return SplitBundle(tuple(metric.degrees))


@dataclass(frozen=True, eq=False)
class HitchinResidual:
    """i Lambda F_h + c [phi, phi*] - lambda Id at the nodes.

    Attributes:
        field (SampledField): Residual endomorphisms in the chart-0 unitary frame.
        sup_norm (float): Maximal pointwise norm.
        l2_norm (float): L^2 norm under omega.
        trace_integral (float): Integral of the trace, zero by Chern-Weil.
    """

    field: SampledField
    sup_norm: float
    l2_norm: float
    trace_integral: float


def hitchin_residual(
    metric: BundleMetric,
    instance: HiggsInstance,
    c: float,
    scheme: QuadratureScheme | None = None,
    step: float = DEFAULT_FD_STEP,
) -> HitchinResidual:
    """Evaluates the twisted Hitchin equation for a metric, in each node's canonical chart.

    Arguments:
        metric (BundleMetric): Metric h on E.
        instance (HiggsInstance): The instance.
        c (float): Coupling constant, c >= 0.
        scheme (QuadratureScheme | None): Quadrature, default orders when omitted.
        step (float): Finite-difference step for the curvature.

    Returns:
        HitchinResidual: The residual field and its norms.
    """
    if c < 0:
        raise ValueError(f"Coupling constant must be non-negative, got {c}")
    if scheme is None:
        level = max(0, -min(instance.bundle.degrees))
        scheme = default_scheme(section_basis(instance.bundle, level))
    rank, m = instance.rank, instance.twist.m
    slope = instance.bundle.degree / rank
    values = np.zeros((scheme.size, rank, rank), dtype=complex)
    squared = np.zeros(scheme.size)
    charts = scheme.canonical_charts
    for chart in (0, 1):
        mask = charts == chart
        if not np.any(mask):
            continue
        coords = scheme.coordinates(chart)[mask]
        curvature = curvature_points(metric.holomorphic, chart, coords, step)
        fibre = metric.holomorphic(chart, coords)
        higgs = evaluate_higgs(instance, coords, chart)
        adjoint = np.linalg.solve(fibre, np.conj(np.swapaxes(higgs, 1, 2)) @ fibre)
        weight = ((1.0 + np.abs(coords) ** 2) ** m)[:, None, None]
        bracket = weight * (higgs @ adjoint - adjoint @ higgs)
        residual = curvature + c * bracket - slope * np.eye(rank)[None]
        squared[mask] = endomorphism_norms(residual, fibre, kind="frobenius") ** 2
        values[mask] = holomorphic_to_unitary(residual, instance.bundle.degrees, chart, coords)

    field_values = SampledField(values, scheme)
    traces = np.trace(values, axis1=1, axis2=2)
    return HitchinResidual(
        field=field_values,
        sup_norm=float(np.sqrt(np.max(squared))),
        l2_norm=float(np.sqrt(np.real(integrate_values(squared, scheme)))),
        trace_integral=float(np.real(integrate_values(traces, scheme))),
    )


@dataclass(frozen=True)
class BalancedHitchinRecord:
    """Large-k diagnostics of one balanced metric.

    Attributes:
        k (int): The level.
        epsilon (float): delta k / (1 + |||phi_*|||^2).
        frob2 (float): |||phi_*|||^2.
        t_norm (float): L^2 norm of T_k.
        combo_norm (float): L^2 norm of B_k + epsilon [phi, phi*] - chi Id.
        hitchin_sup (float): Sup norm of the Hitchin residual with c = epsilon.
        hitchin_l2 (float): L^2 norm of the Hitchin residual.
        operator_norm (float): ||phi_*|| under the balanced metric.
    """

    k: int
    epsilon: float
    frob2: float
    t_norm: float
    combo_norm: float
    hitchin_sup: float
    hitchin_l2: float
    operator_norm: float


def balanced_to_hitchin_check(
    state: MetricState,
    instance: HiggsInstance,
    k: int,
    params: QuantParams,
    scheme: QuadratureScheme | None = None,
    tol: float = 1e-8,
    step: float = DEFAULT_FD_STEP,
) -> BalancedHitchinRecord:
    """Compares a balanced metric with the twisted Hitchin equation.

    Arguments:
        state (MetricState): A balanced metric on H^0(E(k)).
        instance (HiggsInstance): The instance.
        k (int): The level.
        params (QuantParams): Constants.
        scheme (QuadratureScheme | None): Quadrature, default orders when omitted.
        tol (float): Largest residual accepted as balanced.
        step (float): Finite-difference step for the Hitchin residual.

    Raises:
        NotBalancedError: If the state is not balanced to tol.

    Returns:
        BalancedHitchinRecord: The diagnostics.
    """
    pushed = pushforward(instance, k)
    basis = pushed.basis
    scheme = scheme or default_scheme(basis)
    twist_form = twist_l2_gram(instance.twist.m, scheme)
    quantities = frame_quantities(state, pushed, twist_form, params, scheme)
    if quantities.residual > tol:
        raise NotBalancedError(f"State has residual {quantities.residual:.3e} > {tol:.1e}")

    sections = node_evaluations(basis, scheme) @ state.orthonormalizer
    outer = sections @ np.conj(np.swapaxes(sections, 1, 2))
    fibre = np.linalg.inv(outer)
    orthonormal = sections @ HermitianForm(quantities.Q).inv_sqrt
    bergman = bergman_values(orthonormal, fibre)

    higgs = unitary_higgs(instance, scheme.z)
    adjoint = np.linalg.solve(fibre, np.conj(np.swapaxes(higgs, 1, 2)) @ fibre)
    bracket = higgs @ adjoint - adjoint @ higgs

    epsilon = params.epsilon(quantities.frob2)
    chi = float(params.chi)
    identity = np.eye(instance.rank)[None]
    t_values = (identity + epsilon / k * bracket) @ bergman / chi - identity
    combo = bergman + epsilon * bracket - chi * identity

    residual = hitchin_residual(fs_bundle_metric(state, basis), instance, epsilon, scheme, step)
    operator_norm = float(np.linalg.norm(np.concatenate(list(quantities.alpha), axis=1), 2))
    record = BalancedHitchinRecord(
        k=k,
        epsilon=epsilon,
        frob2=quantities.frob2,
        t_norm=_l2_norm(t_values, fibre, scheme),
        combo_norm=_l2_norm(combo, fibre, scheme),
        hitchin_sup=residual.sup_norm,
        hitchin_l2=residual.l2_norm,
        operator_norm=operator_norm,
    )
    logger.debug("Balanced-to-Hitchin record: %s", record)
    return record


def fit_epsilon_limit(ks: Sequence[int], epsilons: Sequence[float]) -> tuple[float, float]:
    """Least-squares fit epsilon(k) = a + b / k.

    Returns:
        tuple[float, float]: (a, b), a being the limit.
    """
    design = np.column_stack([np.ones(len(ks)), 1.0 / np.asarray(ks, dtype=float)])
    (limit, rate), *_ = np.linalg.lstsq(design, np.asarray(epsilons, dtype=float), rcond=None)
    return float(limit), float(rate)


@dataclass(frozen=True)
class CBounds:
    """Containment of the coupling constant in the bounds from c'.

    Attributes:
        epsilon_limit (float): Fitted limit of epsilon(k).
        lower (float): Smallest feasible c'.
        upper (float): Largest feasible c'.
        contained (bool): Whether some admissible c' satisfies both bounds.
        c_prime (float | None): Midpoint of the feasible interval.
    """

    epsilon_limit: float
    lower: float
    upper: float
    contained: bool
    c_prime: float | None


def c_bounds(
    epsilon_limit: float,
    c_lower: float,
    c_upper: float,
    ell: Fraction | float,
    rank: int,
    slack: float = C_BOUNDS_SLACK,
) -> CBounds:
    """Checks l / (1 + r c') <= c <= l / (1 + c' / r) for some admissible c'.

    Arguments:
        epsilon_limit (float): The coupling constant c.
        c_lower (float): Smallest admissible c'.
        c_upper (float): Largest admissible c'.
        ell (Fraction | float): The constant l.
        rank (int): Rank of E.
        slack (float): Relative widening of c.

    Returns:
        CBounds: The feasible interval of c'.
    """
    ell = float(ell)
    c_low, c_high = epsilon_limit * (1 - slack), epsilon_limit * (1 + slack)
    if c_low <= 0:
        return CBounds(epsilon_limit, c_lower, c_upper, False, None)
    lower = max(c_lower, (ell / c_high - 1.0) / rank)
    upper = min(c_upper, rank * (ell / c_low - 1.0))
    contained = lower <= upper
    return CBounds(
        epsilon_limit, lower, upper, contained, (lower + upper) / 2 if contained else None
    )


@dataclass
class BalancedHitchinSeries:
    """Series of balanced-to-Hitchin records.

    Attributes:
        records (list[BalancedHitchinRecord]): Ordered by k.
        epsilon_limit (float): Fitted limit of epsilon(k).
        increments_decreasing (bool): Whether |epsilon(k+1) - epsilon(k)| decreases.
    """

    records: list[BalancedHitchinRecord]
    epsilon_limit: float
    increments_decreasing: bool

    def to_rows(self) -> list[dict[str, float]]:
        """Rows for the CSV series."""
        return [record.__dict__.copy() for record in self.records]


def summarize_balanced_series(records: Sequence[BalancedHitchinRecord]) -> BalancedHitchinSeries:
    """Fits the epsilon limit and checks that its increments decrease."""
    ordered = sorted(records, key=lambda record: record.k)
    ks = [record.k for record in ordered]
    epsilons = [record.epsilon for record in ordered]
    limit, _ = fit_epsilon_limit(ks, epsilons)
    increments = np.abs(np.diff(epsilons))
    decreasing = bool(np.all(np.diff(increments) <= 1e-12))
    return BalancedHitchinSeries(list(ordered), limit, decreasing)


@dataclass(frozen=True, eq=False)
class ExpansionCoeffs:
    """Operators A_j and B_j of the expansion of chi P.

    Attributes:
        order (int): Highest index.
        A (list[np.ndarray]): A_0 .. A_order.
        B (list[np.ndarray]): B_0 .. B_order.
        epsilon (float): Expansion parameter.
    """

    order: int
    A: list[np.ndarray]
    B: list[np.ndarray]
    epsilon: float


def ajbj_recursion(
    alpha: np.ndarray, beta: np.ndarray, epsilon: float, order: int
) -> ExpansionCoeffs:
    """A_{j+1} = eps sum_i [alpha, A_i beta B_{j-i}], B_{j+1} = -sum_i B_i A_{j+1-i}.

    Arguments:
        alpha (np.ndarray): Blocks (n_h, N, N) of phi_* in orthonormal frames.
        beta (np.ndarray): Blocks of its adjoint.
        epsilon (float): Expansion parameter.
        order (int): Highest index, at most 6.

    Raises:
        ValueError: If the order exceeds 6.
        ShapeMismatchError: If alpha and beta disagree.

    Returns:
        ExpansionCoeffs: The operators.
    """
    if order < 0 or order > MAX_ORDER:
        raise ValueError(f"Order must lie in 0..{MAX_ORDER}, got {order}")
    alpha, beta = np.asarray(alpha, dtype=complex), np.asarray(beta, dtype=complex)
    if alpha.shape != beta.shape or alpha.ndim != 3:
        raise ShapeMismatchError(f"alpha {alpha.shape} and beta {beta.shape} disagree")
    identity = np.eye(alpha.shape[1], dtype=complex)
    a_terms, b_terms = [identity], [identity]
    for j in range(order):
        total = np.zeros_like(identity)
        for i in range(j + 1):
            total += commutator(alpha, a_terms[i][None] @ beta @ b_terms[j - i][None])
        a_terms.append(epsilon * total)
        b_next = -sum(b_terms[i] @ a_terms[j + 1 - i] for i in range(j + 1))
        b_terms.append(b_next)
    return ExpansionCoeffs(order, a_terms, b_terms, epsilon)


def _bracket_with(endomorphism: np.ndarray, beta: np.ndarray) -> np.ndarray:
    return endomorphism[None] @ beta - beta @ endomorphism[None]


def closed_form_coefficients(
    alpha: np.ndarray, beta: np.ndarray, epsilon: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed forms of A_1, A_2 and A_3 in terms of nested brackets.

    Returns:
        tuple[np.ndarray, np.ndarray, np.ndarray]: (A_1, A_2, A_3).
    """
    first = commutator(alpha, beta)
    second = commutator(alpha, _bracket_with(first, beta))
    inner = (
        _bracket_with(second, beta)
        - first[None] @ beta @ first[None]
        + beta @ (first @ first)[None]
    )
    third = commutator(alpha, inner)
    return epsilon * first, epsilon**2 * second, epsilon**3 * third


def expansion_convergence_check(
    instance: HiggsInstance,
    k_range: Sequence[int],
    order: int,
    ell: Fraction | int | str = 1,
    t_steps: int = 1,
) -> SlopeReport:
    """Fits || chi P - sum_{j <= order} k^-j A_j ||' against k.

    P, phi_* and epsilon belong to the reference L^2 metric, and the adjoint in the
    recursion is taken with respect to it. The norm ||.||' is that of the state reached
    from the reference metric by t_steps balancing steps; one step gives the metric
    proportional to (P^-1 ., .).

    Arguments:
        instance (HiggsInstance): The instance.
        k_range (Sequence[int]): At least four levels.
        order (int): Truncation order.
        ell (Fraction | int | str): The constant l.
        t_steps (int): Balancing steps producing the metric of ||.||'.

    Raises:
        ShortRangeError: For fewer than four levels.

    Returns:
        SlopeReport: Residuals with threshold -(order + 1) + 0.3, plus the closed-form
            first-order residual and the norms of A_1 .. A_order.
    """
    levels = _require_range(k_range)
    residuals: list[float] = []
    extra: dict[str, list[float]] = {"closed_form_first_order": []}
    extra.update({f"norm_a{j}": [] for j in range(1, order + 1)})
    for k in levels:
        pushed = pushforward(instance, k)
        scheme = default_scheme(pushed.basis)
        twist_form = twist_l2_gram(instance.twist.m, scheme)
        params = QuantParams.for_basis(pushed.basis, Fraction(ell))
        reference = MetricState.reference(pushed.basis.N)
        quantities = frame_quantities(reference, pushed, twist_form, params, scheme)
        state = reference
        for _ in range(t_steps):
            state = t_step(state, pushed, twist_form, params, scheme)
        # the reference frame is orthonormal, so the state's Gram is the metric of ||.||'
        primed = state.gram

        alpha = quantities.alpha
        beta = blocks_dagger(alpha)
        epsilon = params.epsilon(quantities.frob2)
        coefficients = ajbj_recursion(alpha, beta, epsilon, order)

        target = float(params.chi) * quantities.P
        approximation = sum(coefficients.A[j] / k**j for j in range(order + 1))
        residuals.append(operator_norm_wrt(target - approximation, primed, primed))

        closed_first = np.eye(pushed.basis.N) + epsilon / k * quantities.bracket
        extra["closed_form_first_order"].append(
            operator_norm_wrt(target - closed_first, primed, primed)
        )
        for j in range(1, order + 1):
            extra[f"norm_a{j}"].append(operator_norm_wrt(coefficients.A[j], primed, primed))
        logger.debug("Expansion residual at k=%d, order %d: %.3e", k, order, residuals[-1])

    report = fit_slope(levels, residuals, threshold=-(order + 1) + 0.3)
    report.extra.update(extra)
    return report


@dataclass(frozen=True)
class HormanderResult:
    """Hormander-type inequality for f = phi*(s'_j).

    Attributes:
        k (int): The level.
        lhs (list[float]): ||f - Pi f||^2 per column.
        rhs (list[float]): ||d-bar f||^2 per column.
        ratio (float | None): max_j k lhs_j / rhs_j over columns with d-bar f != 0.
        skipped (int): Columns skipped because f is holomorphic.
    """

    k: int
    lhs: list[float]
    rhs: list[float]
    ratio: float | None
    skipped: int


def default_hormander_metric(degrees: Sequence[int], amplitude: float = 0.5) -> BundleMetric:
    """Conformal perturbation with amplitudes amplitude * (i + 1)."""
    return BundleMetric.conformal(degrees, [amplitude * (i + 1) for i in range(len(degrees))])


def _adjoint_sections(
    instance: HiggsInstance,
    basis: SectionBasis,
    transform: np.ndarray,
    metric: BundleMetric,
    coords: np.ndarray,
) -> np.ndarray:
    """f = phi*(s') in the chart-0 unitary frame of M (x) E(k) at chart-0 points."""
    sections = basis.evaluate(coords, 0, "unitary") @ transform
    fibre = metric.unitary(0, coords)
    higgs = unitary_higgs(instance, coords)
    adjoint = np.linalg.solve(fibre, np.conj(np.swapaxes(higgs, 1, 2)) @ fibre)
    return adjoint @ sections


def _dbar_squared(
    instance: HiggsInstance,
    basis: SectionBasis,
    transform: np.ndarray,
    metric: BundleMetric,
    scheme: QuadratureScheme,
    step: float,
) -> np.ndarray:
    """|d-bar f|^2 per node and column, computed in the node's canonical chart."""
    degrees = np.asarray(basis.section_degrees) + instance.twist.m
    offsets = np.array([step, -step, 1j * step, -1j * step])
    result = np.zeros((scheme.size, basis.N))
    charts = scheme.canonical_charts
    for chart in (0, 1):
        mask = charts == chart
        if not np.any(mask):
            continue
        coords = scheme.coordinates(chart)[mask]
        stencil = (coords[:, None] + offsets[None, :]).ravel()
        points = stencil if chart == 0 else 1.0 / stencil
        values = _adjoint_sections(instance, basis, transform, metric, points)
        if chart == 1:
            phases = (stencil / np.abs(stencil))[:, None] ** degrees[None, :]
            values = phases[:, :, None] * values
        values = values.reshape(coords.shape[0], 4, basis.rank, basis.N)
        center_points = coords if chart == 0 else 1.0 / coords
        center = _adjoint_sections(instance, basis, transform, metric, center_points)
        if chart == 1:
            phases = (coords / np.abs(coords))[:, None] ** degrees[None, :]
            center = phases[:, :, None] * center
        d_x = (values[:, 0] - values[:, 1]) / (2 * step)
        d_y = (values[:, 2] - values[:, 3]) / (2 * step)
        modulus = 1.0 + np.abs(coords) ** 2
        connection = (degrees[None, :] / 2.0 * (coords / modulus)[:, None])[:, :, None]
        dbar = (d_x + 1j * d_y) / 2 + connection * center
        fibre = metric.unitary(chart, coords)
        squared = np.real(np.einsum("nrj,nrs,nsj->nj", np.conj(dbar), fibre, dbar))
        result[mask] = squared * (modulus**2)[:, None]
    return result


def hormander_check(
    instance: HiggsInstance,
    k: int,
    metric: BundleMetric | None = None,
    scheme: QuadratureScheme | None = None,
    step: float = DEFAULT_FD_STEP,
) -> HormanderResult:
    """Compares the distance of f = phi*(s'_j) to holomorphic sections with ||d-bar f||.

    Arguments:
        instance (HiggsInstance): The instance.
        k (int): The level.
        metric (BundleMetric | None): Metric h on E, a conformal perturbation of the
            reference metric when omitted.
        scheme (QuadratureScheme | None): Quadrature, default orders when omitted.
        step (float): Finite-difference step for d-bar.

    Raises:
        ZeroHiggsError: If phi = 0.

    Returns:
        HormanderResult: Per-column sides and the worst ratio.
    """
    if instance.phi.is_zero:
        raise ZeroHiggsError("The Hormander check needs a nonzero Higgs field.")
    metric = metric or default_hormander_metric(instance.bundle.degrees)
    basis = section_basis(instance.bundle, k)
    target = section_basis(instance.bundle, k + instance.twist.m)
    scheme = scheme or default_scheme(target)
    transform = l2_gram_of_metric(metric, basis, scheme).orthonormal_frame
    fibre = metric.at_nodes(scheme)

    values = _adjoint_sections(instance, basis, transform, metric, scheme.z)
    target_values = node_evaluations(target, scheme, False)
    target_gram = l2_gram_of_metric(metric, target, scheme)
    inner = integrate_values(np.conj(np.swapaxes(target_values, 1, 2)) @ fibre @ values, scheme)
    projected = target_values @ target_gram.solve(inner)
    difference = values - projected
    lhs_density = np.real(np.einsum("nrj,nrs,nsj->nj", np.conj(difference), fibre, difference))
    lhs = np.real(integrate_values(lhs_density, scheme))
    dbar = _dbar_squared(instance, basis, transform, metric, scheme, step)
    rhs = np.real(integrate_values(dbar, scheme))

    scale = float(np.max(rhs, initial=0.0))
    active = rhs > max(1e-10 * scale, 1e-14)
    ratio = float(np.max(k * lhs[active] / rhs[active])) if np.any(active) else None
    skipped = int(np.sum(~active))
    return HormanderResult(k, lhs.tolist(), rhs.tolist(), ratio, skipped)
