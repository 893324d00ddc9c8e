"""Fubini-Study pullback metrics, the balanced fixed-point iteration, the moment map and
the Kempf-Ness functional.

Metrics on H^0(E(k)) are carried as Grams W in the reference-orthonormal frame (the
monomials scaled to unit reference L^2 norm). The G-orthonormal basis of a state is
s = s_ref W^(-1/2).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import logsumexp

from higgsbal.config import (
    BURN_IN_STEPS,
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    DEGENERATION_THRESHOLD,
    logger,
)
from higgsbal.core.geometry import BundleMetric, ChartPoint, QuadratureScheme, integrate_values
from higgsbal.core.hermitian import DegenerateFormError, HermitianForm, orthonormal_blocks
from higgsbal.core.model import HiggsInstance, InadmissibleLevelError
from higgsbal.core.quantization import (
    PushforwardMatrix,
    QuantParams,
    SectionBasis,
    beta_weights,
    default_scheme,
    node_evaluations,
    p_from_blocks,
    pushforward,
    twist_l2_gram,
)

Verdict = Literal["converged", "max_iter", "degenerate"]


class DegenerateSectionsError(ArithmeticError):
    """Raised when the wedge norms of the sections underflow."""


@dataclass(frozen=True, eq=False)
class MetricState:
    """A metric on H^0(E(k)).

    Attributes:
        gram (HermitianForm): Gram in the reference-orthonormal frame.
        step (int): Iteration step that produced the state.
        parent (int | None): Step of the state it was computed from.
    """

    gram: HermitianForm
    step: int = 0
    parent: int | None = None

    @property
    def orthonormalizer(self) -> np.ndarray:
        """W^(-1/2): columns are the orthonormal basis in reference coordinates."""
        return self.gram.inv_sqrt

    @property
    def min_eig(self) -> float:
        """Smallest eigenvalue of W."""
        return float(self.gram.eigenvalues[0])

    @property
    def max_eig(self) -> float:
        """Largest eigenvalue of W."""
        return float(self.gram.eigenvalues[-1])

    @property
    def condition(self) -> float:
        """Eigenvalue ratio of W in the reference frame."""
        return self.max_eig / self.min_eig

    def monomial_gram(self, basis: SectionBasis) -> HermitianForm:
        """The same metric as a Gram of the raw monomial basis."""
        scale = np.sqrt(beta_weights(basis))
        return HermitianForm(scale[:, None] * self.gram.G * scale[None, :])

    @classmethod
    def reference(cls, dim: int) -> MetricState:
        """The reference L^2 metric."""
        return cls(HermitianForm.identity(dim))

    @classmethod
    def from_matrix(
        cls, matrix: np.ndarray, step: int = 0, parent: int | None = None
    ) -> MetricState:
        """Wraps a reference-frame Gram."""
        return cls(HermitianForm(matrix), step, parent)


@dataclass(frozen=True)
class IterationControls:
    """Stopping rules of the balancing iteration.

    Attributes:
        tol (float): Residual below which the iteration has converged.
        max_iter (int): Maximal number of t-steps.
        degeneration_threshold (float): Condition number of W signalling collapse.
        burn_in (int): Steps before a degeneration verdict may be issued.
        record_kempf_ness (bool): Whether to evaluate the functional along iterates.
    """

    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    degeneration_threshold: float = DEGENERATION_THRESHOLD
    burn_in: int = BURN_IN_STEPS
    record_kempf_ness: bool = True


@dataclass(frozen=True)
class StepRecord:
    """One iteration step."""

    step: int
    residual: float
    kn_value: float
    min_eig: float
    max_eig: float
    frob2: float
    epsilon: float


@dataclass
class IterationReport:
    """Outcome of the balancing iteration.

    Attributes:
        records (list[StepRecord]): Per-step records.
        verdict (Verdict): converged, max_iter or degenerate.
        final_state (MetricState): Last state reached.
        kn_monotone (bool): Whether the Kempf-Ness values never increased.
    """

    records: list[StepRecord]
    verdict: Verdict
    final_state: MetricState
    kn_monotone: bool = True

    @property
    def steps(self) -> int:
        """Number of recorded steps."""
        return len(self.records)

    @property
    def final_residual(self) -> float:
        """Residual of the last recorded step."""
        return self.records[-1].residual if self.records else float("nan")

    def to_rows(self) -> list[dict[str, float]]:
        """Rows for the per-step CSV."""
        return [
            {
                "step": r.step,
                "residual": r.residual,
                "kn_value": r.kn_value,
                "min_eig": r.min_eig,
                "max_eig": r.max_eig,
                "frob2": r.frob2,
                "epsilon": r.epsilon,
            }
            for r in self.records
        ]


@dataclass(frozen=True, eq=False)
class FrameQuantities:
    """Quantities of a state in its orthonormal frame.

    Attributes:
        Q (np.ndarray): L^2 Gram of the orthonormal basis under the FS pullback.
        P (np.ndarray): The P endomorphism.
        bracket (np.ndarray): [phi_*, phi_*^*].
        frob2 (float): |||phi_*|||^2.
        residual (float): ||Q - P||_F / ||P||_F.
        moment (np.ndarray): Moment map value.
        alpha (np.ndarray): Blocks of phi_* in the frame.
    """

    Q: np.ndarray
    P: np.ndarray
    bracket: np.ndarray
    frob2: float
    residual: float
    moment: np.ndarray
    alpha: np.ndarray


def reference_alpha(
    pushed: PushforwardMatrix, twist_form: HermitianForm | None = None
) -> np.ndarray:
    """Blocks of phi_* in the reference-orthonormal frame of H^0(E(k)) and a
    G_M-orthonormal frame of H^0(M)."""
    if twist_form is None:
        return pushed.reference_blocks()
    reference = HermitianForm(np.diag(beta_weights(pushed.basis)))
    return orthonormal_blocks(pushed.A, twist_form, reference)


def _fs_inverse(sections: np.ndarray) -> np.ndarray:
    """(S S^H)^-1 with a check that the sections generate every fibre."""
    outer = sections @ np.conj(np.swapaxes(sections, -1, -2))
    eigenvalues = np.linalg.eigvalsh(outer)
    if np.any(eigenvalues[..., 0] <= 1e-12 * eigenvalues[..., -1]):
        raise InadmissibleLevelError("Sections fail to generate the fibre at some point")
    return np.linalg.inv(outer)


def _fs_gram(sections: np.ndarray, scheme: QuadratureScheme) -> np.ndarray:
    inverse = _fs_inverse(sections)
    integrand = np.conj(np.swapaxes(sections, 1, 2)) @ inverse @ sections
    return integrate_values(integrand, scheme)


def fs_pullback_metric(state: MetricState, basis: SectionBasis, point: ChartPoint) -> np.ndarray:
    """h_FS in the unitary frame of the point's canonical chart.

    Arguments:
        state (MetricState): The metric on H^0(E(k)).
        basis (SectionBasis): The basis.
        point (ChartPoint): The point.

    Raises:
        InadmissibleLevelError: If the sections do not generate the fibre.

    Returns:
        np.ndarray: (sum_j s_j s_j^H)^-1 for the orthonormal basis s.
    """
    point = point.canonical()
    values = basis.evaluate(np.array([point.z]), point.chart, "unitary", normalized=True)
    return _fs_inverse(values @ state.orthonormalizer)[0]


def fs_bundle_metric(state: MetricState, basis: SectionBasis) -> BundleMetric:
    """The metric h = FS pullback (x) h_L^-k on E as a chart-aware metric."""
    transform = state.orthonormalizer

    def unitary(chart: int, coords: np.ndarray) -> np.ndarray:
        values = basis.evaluate(coords, chart, "unitary", normalized=True)
        return _fs_inverse(values @ transform)

    return BundleMetric(
        degrees=basis.bundle.degrees, unitary=unitary, label=f"fs-pullback(k={basis.k})"
    )


def l2_gram_fs(
    state: MetricState, basis: SectionBasis, scheme: QuadratureScheme | None = None
) -> np.ndarray:
    """Q_lj = integral of (s_j, s_l)_FS for the orthonormal basis of the state.

    Arguments:
        state (MetricState): The metric.
        basis (SectionBasis): The basis.
        scheme (QuadratureScheme | None): Quadrature, default orders when omitted.

    Returns:
        np.ndarray: The N x N hermitian matrix Q.
    """
    scheme = scheme or default_scheme(basis)
    sections = node_evaluations(basis, scheme) @ state.orthonormalizer
    return _fs_gram(sections, scheme)


def frame_quantities(
    state: MetricState,
    pushed: PushforwardMatrix,
    twist_form: HermitianForm | None,
    params: QuantParams,
    scheme: QuadratureScheme | None = None,
    rotation: np.ndarray | None = None,
) -> FrameQuantities:
    """Q, P, the moment map and the residual of a state.

    Arguments:
        state (MetricState): The metric.
        pushed (PushforwardMatrix): phi_*.
        twist_form (HermitianForm | None): Metric on H^0(M), the reference Gram when
            omitted.
        params (QuantParams): Constants.
        scheme (QuadratureScheme | None): Quadrature, default orders when omitted.
        rotation (np.ndarray | None): Unitary change of orthonormal basis.

    Returns:
        FrameQuantities: Everything in the (rotated) orthonormal frame.
    """
    basis = pushed.basis
    scheme = scheme or default_scheme(basis)
    transform = state.orthonormalizer
    inverse = state.gram.sqrt
    if rotation is not None:
        transform = transform @ rotation
        inverse = np.conj(rotation.T) @ inverse

    alpha = inverse[None] @ reference_alpha(pushed, twist_form) @ transform[None]
    sections = node_evaluations(basis, scheme) @ transform
    q_matrix = _fs_gram(sections, scheme)
    p_matrix, bracket, frob2 = p_from_blocks(alpha, params)
    residual = float(np.linalg.norm(q_matrix - p_matrix) / np.linalg.norm(p_matrix))
    moment = -0.5j * q_matrix + 0.5j * float(params.delta / params.chi) * bracket / (1.0 + frob2)
    return FrameQuantities(q_matrix, p_matrix, bracket, frob2, residual, moment, alpha)


def _advance(state: MetricState, quantities: FrameQuantities) -> MetricState:
    p_form = HermitianForm(quantities.P)
    updated = p_form.inv_sqrt @ quantities.Q @ p_form.inv_sqrt
    root = state.gram.sqrt
    gram = root @ updated @ root
    return MetricState(HermitianForm((gram + gram.conj().T) / 2), state.step + 1, state.step)


def t_step(
    state: MetricState,
    pushed: PushforwardMatrix,
    twist_form: HermitianForm | None,
    params: QuantParams,
    scheme: QuadratureScheme | None = None,
) -> MetricState:
    """One step G' = P^(-1/2) Q P^(-1/2) of the balancing map, returned in the reference
    frame.

    Raises:
        DegenerateFormError: If P or the new Gram is degenerate.
    """
    return _advance(state, frame_quantities(state, pushed, twist_form, params, scheme))


def balanced_residual(
    state: MetricState,
    pushed: PushforwardMatrix,
    twist_form: HermitianForm | None,
    params: QuantParams,
    scheme: QuadratureScheme | None = None,
) -> float:
    """||Q - P||_F / ||P||_F in the orthonormal frame, zero exactly at balanced metrics."""
    return frame_quantities(state, pushed, twist_form, params, scheme).residual


def moment_map(
    state: MetricState,
    pushed: PushforwardMatrix,
    twist_form: HermitianForm | None,
    params: QuantParams,
    scheme: QuadratureScheme | None = None,
) -> np.ndarray:
    """mu = -(i/2) Q + (i delta / 2 chi) [phi_*, phi_*^*] / (1 + |||phi_*|||^2)."""
    return frame_quantities(state, pushed, twist_form, params, scheme).moment


def _kn_inputs(
    state0: MetricState,
    pushed: PushforwardMatrix,
    twist_form: HermitianForm | None,
    scheme: QuadratureScheme,
) -> tuple[np.ndarray, np.ndarray]:
    transform = state0.orthonormalizer
    sections = node_evaluations(pushed.basis, scheme) @ transform
    alpha = state0.gram.sqrt[None] @ reference_alpha(pushed, twist_form) @ transform[None]
    return sections, alpha


def _log_wedge(sections: np.ndarray) -> np.ndarray:
    outer = sections @ np.conj(np.swapaxes(sections, 1, 2))
    sign, logdet = np.linalg.slogdet(outer)
    if np.any(np.real(sign) <= 0) or not np.all(np.isfinite(logdet)):
        raise DegenerateSectionsError("Wedge norms of the sections underflow")
    return logdet


def kempf_ness(
    state0: MetricState,
    zeta: np.ndarray,
    t: float,
    pushed: PushforwardMatrix,
    twist_form: HermitianForm | None,
    params: QuantParams,
    scheme: QuadratureScheme | None = None,
) -> float:
    """Kempf-Ness functional along exp(t zeta) from the orthonormal basis of state0.

    Both terms are evaluated in the eigenbasis of zeta, so large |t| stays finite.

    Arguments:
        state0 (MetricState): Base point.
        zeta (np.ndarray): Hermitian traceless N x N matrix.
        t (float): Parameter.
        pushed (PushforwardMatrix): phi_*.
        twist_form (HermitianForm | None): Metric on H^0(M).
        params (QuantParams): Constants.
        scheme (QuadratureScheme | None): Quadrature.

    Raises:
        ValueError: If zeta is not hermitian and traceless.
        DegenerateSectionsError: If the wedge norms underflow.

    Returns:
        float: L(t).
    """
    zeta = np.asarray(zeta, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(zeta))))
    asymmetric = np.max(np.abs(zeta - zeta.conj().T)) > 1e-10 * scale
    if asymmetric or abs(np.trace(zeta)) > 1e-10 * scale:
        raise ValueError("zeta must be hermitian and traceless")
    scheme = scheme or default_scheme(pushed.basis)
    sections, alpha = _kn_inputs(state0, pushed, twist_form, scheme)
    eigenvalues, vectors = np.linalg.eigh(zeta)

    rotated = sections @ vectors
    moved = rotated * np.exp(t * eigenvalues)[None, None, :]
    wedge = _log_wedge(moved) - _log_wedge(rotated)
    first = 0.25 * float(np.real(integrate_values(wedge, scheme)))

    hat = np.conj(vectors.T)[None] @ alpha @ vectors[None]
    weights = np.abs(hat) ** 2
    exponents = 2 * t * (eigenvalues[None, :] - eigenvalues[:, None])
    exponents = np.broadcast_to(exponents, weights.shape)
    mask = weights > 0
    log_moved = logsumexp(np.concatenate([[0.0], np.log(weights[mask]) + exponents[mask]]))
    log_base = np.log1p(float(np.sum(weights)))
    second = float(params.delta / params.chi) / 4 * (log_moved - log_base)
    return first + second


def kempf_ness_at(
    state0: MetricState,
    g: np.ndarray,
    pushed: PushforwardMatrix,
    twist_form: HermitianForm | None,
    params: QuantParams,
    scheme: QuadratureScheme | None = None,
) -> float:
    """Kempf-Ness functional at a general element g of GL(N), normalized to |det g| = 1.

    Arguments:
        state0 (MetricState): Base point.
        g (np.ndarray): Invertible N x N matrix acting on the orthonormal basis of state0.
        pushed (PushforwardMatrix): phi_*.
        twist_form (HermitianForm | None): Metric on H^0(M).
        params (QuantParams): Constants.
        scheme (QuadratureScheme | None): Quadrature.

    Returns:
        float: L(g).
    """
    scheme = scheme or default_scheme(pushed.basis)
    g = np.asarray(g, dtype=complex)
    _, logdet = np.linalg.slogdet(g)
    g = g * np.exp(-np.real(logdet) / g.shape[0])
    sections, alpha = _kn_inputs(state0, pushed, twist_form, scheme)

    wedge = _log_wedge(sections @ g) - _log_wedge(sections)
    first = 0.25 * float(np.real(integrate_values(wedge, scheme)))
    moved = np.linalg.solve(g[None], alpha) @ g[None]
    log_ratio = np.log1p(float(np.sum(np.abs(moved) ** 2))) - np.log1p(
        float(np.sum(np.abs(alpha) ** 2))
    )
    return first + float(params.delta / params.chi) / 4 * log_ratio


def kempf_ness_slope(
    state0: MetricState,
    zeta: np.ndarray,
    pushed: PushforwardMatrix,
    twist_form: HermitianForm | None,
    params: QuantParams,
    scheme: QuadratureScheme | None = None,
    t_far: float = 8.0,
    dt: float = 1.0,
) -> float:
    """Finite-difference slope of the Kempf-Ness functional at large t."""
    far = kempf_ness(state0, zeta, t_far, pushed, twist_form, params, scheme)
    near = kempf_ness(state0, zeta, t_far - dt, pushed, twist_form, params, scheme)
    return (far - near) / dt


def iterate(
    instance: HiggsInstance,
    k: int,
    params: QuantParams,
    controls: IterationControls | None = None,
    scheme: QuadratureScheme | None = None,
    initial: MetricState | None = None,
) -> IterationReport:
    """Repeats t_step until balanced, degenerate or out of iterations.

    Arguments:
        instance (HiggsInstance): A valid instance.
        k (int): The level.
        params (QuantParams): Constants.
        controls (IterationControls | None): Stopping rules.
        scheme (QuadratureScheme | None): Quadrature, default orders when omitted.
        initial (MetricState | None): Starting metric, the reference one when omitted.

    Returns:
        IterationReport: Per-step records and the verdict.
    """
    controls = controls or IterationControls()
    pushed = pushforward(instance, k)
    scheme = scheme or default_scheme(pushed.basis)
    twist_form = twist_l2_gram(instance.twist.m, scheme)
    state = initial or MetricState.reference(pushed.basis.N)
    base = state

    records: list[StepRecord] = []
    verdict: Verdict = "max_iter"
    for step in range(controls.max_iter + 1):
        try:
            quantities = frame_quantities(state, pushed, twist_form, params, scheme)
        except (DegenerateFormError, InadmissibleLevelError) as error:
            logger.info("Iteration at k=%d degenerated at step %d: %s", k, step, error)
            verdict = "degenerate"
            break

        kn_value = float("nan")
        if controls.record_kempf_ness:
            g = base.gram.sqrt @ state.orthonormalizer
            try:
                kn_value = kempf_ness_at(base, g, pushed, twist_form, params, scheme)
            except DegenerateSectionsError as error:
                logger.warning("Kempf-Ness value skipped at k=%d step %d: %s", k, step, error)
        records.append(
            StepRecord(
                step=step,
                residual=quantities.residual,
                kn_value=kn_value,
                min_eig=state.min_eig,
                max_eig=state.max_eig,
                frob2=quantities.frob2,
                epsilon=params.epsilon(quantities.frob2),
            )
        )
        logger.debug("k=%d step=%d residual=%.3e", k, step, quantities.residual)

        if quantities.residual < controls.tol:
            verdict = "converged"
            break
        if step >= controls.burn_in and state.condition > controls.degeneration_threshold:
            verdict = "degenerate"
            break
        if step == controls.max_iter:
            break
        try:
            state = _advance(state, quantities)
        except (DegenerateFormError, InadmissibleLevelError) as error:
            logger.info("Iteration at k=%d degenerated at step %d: %s", k, step, error)
            verdict = "degenerate"
            break

    values = [r.kn_value for r in records if np.isfinite(r.kn_value)]
    monotone = all(b <= a + 1e-10 * (1.0 + abs(a)) for a, b in zip(values, values[1:]))
    if controls.record_kempf_ness and not monotone:
        logger.warning("Kempf-Ness values are not monotone along the iteration at k=%d", k)
    logger.info(
        "Iteration at k=%d finished: %s after %d steps, residual %.3e",
        k,
        verdict,
        len(records),
        records[-1].residual if records else float("nan"),
    )
    return IterationReport(records, verdict, state, monotone)
