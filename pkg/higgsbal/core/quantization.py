"""Section spaces H^0(E(k)) and H^0(M), their L^2 Grams, the pushforward of the Higgs
field to the section spaces, the P endomorphism and weakly geometric diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from math import factorial
from typing import Mapping, Sequence

import numpy as np

from higgsbal.config import KERNEL_TOL, logger
from higgsbal.core.geometry import (
    BundleMetric,
    QuadratureScheme,
    build_quadrature,
    default_orders,
    integrate_values,
)
from higgsbal.core.hermitian import (
    HermitianForm,
    blocks_dagger,
    commutator,
    orthonormal_blocks,
    split_blocks,
)
from higgsbal.core.model import (
    HiggsField,
    HiggsInstance,
    SplitBundle,
    TwistBundle,
    check_level,
    entry_degree,
    require_valid,
)
from higgsbal.storage import Storage


class NotInducedError(ValueError):
    """Raised when a matrix is not the pushforward of a bundle morphism."""


class ZeroHiggsError(ValueError):
    """Raised when an operation needs a nonzero Higgs field."""


@dataclass(frozen=True, eq=False)
class SectionBasis:
    """Monomial basis of H^0(E(k)).

    Item (i, a) is z^a in the degree d_i + k frame of summand i; items are ordered
    lexicographically by (i, a).

    Attributes:
        bundle (SplitBundle): E.
        k (int): The level.
        items (tuple[tuple[int, int], ...]): (summand, exponent) pairs.
    """

    bundle: SplitBundle
    k: int
    items: tuple[tuple[int, int], ...]

    @property
    def N(self) -> int:  # pylint: disable=invalid-name
        """Dimension of H^0(E(k))."""
        return len(self.items)

    @property
    def rank(self) -> int:
        """Rank of E."""
        return self.bundle.rank

    @property
    def section_degrees(self) -> tuple[int, ...]:
        """Degrees d_i + k of the summands of E(k)."""
        return self.bundle.twisted(self.k)

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        """Index of the first item of every summand."""
        starts, position = [], 0
        for degree in self.section_degrees:
            starts.append(position)
            position += degree + 1
        return tuple(starts)

    @cached_property
    def summand_of(self) -> np.ndarray:
        """Summand index of every item."""
        return np.array([i for i, _ in self.items], dtype=int)

    @cached_property
    def exponents(self) -> np.ndarray:
        """Monomial exponent of every item."""
        return np.array([a for _, a in self.items], dtype=int)

    def index(self, summand: int, exponent: int) -> int:
        """Position of the item (summand, exponent)."""
        return self.offsets[summand] + exponent

    def summand_indices(self, summands: Sequence[int]) -> list[int]:
        """Positions of all items belonging to the given summands."""
        return [n for n, (i, _) in enumerate(self.items) if i in set(summands)]

    def evaluate(
        self,
        coords: np.ndarray,
        chart: int = 0,
        frame: str = "unitary",
        normalized: bool = False,
    ) -> np.ndarray:
        """Evaluates the basis sections at points of a chart.

        Magnitudes are assembled in the log domain so that large degrees do not
        overflow before the frame factor is applied.

        Arguments:
            coords (np.ndarray): Chart coordinates.
            chart (int): The chart.
            frame (str): "unitary" or "holomorphic".
            normalized (bool): Scale every section to unit reference L^2 norm.

        Returns:
            np.ndarray: Array (n, r, N); column j holds section j in the frame of E.
        """
        coords = np.asarray(coords, dtype=complex).ravel()
        degrees = np.asarray(self.section_degrees)[self.summand_of]
        powers = self.exponents if chart == 0 else degrees - self.exponents

        with np.errstate(divide="ignore", invalid="ignore"):
            log_modulus = np.log(np.abs(coords))
            log_values = np.where(
                powers[None, :] == 0, 0.0, powers[None, :] * log_modulus[:, None]
            )
        if frame == "unitary":
            log_frame = np.log1p(np.abs(coords) ** 2)[:, None]
            log_values = log_values - degrees[None, :] / 2.0 * log_frame
        elif frame != "holomorphic":
            raise ValueError(f"Unknown frame {frame}")
        if normalized:
            log_values = log_values - 0.5 * np.log(beta_weights(self))[None, :]
        values = np.exp(log_values) * np.exp(1j * powers[None, :] * np.angle(coords)[:, None])

        result = np.zeros((coords.shape[0], self.rank, self.N), dtype=complex)
        result[:, self.summand_of, np.arange(self.N)] = values
        return result


def section_basis(bundle: SplitBundle, k: int) -> SectionBasis:
    """Builds the monomial basis of H^0(E(k)).

    Arguments:
        bundle (SplitBundle): E.
        k (int): The level.

    Raises:
        InadmissibleLevelError: If some d_i + k < 0.

    Returns:
        SectionBasis: The basis.
    """
    check_level(bundle, k)
    items = tuple((i, a) for i, d in enumerate(bundle.twisted(k)) for a in range(d + 1))
    return SectionBasis(bundle=bundle, k=k, items=items)


def twist_basis(twist: TwistBundle | int) -> SectionBasis:
    """Monomial basis of H^0(M)."""
    m = twist.m if isinstance(twist, TwistBundle) else int(twist)
    return section_basis(SplitBundle((m,)), 0)


def beta_weights(basis: SectionBasis) -> np.ndarray:
    """Reference L^2 norms a!(D-a)!/(D+1)! of the monomials.

    Arguments:
        basis (SectionBasis): The basis.

    Returns:
        np.ndarray: One positive weight per item.
    """
    degrees = basis.section_degrees
    return np.array(
        [
            float(Fraction(factorial(a) * factorial(degrees[i] - a), factorial(degrees[i] + 1)))
            for i, a in basis.items
        ]
    )


def default_scheme(basis: SectionBasis) -> QuadratureScheme:
    """Quadrature adequate for Grams of the basis against smooth metrics."""
    return build_quadrature(*default_orders(max(basis.section_degrees)))


def node_evaluations(
    basis: SectionBasis, scheme: QuadratureScheme, normalized: bool = True
) -> np.ndarray:
    """Unitary chart-0 evaluations of the basis at the nodes, cached in the storage.

    Arguments:
        basis (SectionBasis): The basis.
        scheme (QuadratureScheme): The scheme.
        normalized (bool): Reference-orthonormal sections when True.

    Returns:
        np.ndarray: Read-only array (nodes, r, N).
    """

    def build() -> np.ndarray:
        values = basis.evaluate(scheme.z, chart=0, frame="unitary", normalized=normalized)
        values.flags.writeable = False
        return values

    key = ("sections", basis.bundle.degrees, basis.k, scheme.orders, normalized)
    return Storage().get_or_create(key, build)


def gram_from_values(
    values: np.ndarray, scheme: QuadratureScheme, metric: np.ndarray | None = None
) -> np.ndarray:
    """L^2 Gram G_jl = integral of h(s_l, s_j) from evaluations at the nodes.

    Arguments:
        values (np.ndarray): Evaluations (nodes, r, N) in a frame of E.
        scheme (QuadratureScheme): The scheme.
        metric (np.ndarray | None): Metric (nodes, r, r) in the same frame, identity
            when omitted.

    Returns:
        np.ndarray: The N x N Gram.
    """
    if metric is None:
        integrand = np.einsum("nri,nrj->nij", np.conj(values), values)
    else:
        integrand = np.conj(np.swapaxes(values, 1, 2)) @ metric @ values
    return integrate_values(integrand, scheme)


def reference_l2_gram(
    bundle: SplitBundle, k: int, scheme: QuadratureScheme | None = None
) -> HermitianForm:
    """Gram of the monomial basis of H^0(E(k)) under the Fubini-Study metric on every
    summand.

    Arguments:
        bundle (SplitBundle): E.
        k (int): The level.
        scheme (QuadratureScheme | None): Quadrature, default orders when omitted.

    Returns:
        HermitianForm: Block-diagonal form with entries a!(D-a)!/(D+1)!.
    """
    basis = section_basis(bundle, k)
    scheme = scheme or default_scheme(basis)
    return HermitianForm(gram_from_values(node_evaluations(basis, scheme, False), scheme))


def twist_l2_gram(m: int, scheme: QuadratureScheme | None = None) -> HermitianForm:
    """Gram of the monomial basis of H^0(O(m)) under the Fubini-Study metric."""
    return reference_l2_gram(SplitBundle((m,)), 0, scheme)


def l2_gram_of_metric(
    metric: BundleMetric, basis: SectionBasis, scheme: QuadratureScheme | None = None
) -> HermitianForm:
    """Gram of the monomial basis of H^0(E(k)) under h (x) h_L^k.

    Arguments:
        metric (BundleMetric): The metric h on E.
        basis (SectionBasis): The basis of H^0(E(k)).
        scheme (QuadratureScheme | None): Quadrature, default orders when omitted.

    Returns:
        HermitianForm: The Gram.
    """
    if tuple(metric.degrees) != basis.bundle.degrees:
        raise ValueError(f"Metric on {metric.degrees} does not match bundle {basis.bundle}")
    scheme = scheme or default_scheme(basis)
    values = node_evaluations(basis, scheme, False)
    return HermitianForm(gram_from_values(values, scheme, metric.at_nodes(scheme)))


@dataclass(frozen=True)
class QuantParams:
    """Constants of the balanced condition at level k.

    Attributes:
        k (int): The level.
        ell (Fraction): The constant l > 0 with delta = l (curves).
        rank (int): Rank of E.
        N (int): h^0(E(k)).
    """

    k: int
    ell: Fraction
    rank: int
    N: int  # pylint: disable=invalid-name

    def __post_init__(self):
        object.__setattr__(self, "ell", Fraction(self.ell))
        if self.ell <= 0:
            raise ValueError(f"ell must be positive, got {self.ell}")

    @property
    def delta(self) -> Fraction:
        """delta = l k^(n-1) with n = 1."""
        return self.ell

    @property
    def chi(self) -> Fraction:
        """chi = N / (rk E Vol), Vol = 1."""
        return Fraction(self.N, self.rank)

    def epsilon(self, frob2: float) -> float:
        """Expansion parameter delta k / (1 + |||phi_*|||^2)."""
        return float(self.delta) * self.k / (1.0 + frob2)

    @property
    def weight_epsilon(self) -> Fraction:
        """Weight of mu_2 in the Hilbert-Mumford weight, delta / chi."""
        return self.delta / self.chi

    @classmethod
    def for_basis(cls, basis: SectionBasis, ell: Fraction | int | str = 1) -> QuantParams:
        """Parameters matching a section basis."""
        return cls(k=basis.k, ell=Fraction(ell), rank=basis.rank, N=basis.N)


@dataclass(frozen=True, eq=False)
class PushforwardMatrix:
    """Matrix of phi_*: H^0(M) (x) H^0(E(k)) -> H^0(E(k)) in monomial bases.

    Column b * N + j is t_b (x) s_j.

    Attributes:
        A (np.ndarray): The N x ((m+1) N) matrix.
        basis (SectionBasis): Basis of H^0(E(k)).
        twist (SectionBasis): Basis of H^0(M).
    """

    A: np.ndarray
    basis: SectionBasis
    twist: SectionBasis

    @property
    def n_twist(self) -> int:
        """h^0(M)."""
        return self.twist.N

    def blocks(self) -> np.ndarray:
        """Raw blocks A_b, shape (m+1, N, N)."""
        return split_blocks(self.A, self.n_twist)

    def reference_blocks(self) -> np.ndarray:
        """Blocks in the reference-orthonormal frames of H^0(M) and H^0(E(k))."""
        root = np.sqrt(beta_weights(self.basis))
        twist_root = np.sqrt(beta_weights(self.twist))
        blocks = root[None, :, None] * self.blocks() / root[None, None, :]
        return blocks / twist_root[:, None, None]


def pushforward(instance: HiggsInstance, k: int) -> PushforwardMatrix:
    """Expands phi_* in monomial bases by exact placement of coefficients.

    Arguments:
        instance (HiggsInstance): A valid instance.
        k (int): The level.

    Raises:
        InadmissibleLevelError: If k is not admissible.
        InvalidInstanceError: If the instance is not valid.

    Returns:
        PushforwardMatrix: The matrix.
    """
    require_valid(instance)
    basis = section_basis(instance.bundle, k)
    twist = twist_basis(instance.twist)
    n_total = basis.N
    matrix = np.zeros((n_total, twist.N * n_total), dtype=complex)
    for b in range(twist.N):
        for column, (j, a) in enumerate(basis.items):
            for i in range(instance.rank):
                if instance.phi.entry_is_zero(i, j):
                    continue
                for c, coefficient in enumerate(instance.phi.entry(i, j)):
                    matrix[basis.index(i, a + b + c), b * n_total + column] += coefficient
    return PushforwardMatrix(A=matrix, basis=basis, twist=twist)


def _sample_points(count: int) -> np.ndarray:
    return np.exp(2j * np.pi * (np.arange(count) + 0.25) / count)


def reconstruct_higgs(
    pushed: PushforwardMatrix | np.ndarray, bundle: SplitBundle, m: int, k: int
) -> HiggsField:
    """Recovers phi from a matrix by fibrewise evaluation.

    At every sample point x the matrix must map the kernel of the evaluation of
    H^0(M) (x) H^0(E(k)) into the kernel of the evaluation of H^0(E(k)); the fibre map
    Phi(x) then satisfies e_1(x) A = Phi(x) e_2(x), and the polynomial entries are fit
    through the sampled values.

    Arguments:
        pushed (PushforwardMatrix | np.ndarray): The matrix.
        bundle (SplitBundle): E.
        m (int): Degree of M.
        k (int): The level.

    Raises:
        NotInducedError: If the kernel condition fails or an entry does not fit.

    Returns:
        HiggsField: The recovered field.
    """
    matrix = pushed.A if isinstance(pushed, PushforwardMatrix) else np.asarray(pushed, complex)
    basis = section_basis(bundle, k)
    twist = twist_basis(m)
    if matrix.shape != (basis.N, twist.N * basis.N):
        raise NotInducedError(f"Matrix shape {matrix.shape} does not fit E={bundle}, m={m}, k={k}")

    twist_instance = TwistBundle(m)
    rank = bundle.rank
    max_degree = max(
        [entry_degree(bundle, twist_instance, i, j) for i in range(rank) for j in range(rank)]
    )
    points = _sample_points(max(max_degree, 0) + 3)
    scale = max(1.0, float(np.max(np.abs(matrix), initial=0.0)))

    fibre = np.zeros((points.shape[0], rank, rank), dtype=complex)
    for p, point in enumerate(points):
        sections = basis.evaluate(np.array([point]), frame="holomorphic")[0]
        twists = twist.evaluate(np.array([point]), frame="holomorphic")[0]
        tensor = np.kron(twists, sections)
        image = sections @ matrix
        solution = image @ np.linalg.pinv(tensor)
        residual = np.max(np.abs(image - solution @ tensor), initial=0.0)
        if residual > KERNEL_TOL * scale * max(1.0, np.linalg.norm(tensor)):
            logger.error("Kernel condition fails at %s with residual %.3e", point, residual)
            raise NotInducedError(
                f"Matrix is not induced by a bundle morphism (residual {residual:.3e} at {point})"
            )
        fibre[p] = solution

    entries = []
    for i in range(rank):
        row: list[tuple[complex, ...]] = []
        for j in range(rank):
            degree = entry_degree(bundle, twist_instance, i, j)
            values = fibre[:, i, j]
            if degree < 0:
                if np.max(np.abs(values)) > KERNEL_TOL * scale:
                    raise NotInducedError(f"Entry ({i + 1},{j + 1}) must vanish")
                row.append(())
                continue
            vandermonde = points[:, None] ** np.arange(degree + 1)[None, :]
            coefficients, *_ = np.linalg.lstsq(vandermonde, values, rcond=None)
            if np.max(np.abs(vandermonde @ coefficients - values)) > KERNEL_TOL * scale:
                raise NotInducedError(
                    f"Entry ({i + 1},{j + 1}) is not a polynomial of degree {degree}"
                )
            if np.max(np.abs(coefficients)) <= 1e-14 * scale:
                row.append(())
            else:
                row.append(tuple(complex(c) for c in coefficients))
        entries.append(tuple(row))
    return HiggsField(tuple(entries))


@dataclass(frozen=True, eq=False)
class PEndomorphism:
    """The endomorphism P of H^0(E(k)).

    Attributes:
        P (np.ndarray): Matrix in the basis the form G is given in.
        form (HermitianForm): The form G the adjoints were taken against.
        frob2 (float): |||phi_*|||^2 with respect to (G_M (x) G, G).
        orthonormal (np.ndarray): P in the G-orthonormal frame G^(1/2).
    """

    P: np.ndarray
    form: HermitianForm
    frob2: float
    orthonormal: np.ndarray


def p_from_blocks(alpha: np.ndarray, params: QuantParams) -> tuple[np.ndarray, np.ndarray, float]:
    """P, the commutator [phi_*, phi_*^*] and |||phi_*|||^2 from orthonormal blocks.

    Arguments:
        alpha (np.ndarray): Blocks (n_h, N, N) in orthonormal frames.
        params (QuantParams): Constants.

    Returns:
        tuple[np.ndarray, np.ndarray, float]: (P, commutator, frob2), all in the
            orthonormal frame.
    """
    bracket = commutator(alpha, blocks_dagger(alpha))
    frob2 = float(np.sum(np.abs(alpha) ** 2))
    identity = np.eye(alpha.shape[1], dtype=complex)
    p_matrix = (identity + float(params.delta) * bracket / (1.0 + frob2)) / float(params.chi)
    return p_matrix, bracket, frob2


def p_endomorphism(
    pushed: PushforwardMatrix | np.ndarray,
    form: HermitianForm,
    twist_form: HermitianForm,
    params: QuantParams,
) -> PEndomorphism:
    """P = chi^-1 (Id + delta [phi_*, phi_*^*] / (1 + |||phi_*|||^2)).

    Arguments:
        pushed (PushforwardMatrix | np.ndarray): phi_* in monomial bases.
        form (HermitianForm): Metric G on H^0(E(k)) in the monomial basis.
        twist_form (HermitianForm): Metric G_M on H^0(M).
        params (QuantParams): Constants.

    Raises:
        DegenerateFormError: If G is degenerate.

    Returns:
        PEndomorphism: P in the monomial basis.
    """
    matrix = pushed.A if isinstance(pushed, PushforwardMatrix) else pushed
    alpha = orthonormal_blocks(matrix, twist_form, form)
    p_orthonormal, _, frob2 = p_from_blocks(alpha, params)
    p_matrix = form.inv_sqrt @ p_orthonormal @ form.sqrt
    return PEndomorphism(P=p_matrix, form=form, frob2=frob2, orthonormal=p_orthonormal)


@dataclass(frozen=True)
class WeakGeometryRecord:
    """Per-level weakly geometric diagnostics.

    Attributes:
        k (int): The level.
        frob2 (float): |||phi_*|||^2.
        density (float): rk E |||phi_*|||^2 / k.
        operator_norm (float): ||phi_*||.
    """

    k: int
    frob2: float
    density: float
    operator_norm: float


@dataclass
class WeakGeometryReport:
    """Series of diagnostics and the admissible interval of the constant c'.

    Attributes:
        records (list[WeakGeometryRecord]): One record per level.
        c_lower (float): max_k ||phi_*||.
        c_upper (float): min_k rk E |||phi_*|||^2 / k.
        metric (str): "reference" or "balanced".
    """

    records: list[WeakGeometryRecord]
    c_lower: float
    c_upper: float
    metric: str

    @property
    def violation(self) -> bool:
        """True when no c' satisfies both bounds."""
        return self.c_lower > self.c_upper


def weakly_geometric_report(
    instance: HiggsInstance,
    k_range: Sequence[int],
    grams: Mapping[int, np.ndarray] | None = None,
) -> WeakGeometryReport:
    """Measures |||phi_*|||^2 and ||phi_*|| across levels.

    Arguments:
        instance (HiggsInstance): The instance.
        k_range (Sequence[int]): Levels.
        grams (Mapping[int, np.ndarray] | None): Metrics on H^0(E(k)) per level, given in
            the reference-orthonormal frame (for instance balanced states). Reference L^2
            metrics when omitted.

    Raises:
        ZeroHiggsError: If phi = 0.

    Returns:
        WeakGeometryReport: The series.
    """
    if instance.phi.is_zero:
        raise ZeroHiggsError("Weakly geometric diagnostics need a nonzero Higgs field.")
    records = []
    for k in k_range:
        alpha = pushforward(instance, k).reference_blocks()
        if grams is not None and k in grams:
            form = HermitianForm(grams[k])
            alpha = form.sqrt[None] @ alpha @ form.inv_sqrt[None]
        frob2 = float(np.sum(np.abs(alpha) ** 2))
        operator_norm = float(np.linalg.norm(np.concatenate(list(alpha), axis=1), 2))
        records.append(
            WeakGeometryRecord(
                k=k, frob2=frob2, density=instance.rank * frob2 / k, operator_norm=operator_norm
            )
        )
    c_lower = max(record.operator_norm for record in records)
    c_upper = min(record.density for record in records)
    report = WeakGeometryReport(
        records, c_lower, c_upper, metric="balanced" if grams is not None else "reference"
    )
    if report.violation:
        logger.warning("No c' satisfies the weakly geometric bounds: %.4f > %.4f", c_lower, c_upper)
    return report


@dataclass(frozen=True)
class MultiplicationNorm:
    """Norm of H^0(E(k)) (x) H^0(M') -> H^0(E(k) (x) M') under L^2 metrics.

    Attributes:
        norm2 (float): Squared operator norm.
        bound (float): h^0(M') sup{|t|^2 : ||t|| = 1}.
    """

    norm2: float
    bound: float

    @property
    def holds(self) -> bool:
        """Whether the bound holds."""
        return self.norm2 <= self.bound * (1.0 + 1e-10)


def multiplication_norm_check(
    m_degree: int, bundle: SplitBundle, k: int, scheme: QuadratureScheme | None = None
) -> MultiplicationNorm:
    """Compares the multiplication map norm with the sup-norm bound.

    Arguments:
        m_degree (int): Degree of M'.
        bundle (SplitBundle): E.
        k (int): The level.
        scheme (QuadratureScheme | None): Quadrature for the sup evaluation.

    Returns:
        MultiplicationNorm: Norm and bound.
    """
    basis = section_basis(bundle, k)
    twist = twist_basis(m_degree)
    target = section_basis(bundle, k + m_degree)
    matrix = np.zeros((target.N, twist.N * basis.N))
    for b in range(twist.N):
        for column, (i, a) in enumerate(basis.items):
            matrix[target.index(i, a + b), b * basis.N + column] = 1.0

    domain_scale = np.kron(np.sqrt(beta_weights(twist)), np.sqrt(beta_weights(basis)))
    whitened = np.sqrt(beta_weights(target))[:, None] * matrix / domain_scale[None, :]
    norm2 = float(np.linalg.norm(whitened, 2) ** 2)

    scheme = scheme or build_quadrature(*default_orders(m_degree))
    values = node_evaluations(twist, scheme, True)
    sup = float(np.max(np.sum(np.abs(values) ** 2, axis=(1, 2))))
    bound = twist.N * sup
    result = MultiplicationNorm(norm2=norm2, bound=bound)
    if not result.holds:
        logger.warning("Multiplication norm %.6f exceeds bound %.6f", norm2, bound)
    return result
