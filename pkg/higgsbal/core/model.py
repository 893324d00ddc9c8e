"""Split twisted Higgs bundles on the projective line: data, validation, Hilbert
polynomials and destabilizing subsheaves among summand sub-bundles."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Literal, Sequence

import numpy as np

from higgsbal.config import logger

Verdict = Literal["unstable", "strictly_semistable", "polystable"]


class InadmissibleLevelError(ValueError):
    """Raised when some twisted summand has negative degree."""


class InvalidSubsetError(ValueError):
    """Raised when a summand subset is empty, full or out of range."""


class InvalidInstanceError(ValueError):
    """Raised when an operation requires a valid instance."""


@dataclass(frozen=True)
class TwistBundle:
    """The twisting bundle M = O(m)."""

    m: int

    @property
    def degree(self) -> int:
        """Degree of M."""
        return self.m


@dataclass(frozen=True)
class SplitBundle:
    """E = O(d_1) + ... + O(d_r), with summands in a fixed order.

    Attributes:
        degrees (tuple[int, ...]): The degrees d_i.
    """

    degrees: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "degrees", tuple(int(d) for d in self.degrees))

    @property
    def rank(self) -> int:
        """Number of summands."""
        return len(self.degrees)

    @property
    def degree(self) -> int:
        """deg E."""
        return sum(self.degrees)

    def twisted(self, k: int) -> tuple[int, ...]:
        """Degrees of E(k)."""
        return tuple(d + k for d in self.degrees)

    def restrict(self, summands: Sequence[int]) -> SplitBundle:
        """Sub-bundle spanned by the given summands."""
        return SplitBundle(tuple(self.degrees[i] for i in summands))


@dataclass(frozen=True)
class HiggsField:
    """Entries phi_ij in H^0(O(d_i - d_j - m)) as coefficient tuples in ascending powers
    of z. An empty tuple is the zero entry.

    Attributes:
        entries (tuple[tuple[tuple[complex, ...], ...], ...]): Row-major r x r entries.
    """

    entries: tuple[tuple[tuple[complex, ...], ...], ...]

    @property
    def rank(self) -> int:
        """Size of the matrix."""
        return len(self.entries)

    def entry(self, i: int, j: int) -> tuple[complex, ...]:
        """Coefficients of phi_ij."""
        return self.entries[i][j]

    def entry_is_zero(self, i: int, j: int) -> bool:
        """Whether phi_ij vanishes identically."""
        return all(c == 0 for c in self.entries[i][j])

    @property
    def is_zero(self) -> bool:
        """Whether every entry vanishes."""
        return all(self.entry_is_zero(i, j) for i in range(self.rank) for j in range(self.rank))

    @classmethod
    def zero(cls, rank: int) -> HiggsField:
        """The zero field of the given rank."""
        return cls(tuple(tuple(() for _ in range(rank)) for _ in range(rank)))

    @classmethod
    def from_lists(cls, rows: Sequence[Sequence[Iterable[complex] | complex]]) -> HiggsField:
        """Builds a field from nested lists; a bare number is a constant entry.

        Arguments:
            rows (Sequence[Sequence[Iterable[complex] | complex]]): r x r entries.

        Returns:
            HiggsField: The field.
        """
        entries = []
        for row in rows:
            converted = []
            for value in row:
                if isinstance(value, (int, float, complex, np.number)):
                    coefficients: tuple[complex, ...] = () if value == 0 else (complex(value),)
                else:
                    coefficients = tuple(complex(c) for c in value)
                converted.append(coefficients)
            entries.append(tuple(converted))
        return cls(tuple(entries))


@dataclass(frozen=True)
class HiggsInstance:
    """A twisted Higgs bundle (E, phi) with phi: M (x) E -> E.

    Attributes:
        twist (TwistBundle): M.
        bundle (SplitBundle): E.
        phi (HiggsField): The field.
        label (str): Optional name.
    """

    twist: TwistBundle
    bundle: SplitBundle
    phi: HiggsField
    label: str = ""

    @property
    def rank(self) -> int:
        """Rank of E."""
        return self.bundle.rank

    @classmethod
    def build(
        cls,
        m: int,
        degrees: Sequence[int],
        phi: Sequence[Sequence[Iterable[complex] | complex]] | None = None,
        label: str = "",
    ) -> HiggsInstance:
        """Convenience constructor from plain Python data.

        Arguments:
            m (int): Degree of M.
            degrees (Sequence[int]): Degrees of the summands.
            phi (Sequence[Sequence[Iterable[complex] | complex]] | None): Entries, zero
                field when omitted.
            label (str): Optional name.

        Returns:
            HiggsInstance: The instance (not validated).
        """
        field = HiggsField.from_lists(phi) if phi is not None else HiggsField.zero(len(degrees))
        return cls(TwistBundle(m), SplitBundle(tuple(degrees)), field, label)


def entry_degree(bundle: SplitBundle, twist: TwistBundle, i: int, j: int) -> int:
    """Degree e_ij = d_i - d_j - m of the line bundle holding phi_ij."""
    return bundle.degrees[i] - bundle.degrees[j] - twist.m


@dataclass
class ValidationReport:
    """Outcome of instance validation.

    Attributes:
        violations (list[str]): Human readable problems, empty when valid.
        zero_higgs (bool): Whether phi is identically zero.
    """

    violations: list[str]
    zero_higgs: bool

    @property
    def valid(self) -> bool:
        """True when there are no violations."""
        return not self.violations


def validate(instance: HiggsInstance) -> ValidationReport:
    """Checks an instance for structural consistency.

    Arguments:
        instance (HiggsInstance): The instance.

    Returns:
        ValidationReport: The violations found, if any.
    """
    violations: list[str] = []
    rank = instance.bundle.rank
    if rank < 1:
        violations.append("bundle must have at least one summand")
    if list(instance.bundle.degrees) != sorted(instance.bundle.degrees, reverse=True):
        violations.append(f"bundle degrees must be descending, got {list(instance.bundle.degrees)}")
    if instance.twist.m < 0:
        violations.append(f"twist degree must be non-negative, got {instance.twist.m}")
    if instance.phi.rank != rank or any(len(row) != rank for row in instance.phi.entries):
        violations.append(f"phi must be a {rank}x{rank} matrix")
        return ValidationReport(violations, zero_higgs=False)

    for i in range(rank):
        for j in range(rank):
            coefficients = instance.phi.entry(i, j)
            degree = entry_degree(instance.bundle, instance.twist, i, j)
            if not coefficients:
                continue
            if degree < 0 and any(c != 0 for c in coefficients):
                violations.append(
                    f"phi[{i + 1}][{j + 1}] must vanish: its line bundle has degree {degree}"
                )
            elif degree >= 0 and len(coefficients) != degree + 1:
                violations.append(
                    f"phi[{i + 1}][{j + 1}] needs {degree + 1} coefficients, "
                    f"got {len(coefficients)}"
                )
            if any(not np.isfinite(complex(c)) for c in coefficients):
                violations.append(f"phi[{i + 1}][{j + 1}] has non-finite coefficients")

    zero_higgs = instance.phi.is_zero
    if zero_higgs:
        logger.warning("Instance %s has zero Higgs field.", instance.label or instance.bundle)
    return ValidationReport(violations, zero_higgs=zero_higgs)


def require_valid(instance: HiggsInstance) -> None:
    """Raises InvalidInstanceError listing every violation."""
    report = validate(instance)
    if not report.valid:
        raise InvalidInstanceError("; ".join(report.violations))


def hilbert_value(bundle: SplitBundle, k: int) -> int:
    """h^0(E(k)) = sum (d_i + k + 1), for E(k) with all twisted degrees >= 0.

    Raises:
        InadmissibleLevelError: If some d_i + k < 0.
    """
    check_level(bundle, k)
    return sum(d + k + 1 for d in bundle.degrees)


def check_level(bundle: SplitBundle, k: int) -> None:
    """Ensures every d_i + k is non-negative.

    Raises:
        InadmissibleLevelError: Otherwise.
    """
    negative = [i + 1 for i, d in enumerate(bundle.degrees) if d + k < 0]
    if negative:
        raise InadmissibleLevelError(
            f"Level k={k} makes summands {negative} negative, need k >= {-min(bundle.degrees)}"
        )


def min_level(bundle: SplitBundle) -> int:
    """Smallest admissible level."""
    return max(0, -min(bundle.degrees))


def _check_subset(instance: HiggsInstance, summands: Iterable[int]) -> tuple[int, ...]:
    subset = tuple(sorted(set(summands)))
    if not subset or len(subset) >= instance.rank:
        raise InvalidSubsetError(f"Subset {subset} must be non-empty and proper")
    if subset[0] < 0 or subset[-1] >= instance.rank:
        raise InvalidSubsetError(f"Subset {subset} is out of range for rank {instance.rank}")
    return subset


def is_invariant_summand_set(instance: HiggsInstance, summands: Iterable[int]) -> bool:
    """Whether phi maps M (x) F into F for the sub-bundle F spanned by the summands.

    Arguments:
        instance (HiggsInstance): The instance.
        summands (Iterable[int]): Zero-based summand indices of a proper subset.

    Raises:
        InvalidSubsetError: If the subset is empty, full or out of range.

    Returns:
        bool: True when phi_ij = 0 for every i outside and j inside the subset.
    """
    subset = _check_subset(instance, summands)
    outside = [i for i in range(instance.rank) if i not in subset]
    return all(instance.phi.entry_is_zero(i, j) for i in outside for j in subset)


def splits_along(instance: HiggsInstance, summands: Iterable[int]) -> bool:
    """Whether both the summand set and its complement are phi-invariant."""
    subset = _check_subset(instance, summands)
    complement = [i for i in range(instance.rank) if i not in subset]
    return is_invariant_summand_set(instance, subset) and is_invariant_summand_set(
        instance, complement
    )


def restrict(instance: HiggsInstance, summands: Sequence[int]) -> HiggsInstance:
    """The Higgs sub-bundle on the given summands, with phi restricted to them."""
    entries = tuple(tuple(instance.phi.entry(i, j) for j in summands) for i in summands)
    return HiggsInstance(
        instance.twist, instance.bundle.restrict(summands), HiggsField(entries), instance.label
    )


def _constant_matrix(instance: HiggsInstance) -> np.ndarray | None:
    """phi as a constant matrix when m = 0 and all degrees agree."""
    if instance.twist.m != 0 or len(set(instance.bundle.degrees)) != 1:
        return None
    rank = instance.rank
    matrix = np.zeros((rank, rank), dtype=complex)
    for i in range(rank):
        for j in range(rank):
            coefficients = instance.phi.entry(i, j)
            matrix[i, j] = coefficients[0] if coefficients else 0
    return matrix


def _is_diagonalizable(matrix: np.ndarray) -> bool:
    eigenvalues, vectors = np.linalg.eig(matrix)
    if np.linalg.matrix_rank(vectors, tol=1e-8) < matrix.shape[0]:
        return False
    # clustered eigenvalues: check the geometric multiplicity directly
    for value in eigenvalues:
        algebraic = int(np.sum(np.abs(eigenvalues - value) < 1e-8))
        kernel = matrix.shape[0] - np.linalg.matrix_rank(
            matrix - value * np.eye(matrix.shape[0]), tol=1e-8
        )
        if kernel < algebraic:
            return False
    return True


@dataclass(frozen=True)
class StabilityWitness:
    """Summand subsheaf with maximal reduced-Hilbert margin, or an eigen-line for constant
    fields on trivial bundles.

    Attributes:
        summands (tuple[int, ...] | None): Zero-based summand indices of the witness.
        margin (Fraction): h^0(F(k))/rk F - h^0(E(k))/rk E, exact.
        verdict (Verdict): Stability verdict at this level.
        heuristic (bool): True when the verdict relies on summand subsheaves only.
        subspace (tuple[complex, ...] | None): Eigenvector spanning the witness line when
            the witness is not a summand set.
    """

    summands: tuple[int, ...] | None
    margin: Fraction
    verdict: Verdict
    heuristic: bool
    subspace: tuple[complex, ...] | None = None


def _margin(instance: HiggsInstance, summands: Sequence[int], k: int) -> Fraction:
    total = Fraction(hilbert_value(instance.bundle, k), instance.rank)
    sub = instance.bundle.restrict(summands)
    return Fraction(hilbert_value(sub, k), len(summands)) - total


def _zero_margin_polystable(instance: HiggsInstance, k: int) -> bool:
    """Whether a semistable instance splits into pieces of equal slope that are stable."""
    if instance.rank == 1:
        return True
    found_zero_margin = False
    for size in range(1, instance.rank):
        for subset in combinations(range(instance.rank), size):
            if not is_invariant_summand_set(instance, subset):
                continue
            if _margin(instance, subset, k) != 0:
                continue
            found_zero_margin = True
            if not splits_along(instance, subset):
                continue
            complement = [i for i in range(instance.rank) if i not in subset]
            if _zero_margin_polystable(restrict(instance, subset), k) and (
                _zero_margin_polystable(restrict(instance, complement), k)
            ):
                return True
    return not found_zero_margin


def destabilizing_witness(instance: HiggsInstance, k: int) -> StabilityWitness | None:
    """Searches phi-invariant summand sub-bundles for the one with maximal margin.

    Margins are exact rationals. For m = 0, constant fields on bundles with equal degrees
    are decided through the eigen-structure of phi: every eigen-line is an invariant
    subsheaf with zero margin, and the bundle is polystable exactly when phi is
    diagonalizable.

    Arguments:
        instance (HiggsInstance): The instance.
        k (int): The level.

    Returns:
        StabilityWitness | None: The witness, or None when no invariant summand subsheaf
            has non-negative margin (stable-compatible).
    """
    check_level(instance.bundle, k)
    best: tuple[Fraction, tuple[int, ...]] | None = None
    for size in range(1, instance.rank):
        for subset in combinations(range(instance.rank), size):
            if not is_invariant_summand_set(instance, subset):
                continue
            margin = _margin(instance, subset, k)
            if best is None or margin > best[0]:
                best = (margin, subset)

    if best is not None and best[0] > 0:
        return StabilityWitness(best[1], best[0], "unstable", heuristic=False)

    constant = _constant_matrix(instance)
    if constant is not None and instance.rank > 1:
        _, vectors = np.linalg.eig(constant)
        line = tuple(complex(v) for v in vectors[:, 0])
        verdict: Verdict = "polystable" if _is_diagonalizable(constant) else "strictly_semistable"
        return StabilityWitness(
            summands=best[1] if best is not None else None,
            margin=Fraction(0),
            verdict=verdict,
            heuristic=False,
            subspace=line if best is None else None,
        )

    if best is None or best[0] < 0:
        return None
    # only summand subsheaves were searched
    if _zero_margin_polystable(instance, k):
        return StabilityWitness(best[1], best[0], "polystable", heuristic=True)
    return StabilityWitness(best[1], best[0], "strictly_semistable", heuristic=True)


def evaluate_higgs(instance: HiggsInstance, coords: np.ndarray, chart: int = 0) -> np.ndarray:
    """phi in the holomorphic frames of a chart.

    In chart 1 the entry phi_ij becomes the reversed polynomial w^e_ij phi_ij(1/w).

    Arguments:
        instance (HiggsInstance): The instance.
        coords (np.ndarray): Chart coordinates.
        chart (int): The chart.

    Returns:
        np.ndarray: Array of shape (n, r, r).
    """
    coords = np.asarray(coords, dtype=complex).ravel()
    rank = instance.rank
    values = np.zeros((coords.shape[0], rank, rank), dtype=complex)
    for i in range(rank):
        for j in range(rank):
            if instance.phi.entry_is_zero(i, j):
                continue
            coefficients = instance.phi.entry(i, j)
            degree = entry_degree(instance.bundle, instance.twist, i, j)
            ordered = coefficients if chart == 0 else tuple(reversed(coefficients))
            powers = np.arange(degree + 1)
            values[:, i, j] = (coords[:, None] ** powers[None, :]) @ np.asarray(ordered)
    return values


def unitary_higgs(instance: HiggsInstance, coords: np.ndarray) -> np.ndarray:
    """phi in the chart-0 unitary frames of M (x) E and E.

    Arguments:
        instance (HiggsInstance): The instance.
        coords (np.ndarray): Chart-0 coordinates.

    Returns:
        np.ndarray: Array of shape (n, r, r).
    """
    coords = np.asarray(coords, dtype=complex).ravel()
    holomorphic = evaluate_higgs(instance, coords, chart=0)
    degrees = np.asarray(instance.bundle.degrees)
    exponents = degrees[:, None] - degrees[None, :] - instance.twist.m
    rho = np.sqrt(1.0 + np.abs(coords) ** 2)
    return holomorphic * rho[:, None, None] ** (-exponents[None, :, :])
