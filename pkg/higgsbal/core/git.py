"""Hilbert-Mumford weights of one-parameter subgroups of SL(H^0(E(k))) and the
maximal-weight formulas for subsheaf subgroups."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Literal, Sequence

import numpy as np

from higgsbal.config import DEFAULT_RANK_SAMPLES, DEFAULT_SEED, RANK_CUTOFF, ZERO_BLOCK_TOL, logger
from higgsbal.core.hermitian import HermitianForm
from higgsbal.core.model import (
    HiggsInstance,
    InvalidSubsetError,
    hilbert_value,
    is_invariant_summand_set,
)
from higgsbal.core.quantization import (
    PushforwardMatrix,
    QuantParams,
    SectionBasis,
    pushforward,
    section_basis,
)

Classification = Literal["unstable", "strictly_semistable", "stable_compatible"]

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


class InvalidSubgroupError(ValueError):
    """Raised for weight vectors that do not define a valid one-parameter subgroup."""


@dataclass(frozen=True, eq=False)
class OneParamSubgroup:
    """A one-parameter subgroup acting with integer weights on a basis of H^0(E(k)).

    Attributes:
        weights (tuple[int, ...]): Weight of every basis vector.
        basis_change (np.ndarray | None): Columns are the weight vectors in reference
            coordinates, the reference basis itself when None.
        special_linear (bool): Whether the weights must sum to zero.
    """

    weights: tuple[int, ...]
    basis_change: np.ndarray | None = None
    special_linear: bool = True

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(int(w) for w in self.weights))
        if len(set(self.weights)) < 2:
            raise InvalidSubgroupError("A one-parameter subgroup needs two distinct weights.")
        if self.special_linear and sum(self.weights) != 0:
            raise InvalidSubgroupError(
                f"Weights of a special linear subgroup must sum to 0, got {sum(self.weights)}"
            )
        if self.basis_change is not None:
            change = np.asarray(self.basis_change, dtype=complex)
            if change.shape != (self.dim, self.dim):
                raise InvalidSubgroupError(
                    f"Basis change of shape {change.shape} for {self.dim} weights"
                )
            if np.linalg.matrix_rank(change) < self.dim:
                raise InvalidSubgroupError("Basis change is not invertible.")
            object.__setattr__(self, "basis_change", change)

    @property
    def dim(self) -> int:
        """Dimension of the space acted on."""
        return len(self.weights)

    @property
    def levels(self) -> list[int]:
        """Distinct weights in increasing order."""
        return sorted(set(self.weights))

    def subspace_leq(self, level: int) -> np.ndarray:
        """Basis (columns, reference coordinates) of U_{<=level}."""
        columns = [n for n, w in enumerate(self.weights) if w <= level]
        change = self.basis_change if self.basis_change is not None else np.eye(self.dim)
        return change[:, columns]

    def adapted(self, matrix: np.ndarray, n_twist: int) -> np.ndarray:
        """phi_* in the weight basis, B^-1 A (I (x) B)."""
        if self.basis_change is None:
            return matrix
        change = self.basis_change
        return np.linalg.solve(change, matrix) @ np.kron(np.eye(n_twist), change)

    @classmethod
    def from_subsheaf(cls, basis: SectionBasis, summands: Sequence[int]) -> OneParamSubgroup:
        """Two-weight subgroup of a summand subsheaf F.

        U' = H^0(F(k)) gets weight -dim U'' and its coordinate complement U'' gets
        weight dim U'.

        Arguments:
            basis (SectionBasis): Basis of H^0(E(k)).
            summands (Sequence[int]): Zero-based summands spanning F.

        Raises:
            InvalidSubsetError: If the summand set is empty, full or out of range.

        Returns:
            OneParamSubgroup: The subgroup.
        """
        chosen = set(summands)
        if not chosen or len(chosen) >= basis.rank or min(chosen) < 0 or max(chosen) >= basis.rank:
            raise InvalidSubsetError(f"Summands {sorted(chosen)} do not define a proper subsheaf")
        inside = len(basis.summand_indices(sorted(chosen)))
        outside = basis.N - inside
        weights = tuple(-outside if i in chosen else inside for i, _ in basis.items)
        return cls(weights=weights)


def sample_points(sample_count: int = DEFAULT_RANK_SAMPLES, seed: int = DEFAULT_SEED) -> np.ndarray:
    """Chart-0 coordinates of a spiral point set plus seeded random points.

    Arguments:
        sample_count (int): Number of points of each kind.
        seed (int): Seed of the random points.

    Returns:
        np.ndarray: 2 * sample_count complex coordinates.
    """
    index = np.arange(sample_count)
    t_spiral = -1.0 + (2.0 * index + 1.0) / sample_count
    theta_spiral = index * GOLDEN_ANGLE
    rng = np.random.default_rng(seed)
    t_random = rng.uniform(-0.98, 0.98, sample_count)
    theta_random = rng.uniform(0.0, 2.0 * np.pi, sample_count)
    t = np.concatenate([t_spiral, t_random])
    theta = np.concatenate([theta_spiral, theta_random])
    return np.sqrt((1.0 + t) / (1.0 - t)) * np.exp(1j * theta)


def generic_rank(
    subspace: np.ndarray,
    basis: SectionBasis,
    sample_count: int = DEFAULT_RANK_SAMPLES,
    seed: int = DEFAULT_SEED,
) -> int:
    """Rank of the subsheaf generated by a space of sections.

    Arguments:
        subspace (np.ndarray): N x d matrix whose columns span U' in reference
            coordinates.
        basis (SectionBasis): Basis of H^0(E(k)).
        sample_count (int): Points of each kind to sample.
        seed (int): Seed of the random points.

    Returns:
        int: Maximal fibre rank of the evaluation of U' over the samples.
    """
    subspace = np.asarray(subspace, dtype=complex)
    if subspace.ndim != 2 or subspace.shape[0] != basis.N or subspace.shape[1] == 0:
        raise ValueError(f"Subspace of shape {subspace.shape} for N={basis.N}")
    points = sample_points(sample_count, seed)
    values = basis.evaluate(points, frame="unitary", normalized=True)
    scale = np.linalg.norm(subspace, 2)
    best = 0
    for value in values:
        singular = np.linalg.svd(value @ subspace, compute_uv=False)
        cutoff = RANK_CUTOFF * np.linalg.norm(value, 2) * scale
        best = max(best, int(np.sum(singular > cutoff)))
    if best == 0:
        logger.warning("All sampled evaluations are rank deficient; generic rank set to 0.")
    return best


def theta(
    subspace: np.ndarray,
    basis: SectionBasis,
    sample_count: int = DEFAULT_RANK_SAMPLES,
    seed: int = DEFAULT_SEED,
) -> int:
    """Theta(U') = rk F' dim U - r dim U'."""
    dim_subspace = int(np.linalg.matrix_rank(subspace))
    rank = generic_rank(subspace, basis, sample_count, seed)
    return rank * basis.N - basis.rank * dim_subspace


@dataclass(frozen=True)
class Mu1Result:
    """The Grassmannian part of the weight.

    Attributes:
        theta_by_level (dict[int, int]): Theta(U_{<=n}) per weight level.
        theta_sum (int): Un-normalized sum of the Theta values.
        mu1 (Fraction): theta_sum / dim U.
        filtration_weight (int): -sum_n n rk(F_n / F_{n-1}).
    """

    theta_by_level: dict[int, int]
    theta_sum: int
    mu1: Fraction
    filtration_weight: int


def mu1(
    subgroup: OneParamSubgroup,
    basis: SectionBasis,
    sample_count: int = DEFAULT_RANK_SAMPLES,
    seed: int = DEFAULT_SEED,
) -> Mu1Result:
    """Sums Theta over the weight filtration.

    Arguments:
        subgroup (OneParamSubgroup): The subgroup.
        basis (SectionBasis): Basis of H^0(E(k)).
        sample_count (int): Samples for the generic ranks.
        seed (int): Seed for the generic ranks.

    Returns:
        Mu1Result: Per-level values, their sum and the normalized weight.
    """
    if subgroup.dim != basis.N:
        raise InvalidSubgroupError(f"Subgroup acts on {subgroup.dim} vectors, N={basis.N}")
    by_level: dict[int, int] = {}
    filtration = 0
    previous_rank = 0
    for level in subgroup.levels:
        subspace = subgroup.subspace_leq(level)
        rank = generic_rank(subspace, basis, sample_count, seed)
        by_level[level] = rank * basis.N - basis.rank * int(np.linalg.matrix_rank(subspace))
        filtration -= level * (rank - previous_rank)
        previous_rank = rank
    total = sum(by_level.values())
    return Mu1Result(by_level, total, Fraction(total, basis.N), filtration)


def mu2(subgroup: OneParamSubgroup, pushed: PushforwardMatrix | np.ndarray) -> int:
    """Largest a - b over nonzero blocks phi_*^{ab} with a >= b, zero when none.

    Arguments:
        subgroup (OneParamSubgroup): The subgroup.
        pushed (PushforwardMatrix | np.ndarray): phi_* in monomial bases.

    Returns:
        int: The weight.
    """
    matrix = pushed.A if isinstance(pushed, PushforwardMatrix) else np.asarray(pushed)
    dim = subgroup.dim
    if matrix.shape[0] != dim or matrix.shape[1] % dim:
        raise InvalidSubgroupError(f"phi_* of shape {matrix.shape} for {dim} weights")
    n_twist = matrix.shape[1] // dim
    adapted = np.abs(subgroup.adapted(matrix, n_twist))
    weights = np.asarray(subgroup.weights)
    column_weights = np.tile(weights, n_twist)
    best = 0
    for a in subgroup.levels:
        rows = weights == a
        for b in subgroup.levels:
            if a < b:
                continue
            block = adapted[np.ix_(rows, column_weights == b)]
            if block.size and np.max(block) >= ZERO_BLOCK_TOL:
                best = max(best, a - b)
    return best


@dataclass(frozen=True)
class BlockNorms:
    """Squared Frobenius norms of phi_* blocks along H + H^perp."""

    e11: float
    e12: float
    e21: float
    e22: float


@dataclass(frozen=True)
class MaximalWeight:
    """Closed-form weights of a subsheaf subgroup.

    Attributes:
        w1 (Fraction): Grassmannian weight.
        w2_limit (Fraction): Large-t limit of the Higgs-field weight.
        nu (Fraction): h^0(F(k)) / (h^0(E(k)) - h^0(F(k))).
        norms (BlockNorms): Block norms in the G-orthonormal splitting.
    """

    w1: Fraction
    w2_limit: Fraction
    nu: Fraction
    norms: BlockNorms


def maximal_weight(
    instance: HiggsInstance,
    k: int,
    summands: Sequence[int],
    gram: HermitianForm | None = None,
) -> MaximalWeight:
    """Weights of the subsheaf subgroup relative to a metric on H^0(E(k)).

    Arguments:
        instance (HiggsInstance): The instance.
        k (int): The level.
        summands (Sequence[int]): Zero-based summands spanning F.
        gram (HermitianForm | None): Metric in the reference-orthonormal frame, the
            reference metric when omitted.

    Raises:
        InvalidSubsetError: If F is not a proper summand subsheaf.

    Returns:
        MaximalWeight: w1, the limit of w2 and nu.
    """
    chosen = sorted(set(summands))
    if not chosen or len(chosen) >= instance.rank:
        raise InvalidSubsetError(f"Summands {chosen} do not define a proper subsheaf")
    pushed = pushforward(instance, k)
    basis = pushed.basis
    h0_e = hilbert_value(instance.bundle, k)
    h0_f = hilbert_value(instance.bundle.restrict(chosen), k)
    rank_e, rank_f = instance.rank, len(chosen)

    w1 = Fraction(rank_e * rank_f, 2 * (h0_e - h0_f)) * (
        Fraction(h0_e, rank_e) - Fraction(h0_f, rank_f)
    )
    nu = Fraction(h0_f, h0_e - h0_f)

    gram = gram or HermitianForm.identity(basis.N)
    alpha = gram.sqrt[None] @ pushed.reference_blocks() @ gram.inv_sqrt[None]
    inside = gram.sqrt[:, basis.summand_indices(chosen)]
    q_full, _ = np.linalg.qr(inside, mode="complete")
    q_h, q_perp = q_full[:, : inside.shape[1]], q_full[:, inside.shape[1] :]

    def norm2(left: np.ndarray, right: np.ndarray) -> float:
        return float(np.sum(np.abs(np.conj(left.T)[None] @ alpha @ right[None]) ** 2))

    norms = BlockNorms(
        e11=norm2(q_h, q_h),
        e12=norm2(q_h, q_perp),
        e21=norm2(q_perp, q_h),
        e22=norm2(q_perp, q_perp),
    )
    invariant = norms.e21 <= ZERO_BLOCK_TOL**2
    if invariant != is_invariant_summand_set(instance, chosen):
        logger.warning("Block E21 disagrees with the invariance of summands %s", chosen)
    w2_limit = Fraction(0) if invariant else 1 + nu
    return MaximalWeight(w1=w1, w2_limit=w2_limit, nu=nu, norms=norms)


def w2_profile(norms: BlockNorms, nu: Fraction | float, t: float) -> float:
    """Finite-t value of the Higgs-field weight of a subsheaf subgroup.

    Arguments:
        norms (BlockNorms): Block norms.
        nu (Fraction | float): The ratio nu.
        t (float): Parameter.

    Returns:
        float: The weight, tending to w2_limit as t grows.
    """
    rate = 1.0 + float(nu)
    # numerator and denominator divided by exp(2 rate t)
    up, down = 1.0, float(np.exp(-4 * rate * t))
    base = float(np.exp(-2 * rate * t))
    numerator = rate * (up * norms.e21 - down * norms.e12)
    denominator = base * (1.0 + norms.e11 + norms.e22) + down * norms.e12 + up * norms.e21
    if denominator == 0:
        return 0.0
    return numerator / denominator


def kempf_ness_direction(subgroup: OneParamSubgroup) -> np.ndarray:
    """zeta = -diag(weights) / max |weight|, in reference coordinates.

    Raises:
        InvalidSubgroupError: If the basis change is not unitary.
    """
    weights = -np.asarray(subgroup.weights, dtype=float)
    weights = weights / np.max(np.abs(weights))
    if subgroup.basis_change is None:
        return np.diag(weights).astype(complex)
    change = subgroup.basis_change
    if not np.allclose(change.conj().T @ change, np.eye(subgroup.dim), atol=1e-10):
        raise InvalidSubgroupError("The Kempf-Ness direction needs a unitary basis change.")
    return change @ np.diag(weights) @ change.conj().T


@dataclass(frozen=True)
class WeightReport:
    """Hilbert-Mumford weight of a subgroup.

    Attributes:
        theta_by_level (dict[int, int]): Theta(U_{<=n}).
        theta_sum (int): Un-normalized Grassmannian weight.
        mu1 (Fraction): Normalized Grassmannian weight.
        mu2 (int): Higgs-field weight.
        epsilon (Fraction): delta / chi.
        mu_total (Fraction): mu1 + epsilon mu2.
        filtration_weight (int): Large-t slope numerator of the Grassmannian part.
        classification (Classification): Sign of mu_total.
        maximal (MaximalWeight | None): Closed forms for subsheaf subgroups.
    """

    theta_by_level: dict[int, int]
    theta_sum: int
    mu1: Fraction
    mu2: int
    epsilon: Fraction
    mu_total: Fraction
    filtration_weight: int
    classification: Classification
    maximal: MaximalWeight | None = None


def total_weight(
    subgroup: OneParamSubgroup,
    instance: HiggsInstance,
    k: int,
    params: QuantParams,
    summands: Sequence[int] | None = None,
    gram: HermitianForm | None = None,
    seed: int = DEFAULT_SEED,
) -> WeightReport:
    """Assembles mu = mu1 + epsilon mu2 and its sign.

    Arguments:
        subgroup (OneParamSubgroup): The subgroup.
        instance (HiggsInstance): The instance.
        k (int): The level.
        params (QuantParams): Constants, epsilon = delta / chi.
        summands (Sequence[int] | None): Summands of F for subsheaf subgroups.
        gram (HermitianForm | None): Metric for the maximal-weight blocks.
        seed (int): Seed for the generic ranks.

    Returns:
        WeightReport: The weights.
    """
    basis = section_basis(instance.bundle, k)
    first = mu1(subgroup, basis, seed=seed)
    second = mu2(subgroup, pushforward(instance, k))
    epsilon = params.weight_epsilon
    total = first.mu1 + epsilon * second
    classification: Classification
    if total < 0:
        classification = "unstable"
    elif total == 0:
        classification = "strictly_semistable"
    else:
        classification = "stable_compatible"
    maximal = maximal_weight(instance, k, summands, gram) if summands is not None else None
    logger.info(
        "Weight at k=%d: mu1=%s mu2=%d mu=%s (%s)", k, first.mu1, second, total, classification
    )
    return WeightReport(
        theta_by_level=first.theta_by_level,
        theta_sum=first.theta_sum,
        mu1=first.mu1,
        mu2=second,
        epsilon=epsilon,
        mu_total=total,
        filtration_weight=first.filtration_weight,
        classification=classification,
        maximal=maximal,
    )
