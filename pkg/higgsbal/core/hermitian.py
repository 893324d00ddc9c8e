"""Hermitian forms, adjoints with respect to non-standard inner products, and the
block-matrix algebra of endomorphisms with coefficients in a twisting space.

Conventions: a form G represents h(u, v) = v^H G u. A map A: (V, G_dom) -> (W, G_cod)
has adjoint A* = G_dom^-1 A^H G_cod.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from higgsbal.config import FORM_CONDITION_LIMIT, HERMITIAN_TOL


class DegenerateFormError(ArithmeticError):
    """Raised when a form is not positive definite or is numerically degenerate."""


class ShapeMismatchError(ValueError):
    """Raised when matrix shapes are incompatible with the forms they act between."""


def condition_number(matrix: np.ndarray) -> float:
    """Condition number of a hermitian matrix after Jacobi equilibration.

    Arguments:
        matrix (np.ndarray): Hermitian matrix.

    Returns:
        float: lambda_max / lambda_min of D^-1/2 G D^-1/2, inf when not positive.
    """
    diagonal = np.real(np.diag(matrix))
    if np.any(diagonal <= 0):
        return float("inf")
    scale = 1.0 / np.sqrt(diagonal)
    eigenvalues = np.linalg.eigvalsh(scale[:, None] * matrix * scale[None, :])
    if eigenvalues[0] <= 0:
        return float("inf")
    return float(eigenvalues[-1] / eigenvalues[0])


@dataclass(frozen=True, eq=False)
class HermitianForm:
    """Positive-definite hermitian form on C^n.

    Attributes:
        G (np.ndarray): The n x n matrix.
    """

    G: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.G, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ShapeMismatchError(f"A form needs a square matrix, got shape {matrix.shape}")
        scale = max(1.0, float(np.max(np.abs(matrix), initial=0.0)))
        if np.max(np.abs(matrix - matrix.conj().T), initial=0.0) > HERMITIAN_TOL * scale:
            raise DegenerateFormError("Matrix is not hermitian.")
        matrix = (matrix + matrix.conj().T) / 2
        matrix.flags.writeable = False
        object.__setattr__(self, "G", matrix)
        if self.eigenvalues[0] <= 0:
            raise DegenerateFormError(
                f"Form is not positive definite, smallest eigenvalue {self.eigenvalues[0]:.3e}"
            )
        if condition_number(matrix) > FORM_CONDITION_LIMIT:
            raise DegenerateFormError(
                f"Form is numerically degenerate, condition {condition_number(matrix):.3e}"
            )

    @property
    def dim(self) -> int:
        """Dimension of the space."""
        return int(self.G.shape[0])

    @cached_property
    def _eigh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.G)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in ascending order."""
        return self._eigh[0]

    @cached_property
    def sqrt(self) -> np.ndarray:
        """Hermitian square root."""
        values, vectors = self._eigh
        return (vectors * np.sqrt(values)) @ vectors.conj().T

    @cached_property
    def inv_sqrt(self) -> np.ndarray:
        """Inverse of the hermitian square root."""
        values, vectors = self._eigh
        return (vectors / np.sqrt(values)) @ vectors.conj().T

    @cached_property
    def inverse(self) -> np.ndarray:
        """Inverse matrix."""
        return self.solve(np.eye(self.dim, dtype=complex))

    @cached_property
    def _cholesky(self) -> tuple[np.ndarray, bool]:
        return scipy.linalg.cho_factor(self.G, lower=True)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solves G x = rhs via Cholesky.

        Arguments:
            rhs (np.ndarray): Right-hand side(s).

        Returns:
            np.ndarray: The solution.
        """
        return scipy.linalg.cho_solve(self._cholesky, rhs)

    @cached_property
    def orthonormal_frame(self) -> np.ndarray:
        """A matrix T with T^H G T = I, computed through Jacobi equilibration.

        Only the span of an orthonormal basis is fixed by G, so any such T serves where
        basis-independent quantities (Bergman functions, projections) are computed.
        """
        scale = 1.0 / np.sqrt(np.real(np.diag(self.G)))
        equilibrated = scale[:, None] * self.G * scale[None, :]
        values, vectors = np.linalg.eigh(equilibrated)
        return scale[:, None] * ((vectors / np.sqrt(values)) @ vectors.conj().T)

    @property
    def condition(self) -> float:
        """Plain eigenvalue ratio."""
        return float(self.eigenvalues[-1] / self.eigenvalues[0])

    def congruence(self, transform: np.ndarray) -> HermitianForm:
        """The pulled-back form T^H G T."""
        return HermitianForm(transform.conj().T @ self.G @ transform)

    def kron(self, other: HermitianForm) -> HermitianForm:
        """Tensor product form, with the first factor as the outer index."""
        return HermitianForm(np.kron(self.G, other.G))

    @classmethod
    def identity(cls, dim: int) -> HermitianForm:
        """Standard form on C^dim."""
        return cls(np.eye(dim, dtype=complex))


def herm_sqrt(form: HermitianForm) -> tuple[np.ndarray, np.ndarray]:
    """Returns (G^1/2, G^-1/2) through the eigendecomposition of G.

    Arguments:
        form (HermitianForm): The form.

    Returns:
        tuple[np.ndarray, np.ndarray]: Square root and its inverse.
    """
    return form.sqrt, form.inv_sqrt


@dataclass(frozen=True, eq=False)
class LinearMapMatrix:
    """Matrix of a linear map between spaces carrying hermitian forms.

    Attributes:
        A (np.ndarray): Matrix of shape (codomain.dim, domain.dim).
        domain (HermitianForm): Form on the source.
        codomain (HermitianForm): Form on the target.
    """

    A: np.ndarray
    domain: HermitianForm
    codomain: HermitianForm

    def __post_init__(self):
        matrix = np.asarray(self.A, dtype=complex)
        expected = (self.codomain.dim, self.domain.dim)
        if matrix.shape != expected:
            raise ShapeMismatchError(f"Map has shape {matrix.shape}, forms require {expected}")
        object.__setattr__(self, "A", matrix)

    def adjoint(self) -> LinearMapMatrix:
        """Adjoint with respect to the stored forms."""
        return adjoint_wrt(self.A, self.domain, self.codomain)

    def whitened(self) -> np.ndarray:
        """Matrix in orthonormal bases of both forms."""
        return self.codomain.sqrt @ self.A @ self.domain.inv_sqrt


def _check_map(matrix: np.ndarray, domain: HermitianForm, codomain: HermitianForm) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.shape != (codomain.dim, domain.dim):
        raise ShapeMismatchError(
            f"Map has shape {matrix.shape}, forms require {(codomain.dim, domain.dim)}"
        )
    return matrix


def adjoint_wrt(
    matrix: np.ndarray, domain: HermitianForm, codomain: HermitianForm
) -> LinearMapMatrix:
    """Adjoint of a map (V, G_dom) -> (W, G_cod).

    Arguments:
        matrix (np.ndarray): The map.
        domain (HermitianForm): Form on V.
        codomain (HermitianForm): Form on W.

    Raises:
        ShapeMismatchError: If the shapes disagree.

    Returns:
        LinearMapMatrix: A* = G_dom^-1 A^H G_cod as a map W -> V.
    """
    matrix = _check_map(matrix, domain, codomain)
    star = domain.solve(matrix.conj().T @ codomain.G)
    return LinearMapMatrix(star, domain=codomain, codomain=domain)


def frobenius_norm_wrt(
    matrix: np.ndarray, domain: HermitianForm, codomain: HermitianForm
) -> float:
    """sqrt(tr(A* A)) for the adjoint taken with respect to the forms."""
    matrix = _check_map(matrix, domain, codomain)
    return float(np.linalg.norm(codomain.sqrt @ matrix @ domain.inv_sqrt))


def operator_norm_wrt(
    matrix: np.ndarray, domain: HermitianForm, codomain: HermitianForm
) -> float:
    """Operator norm of a map with respect to the forms."""
    matrix = _check_map(matrix, domain, codomain)
    return float(np.linalg.norm(codomain.sqrt @ matrix @ domain.inv_sqrt, 2))


def _as_blocks(blocks: np.ndarray) -> np.ndarray:
    blocks = np.asarray(blocks, dtype=complex)
    if blocks.ndim == 2:
        blocks = blocks[None]
    if blocks.ndim != 3 or blocks.shape[1] != blocks.shape[2]:
        raise ShapeMismatchError(f"Expected square blocks, got shape {blocks.shape}")
    return blocks


def commutator(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Block commutator sum_a alpha_a beta_a - beta_a alpha_a.

    With beta = alpha*, this is [alpha, alpha*] for alpha in End(U) (x) H, the blocks
    being taken in an orthonormal basis of H.

    Arguments:
        alpha (np.ndarray): Blocks of shape (n_h, N, N), or a single N x N matrix.
        beta (np.ndarray): Blocks of the same shape.

    Raises:
        ShapeMismatchError: If the shapes differ.

    Returns:
        np.ndarray: The N x N endomorphism.
    """
    alpha, beta = _as_blocks(alpha), _as_blocks(beta)
    if alpha.shape != beta.shape:
        raise ShapeMismatchError(f"Block shapes differ: {alpha.shape} vs {beta.shape}")
    return np.einsum("aij,ajk->ik", alpha, beta) - np.einsum("aij,ajk->ik", beta, alpha)


def blocks_dagger(alpha: np.ndarray) -> np.ndarray:
    """Blockwise conjugate transpose, the adjoint in orthonormal bases."""
    return np.conj(np.swapaxes(_as_blocks(alpha), 1, 2))


def split_blocks(matrix: np.ndarray, n_blocks: int) -> np.ndarray:
    """Splits an N x (n_blocks * N) matrix into n_blocks square N x N blocks."""
    matrix = np.asarray(matrix)
    rows, cols = matrix.shape
    if cols != n_blocks * rows:
        raise ShapeMismatchError(f"Cannot split {matrix.shape} into {n_blocks} square blocks")
    return np.stack([matrix[:, b * rows : (b + 1) * rows] for b in range(n_blocks)])


def orthonormal_blocks(
    matrix: np.ndarray, twist_form: HermitianForm, form: HermitianForm
) -> np.ndarray:
    """Blocks of A: U (x) H -> U in a G-orthonormal basis of U and a G_M-orthonormal
    basis of H.

    Column index b * N + j of the input corresponds to t_b (x) e_j.

    Arguments:
        matrix (np.ndarray): The N x (n_h N) matrix.
        twist_form (HermitianForm): Form G_M on H.
        form (HermitianForm): Form G on U.

    Returns:
        np.ndarray: Orthonormal blocks of shape (n_h, N, N).
    """
    blocks = split_blocks(matrix, twist_form.dim)
    if blocks.shape[1] != form.dim:
        raise ShapeMismatchError(f"Blocks of size {blocks.shape[1]} for a form of dim {form.dim}")
    mixed = np.einsum("bc,bij->cij", twist_form.inv_sqrt, blocks)
    return form.sqrt[None] @ mixed @ form.inv_sqrt[None]
