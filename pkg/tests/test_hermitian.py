from __future__ import annotations

import numpy as np
import pytest

from higgsbal.core.hermitian import (
    DegenerateFormError,
    HermitianForm,
    ShapeMismatchError,
    adjoint_wrt,
    blocks_dagger,
    commutator,
    frobenius_norm_wrt,
    herm_sqrt,
    orthonormal_blocks,
    split_blocks,
)


def _random_form(dim: int, seed: int) -> HermitianForm:
    rng = np.random.default_rng(seed)
    matrix = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return HermitianForm(matrix @ matrix.conj().T + dim * np.eye(dim))


def test_form_rejects_non_hermitian_and_indefinite() -> None:
    with pytest.raises(DegenerateFormError):
        HermitianForm(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(DegenerateFormError):
        HermitianForm(np.diag([1.0, -1.0]))
    with pytest.raises(DegenerateFormError):
        HermitianForm(np.diag([1.0, 1e-14]))
    with pytest.raises(ShapeMismatchError):
        HermitianForm(np.ones((2, 3)))


def test_square_roots_and_frame() -> None:
    form = _random_form(4, 1)
    root, inverse_root = herm_sqrt(form)
    assert np.allclose(root @ root, form.G)
    assert np.allclose(root @ inverse_root, np.eye(4))
    frame = form.orthonormal_frame
    assert np.allclose(frame.conj().T @ form.G @ frame, np.eye(4))
    assert np.allclose(form.inverse @ form.G, np.eye(4))


def test_adjoint_satisfies_defining_identity() -> None:
    domain, codomain = _random_form(3, 2), _random_form(2, 3)
    rng = np.random.default_rng(4)
    matrix = rng.normal(size=(2, 3)) + 1j * rng.normal(size=(2, 3))
    star = adjoint_wrt(matrix, domain, codomain).A
    u = rng.normal(size=3) + 1j * rng.normal(size=3)
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    # h_cod(A u, v) = h_dom(u, A* v) with h(u, v) = v^H G u
    assert np.isclose(v.conj() @ codomain.G @ (matrix @ u), (star @ v).conj() @ domain.G @ u)
    with pytest.raises(ShapeMismatchError):
        adjoint_wrt(matrix.T, domain, codomain)


def test_frobenius_norm_is_trace_of_star_a() -> None:
    domain, codomain = _random_form(3, 5), _random_form(3, 6)
    matrix = np.arange(9, dtype=complex).reshape(3, 3)
    star = adjoint_wrt(matrix, domain, codomain).A
    expected = np.sqrt(np.trace(star @ matrix).real)
    assert np.isclose(frobenius_norm_wrt(matrix, domain, codomain), expected)


def test_commutator_of_blocks() -> None:
    alpha = np.array([[[0, 2], [1, 0]]], dtype=complex)
    bracket = commutator(alpha, blocks_dagger(alpha))
    assert np.allclose(bracket, np.diag([3.0, -3.0]))
    assert np.isclose(np.trace(bracket), 0)
    with pytest.raises(ShapeMismatchError):
        commutator(alpha, np.zeros((2, 2, 2)))


def test_split_and_orthonormal_blocks() -> None:
    matrix = np.hstack([np.eye(2), 2 * np.eye(2)])
    blocks = split_blocks(matrix, 2)
    assert blocks.shape == (2, 2, 2)
    assert np.allclose(blocks[1], 2 * np.eye(2))
    with pytest.raises(ShapeMismatchError):
        split_blocks(matrix, 3)

    twist_form = HermitianForm(np.diag([4.0, 1.0]))
    alpha = orthonormal_blocks(matrix, twist_form, HermitianForm.identity(2))
    assert np.allclose(alpha[0], 0.5 * np.eye(2))
    assert np.allclose(alpha[1], 2 * np.eye(2))
