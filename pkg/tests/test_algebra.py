from __future__ import annotations

import numpy as np
import pytest

from lqbae import algebra as alg
from lqbae.core import ShapeError
from lqbae.types import StructureClass


def _pair(rng, k=2, r=3):
    return alg.random_complex(k, r, rng), alg.random_complex(k, r, rng)


def test_flat_adjoint_matches_doubled_form(rng):
    U, V = _pair(rng)
    D = alg.doubled_up(U, V)
    np.testing.assert_allclose(alg.flat_adjoint(D.full()), D.flat().full(), atol=1e-14)
    np.testing.assert_allclose(D.flat().U, U.conj().T)
    np.testing.assert_allclose(D.flat().V, -V.T)


def test_doubled_product_stays_doubled(rng):
    A = alg.doubled_up(*_pair(rng, 2, 3))
    B = alg.doubled_up(*_pair(rng, 3, 4))
    prod = A @ B
    np.testing.assert_allclose(prod.full(), A.full() @ B.full(), atol=1e-12)
    assert alg.is_doubled_up(prod.full())
    assert alg.is_doubled_up((A + A).full())


def test_is_doubled_up_rejects_perturbation(rng):
    X = alg.doubled_up(*_pair(rng)).full()
    assert alg.is_doubled_up(X)
    X[3, 0] += 1e-3
    assert not alg.is_doubled_up(X)
    back = alg.doubled_parts(alg.doubled_up(*_pair(rng)).full())
    assert back.shape == (4, 6)


def test_quadrature_blocks_equal_transformed_doubled_matrix(rng):
    U, V = _pair(rng, 2, 3)
    conj = alg.to_quadrature(alg.doubled_up(U, V).full(), 2, 3)
    assert alg.max_abs(conj.imag) < 1e-13
    np.testing.assert_allclose(conj.real, alg.quadrature_blocks(U, V), atol=1e-13)


def test_sharp_adjoint_is_flat_adjoint_in_quadratures(rng):
    U, V = _pair(rng, 2, 3)
    X = alg.doubled_up(U, V).full()
    expected = alg.to_quadrature(alg.flat_adjoint(X), 3, 2)
    got = alg.sharp_adjoint(alg.quadrature_blocks(U, V))
    assert got.dtype == np.float64
    np.testing.assert_allclose(got, expected.real, atol=1e-13)


def test_quad_transform_is_unitary():
    for n in (1, 3):
        V = alg.quad_transform(n)
        np.testing.assert_allclose(V @ V.conj().T, np.eye(2 * n), atol=1e-15)
    with pytest.raises(ShapeError):
        alg.quad_transform(0)


def test_symplectic_j_squares_to_minus_identity():
    J = alg.symplectic_j(3)
    np.testing.assert_array_equal(J @ J, -np.eye(6))
    np.testing.assert_array_equal(alg.j_matrix(2), np.diag([1.0, 1.0, -1.0, -1.0]))


def test_odd_dimensions_are_refused():
    with pytest.raises(ShapeError):
        alg.flat_adjoint(np.ones((3, 2)))
    with pytest.raises(ShapeError):
        alg.sharp_adjoint(np.ones((2, 5)))
    with pytest.raises(ShapeError):
        alg.doubled_up(np.ones((2, 2)), np.ones((2, 3)))


def test_classify():
    assert alg.classify([[1.0, 2.0]]) is StructureClass.Real
    assert alg.classify([[1j, -2j]]) is StructureClass.PurelyImaginary
    assert alg.classify(np.zeros((2, 2))) is StructureClass.Zero
    assert alg.classify([[1.0, 1j]]) is StructureClass.Neither
    # relative to the largest entry
    assert alg.classify([[1e6, 1e-6j]]) is StructureClass.Real
    assert StructureClass.Zero.is_real and StructureClass.Zero.is_imaginary
    with pytest.raises(ValueError):
        alg.classify([[1.0]], tol=-1.0)


def test_random_generators_have_their_structure(rng):
    U = alg.random_unitary(4, rng)
    np.testing.assert_allclose(U @ U.conj().T, np.eye(4), atol=1e-13)
    H = alg.random_hermitian(3, rng)
    np.testing.assert_allclose(H, H.conj().T)
    S = alg.random_symmetric(3, rng)
    np.testing.assert_allclose(S, S.T)


def test_as_matrix_shapes():
    assert alg.as_matrix(2.0).shape == (1, 1)
    assert alg.as_matrix([1, 2, 3]).shape == (1, 3)
    with pytest.raises(ShapeError):
        alg.as_matrix([[1, 2]], rows=2)
    assert alg.allclose([1.0, 2.0], [1.0, 2.0 + 1e-12])
    assert not alg.allclose([1.0], [1.0, 2.0])
