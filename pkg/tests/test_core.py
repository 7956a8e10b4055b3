"""Numeric kernel tests: singular values, rank-one defects, rotations."""

import math
from fractions import Fraction

import numpy as np
import pytest

from laminate_forge.core import (
    InvalidInputError,
    Rotation,
    SquareMatrix,
    conjugate_diag,
    jacobi_eigh,
    rank_one_defect,
    sorted_singular_values,
)


def charpoly_roots_3x3(a: np.ndarray) -> list:
    """Independent oracle: eigenvalues of a symmetric 3x3 via its
    characteristic polynomial  -l^3 + tr l^2 - m2 l + det."""
    tr = a[0, 0] + a[1, 1] + a[2, 2]
    m2 = (
        a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        + a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]
        + a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]
    )
    det = np.linalg.det(a)
    roots = np.roots([-1.0, tr, -m2, det])
    return sorted(float(r.real) for r in roots)


def random_sym_psd(rng, n):
    g = rng.normal(size=(n, n))
    return g @ g.T


def test_singular_values_diagonal_trivial():
    assert sorted_singular_values(SquareMatrix.diag([2, 0])) == (0, 2)
    assert sorted_singular_values(SquareMatrix.identity(3)) == (1, 1, 1)


def test_singular_values_match_charpoly_oracle():
    rng = np.random.default_rng(7)
    for _ in range(50):
        a = random_sym_psd(rng, 3)
        sv = sorted_singular_values(SquareMatrix.from_numpy(a))
        expect = charpoly_roots_3x3(a)
        assert np.allclose(sv, expect, atol=1e-10)


def test_singular_values_weyl_perturbation():
    # |sigma_i(A) - sigma_i(B)| <= |A - B| on 1000 random symmetric pairs
    rng = np.random.default_rng(11)
    for _ in range(1000):
        n = int(rng.integers(2, 5))
        a = random_sym_psd(rng, n)
        b = a + 0.1 * rng.normal(size=(n, n))
        b = (b + b.T) / 2
        sa = sorted_singular_values(SquareMatrix.from_numpy(a))
        sb = sorted_singular_values(SquareMatrix.from_numpy(b))
        gap = sorted_singular_values(SquareMatrix.from_numpy(a - b))[-1]
        for x, y in zip(sa, sb):
            assert abs(x - y) <= gap + 1e-10


def test_singular_values_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        sorted_singular_values(SquareMatrix([[1.0, float("nan")], [0.0, 1.0]]))


def test_rank_one_defect_paper_first_split():
    b = SquareMatrix.diag([0, 1])
    c = SquareMatrix.diag([2, 1])
    assert rank_one_defect(b, c) == 0


def test_rank_one_defect_full_rank_difference():
    b = SquareMatrix.identity(2)
    c = SquareMatrix.identity(2).scale(2)
    assert rank_one_defect(b, c) == 1


def test_rank_one_defect_outer_product():
    rng = np.random.default_rng(3)
    a = rng.normal(size=4)
    b = rng.normal(size=4)
    d = np.outer(a, b)
    z = SquareMatrix.from_numpy(np.zeros((4, 4)))
    assert rank_one_defect(SquareMatrix.from_numpy(d), z) <= 1e-12


def test_rank_one_defect_exact_iff_minors_vanish():
    d = SquareMatrix([[Fraction(2), Fraction(4)], [Fraction(1), Fraction(2)]])
    z = SquareMatrix.diag([Fraction(0), Fraction(0)])
    assert rank_one_defect(d, z) == 0
    assert isinstance(rank_one_defect(d, z), Fraction)
    e = SquareMatrix([[Fraction(2), Fraction(4)], [Fraction(1), Fraction(3)]])
    assert rank_one_defect(e, z) > 0


def test_rank_one_defect_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        rank_one_defect(SquareMatrix.identity(2), SquareMatrix.identity(3))


def test_conjugate_diag_identity_and_swap():
    q = Rotation.identity(2)
    assert conjugate_diag(q, [1, 2]) == SquareMatrix.diag([1, 2])
    swap = Rotation.planar(2, 0, 1, math.pi / 2)
    m = conjugate_diag(swap, [1.0, 2.0])
    assert np.allclose(m.to_numpy(), np.diag([2.0, 1.0]), atol=1e-12)


def test_conjugate_diag_spectral_invariance():
    rng = np.random.default_rng(5)
    for _ in range(20):
        q = Rotation.random(3, rng)
        m = conjugate_diag(q, [0.5, 1.0, 3.0])
        assert m.is_symmetric()
        sv = sorted_singular_values(m)
        assert np.allclose(sv, [0.5, 1.0, 3.0], atol=1e-12)


def test_rotation_validation():
    with pytest.raises(InvalidInputError):
        Rotation(SquareMatrix([[1, 1], [0, 1]]))
    # determinant -1 reflection rejected
    with pytest.raises(InvalidInputError):
        Rotation(SquareMatrix.diag([1, -1]))


def test_permutation_rotation_exact():
    q = Rotation.from_permutation([2, 0, 1])
    m = conjugate_diag(q, [Fraction(1), Fraction(2), Fraction(3)])
    assert m.exact
    assert sorted(m.diagonal()) == [1, 2, 3]
    assert sorted_singular_values(m) == (1, 2, 3)


def test_psd_checks():
    assert SquareMatrix.diag([Fraction(0), Fraction(2)]).is_psd()
    assert not SquareMatrix.diag([Fraction(-1), Fraction(2)]).is_psd()
    assert SquareMatrix([[2.0, 1.0], [1.0, 2.0]]).is_psd()
    assert not SquareMatrix([[1.0, 2.0], [2.0, 1.0]]).is_psd()
    # zero pivot with nonzero row is indefinite
    assert not SquareMatrix([[Fraction(0), Fraction(1)], [Fraction(1), Fraction(0)]]).is_psd()


def test_exact_rank():
    assert SquareMatrix.diag([Fraction(1), Fraction(0), Fraction(2)]).rank_exact() == 2
    m = SquareMatrix([[1, 2, 3], [2, 4, 6], [1, 1, 1]])
    assert m.rank_exact() == 2


def test_jacobi_eigh_eigenvectors():
    rng = np.random.default_rng(9)
    a = random_sym_psd(rng, 4)
    w, v = jacobi_eigh(a)
    assert np.allclose(a @ v, v @ np.diag(w), atol=1e-10)
