"""Scalar and small dense matrix kernel.

Two scalar kinds flow through the package: exact rationals
(``fractions.Fraction``) and binary64 floats.  A matrix is "exact" when every
entry is a Fraction; mixed matrices are rejected.  All matrices are immutable
value objects of size 2 <= n <= 6.

The matrix norm used everywhere is the operator norm (largest singular
value), never Frobenius.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

Scalar = Union[Fraction, float, int]

#: off-diagonal mass threshold for the cyclic Jacobi sweeps
JACOBI_TOL = 1e-14

#: default symmetry / orthogonality tolerance in approx mode
SYM_TOL = 1e-12


class InvalidInputError(ValueError):
    """Raised for non-finite entries, dimension mismatches and the like."""


def as_exact(x: Scalar) -> Fraction:
    """Coerce to Fraction. Floats convert exactly (binary64 is rational)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise InvalidInputError(f"non-finite scalar {x!r}")
        return Fraction(x)
    raise InvalidInputError(f"unsupported scalar type {type(x)!r}")


def _check_finite(x: float) -> float:
    if not math.isfinite(x):
        raise InvalidInputError(f"non-finite scalar {x!r}")
    return x


class SquareMatrix:
    """Immutable dense n x n matrix over Fraction (exact) or float (approx)."""

    __slots__ = ("n", "rows", "exact")

    def __init__(self, rows: Iterable[Iterable[Scalar]]):
        mat = tuple(tuple(r) for r in rows)
        n = len(mat)
        if n < 1 or any(len(r) != n for r in mat):
            raise InvalidInputError("entries must form a square matrix")
        exact = all(isinstance(x, (Fraction, int)) for r in mat for x in r)
        if exact:
            mat = tuple(tuple(Fraction(x) for x in r) for r in mat)
        else:
            mat = tuple(tuple(_check_finite(float(x)) for x in r) for r in mat)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "rows", mat)
        object.__setattr__(self, "exact", exact)

    def __setattr__(self, *a):  # pragma: no cover
        raise AttributeError("SquareMatrix is immutable")

    # -- constructors -------------------------------------------------
    @staticmethod
    def diag(values: Sequence[Scalar]) -> "SquareMatrix":
        n = len(values)
        zero = Fraction(0) if all(isinstance(v, (Fraction, int)) for v in values) else 0.0
        return SquareMatrix(
            [[values[i] if i == j else zero for j in range(n)] for i in range(n)]
        )

    @staticmethod
    def identity(n: int, exact: bool = True) -> "SquareMatrix":
        one: Scalar = Fraction(1) if exact else 1.0
        zero: Scalar = Fraction(0) if exact else 0.0
        return SquareMatrix([[one if i == j else zero for j in range(n)] for i in range(n)])

    @staticmethod
    def from_numpy(a: np.ndarray) -> "SquareMatrix":
        return SquareMatrix([[float(x) for x in row] for row in a])

    # -- basic ops ----------------------------------------------------
    def __getitem__(self, ij) -> Scalar:
        i, j = ij
        return self.rows[i][j]

    def __add__(self, other: "SquareMatrix") -> "SquareMatrix":
        self._same_dim(other)
        return SquareMatrix(
            [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(self.rows, other.rows)]
        )

    def __sub__(self, other: "SquareMatrix") -> "SquareMatrix":
        self._same_dim(other)
        return SquareMatrix(
            [[a - b for a, b in zip(ra, rb)] for ra, rb in zip(self.rows, other.rows)]
        )

    def scale(self, c: Scalar) -> "SquareMatrix":
        return SquareMatrix([[c * a for a in r] for r in self.rows])

    def __matmul__(self, other: "SquareMatrix") -> "SquareMatrix":
        self._same_dim(other)
        n = self.n
        cols = list(zip(*other.rows))
        return SquareMatrix(
            [[sum(self.rows[i][k] * cols[j][k] for k in range(n)) for j in range(n)]
             for i in range(n)]
        )

    def transpose(self) -> "SquareMatrix":
        return SquareMatrix(list(zip(*self.rows)))

    def _same_dim(self, other: "SquareMatrix") -> None:
        if self.n != other.n:
            raise InvalidInputError(f"dimension mismatch: {self.n} vs {other.n}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, SquareMatrix) or self.n != other.n:
            return NotImplemented if not isinstance(other, SquareMatrix) else False
        if self.exact and other.exact:
            return self.rows == other.rows
        return self.to_numpy().tolist() == other.to_numpy().tolist()

    def __hash__(self):
        if self.exact:
            return hash(self.rows)
        return hash(tuple(tuple(float(x) for x in r) for r in self.rows))

    def __repr__(self):
        return f"SquareMatrix({[list(r) for r in self.rows]})"

    # -- structure queries --------------------------------------------
    def to_numpy(self) -> np.ndarray:
        return np.array([[float(x) for x in r] for r in self.rows], dtype=float)

    def is_diagonal(self, tol: float = 0.0) -> bool:
        for i in range(self.n):
            for j in range(self.n):
                if i != j and abs(self.rows[i][j]) > tol:
                    return False
        return True

    def diagonal(self) -> tuple:
        return tuple(self.rows[i][i] for i in range(self.n))

    def is_symmetric(self, tol: float = SYM_TOL) -> bool:
        """Exact equality in exact mode, relative tolerance otherwise."""
        if self.exact:
            return self.rows == self.transpose().rows
        scale = max(1.0, self.norm_inf())
        for i in range(self.n):
            for j in range(i + 1, self.n):
                if abs(self.rows[i][j] - self.rows[j][i]) > tol * scale:
                    return False
        return True

    def norm_inf(self) -> float:
        return max(abs(float(x)) for r in self.rows for x in r)

    def symmetrize(self) -> "SquareMatrix":
        t = self.transpose()
        half = Fraction(1, 2) if self.exact else 0.5
        return (self + t).scale(half)

    def rank_exact(self) -> int:
        """Rank over the rationals by fraction-free Gaussian elimination."""
        if not self.exact:
            raise InvalidInputError("rank_exact requires an exact matrix")
        rows = [list(r) for r in self.rows]
        n = self.n
        rank = 0
        col = 0
        while rank < n and col < n:
            piv = next((r for r in range(rank, n) if rows[r][col] != 0), None)
            if piv is None:
                col += 1
                continue
            rows[rank], rows[piv] = rows[piv], rows[rank]
            for r in range(rank + 1, n):
                if rows[r][col] != 0:
                    f = rows[r][col] / rows[rank][col]
                    rows[r] = [a - f * b for a, b in zip(rows[r], rows[rank])]
            rank += 1
            col += 1
        return rank

    def is_psd(self, tol: float = SYM_TOL) -> bool:
        """Positive semidefiniteness; exact LDL^T probe or Jacobi eigenvalues."""
        if not self.is_symmetric():
            return False
        if self.exact:
            return _psd_exact(self)
        eig = jacobi_eigh(self.to_numpy())[0]
        scale = max(1.0, self.norm_inf())
        return bool(eig.min() >= -tol * scale)

    def min_eigenvalue(self) -> float:
        if not self.is_symmetric(1e-9):
            raise InvalidInputError("min_eigenvalue requires a symmetric matrix")
        return float(jacobi_eigh(self.to_numpy())[0].min())

    def operator_norm(self) -> Scalar:
        """|A| = largest singular value; exact for exact diagonal matrices."""
        return sorted_singular_values(self)[-1]


def _psd_exact(a: SquareMatrix) -> bool:
    # LDL^T without pivoting; a zero pivot forces its whole row to vanish.
    n = a.n
    m = [list(r) for r in a.rows]
    for k in range(n):
        if m[k][k] < 0:
            return False
        if m[k][k] == 0:
            if any(m[k][j] != 0 for j in range(k, n)):
                return False
            continue
        for i in range(k + 1, n):
            f = m[i][k] / m[k][k]
            for j in range(k, n):
                m[i][j] -= f * m[k][j]
    return True


# ---------------------------------------------------------------------------
# Jacobi eigendecomposition (symmetric) and singular values
# ---------------------------------------------------------------------------

def jacobi_eigh(a: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = 60):
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Returns (eigenvalues ascending, eigenvector columns).  Deterministic and
    accurate to ~1e-15 at the sizes used here (n <= 6).
    """
    n = a.shape[0]
    m = np.array(a, dtype=float, copy=True)
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += m[p, q] * m[p, q]
        scale = max(1.0, float(np.abs(m).max()))
        if off <= (tol * scale) ** 2 * (n * (n - 1) / 2):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = m[p, q]
                if apq == 0.0:
                    continue
                app, aqq = m[p, p], m[q, q]
                theta = 0.5 * math.atan2(2.0 * apq, aqq - app)
                c, s = math.cos(theta), math.sin(theta)
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                m = rot.T @ m @ rot
                v = v @ rot
    order = np.argsort(np.diag(m), kind="stable")
    return np.diag(m)[order].copy(), v[:, order].copy()


def sorted_singular_values(a: SquareMatrix) -> tuple:
    """Singular values, nondecreasing.

    Exact matrices must be diagonal (the staircase construction never leaves
    the diagonal); the general exact SVD is deliberately not provided, so
    non-diagonal exact input is evaluated in binary64.
    """
    if a.exact:
        if a.is_diagonal():
            return tuple(sorted(abs(x) for x in a.diagonal()))
        fa = a.to_numpy()
    else:
        fa = a.to_numpy()
        if not np.all(np.isfinite(fa)):
            raise InvalidInputError("non-finite entries")
    if a.is_symmetric(1e-9):
        eig = jacobi_eigh(fa)[0]
        return tuple(sorted(abs(float(x)) for x in eig))
    return one_sided_jacobi_sv(fa)


def one_sided_jacobi_sv(a: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = 60) -> tuple:
    """Singular values by one-sided Jacobi: rotate column pairs until the
    implicit A^T A is diagonal.  Small singular values keep full absolute
    accuracy, unlike the explicit Gram-matrix route."""
    m = np.array(a, dtype=float, copy=True)
    n = m.shape[1]
    scale = max(1.0, float(np.abs(m).max()))
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                gamma = float(m[:, p] @ m[:, q])
                off = max(off, abs(gamma))
                if gamma == 0.0:
                    continue
                alpha = float(m[:, p] @ m[:, p])
                beta = float(m[:, q] @ m[:, q])
                theta = 0.5 * math.atan2(2.0 * gamma, beta - alpha)
                c, s = math.cos(theta), math.sin(theta)
                mp = c * m[:, p] - s * m[:, q]
                mq = s * m[:, p] + c * m[:, q]
                m[:, p], m[:, q] = mp, mq
        if off <= (tol * scale) ** 2:
            break
    return tuple(sorted(float(np.linalg.norm(m[:, j])) for j in range(n)))


def rank_one_defect(b: SquareMatrix, c: SquareMatrix) -> Scalar:
    """sigma_{n-1}(B - C); zero iff rank(B - C) <= 1.

    In exact mode the zero test is the exact vanishing of all 2x2 minors.
    """
    b._same_dim(c)
    d = b - c
    if d.exact:
        if _all_2x2_minors_vanish(d):
            return Fraction(0)
        if d.is_diagonal():
            return sorted_singular_values(d)[-2]
        # exact but rank >= 2 and not diagonal: report an indicative float
        return float(sorted_singular_values(SquareMatrix.from_numpy(d.to_numpy()))[-2])
    return sorted_singular_values(d)[-2]


def _all_2x2_minors_vanish(d: SquareMatrix) -> bool:
    n = d.n
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(n):
                for l in range(k + 1, n):
                    if d.rows[i][k] * d.rows[j][l] - d.rows[i][l] * d.rows[j][k] != 0:
                        return False
    return True


# ---------------------------------------------------------------------------
# Rotations
# ---------------------------------------------------------------------------

class Rotation:
    """Element of SO(n), stored as an explicit orthogonal matrix with det 1."""

    __slots__ = ("n", "matrix")

    def __init__(self, matrix: SquareMatrix, tol: float = SYM_TOL):
        q = matrix
        qtq = q.transpose() @ q
        ident = SquareMatrix.identity(q.n, exact=q.exact)
        err = (qtq - ident).norm_inf()
        if err > tol:
            raise InvalidInputError(f"Q^T Q deviates from I by {err:.3e}")
        det = np.linalg.det(q.to_numpy())
        if abs(det - 1.0) > max(tol, 1e-9):
            raise InvalidInputError(f"det Q = {det:.12f}, expected 1")
        object.__setattr__(self, "n", q.n)
        object.__setattr__(self, "matrix", q)

    def __setattr__(self, *a):  # pragma: no cover
        raise AttributeError("Rotation is immutable")

    @staticmethod
    def identity(n: int, exact: bool = True) -> "Rotation":
        return Rotation(SquareMatrix.identity(n, exact=exact))

    @staticmethod
    def planar(n: int, i: int, j: int, angle: float) -> "Rotation":
        m = np.eye(n)
        c, s = math.cos(angle), math.sin(angle)
        m[i, i] = m[j, j] = c
        m[i, j] = -s
        m[j, i] = s
        return Rotation(SquareMatrix.from_numpy(m))

    @staticmethod
    def from_permutation(perm: Sequence[int]) -> "Rotation":
        """Signed permutation in SO(n): one sign flip fixes an odd permutation."""
        n = len(perm)
        rows = [[Fraction(0)] * n for _ in range(n)]
        sign = _permutation_sign(perm)
        for i, p in enumerate(perm):
            rows[p][i] = Fraction(1)
        if sign < 0:
            rows[perm[0]] = [-x for x in rows[perm[0]]]
        return Rotation(SquareMatrix(rows))

    @staticmethod
    def random(n: int, rng: np.random.Generator) -> "Rotation":
        g = rng.normal(size=(n, n))
        q, r = np.linalg.qr(g)
        q = q * np.sign(np.diag(r))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        return Rotation(SquareMatrix.from_numpy(q))

    def apply_to_diag(self, d: Sequence[Scalar]) -> SquareMatrix:
        return conjugate_diag(self, d)


def _permutation_sign(perm: Sequence[int]) -> int:
    seen = [False] * len(perm)
    sign = 1
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def conjugate_diag(q: Rotation, d: Sequence[Scalar]) -> SquareMatrix:
    """Q diag(d) Q^T, symmetrized to absorb last-bit roundoff."""
    if len(d) != q.n:
        raise InvalidInputError("diagonal length does not match rotation dimension")
    dm = SquareMatrix.diag(list(d))
    qm = q.matrix
    if qm.exact and dm.exact:
        return (qm @ dm @ qm.transpose()).symmetrize()
    out = SquareMatrix.from_numpy(
        qm.to_numpy() @ dm.to_numpy() @ qm.to_numpy().T
    )
    return out.symmetrize()
