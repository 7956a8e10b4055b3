"""Exact staircase laminates on scaled coordinate-plane identities.

Level-k support classes: S(i, k) holds k*diag(v) with v in {0,1}^n of rank
n-i (0 <= i <= n-m), E holds everything of rank < m.  Splitting an S-matrix
walks its k-1 entries one coordinate at a time, sending each to {0, k} with
weights {1/k, (k-1)/k}; matrices that fall into E freeze.  Everything here is
exact rational arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import List, Optional

from .core import SquareMatrix
from .measures import (
    Atom,
    DiscreteMatrixMeasure,
    Split,
    SplitTree,
    barycenter,
    compose,
    merge_atoms,
    tail,
)

MAX_LEVEL = 12
THETA_PRODUCT_TERMS = 10 ** 6


class StaircaseError(ValueError):
    pass


@dataclass(frozen=True)
class StairParams:
    n: int
    m: int
    K: int = 1

    def __post_init__(self):
        if not (2 <= self.m <= self.n <= 6):
            raise StaircaseError(f"need 2 <= m <= n <= 6, got n={self.n}, m={self.m}")
        if not (1 <= self.K <= MAX_LEVEL):
            raise StaircaseError(f"need 1 <= K <= {MAX_LEVEL} (exact-arithmetic size guard)")


@dataclass(frozen=True)
class SupportClass:
    kind: str  # "S" | "E" | "none"
    i: Optional[int] = None
    k: Optional[int] = None

    @staticmethod
    def S(i: int, k: int) -> "SupportClass":
        return SupportClass("S", i, k)

    @staticmethod
    def E() -> "SupportClass":
        return SupportClass("E")

    @staticmethod
    def none() -> "SupportClass":
        return SupportClass("none")

    def __str__(self):
        if self.kind == "S":
            return f"S({self.i},{self.k})"
        return self.kind


def classify(a: SquareMatrix, k: int, p: StairParams) -> SupportClass:
    """Exact membership in S(i, k), E, or neither."""
    if not a.exact:
        raise StaircaseError("classify requires exact arithmetic")
    if a.n != p.n:
        raise StaircaseError("dimension mismatch with parameters")
    rank = a.rank_exact()
    if rank < p.m:
        return SupportClass.E()
    if a.is_diagonal():
        diag = a.diagonal()
        if all(x == 0 or x == k for x in diag):
            i = p.n - rank
            if 0 <= i <= p.n - p.m and all(x in (0, k) for x in diag):
                return SupportClass.S(i, k)
    return SupportClass.none()


def split_S_matrix(a: SquareMatrix, k: int, p: StairParams) -> DiscreteMatrixMeasure:
    """Level k-1 -> k split of one S-matrix, as a certified laminate.

    Every coordinate holding k-1 is split, ascending, into 0 (weight 1/k)
    and k (weight (k-1)/k); nodes entering E stop splitting.
    """
    cls = classify(a, k - 1, p)
    if cls.kind != "S":
        raise StaircaseError(f"matrix is {cls}, not an S-matrix at level {k - 1}")
    i = cls.i
    n = p.n
    coords = [alpha for alpha in range(n) if a.rows[alpha][alpha] == k - 1]
    nodes: List[SquareMatrix] = [a]
    splits: List[Split] = []
    frontier = [0]  # indices of nodes still eligible for splitting
    for alpha in coords:
        next_frontier = []
        for idx in frontier:
            mat = nodes[idx]
            if mat.rank_exact() < p.m:
                continue  # frozen in E
            d = list(mat.diagonal())
            d_low, d_high = list(d), list(d)
            d_low[alpha] = Fraction(0)
            d_high[alpha] = Fraction(k)
            low = SquareMatrix.diag(d_low)
            high = SquareMatrix.diag(d_high)
            nodes.append(low)
            nodes.append(high)
            b, c = len(nodes) - 2, len(nodes) - 1
            splits.append(Split(idx, b, c, Fraction(1, k)))
            next_frontier.extend([b, c])
        # frozen nodes stay leaves; only fresh children continue
        frontier = next_frontier
    tree = SplitTree(tuple(nodes), tuple(splits))
    atoms = merge_atoms(
        [(nodes[idx], w) for idx, w in tree.leaf_weights().items()], exact=True
    )
    nu = DiscreteMatrixMeasure(atoms, tree, "rational")
    _check_split_postconditions(nu, a, i, k, p)
    return nu


def _check_split_postconditions(nu, a, i, k, p):
    if barycenter(nu).rows != a.rows:
        raise StaircaseError("split lost the barycenter")
    if len(nu.atoms) > 2 ** (p.n - i):
        raise StaircaseError("atom count exceeds 2^(n-i)")
    for atom in nu.atoms:
        cls = classify(atom.matrix, k, p)
        if cls.kind == "S":
            expected = Fraction((k - 1) ** (p.n - cls.i), k ** (p.n - i))
            if atom.weight != expected:
                raise StaircaseError(
                    f"S({cls.i},{k}) atom has weight {atom.weight}, expected {expected}"
                )
            if cls.i < i:
                raise StaircaseError("split escaped below starting rank class")
        elif cls.kind != "E":
            raise StaircaseError(f"atom outside the S/E support: {atom.matrix}")


def staircase_sequence(p: StairParams) -> List[DiscreteMatrixMeasure]:
    """nu_1 = delta_I, then one full split per level up to K."""
    nu = DiscreteMatrixMeasure.dirac(SquareMatrix.identity(p.n))
    seq = [nu]
    for k in range(2, p.K + 1):
        outer = []
        for atom in nu.atoms:
            if classify(atom.matrix, k - 1, p).kind == "S":
                outer.append((atom.weight, split_S_matrix(atom.matrix, k, p)))
            else:
                outer.append((atom.weight, DiscreteMatrixMeasure.dirac(atom.matrix)))
        nu = compose(outer, base=nu)
        seq.append(nu)
    return seq


def C_k(k: int, n: int) -> Fraction:
    """prod_{j=1}^{k-1} (1 + 2^n j^-2); empty product at k = 1."""
    if k < 1:
        raise StaircaseError("k must be >= 1")
    out = Fraction(1)
    for j in range(1, k):
        out *= 1 + Fraction(2 ** n, j * j)
    return out


@lru_cache(maxsize=None)
def _product_upper(n: int, terms: int = THETA_PRODUCT_TERMS, bits: int = 80) -> Fraction:
    """Certified upper bound on prod_{j>=1} (1 + 2^n j^-2).

    Partial product with upward-rounded fixed-point arithmetic, then the tail
    is dominated by exp(2^n sum_{j>terms} j^-2) <= exp(2^n/terms)
    <= 1/(1 - 2^n/terms).
    """
    c = 2 ** n
    scale = 1 << bits
    num = scale
    for j in range(1, terms + 1):
        jj = j * j
        num = -(-(num * (jj + c)) // jj)  # ceil division keeps the bound upper
    partial = Fraction(num, scale)
    tail_factor = Fraction(1, 1) / (1 - Fraction(c, terms))
    return partial * tail_factor


def theta_upper(n: int, m: int) -> Fraction:
    """Certified upper bound Theta for the staircase tail constant."""
    return Fraction(2 ** m) * (n - m + 1) * _product_upper(n)


@dataclass
class BoundRecord:
    kind: str  # "S-bound" | "tail"
    k: int
    index: Fraction  # i for S-bounds, t for tail bounds
    lhs: Fraction
    rhs: Fraction

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs

    def to_dict(self):
        return {
            "kind": self.kind,
            "k": self.k,
            "i_or_t": int(self.index) if self.index == int(self.index) else str(self.index),
            "lhs": f"{self.lhs.numerator}/{self.lhs.denominator}",
            "rhs": f"{self.rhs.numerator}/{self.rhs.denominator}",
            "pass": self.passed,
        }


@dataclass
class StaircaseBoundsReport:
    records: list
    empirical_tail_max: Fraction

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def violations(self):
        return [r for r in self.records if not r.passed]

    def to_dict(self):
        return {
            "pass": self.passed,
            "records": [r.to_dict() for r in self.records],
            "empirical_tail_max": float(self.empirical_tail_max),
        }


def verify_staircase_bounds(seq, p: StairParams) -> StaircaseBoundsReport:
    """Exact rational comparison of the per-class and tail bounds.

    For every level k: nu_k(S(i,k)) <= C_k k^{i-n} for each class i, and
    t^m tail(t) <= Theta for integer thresholds t in [1, k].
    """
    theta = theta_upper(p.n, p.m)
    records = []
    emp_max = Fraction(0)
    for idx, nu in enumerate(seq):
        k = idx + 1
        if not nu.exact:
            raise StaircaseError("verification requires the exact sequence")
        for i in range(0, p.n - p.m + 1):
            mass = nu.mass(lambda mat, i=i, k=k: classify(mat, k, p) == SupportClass.S(i, k))
            rhs = C_k(k, p.n) * Fraction(k ** i, k ** p.n)
            records.append(BoundRecord("S-bound", k, Fraction(i), Fraction(mass), rhs))
        profile = tail(nu, list(range(1, k + 1)))
        for t, mass in profile.points:
            lhs = Fraction(t) ** p.m * Fraction(mass)
            emp_max = max(emp_max, lhs)
            records.append(BoundRecord("tail", k, Fraction(t), lhs, theta))
    return StaircaseBoundsReport(records, emp_max)
