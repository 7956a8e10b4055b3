"""The three rank-one splitting constructions.

All three walk the same finite binary induction: fix the eigenbasis of the
input once, then split coordinate ell = 1..n, sending each eigenvalue to a
low level or a high level with barycentric weights, freezing any node that
has already landed in the open target set.  Since every move changes a
single eigenvalue in a fixed basis, all splits are rank-one by construction.

Exact rational arithmetic is used whenever the input is an exact diagonal
matrix (the eigenbasis is then a permutation); otherwise binary64 with a
Jacobi eigendecomposition.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Tuple

import numpy as np

from .core import (
    InvalidInputError,
    Rotation,
    SquareMatrix,
    conjugate_diag,
    jacobi_eigh,
)
from .measures import (
    DiscreteMatrixMeasure,
    Split,
    SplitTree,
    barycenter,
    certify_laminate,
    merge_atoms,
)
from .targets import (
    DomainError,
    C_bound,
    dist_E_a,
    in_E_j,
    r_small,
    rho,
    uvw_factors,
)

BARYCENTER_TOL = 1e-12
MASS_TOL = 1e-9

#: concrete witness scale for the seed construction ("comparable to |I|")
SEED_LEVEL = Fraction(2)


class LaminationError(ValueError):
    pass


@dataclass(frozen=True)
class LeafInfo:
    matrix: SquareMatrix
    weight: object
    level: int          # induction level at which the node became a leaf
    beta: int           # low entries among the first min(a0, level) coordinates
    gamma: int          # low entries among coordinates a0+1..level
    in_target: bool     # frozen in the open set E_j (resp. E_{j+m}, E_{j1})
    a_index: Optional[int]  # step-set index for non-frozen leaves


@dataclass(frozen=True)
class SplitRecord:
    measure: DiscreteMatrixMeasure
    leaves: Tuple[LeafInfo, ...]
    basis: Rotation
    sigma: tuple
    low_level: object
    high_level: object


def _eigenbasis(a: SquareMatrix):
    """(sigma ascending, rotation Q with A = Q diag(sigma) Q^T).

    Ties are broken by ascending-order stable sort; exact diagonal input
    keeps exact arithmetic through a signed permutation.
    """
    if not a.is_symmetric(1e-9):
        raise InvalidInputError("input must be symmetric")
    if a.exact and a.is_diagonal():
        d = a.diagonal()
        order = sorted(range(a.n), key=lambda i: d[i])
        q = Rotation.from_permutation([order.index(i) for i in range(a.n)])
        sigma = tuple(d[i] for i in order)
        if any(s < 0 for s in sigma):
            raise InvalidInputError("input must be positive semidefinite")
        return sigma, q
    eig, vec = jacobi_eigh(a.to_numpy())
    scale = max(1.0, a.norm_inf())
    if eig.min() < -1e-10 * scale:
        raise InvalidInputError("input must be positive semidefinite")
    if np.linalg.det(vec) < 0:
        vec = vec.copy()
        vec[:, 0] = -vec[:, 0]
    sigma = tuple(max(float(x), 0.0) for x in eig)
    return sigma, Rotation(SquareMatrix.from_numpy(vec), tol=1e-9)


def _entries_in_E_j(entries, j: int, m: int, exact: bool) -> bool:
    sig = sorted(entries)
    n = len(sig)
    half = Fraction(1, 2) if exact else 0.5
    two_j = Fraction(1, 2 ** j) if exact else 2.0 ** (-j)
    two_jm = Fraction(1, 2 ** (j + m)) if exact else 2.0 ** (-(j + m))
    top = sig[-1]
    if top <= half + two_j:
        return False
    one = Fraction(1) if exact else 1.0
    factor = max(one, top ** (m - 1))
    return all(two_jm < sig[i] * factor < two_j for i in range(n - m + 1))


def _binary_induction(sigma, q, low, high, freeze_j, m, a0, exact):
    """Shared ell-induction; returns (SplitTree, leaves metadata)."""
    n = len(sigma)
    one = Fraction(1) if exact else 1.0

    def matrix_of(entries):
        return conjugate_diag(q, list(entries))

    nodes: List[SquareMatrix] = [matrix_of(sigma)]
    splits: List[Split] = []
    # frontier items: (node_index, entries, weight, beta, gamma)
    frontier = [(0, tuple(sigma), one, 0, 0)]
    leaves: List[LeafInfo] = []
    for ell in range(n):
        nxt = []
        for idx, entries, w, beta, gamma in frontier:
            if freeze_j is not None and _entries_in_E_j(entries, freeze_j, m, exact):
                leaves.append(LeafInfo(nodes[idx], w, ell, beta, gamma, True, None))
                continue
            s = entries[ell]
            w_low = (high - s) / (high - low)
            w_high = (s - low) / (high - low)
            if w_low < 0 or w_high < 0:
                raise LaminationError(
                    f"negative split weight at level {ell}: sigma={s}, levels=({low},{high})"
                )
            is_low_coord = ell < a0
            if w_high == 0:
                # entry already at the low level
                entries = entries[:ell] + (low,) + entries[ell + 1:]
                nb, ng = (beta + 1, gamma) if is_low_coord else (beta, gamma + 1)
                nxt.append((idx, entries, w, nb, ng))
                continue
            if w_low == 0:
                entries = entries[:ell] + (high,) + entries[ell + 1:]
                nxt.append((idx, entries, w, beta, gamma))
                continue
            e_low = entries[:ell] + (low,) + entries[ell + 1:]
            e_high = entries[:ell] + (high,) + entries[ell + 1:]
            nodes.append(matrix_of(e_low))
            nodes.append(matrix_of(e_high))
            b, c = len(nodes) - 2, len(nodes) - 1
            splits.append(Split(idx, b, c, w_low))
            nb, ng = (beta + 1, gamma) if is_low_coord else (beta, gamma + 1)
            nxt.append((b, e_low, w * w_low, nb, ng))
            nxt.append((c, e_high, w * w_high, beta, gamma))
        frontier = nxt
    for idx, entries, w, beta, gamma in frontier:
        frozen = freeze_j is not None and _entries_in_E_j(entries, freeze_j, m, exact)
        a_index = None if frozen else sum(1 for x in entries if x == low)
        leaves.append(LeafInfo(nodes[idx], w, n, beta, gamma, frozen, a_index))
    return SplitTree(tuple(nodes), tuple(splits)), tuple(leaves)


def _build_measure(tree, leaves, exact) -> DiscreteMatrixMeasure:
    atoms = merge_atoms([(l.matrix, l.weight) for l in leaves], exact)
    return DiscreteMatrixMeasure(atoms, tree, "rational" if exact else "float64")


# ---------------------------------------------------------------------------
# E^{a0}_{j,R} neighbourhood -> E^a_{j,R+1} U E_j
# ---------------------------------------------------------------------------

def lamlem_split_detailed(a: SquareMatrix, j: int, R, a0: int, m: int) -> SplitRecord:
    n = a.n
    if not (0 <= a0 <= n - m):
        raise DomainError(f"a0={a0} outside [0, {n - m}]")
    if rho(j, R, m) >= R:
        raise DomainError("rho(j,R) must stay below R")
    r = r_small(j, R, m, n)
    d = dist_E_a(a, j, R, a0, m)
    if not d < r:
        raise DomainError(
            f"dist to E^{a0}_{{j={j},R={R}}} is {float(d):.6g}, not below r_small={float(r):.6g}"
        )
    sigma, q = _eigenbasis(a)
    exact = a.exact and a.is_diagonal() and isinstance(R, (int, Fraction))
    if not exact:
        sigma = tuple(float(x) for x in sigma)
        R = float(R)
    low = rho(j, R + 1, m)
    high = R + 1
    if sigma[-1] >= high:
        raise LaminationError("top eigenvalue not below R+1; input too far from the step set")
    tree, leaves = _binary_induction(sigma, q, low, high, j, m, a0, exact)
    nu = _build_measure(tree, leaves, exact)
    _check_lamlem_post(nu, leaves, a, j, R, a0, m, exact)
    return SplitRecord(nu, leaves, q, sigma, low, high)


def lamlem_split(a: SquareMatrix, j: int, R, a0: int, m: int) -> DiscreteMatrixMeasure:
    """Certified laminate moving a matrix near E^{a0}_{j,R} into
    (union_a E^a_{j,R+1}) U E_j, with at most 2^n atoms of norm <= R+1."""
    return lamlem_split_detailed(a, j, R, a0, m).measure


def _check_lamlem_post(nu, leaves, a, j, R, a0, m, exact):
    bar = barycenter(nu)
    gap = (bar - a).norm_inf()
    scale = max(1.0, a.norm_inf())
    if exact:
        if gap != 0:
            raise LaminationError("exact barycenter mismatch")
    elif gap > BARYCENTER_TOL * scale:
        raise LaminationError(f"barycenter drifted by {gap:.3e}")
    if len(nu.atoms) > 2 ** a.n:
        raise LaminationError("more than 2^n atoms")
    u, v, w = uvw_factors(j, R, m, a.n)
    tol = 0 if exact else 1e-12
    for leaf in leaves:
        cap = min(a0, leaf.level)
        bound = (
            u ** (cap - leaf.beta)
            * v ** leaf.gamma
            * w ** max(0, leaf.level - a0 - leaf.gamma)
        )
        if leaf.weight > bound + tol:
            raise LaminationError(
                f"leaf weight {leaf.weight} exceeds U^b V^g W^h bound {bound}"
            )


def lamlem_step_masses(record: SplitRecord, j: int, R, a0: int, m: int):
    """Observed mass per step set vs its C(j,R,a0,a) cap."""
    n = record.measure.n
    out = []
    for a_idx in range(0, n - m + 1):
        zero = Fraction(0) if record.measure.exact else 0.0
        mass = sum((l.weight for l in record.leaves if l.a_index == a_idx), zero)
        out.append((a_idx, mass, C_bound(j, R, a0, a_idx, m, n)))
    return out


# ---------------------------------------------------------------------------
# E_j -> E_{j+m} U step sets at scale |A|
# ---------------------------------------------------------------------------

def bridge_split_detailed(a: SquareMatrix, j: int, m: int) -> tuple:
    if not in_E_j(a, j, m):
        raise DomainError(f"input not in E_{j}")
    sigma, q = _eigenbasis(a)
    exact = a.exact and a.is_diagonal()
    if not exact:
        sigma = tuple(float(x) for x in sigma)
    top = sigma[-1]
    low = rho(j + m, top, m)
    tree, leaves = _binary_induction(sigma, q, low, top, j + m, m, 0, exact)
    nu = _build_measure(tree, leaves, exact)
    # principal atom: the all-low branch frozen at level n-m+1
    nmp1 = a.n - m + 1
    p1_entries = tuple(low if i < nmp1 else sigma[i] for i in range(a.n))
    p1 = conjugate_diag(q, list(p1_entries))
    lam1 = None
    for atom in nu.atoms:
        gap = (atom.matrix - p1).norm_inf()
        if (exact and gap == 0) or (not exact and gap <= 1e-9):
            p1, lam1 = atom.matrix, atom.weight
            break
    if lam1 is None:
        raise LaminationError("principal atom missing from the split")
    _check_bridge_post(nu, p1, lam1, a, j, m, exact)
    return nu, p1, lam1, SplitRecord(nu, leaves, q, sigma, low, top)


def bridge_split(a: SquareMatrix, j: int, m: int):
    """Certified laminate from A in E_j into E_{j+m} and the step sets at
    scale |A|; returns (measure, principal atom P1, its weight lambda1)."""
    nu, p1, lam1, _ = bridge_split_detailed(a, j, m)
    return nu, p1, lam1


def _check_bridge_post(nu, p1, lam1, a, j, m, exact):
    norm_a = a.operator_norm()
    gap = (a - p1).operator_norm()
    two_j = Fraction(1, 2 ** j) if exact else 2.0 ** (-j)
    if not gap < two_j:
        raise LaminationError(f"|A - P1| = {float(gap):.6g} not below 2^-{j}")
    tolerance = 0 if exact else 1e-12 * float(norm_a)
    for atom in nu.atoms:
        if abs(atom.matrix.operator_norm() - norm_a) > tolerance:
            raise LaminationError("an atom changed the top singular value")
    one = Fraction(1) if exact else 1.0
    u = two_j / (norm_a * max(one, norm_a ** (m - 1)))
    cap = (a.n - m + 1) * u
    if (one - lam1) > cap + (0 if exact else MASS_TOL):
        raise LaminationError(f"1 - lambda1 = {float(one - lam1):.6g} exceeds (n-m+1)u = {float(cap):.6g}")


# ---------------------------------------------------------------------------
# Seed: identity -> E_{j1} U step sets at level 2
# ---------------------------------------------------------------------------

def seed_split(n: int, m: int, j1: int) -> DiscreteMatrixMeasure:
    """Certified laminate with barycenter I and atoms in E_{j1} or
    E^a_{j1,2}; all atom norms lie in {1, 2} (the [1/2, 2] witness).

    Requires j1 >= 2: membership in E_1 demands norm above 1, which the
    norm-1 freeze path of this construction cannot reach.
    """
    if j1 < 2:
        raise DomainError("seed construction needs j1 >= 2")
    if not (2 <= m <= n <= 6):
        raise DomainError("need 2 <= m <= n <= 6")
    sigma = tuple(Fraction(1) for _ in range(n))
    q = Rotation.identity(n)
    low = rho(j1, SEED_LEVEL, m)
    tree, leaves = _binary_induction(sigma, q, low, SEED_LEVEL, j1, m, 0, True)
    nu = _build_measure(tree, leaves, True)
    if barycenter(nu) != SquareMatrix.identity(n):
        raise LaminationError("seed lost the identity barycenter")
    for atom in nu.atoms:
        nm = atom.matrix.operator_norm()
        if not (Fraction(1, 2) <= nm <= 2):
            raise LaminationError(f"seed atom norm {nm} outside [1/2, 2]")
    if not certify_laminate(nu).passed:
        raise LaminationError("seed certificate failed")
    return nu


def search_admissible_seed_index(n: int, m: int, j_max: int = 12) -> Optional[int]:
    """Diagnostic scan for the smallest workable seed index.

    The existential constants behind the paper-style choice are not pinned;
    this simply reports the first j1 whose seed splits cleanly and whose
    step atoms admit positive admissibility radii at scale 2.
    """
    for j1 in range(2, j_max + 1):
        try:
            nu = seed_split(n, m, j1)
            r_small(j1, SEED_LEVEL, m, n)
        except (DomainError, LaminationError):
            continue
        if certify_laminate(nu).passed:
            return j1
    return None
