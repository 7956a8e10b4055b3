"""Splitting lemmas: hand-traced exact cases plus randomized suites."""

from fractions import Fraction

import numpy as np
import pytest

from laminate_forge.core import SquareMatrix
from laminate_forge.measures import barycenter, certify_laminate
from laminate_forge.lamination import (
    LaminationError,
    bridge_split,
    bridge_split_detailed,
    lamlem_split,
    lamlem_split_detailed,
    lamlem_step_masses,
    search_admissible_seed_index,
    seed_split,
)
from laminate_forge.targets import C_bound, DomainError, dist_E_a, in_E_j, rho, r_small

from conftest import random_E_j_member, random_lamlem_input

F = Fraction


def atoms_by_diag(nu):
    return {a.matrix.diagonal(): a.weight for a in nu.atoms}


# -- lamlem ------------------------------------------------------------------

def test_lamlem_exact_trace_at_2I():
    a = SquareMatrix.identity(2).scale(F(2))
    rec = lamlem_split_detailed(a, 1, F(2), 0, 2)
    nu = rec.measure
    assert nu.exact
    assert barycenter(nu) == a
    assert certify_laminate(nu).passed
    got = atoms_by_diag(nu)
    lo = rho(1, F(3), 2)  # 1/8
    assert lo == F(1, 8)
    assert got == {
        (lo, F(2)): F(8, 23),
        (F(3), lo): F(120, 529),
        (F(3), F(3)): F(225, 529),
    }
    # every atom: inside E_1 or with eigenvalues in {rho(1,3), 3}
    for atom in nu.atoms:
        assert in_E_j(atom.matrix, 1, 2) or set(atom.matrix.diagonal()) <= {lo, F(3)}


def test_lamlem_E0_mass_bound_exact():
    a = SquareMatrix.identity(2).scale(F(2))
    rec = lamlem_split_detailed(a, 1, F(2), 0, 2)
    masses = dict((idx, (mass, cap)) for idx, mass, cap in lamlem_step_masses(rec, 1, F(2), 0, 2))
    mass, cap = masses[0]
    assert mass == F(225, 529)
    assert cap == F(433, 648) ** 2
    assert mass <= cap


def test_lamlem_rejects_far_input():
    a = SquareMatrix.identity(2)
    with pytest.raises(DomainError) as err:
        lamlem_split(a, 1, F(2), 0, 2)
    assert "r_small" in str(err.value)


def test_lamlem_random_suite(rng):
    for _ in range(100):
        a, j, R, a0, m, n = random_lamlem_input(rng)
        rec = lamlem_split_detailed(a, j, R, a0, m)
        nu = rec.measure
        assert certify_laminate(nu).passed
        gap = (barycenter(nu) - a).norm_inf()
        assert gap <= 1e-9 * max(1.0, a.norm_inf())
        # each atom lands in E_j or exactly one step set at scale R+1
        for leaf in rec.leaves:
            if leaf.in_target:
                assert in_E_j(leaf.matrix, j, m)
            else:
                dists = [
                    float(dist_E_a(leaf.matrix, j, R + 1, idx, m))
                    for idx in range(0, n - m + 1)
                ]
                assert sum(1 for d in dists if d <= 1e-9) == 1
                assert leaf.a_index == int(np.argmin(dists))
        for a_idx, mass, cap in lamlem_step_masses(rec, j, R, a0, m):
            assert mass <= cap + 1e-9
        assert max(at.matrix.operator_norm() for at in nu.atoms) <= R + 1 + 1e-12
        assert len(nu.atoms) <= 2 ** n


def test_lamlem_barycenter_100_random(rng):
    for _ in range(100):
        a, j, R, a0, m, n = random_lamlem_input(rng, n_max=3)
        nu = lamlem_split(a, j, R, a0, m)
        assert (barycenter(nu) - a).norm_inf() <= 1e-9 * max(1.0, a.norm_inf())


def test_lamlem_atom_exclusivity_margin(rng):
    # no atom sits within r_small of two different step sets
    for _ in range(25):
        a, j, R, a0, m, n = random_lamlem_input(rng)
        rec = lamlem_split_detailed(a, j, R, a0, m)
        r_next = r_small(j, Fraction(R).limit_denominator(10**9) + 1, m, n)
        for leaf in rec.leaves:
            close = [
                idx
                for idx in range(0, n - m + 1)
                if float(dist_E_a(leaf.matrix, j, R + 1, idx, m)) < float(r_next)
            ]
            assert len(close) <= 1


# -- bridge ------------------------------------------------------------------

def test_bridge_hand_trace_exact():
    a = SquareMatrix.diag([F(1, 16), F(1)])
    nu, p1, lam1 = bridge_split(a, 3, 2)
    assert nu.exact
    assert lam1 == F(24, 25)
    assert p1 == SquareMatrix.diag([F(3, 128), F(1)])
    got = atoms_by_diag(nu)
    assert got == {(F(3, 128), F(1)): F(24, 25), (F(1), F(1)): F(1, 25)}
    assert (a - p1).operator_norm() == F(5, 128)
    assert F(5, 128) < F(1, 8)
    # both atoms keep the top singular value
    for atom in nu.atoms:
        assert atom.matrix.operator_norm() == 1
    assert 1 - lam1 == F(1, 25)
    assert F(1, 25) <= F(1, 8)


def test_bridge_principal_atom_in_deeper_band():
    a = SquareMatrix.diag([F(1, 16), F(1)])
    _, p1, _ = bridge_split(a, 3, 2)
    assert in_E_j(p1, 5, 2)


def test_bridge_rejects_outside_E_j():
    with pytest.raises(DomainError):
        bridge_split(SquareMatrix.identity(2), 3, 2)


def test_bridge_random_suite(rng):
    for _ in range(100):
        a, j, m, n = random_E_j_member(rng)
        nu, p1, lam1 = bridge_split(a, j, m)
        norm_a = float(a.operator_norm())
        assert certify_laminate(nu).passed
        assert float((a - p1).operator_norm()) < 2.0 ** (-j)
        for atom in nu.atoms:
            assert abs(float(atom.matrix.operator_norm()) - norm_a) <= 1e-12 * norm_a
        u = 2.0 ** (-j) / (norm_a * max(1.0, norm_a ** (m - 1)))
        assert (1 - float(lam1)) * 2.0 ** j * norm_a * max(1.0, norm_a ** (m - 1)) <= (
            n - m + 1
        ) + 1e-9
        assert in_E_j(p1, j + m, m)


def test_bridge_preserves_eigenbasis(rng):
    # the rotation diagonalizing A diagonalizes every atom
    for _ in range(20):
        a, j, m, n = random_E_j_member(rng)
        nu, _, _, rec = bridge_split_detailed(a, j, m)
        q = rec.basis.matrix.to_numpy()
        for atom in nu.atoms:
            d = q.T @ atom.matrix.to_numpy() @ q
            off = d - np.diag(np.diag(d))
            assert np.abs(off).max() <= 1e-9


# -- seed --------------------------------------------------------------------

def test_seed_exact_small_case():
    nu = seed_split(2, 2, 3)
    assert nu.exact
    assert barycenter(nu) == SquareMatrix.identity(2)
    lo = rho(3, F(2), 2)
    got = atoms_by_diag(nu)
    assert got == {
        (lo, F(1)): F(64, 125),
        (F(2), lo): F(61, 125) * F(64, 125),
        (F(2), F(2)): F(61, 125) ** 2,
    }
    for atom in nu.atoms:
        assert in_E_j(atom.matrix, 3, 2) or set(atom.matrix.diagonal()) <= {lo, F(2)}


@pytest.mark.parametrize("n,m,j1", [(2, 2, 2), (3, 2, 4), (3, 3, 3), (4, 2, 5), (4, 4, 2)])
def test_seed_postconditions(n, m, j1):
    nu = seed_split(n, m, j1)
    assert barycenter(nu) == SquareMatrix.identity(n)
    assert len(nu.atoms) <= 2 ** n
    assert certify_laminate(nu).passed
    lo = rho(j1, F(2), m)
    for atom in nu.atoms:
        nm = atom.matrix.operator_norm()
        assert F(1, 2) <= nm <= 2
        if not in_E_j(atom.matrix, j1, m):
            diag = atom.matrix.diagonal()
            assert set(diag) <= {lo, F(2)}
            assert sum(1 for x in diag if x == lo) <= n - m


def test_seed_rejects_j1_one():
    with pytest.raises(DomainError):
        seed_split(2, 2, 1)


def test_seed_search_diagnostic():
    assert search_admissible_seed_index(2, 2) == 2
    assert search_admissible_seed_index(3, 2) in (2, 3, 4)
