"""Target-set constants and membership predicates."""

import math
from fractions import Fraction

import numpy as np
import pytest

from laminate_forge.core import InvalidInputError, Rotation, SquareMatrix, conjugate_diag
from laminate_forge.targets import (
    C_bound,
    ConstructionParams,
    DomainError,
    dist_E_a,
    in_E_j,
    min_gap_constant,
    nearest_E_a,
    r_small,
    rho,
)

F = Fraction


def test_rho_paper_values():
    assert rho(2, F(1), 2) == F(3, 16)
    assert rho(1, F(3), 2) == F(1, 8)


def test_rho_halves_in_j():
    for j in range(1, 8):
        assert rho(j + 1, F(5, 2), 3) == rho(j, F(5, 2), 3) / 2


def test_rho_scaling_identity():
    # rho(j, R+1, m) (R+1)^{m-1} = 3 * 2^{-j-2} exactly for R >= 0
    for j in (1, 3, 6):
        for R in (F(1, 2), F(1), F(7, 3), F(5)):
            for m in (2, 3):
                assert rho(j, R + 1, m) * (R + 1) ** (m - 1) == F(3, 2 ** (j + 2))


def test_r_small_derived_value():
    # n=2, m=2, j=1, R=2: the minimum is the 2^{-n}(R+1)^{-m-1} term = 1/108
    assert r_small(1, F(2), 2, 2) == F(1, 216)


def test_r_small_structural_bounds():
    for j in (1, 2, 4):
        for R in (F(2), F(3), F(17, 4)):
            r = r_small(j, R, 2, 3)
            assert r <= rho(j, R, 2) / 6
            assert r < 1
            assert r > 0


def test_r_small_precondition_errors():
    with pytest.raises(DomainError) as err:
        r_small(1, F(1), 2, 2)  # R = 1 <= 1/2 + 1/2
    assert "R - 1/2 - 2^-j" in str(err.value)


def test_min_gap_constant():
    assert min_gap_constant(2) == F(1, 3)
    for m in (3, 4, 5, 6):
        lb = min_gap_constant(m)
        # defining inequality, exactly: lb <= 1 - (2/3)^{1/(m-1)}
        assert 0 < lb and (1 - lb) ** (m - 1) >= F(2, 3)
        assert abs(float(lb) - (1 - (2 / 3) ** (1 / (m - 1)))) < 1e-12


def test_C_bound_single_term_and_value():
    # a0 = a = 0 collapses to W^n
    R = F(2)
    r = r_small(1, R, 2, 2)
    assert C_bound(1, R, 0, 0, 2, 2) == ((R + r) / (R + 1)) ** 2
    assert C_bound(1, R, 0, 0, 2, 2) == F(433, 648) ** 2


def test_C_bound_nonnegative_all_indices():
    for (n, m) in [(3, 2), (4, 2), (4, 3)]:
        for a0 in range(0, n - m + 1):
            for a in range(0, n - m + 1):
                assert C_bound(2, F(3), a0, a, m, n) >= 0


def test_C_bound_index_errors():
    with pytest.raises(DomainError):
        C_bound(1, F(2), 1, 0, 2, 2)


def test_in_E_j_examples():
    assert in_E_j(SquareMatrix.diag([F(1, 16), F(1)]), 3, 2)
    assert not in_E_j(SquareMatrix.identity(2), 3, 2)
    assert not in_E_j(SquareMatrix.diag([F(0), F(1)]), 3, 2)


def test_in_E_j_rejects_non_psd():
    with pytest.raises(InvalidInputError):
        in_E_j(SquareMatrix.diag([F(-1), F(1)]), 3, 2)
    with pytest.raises(InvalidInputError):
        in_E_j(SquareMatrix([[0.0, 1.0], [0.0, 0.0]]), 3, 2)


def test_in_E_j_float_agrees_with_exact():
    a = SquareMatrix.diag([F(1, 16), F(1)])
    b = SquareMatrix.diag([1 / 16, 1.0])
    assert in_E_j(a, 3, 2) == in_E_j(b, 3, 2)


def test_dist_E_a_membership_cases():
    R = F(2)
    assert dist_E_a(SquareMatrix.identity(2).scale(R), 2, R, 0, 2) == 0
    rho_val = rho(2, R, 2)
    rng = np.random.default_rng(1)
    for _ in range(10):
        q = Rotation.random(2, rng)
        a = conjugate_diag(q, [float(rho_val), float(R)])
        assert dist_E_a(a, 2, float(R), 1, 2) <= 1e-12


def test_dist_E_a_eigenvalue_perturbation():
    R = F(2)
    rho_val = rho(2, R, 2)
    for eps in (F(1, 1000), F(1, 50)):
        a = SquareMatrix.diag([rho_val + eps, R])
        assert dist_E_a(a, 2, R, 1, 2) == eps


def test_dist_E_a_disjointness_margin():
    # dist to two different step sets sums to at least R - rho > 2 r_small
    j, m, n = 2, 2, 3
    R = F(3)
    r = r_small(j, R, m, n)
    rng = np.random.default_rng(8)
    for _ in range(200):
        spec = sorted(rng.uniform(0.01, float(R) + 0.5, size=n))
        a = SquareMatrix.diag([F(x).limit_denominator(10**6) for x in spec])
        d0 = dist_E_a(a, j, R, 0, m)
        d1 = dist_E_a(a, j, R, 1, m)
        assert d0 + d1 >= R - rho(j, R, m)
        assert R - rho(j, R, m) > 2 * r


def test_lamlem_derived_preconditions_hold_near_E_a():
    # inside the r_small neighbourhood of E^{a0}_{j,R}: sigma_n < R+1,
    # rho(j,R+1) < sigma_1, and the rho(j,R+1)-band condition
    rng = np.random.default_rng(42)
    trials = 0
    while trials < 1000:
        n = int(rng.integers(2, 5))
        m = int(rng.integers(2, n + 1))
        j = int(rng.integers(1, 7))
        R = F(int(rng.integers(2, 9))) / 2
        try:
            r = r_small(j, R, m, n)
        except DomainError:
            continue
        a0 = int(rng.integers(0, n - m + 1))
        rho_R = rho(j, R, m)
        targets = [rho_R] * a0 + [R] * (n - a0)
        bump = (rng.uniform(-0.9, 0.9, size=n) * float(r)).tolist()
        spec = sorted(F(t) + F(b).limit_denominator(10**9) for t, b in zip(targets, bump))
        if any(s <= 0 for s in spec):
            continue
        a = SquareMatrix.diag(spec)
        if dist_E_a(a, j, R, a0, m) >= r:
            continue
        trials += 1
        sigma = sorted(spec)
        rho_R1 = rho(j, R + 1, m)
        assert sigma[-1] < R + 1
        assert rho_R1 < sigma[0]
        val = rho_R1 * max(F(1), sigma[-1] ** (m - 1))
        assert F(1, 2 ** (j + m)) < val < F(1, 2 ** j)


def test_nearest_E_a_picks_unique_set():
    R = F(3)
    a = SquareMatrix.diag([rho(2, R, 2), R, R])
    idx, dist = nearest_E_a(a, 2, R, 2, 1)
    assert idx == 1 and dist == 0


def test_construction_params_validation():
    ConstructionParams(3, 2, 2, F(3), 1).validate()
    with pytest.raises(DomainError):
        ConstructionParams(3, 2, 2, F(3), 2).validate()
    with pytest.raises(DomainError):
        ConstructionParams(2, 2, 1, F(1)).validate()
