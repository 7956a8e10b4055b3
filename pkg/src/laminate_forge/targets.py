"""Quantitative target sets and constants for the splitting lemmas.

E_j pinches the n-m+1 smallest singular values into the band
(2^{-j-m}, 2^{-j}) after normalization by max{|A|^{m-1}, 1}; E^a_{j,R} fixes
a eigenvalues at rho_{j,R} and the rest at R.  All constants are exact
rationals whenever j and R are rational, with a binary64 fallback; the single
irrational constant 1 - (2/3)^{1/(m-1)} is replaced by a certified rational
lower bound, used consistently everywhere downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

from .core import InvalidInputError, Scalar, SquareMatrix, jacobi_eigh, sorted_singular_values

Number = Union[Fraction, int, float]

ROOT_PRECISION_BITS = 96


class DomainError(ValueError):
    """A target-set precondition failed; the message names the violated term."""


def _is_exact(*xs) -> bool:
    return all(isinstance(x, (int, Fraction)) for x in xs)


def _half_pow(j: int, exact: bool) -> Number:
    return Fraction(1, 2 ** j) if exact else 2.0 ** (-j)


def _integer_root_floor(x: int, e: int) -> int:
    """floor(x**(1/e)) by Newton iteration on integers."""
    if x < 0 or e < 1:
        raise ValueError("nonnegative radicand and positive exponent required")
    if x == 0:
        return 0
    r = 1 << ((x.bit_length() + e - 1) // e)
    while True:
        nr = ((e - 1) * r + x // r ** (e - 1)) // e
        if nr >= r:
            break
        r = nr
    while r ** e > x:
        r -= 1
    return r


def min_gap_constant(m: int, exact: bool = True) -> Number:
    """Certified lower bound for 1 - (2/3)^{1/(m-1)} (exactly 1/3 at m = 2)."""
    if m < 2:
        raise DomainError("m must be at least 2")
    if m == 2:
        return Fraction(1, 3) if exact else 1.0 / 3.0
    if not exact:
        return 1.0 - (2.0 / 3.0) ** (1.0 / (m - 1))
    e = m - 1
    scale = 1 << ROOT_PRECISION_BITS
    radicand = (2 * scale ** e) // 3
    r = _integer_root_floor(radicand, e)
    upper_root = Fraction(r + 1, scale)  # (r+1)/2^prec > (2/3)^{1/e}
    return 1 - upper_root


def rho(j: int, R: Number, m: int) -> Number:
    """3 * 2^{-j-2} / max{R^{m-1}, 1}."""
    if j < 1:
        raise DomainError("j must be at least 1")
    if R <= 0:
        raise DomainError("R must be positive")
    exact = _is_exact(R)
    three = Fraction(3) if exact else 3.0
    denom = max(_pow(R, m - 1, exact), Fraction(1) if exact else 1.0)
    return three * _half_pow(j + 2, exact) / denom


def _pow(x: Number, e: int, exact: bool) -> Number:
    if exact:
        return Fraction(x) ** e
    return float(x) ** e


def r_small(j: int, R: Number, m: int, n: int) -> Number:
    """Half the minimum of the six admissibility terms.

    Preconditions R > 1/2 + 2^{-j} and rho(j, R+1) < 1; a violation raises a
    DomainError naming the offending term.
    """
    exact = _is_exact(R)
    half = Fraction(1, 2) if exact else 0.5
    one = Fraction(1) if exact else 1.0
    if R <= half + _half_pow(j, exact):
        raise DomainError(f"term 'R - 1/2 - 2^-j' nonpositive: R={R} too small for j={j}")
    rho_R = rho(j, R, m)
    rho_R1 = rho(j, R + 1, m)
    if rho_R1 >= 1:
        raise DomainError(f"term '(1 - rho(j,R+1))/max(1,R)' nonpositive: rho(j,R+1)={rho_R1} >= 1")
    terms = [
        min_gap_constant(m, exact),
        rho_R * (one - max(one, _pow(R, m - 1, exact)) / _pow(R + 1, m - 1, exact)),
        rho_R / 3,
        R - half - _half_pow(j, exact),
        _half_pow(n, exact) / _pow(R + 1, m + 1, exact),
        (one - rho_R1) / max(one, R),
    ]
    return half * min(terms)


def uvw_factors(j: int, R: Number, m: int, n: int):
    """The per-leaf weight factors U, V, W of the splitting bound."""
    exact = _is_exact(R)
    one = Fraction(1) if exact else 1.0
    r = r_small(j, R, m, n)
    u = _half_pow(j, exact) / ((R + 1) * max(one, _pow(R, m - 1, exact)))
    v = one / max(one, R)
    w = (R + r) / (R + 1)
    return u, v, w


def C_bound(j: int, R: Number, a0: int, a: int, m: int, n: int) -> Number:
    """Mass bound on E^a_{j,R+1} for a split seeded near E^{a0}_{j,R}."""
    if not (0 <= a0 <= n - m and 0 <= a <= n - m):
        raise DomainError(f"indices a0={a0}, a={a} outside [0, {n - m}]")
    if rho(j, R, m) >= R:
        raise DomainError(f"rho(j,R)={rho(j, R, m)} >= R={R}")
    u, v, w = uvw_factors(j, R, m, n)
    exact = _is_exact(R)
    total = Fraction(0) if exact else 0.0
    for b in range(max(0, a0 + a - n), min(a0, a) + 1):
        coeff = math.comb(a0, b) * math.comb(n - a0, a - b)
        total += coeff * _pow(w, n - a0 - a + b, exact) * _pow(v, a - b, exact) * _pow(u, a0 - b, exact)
    return total


@dataclass(frozen=True)
class ConstructionParams:
    n: int
    m: int
    j: int
    R: Number
    a: int = 0

    def validate(self):
        if not (2 <= self.m <= self.n <= 6):
            raise DomainError("need 2 <= m <= n <= 6")
        if self.j < 1:
            raise DomainError("j must be at least 1")
        if not (0 <= self.a <= self.n - self.m):
            raise DomainError(f"a={self.a} outside [0, {self.n - self.m}]")
        exact = _is_exact(self.R)
        if self.R <= (Fraction(1, 2) if exact else 0.5) + _half_pow(self.j, exact):
            raise DomainError("R must exceed 1/2 + 2^-j")
        if rho(self.j, self.R, self.m) >= self.R:
            raise DomainError("rho(j,R) must stay below R")
        return self


def _psd_singular_values(a: SquareMatrix):
    if not a.is_symmetric(1e-9):
        raise InvalidInputError("input must be symmetric")
    if a.exact and a.is_diagonal():
        if any(x < 0 for x in a.diagonal()):
            raise InvalidInputError("input must be positive semidefinite")
        return tuple(sorted(a.diagonal()))
    eig = jacobi_eigh(a.to_numpy())[0]
    scale = max(1.0, a.norm_inf())
    if eig.min() < -1e-10 * scale:
        raise InvalidInputError("input must be positive semidefinite")
    return tuple(max(float(x), 0.0) for x in eig)


def in_E_j(a: SquareMatrix, j: int, m: int) -> bool:
    """Strict two-sided band test on the n-m+1 smallest singular values."""
    sigma = _psd_singular_values(a)
    n = a.n
    exact = a.exact and a.is_diagonal()
    half = Fraction(1, 2) if exact else 0.5
    top = sigma[-1]
    if top <= half + _half_pow(j, exact):
        return False
    one = Fraction(1) if exact else 1.0
    factor = max(_pow(top, m - 1, exact), one)
    lo, hi = _half_pow(j + m, exact), _half_pow(j, exact)
    for i in range(n - m + 1):
        val = sigma[i] * factor
        if not (lo < val < hi):
            return False
    return True


def dist_E_a(a: SquareMatrix, j: int, R: Number, a_idx: int, m: int) -> Number:
    """Operator-norm distance from A to E^a_{j,R} by spectral matching.

    Targets are a_idx copies of rho_{j,R} followed by R; the distance is
    max_i |sigma_i - target_i| over ascending spectra.  Exact for
    perturbations commuting with A (all inputs produced here); an upper
    bound for the true orbit distance in general.
    """
    exact_R = _is_exact(R)
    half = Fraction(1, 2) if exact_R else 0.5
    if R <= half + _half_pow(j, exact_R):
        raise DomainError("R must exceed 1/2 + 2^-j")
    rho_R = rho(j, R, m)
    if rho_R >= R:
        raise DomainError(f"rho(j,R)={rho_R} >= R={R}")
    sigma = _psd_singular_values(a)
    n = a.n
    if not (0 <= a_idx <= n):
        raise DomainError(f"a={a_idx} outside [0, {n}]")
    targets = [rho_R] * a_idx + [R] * (n - a_idx)
    gaps = [abs(s - t) for s, t in zip(sigma, targets)]
    return max(gaps)


def nearest_E_a(a: SquareMatrix, j: int, R: Number, m: int, n_m: int):
    """(a_index, distance) of the closest staircase-step set E^a_{j,R}."""
    best = None
    for a_idx in range(0, n_m + 1):
        d = dist_E_a(a, j, R, a_idx, m)
        if best is None or d < best[1]:
            best = (a_idx, d)
    return best
