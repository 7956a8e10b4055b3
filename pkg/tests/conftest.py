"""Shared generators for random admissible splitting inputs."""

import math
from fractions import Fraction

import numpy as np
import pytest

from laminate_forge.core import Rotation, SquareMatrix, conjugate_diag
from laminate_forge.targets import DomainError, dist_E_a, in_E_j, r_small, rho

F = Fraction


def random_lamlem_input(rng, n_max=4):
    """One admissible (A, j, R, a0, m, n) with dist(A, E^{a0}_{j,R}) < r_small."""
    while True:
        n = int(rng.integers(2, n_max + 1))
        m = int(rng.integers(2, n + 1))
        j = int(rng.integers(1, 7))
        R = F(int(rng.integers(3, 13))) / 2
        try:
            r = r_small(j, R, m, n)
        except DomainError:
            continue
        a0 = int(rng.integers(0, n - m + 1))
        rho_R = rho(j, R, m)
        targets = [float(rho_R)] * a0 + [float(R)] * (n - a0)
        bumps = rng.uniform(-0.85, 0.85, size=n) * float(r)
        spec = sorted(t + b for t, b in zip(targets, bumps))
        if spec[0] <= 0:
            continue
        q = Rotation.random(n, rng)
        a = conjugate_diag(q, spec)
        if not float(dist_E_a(a, j, float(R), a0, m)) < float(r):
            continue
        return a, j, float(R), a0, m, n


def random_E_j_member(rng, n_max=4, j_max=8):
    """One (A, j, m, n) with A in E_j, random rotation."""
    while True:
        n = int(rng.integers(2, n_max + 1))
        m = int(rng.integers(2, n + 1))
        j = int(rng.integers(1, j_max + 1))
        top = float(rng.uniform(0.5 + 2.0 ** (-j) + 0.05, 4.0))
        factor = max(top ** (m - 1), 1.0)
        lo, hi = 2.0 ** (-(j + m)) / factor, 2.0 ** (-j) / factor
        band = [
            math.exp(rng.uniform(math.log(lo * 1.05), math.log(hi * 0.95)))
            for _ in range(n - m + 1)
        ]
        mids = [float(rng.uniform(hi * 1.05, top)) for _ in range(m - 2)]
        spec = sorted(band) + sorted(mids) + [top]
        if any(b <= a for a, b in zip(spec, spec[1:])):
            continue
        q = Rotation.random(n, rng)
        a = conjugate_diag(q, spec)
        if in_E_j(a, j, m):
            return a, j, m, n


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
