"""C1 piecewise-quadratic macro-element on the 12-subtriangle split.

The transition band between the oscillating bulk and the affine boundary
trace must be the gradient of a C1 piecewise-quadratic potential, otherwise
cell gradients pick up asymmetric shear and the map stops being curl-free.
Affine interpolation cannot do this; the classical quadratic macro-element
on the midpoint/median split can.

Degrees of freedom per macro-triangle: values and gradients at the three
corners plus full gradients at the three edge midpoints, where the midpoint
tangential component is forced by the quadratic-precision trace rule

    gm . (Q - P) = 2 (v_Q - v_P) - (g_P + g_Q) . (Q - P) / 2

so that two macro-triangles sharing an edge produce identical traces and
identical (piecewise-linear) normal derivatives: global C1 with no further
coupling.  The reference basis is solved exactly in rational arithmetic once
and cached; per-element evaluation runs in float64.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Callable, List, Sequence, Tuple

import numpy as np

F = Fraction

# reference triangle and the 12-split
_P = [(F(0), F(0)), (F(1), F(0)), (F(0), F(1))]
_M = [(F(1, 2), F(1, 2)), (F(0), F(1, 2)), (F(1, 2), F(0))]  # M_i opposite P_i
_G = (F(1, 3), F(1, 3))
_H = [
    (F(1, 4), F(1, 4)),  # midpoint of median P0-M0
    (F(1, 2), F(1, 4)),  # midpoint of median P1-M1
    (F(1, 4), F(1, 2)),  # midpoint of median P2-M2
]

_SUBTRIANGLES = [
    (_P[0], _M[2], _H[0]), (_P[0], _H[0], _M[1]),
    (_P[1], _M[0], _H[1]), (_P[1], _H[1], _M[2]),
    (_P[2], _M[1], _H[2]), (_P[2], _H[2], _M[0]),
    (_G, _M[1], _H[0]), (_G, _H[0], _M[2]),
    (_G, _M[2], _H[1]), (_G, _H[1], _M[0]),
    (_G, _M[0], _H[2]), (_G, _H[2], _M[1]),
]

_INTERIOR_EDGES = [
    (_P[0], _H[0]), (_P[1], _H[1]), (_P[2], _H[2]),
    (_M[1], _H[0]), (_H[0], _M[2]),
    (_M[2], _H[1]), (_H[1], _M[0]),
    (_M[0], _H[2]), (_H[2], _M[1]),
    (_H[0], _G), (_H[1], _G), (_H[2], _G),
    (_G, _M[0]), (_G, _M[1]), (_G, _M[2]),
]

# dof order: v0 v1 v2 g0x g0y g1x g1y g2x g2y w0 w1 w2
NDOF = 12
_NC = 6  # quadratic monomial coefficients per subtriangle


def _monomials(x, y):
    return (F(1), x, y, x * x, x * y, y * y)


def _grad_rows(x, y):
    return ((F(0), F(1), F(0), 2 * x, y, F(0)), (F(0), F(0), F(1), F(0), x, 2 * y))


def _point_on_segment(p, q, t: Fraction):
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def _tri_contains(tri, pt) -> bool:
    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    signs = [cross(tri[i], tri[(i + 1) % 3], pt) for i in range(3)]
    return all(s >= 0 for s in signs) or all(s <= 0 for s in signs)


def _midpoint_gradient_rows():
    """2 x NDOF rational matrices G_i with gm_i = G_i u (rule + free normal)."""
    out = []
    median_dirs = []
    for i in range(3):
        j, k = [a for a in range(3) if a != i]
        pa, pb = _P[j], _P[k]
        t = (pb[0] - pa[0], pb[1] - pa[1])
        d = (_P[i][0] - _M[i][0], _P[i][1] - _M[i][1])
        median_dirs.append(d)
        rule = [F(0)] * NDOF
        rule[j] = F(-2)
        rule[k] = F(2)
        for c in range(2):
            rule[3 + 2 * j + c] = -t[c] / 2
            rule[3 + 2 * k + c] = -t[c] / 2
        free = [F(0)] * NDOF
        free[9 + i] = F(1)
        det = t[0] * d[1] - t[1] * d[0]
        # solve [t; d] gm = [rule; free] for gm (rows are linear forms in u)
        gmx = [(d[1] * rule[c] - t[1] * free[c]) / det for c in range(NDOF)]
        gmy = [(-d[0] * rule[c] + t[0] * free[c]) / det for c in range(NDOF)]
        out.append((gmx, gmy))
    return out, median_dirs


def _build_reference_basis():
    rows: List[List[Fraction]] = []
    rhs: List[List[Fraction]] = []
    nunk = 12 * _NC

    def add_row(tri_idx, poly_row, rhs_row):
        row = [F(0)] * nunk
        for c in range(_NC):
            row[tri_idx * _NC + c] = poly_row[c]
        rows.append(row)
        rhs.append(list(rhs_row))

    gm_rows, _ = _midpoint_gradient_rows()

    # corner value + gradient interpolation on every incident subtriangle
    for i, corner in enumerate(_P):
        for t_idx, tri in enumerate(_SUBTRIANGLES):
            if corner not in tri:
                continue
            val_rhs = [F(0)] * NDOF
            val_rhs[i] = F(1)
            add_row(t_idx, _monomials(*corner), val_rhs)
            gx, gy = _grad_rows(*corner)
            ex = [F(0)] * NDOF
            ex[3 + 2 * i] = F(1)
            ey = [F(0)] * NDOF
            ey[3 + 2 * i + 1] = F(1)
            add_row(t_idx, gx, ex)
            add_row(t_idx, gy, ey)

    # midpoint gradients on every incident subtriangle
    for i, mid in enumerate(_M):
        for t_idx, tri in enumerate(_SUBTRIANGLES):
            if mid not in tri:
                continue
            gx, gy = _grad_rows(*mid)
            add_row(t_idx, gx, gm_rows[i][0])
            add_row(t_idx, gy, gm_rows[i][1])

    # C0 + C1 across interior edges
    for p, q in _INTERIOR_EDGES:
        mid = _point_on_segment(p, q, F(1, 2))
        flank = [
            t_idx
            for t_idx, tri in enumerate(_SUBTRIANGLES)
            if _tri_contains(tri, p) and _tri_contains(tri, q) and _tri_contains(tri, mid)
        ]
        if len(flank) != 2:
            raise RuntimeError(f"edge {p}-{q} has {len(flank)} flanking subtriangles")
        ta, tb = flank
        nu = (-(q[1] - p[1]), q[0] - p[0])
        for t in (F(0), F(1, 2), F(1)):
            pt = _point_on_segment(p, q, t)
            mono = _monomials(*pt)
            row = [F(0)] * nunk
            for c in range(_NC):
                row[ta * _NC + c] = mono[c]
                row[tb * _NC + c] -= mono[c]
            rows.append(row)
            rhs.append([F(0)] * NDOF)
        for t in (F(0), F(1)):
            pt = _point_on_segment(p, q, t)
            gx, gy = _grad_rows(*pt)
            drow = [nu[0] * a + nu[1] * b for a, b in zip(gx, gy)]
            row = [F(0)] * nunk
            for c in range(_NC):
                row[ta * _NC + c] = drow[c]
                row[tb * _NC + c] -= drow[c]
            rows.append(row)
            rhs.append([F(0)] * NDOF)

    solution = _solve_exact(rows, rhs, nunk)
    return solution  # (nunk x NDOF) rational matrix


def _solve_exact(rows, rhs, nunk):
    m = [row[:] + r[:] for row, r in zip(rows, rhs)]
    nrows = len(m)
    width = nunk + NDOF
    pivot_cols = []
    r = 0
    for col in range(nunk):
        piv = next((i for i in range(r, nrows) if m[i][col] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = 1 / m[r][col]
        m[r] = [x * inv for x in m[r]]
        for i in range(nrows):
            if i != r and m[i][col] != 0:
                f = m[i][col]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivot_cols.append(col)
        r += 1
        if r == nrows:
            break
    if len(pivot_cols) != nunk:
        raise RuntimeError(f"macro-element system rank {len(pivot_cols)} != {nunk}")
    for i in range(r, nrows):
        if any(x != 0 for x in m[i]):
            raise RuntimeError("macro-element system inconsistent")
    sol = [[F(0)] * NDOF for _ in range(nunk)]
    for row_idx, col in enumerate(pivot_cols):
        sol[col] = m[row_idx][nunk:width]
    return sol


@lru_cache(maxsize=1)
def reference_element():
    """(basis float array (12, 12, 6), subtriangle ref vertices float array)."""
    sol = _build_reference_basis()
    basis = np.empty((NDOF, 12, _NC))
    for dof in range(NDOF):
        for t in range(12):
            for c in range(_NC):
                basis[dof, t, c] = float(sol[t * _NC + c][dof])
    tris = np.array(
        [[[float(x), float(y)] for (x, y) in tri] for tri in _SUBTRIANGLES]
    )
    _verify_reference(basis, tris)
    return basis, tris


def _verify_reference(basis, tris):
    # quadratic precision: data of q(x,y) = x^2 + xy - y + 2 reproduces q
    def q(x, y):
        return x * x + x * y - y + 2.0

    def gq(x, y):
        return np.array([2.0 * x + y, x - 1.0])

    u = _dof_from_fields(q, gq)
    coeffs = np.tensordot(u, basis, axes=(0, 0))
    for t in range(12):
        cx = np.mean(tris[t, :, 0]), np.mean(tris[t, :, 1])
        got = _eval_poly(coeffs[t], *cx)
        if abs(got - q(*cx)) > 1e-12:
            raise RuntimeError("macro-element loses quadratic precision")


def _dof_from_fields(value, grad):
    u = np.zeros(NDOF)
    for i, p in enumerate(_P):
        x, y = float(p[0]), float(p[1])
        u[i] = value(x, y)
        u[3 + 2 * i], u[3 + 2 * i + 1] = grad(x, y)
    _, medians = _midpoint_gradient_rows()
    for i, mpt in enumerate(_M):
        x, y = float(mpt[0]), float(mpt[1])
        g = grad(x, y)
        d = np.array([float(medians[i][0]), float(medians[i][1])])
        u[9 + i] = g @ d
    return u


def _eval_poly(c, x, y):
    return c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y


def midpoint_gradient(pa, pb, va, vb, ga, gb, normal_target):
    """Edge-midpoint gradient: tangential part from the trace rule, normal
    part from the target field.  Shared verbatim by both flanking macros."""
    t = np.array([pb[0] - pa[0], pb[1] - pa[1]])
    nu = np.array([-t[1], t[0]])
    nu = nu / np.linalg.norm(nu)
    rhs_t = 2.0 * (vb - va) - 0.5 * (ga + gb) @ t
    mat = np.array([t, nu])
    return np.linalg.solve(mat, np.array([rhs_t, normal_target]))


def macro_cells(
    corners: Sequence[Tuple[float, float]],
    values: Sequence[float],
    grads: Sequence[np.ndarray],
    mid_grads: Sequence[np.ndarray],
):
    """World-coordinate subcells of one macro-triangle.

    ``mid_grads[i]`` is the full gradient at the midpoint OPPOSITE corner i
    (rule-consistent).  Returns a list of (vertices, hessian, grad_offset)
    with vertices CCW; the potential piece is 0.5 x^T H x + g0 . x + const.
    """
    basis, tris = reference_element()
    w0 = np.array(corners[0])
    b = np.column_stack([np.array(corners[1]) - w0, np.array(corners[2]) - w0])
    s = np.linalg.inv(b)

    u = np.zeros(NDOF)
    _, medians = _midpoint_gradient_rows()
    for i in range(3):
        u[i] = values[i]
        gref = b.T @ np.asarray(grads[i])
        u[3 + 2 * i], u[3 + 2 * i + 1] = gref
    for i in range(3):
        gm_ref = b.T @ np.asarray(mid_grads[i])
        d = np.array([float(medians[i][0]), float(medians[i][1])])
        u[9 + i] = gm_ref @ d

    coeffs = np.tensordot(u, basis, axes=(0, 0))  # (12, 6)
    out = []
    for t in range(12):
        c = coeffs[t]
        l_ref = np.array([[2.0 * c[3], c[4]], [c[4], 2.0 * c[5]]])
        k0 = np.array([c[1], c[2]])
        hess = s.T @ l_ref @ s
        hess = 0.5 * (hess + hess.T)
        g0 = s.T @ (k0 - l_ref @ (s @ w0))
        # solving for g0: grad_x = S^T (L xi + k0), xi = S (x - w0)
        g0 = s.T @ k0 - hess @ w0
        verts = [tuple(w0 + b @ tris[t, v]) for v in range(3)]
        out.append((verts, hess, g0))
    return out
