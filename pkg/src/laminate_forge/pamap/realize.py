"""Realizing laminates as piecewise-affine gradient maps on planar boxes.

A rank-one split A = lam B + (1-lam) C  (B - C = c vv^T) becomes a sawtooth:
the box is cut into periods along v, each period into three legs whose
gradients are exactly B, C, B on length fractions lam/2, 1-lam, lam/2.  The
displacement profile u integrates to zero per period, so the potential
correction F = integral(u) is periodic and bounded.  Near the faces where
the displacement would violate the boundary trace, F fades to zero through a
one-macro-row C1 quadratic spline band; band cell gradients stay within
delta of the segment [B, C] and keep the positive-definiteness margin.

Splitting deeper tree nodes recurses into the exact-gradient bulk cells
(axis-aligned splits keep them rectangular); band cells are transition
residue and are never re-split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core import SquareMatrix, jacobi_eigh, rank_one_defect
from ..measures import DiscreteMatrixMeasure, certify_laminate
from .geometry import clip_slab, ensure_ccw, polygon_area
from .maps import BoxDomain, Cell, MapError, PiecewiseAffineMap
from .spline import macro_cells, midpoint_gradient

RANK_ONE_TOL = 1e-12
SHEAR_SAFETY = 0.7


class RealizeError(ValueError):
    pass


@dataclass
class RealizeOptions:
    strict: bool = True          # enforce the delta band contract, else tag
    strip_cap: Optional[int] = None
    max_amplitude: Optional[float] = None  # cap on |f - Ax|, for Holder targets
    validate: bool = True


def _as_float_matrix(m) -> np.ndarray:
    if isinstance(m, SquareMatrix):
        return m.to_numpy()
    return np.asarray(m, dtype=float)


def _rank_one_direction(d: np.ndarray) -> Tuple[np.ndarray, float]:
    """Unit eigenvector of the symmetric rank-one difference and its weight."""
    w, v = jacobi_eigh(d)
    idx = int(np.argmax(np.abs(w)))
    vec = v[:, idx].copy()
    # lexicographically-first nonzero component positive
    for comp in vec:
        if abs(comp) > 1e-12:
            if comp < 0:
                vec = -vec
            break
    return vec, float(vec @ d @ vec)


@dataclass
class _Profile:
    """Mean-zero sawtooth u and its periodic antiderivative F along v."""

    s_min: float
    h: float
    n_periods: int
    lam: float
    c: float

    def leg_breaks(self):
        """Global breakpoints [s0 < s1 < ...] delimiting constant-slope legs."""
        out = [self.s_min]
        for k in range(self.n_periods):
            s0 = self.s_min + k * self.h
            out.extend([s0 + 0.5 * self.lam * self.h, s0 + self.h - 0.5 * self.lam * self.h, s0 + self.h])
        return out

    def leg_slope(self, k_leg: int) -> float:
        phase = k_leg % 3
        return (1.0 - self.lam) * self.c if phase in (0, 2) else -self.lam * self.c

    def u(self, s: float) -> float:
        k, phase, local, s_entry = self._locate(s)
        u_entry = 0.0 if phase == 0 else (
            self._peak() if phase == 1 else -self._peak()
        )
        return u_entry + self.leg_slope(phase) * (s - s_entry)

    def F(self, s: float) -> float:
        k, phase, local, s_entry = self._locate(s)
        peak = self._peak()
        lam_h = 0.5 * self.lam * self.h
        f_entry = [0.0, peak * lam_h / 2.0, peak * lam_h / 2.0][phase]
        u_entry = [0.0, peak, -peak][phase]
        slope = self.leg_slope(phase)
        d = s - s_entry
        return f_entry + u_entry * d + 0.5 * slope * d * d

    def _peak(self) -> float:
        return 0.5 * (1.0 - self.lam) * self.c * self.lam * self.h

    def _locate(self, s: float):
        t = (s - self.s_min) / self.h
        k = min(self.n_periods - 1, max(0, int(t)))
        local = s - (self.s_min + k * self.h)
        lam_h = 0.5 * self.lam * self.h
        if local <= lam_h:
            return k, 0, local, self.s_min + k * self.h
        if local <= self.h - lam_h:
            return k, 1, local, self.s_min + k * self.h + lam_h
        return k, 2, local, self.s_min + k * self.h + self.h - lam_h


def _eta(tau: float) -> float:
    # smooth cubic ramp: eta(0)=0, eta(1)=1, eta'(0)=eta'(1)=0
    tau = min(max(tau, 0.0), 1.0)
    return tau * tau * (3.0 - 2.0 * tau)


def _eta_prime(tau: float) -> float:
    tau = min(max(tau, 0.0), 1.0)
    return 6.0 * tau * (1.0 - tau)


class _BandField:
    """Correction potential F(s) eta(rho/w) with box-distance fade."""

    def __init__(self, profile: _Profile, v: np.ndarray, box: BoxDomain, w: float, sides):
        self.profile = profile
        self.v = v
        self.box = box
        self.w = w
        self.sides = sides  # subset of ("left", "right", "bottom", "top")

    def _rho_grad(self, p):
        (x0, y0), (x1, y1) = self.box.lo, self.box.hi
        cands = []
        if "left" in self.sides:
            cands.append((p[0] - x0, np.array([1.0, 0.0])))
        if "right" in self.sides:
            cands.append((x1 - p[0], np.array([-1.0, 0.0])))
        if "bottom" in self.sides:
            cands.append((p[1] - y0, np.array([0.0, 1.0])))
        if "top" in self.sides:
            cands.append((y1 - p[1], np.array([0.0, -1.0])))
        rho = min(d for d, _ in cands)
        rho = min(rho, self.w)
        grads = [g for d, g in cands if abs(d - rho) <= 1e-12]
        if rho >= self.w - 1e-12:
            grad = np.zeros(2)  # eta' vanishes at the inner interface anyway
        else:
            grad = sum(grads, np.zeros(2)) / len(grads)
        return rho, grad

    def value(self, p) -> float:
        rho, _ = self._rho_grad(p)
        return self.profile.F(float(self.v @ p)) * _eta(rho / self.w)

    def gradient(self, p) -> np.ndarray:
        rho, rg = self._rho_grad(p)
        s = float(self.v @ p)
        tau = rho / self.w
        return (
            self.profile.u(s) * _eta(tau) * self.v
            + self.profile.F(s) * _eta_prime(tau) / self.w * rg
        )


def _segment_distance(g: np.ndarray, a: np.ndarray, c: float, v: np.ndarray, lam: float) -> float:
    """Upper bound on op-norm distance from A+G to the split segment."""
    diff = g - a if g.shape == a.shape else g
    nn = np.outer(v, v)
    tau = float(v @ (g - a) @ v) / c if c != 0 else 0.0
    tau = min(max(tau, -lam), 1.0 - lam)
    return float(np.linalg.norm((g - a) - tau * c * nn, 2))


def realize_simple(
    lam,
    b_mat,
    c_mat,
    domain: BoxDomain,
    delta: float,
    eps_bnd: float,
    base_offset=(0.0, 0.0),
    options: Optional[RealizeOptions] = None,
) -> PiecewiseAffineMap:
    """Sawtooth realization of A = lam B + (1-lam) C with boundary trace A."""
    cells, a, flags = _build_split_cells(
        lam, b_mat, c_mat, domain, delta, eps_bnd, np.asarray(base_offset, dtype=float),
        options or RealizeOptions(),
    )
    out = PiecewiseAffineMap(domain, cells, a, np.asarray(base_offset, dtype=float))
    if (options or RealizeOptions()).validate:
        out.validate()
    return out


def _build_split_cells(
    lam, b_mat, c_mat, domain, delta, eps_bnd, base_offset, opt: RealizeOptions
):
    lam = float(lam)
    b = _as_float_matrix(b_mat)
    c = _as_float_matrix(c_mat)
    if domain.n != 2:
        raise RealizeError("planar realization only")
    if not (0.0 <= lam <= 1.0):
        raise RealizeError("lambda outside [0,1]")
    a = lam * b + (1.0 - lam) * c
    if lam in (0.0, 1.0):
        verts = domain.vertices()
        return [Cell(verts, a, base_offset, tag="bulk:B" if lam == 1.0 else "bulk:C")], a, {}
    for name, m in (("B", b), ("C", c)):
        if np.abs(m - m.T).max() > 1e-9 * max(1.0, np.abs(m).max()):
            raise RealizeError(f"{name} is not symmetric")
    eigs = [float(np.linalg.eigvalsh(0.5 * (m + m.T))[0]) for m in (b, c)]
    l_inv = min(eigs)
    if l_inv <= 0:
        raise RealizeError("atoms must be positive definite")
    defect = float(rank_one_defect(SquareMatrix.from_numpy(b), SquareMatrix.from_numpy(c)))
    if defect > RANK_ONE_TOL * max(1.0, np.abs(b - c).max()):
        raise RealizeError(f"B - C is not rank one (defect {defect:.3e})")
    gap = float(np.linalg.norm(b - c, 2))
    if opt.strict and not (0.0 < delta < 0.5 * min(l_inv, gap)):
        raise RealizeError(
            f"delta {delta} outside (0, {0.5 * min(l_inv, gap):.6g}): "
            "must stay below half the PD margin and half the atom gap"
        )
    if not (0.0 < eps_bnd < 1.0):
        raise RealizeError("eps_bnd outside (0,1)")
    v, c_coeff = _rank_one_direction(b - c)

    (x0, y0), (x1, y1) = domain.lo, domain.hi
    width_x, width_y = x1 - x0, y1 - y0
    area = width_x * width_y
    axis = None
    if abs(v[0]) > 1.0 - 1e-12:
        axis, v = 0, np.array([1.0, 0.0])
    elif abs(v[1]) > 1.0 - 1e-12:
        axis, v = 1, np.array([0.0, 1.0])

    corners = [np.array(p, dtype=float) for p in domain.vertices()]
    svals = [float(v @ p) for p in corners]
    s_min, s_max = min(svals), max(svals)
    ext = s_max - s_min

    if axis is not None:
        sides = ("bottom", "top") if axis == 0 else ("left", "right")
        transverse = width_y if axis == 0 else width_x
        band_area = 2.0 * (width_x if axis == 0 else width_y)
        w = min(eps_bnd * area / band_area, transverse / 4.0)
    else:
        sides = ("left", "right", "bottom", "top")
        per = 2.0 * (width_x + width_y)
        w = min(eps_bnd * area / per, width_x / 4.0, width_y / 4.0)

    amp_coeff = abs(lam * (1.0 - lam) * c_coeff)
    h_max = SHEAR_SAFETY * delta * w / amp_coeff
    if opt.max_amplitude:
        h_max = min(h_max, 2.0 * opt.max_amplitude / amp_coeff)
    n_periods = max(1, int(math.ceil(ext / h_max)))
    relaxed = False
    if opt.strip_cap and n_periods > opt.strip_cap:
        n_periods = opt.strip_cap
        relaxed = True
        if opt.strict:
            raise RealizeError("strip cap too small for the requested delta")
    profile = _Profile(s_min, ext / n_periods, n_periods, lam, c_coeff)

    inner = _inner_box(domain, w, sides)
    band = _BandField(profile, v, domain, w, sides)

    # band layer count: keep the spline's per-macro interpolation error a
    # small fraction of delta (the mixed third derivative of F eta scales
    # like amp_coeff * h / w per unit transverse length)
    aspect = w / profile.h
    layers = max(1, min(12, int(math.ceil(aspect / 2.0))))
    for attempt in range(3):
        cells: List[Cell] = []
        _add_bulk_cells(cells, profile, v, axis, inner, a, base_offset, lam)
        _add_band_cells(cells, profile, v, axis, domain, inner, w, sides, band, a, base_offset, layers)
        flags = {"relaxed": relaxed, "band_width": w, "periods": n_periods, "band_layers": layers}
        ok = _post_check_cells(cells, a, b, c, v, c_coeff, lam, delta, l_inv, opt, flags)
        if ok or not opt.strict:
            return cells, a, flags
        layers = min(24, layers * 2)
    raise RealizeError(
        f"band refinement failed to meet the delta contract: "
        f"max segment distance {flags['band_segment_distance']:.3e}, "
        f"min eigenvalue {flags['band_min_eigenvalue']:.3e}"
    )


def _inner_box(domain: BoxDomain, w: float, sides) -> BoxDomain:
    (x0, y0), (x1, y1) = domain.lo, domain.hi
    return BoxDomain(
        (x0 + (w if "left" in sides else 0.0), y0 + (w if "bottom" in sides else 0.0)),
        (x1 - (w if "right" in sides else 0.0), y1 - (w if "top" in sides else 0.0)),
    )


def _add_bulk_cells(cells, profile, v, axis, inner: BoxDomain, a, base_offset, lam):
    breaks = profile.leg_breaks()
    box_verts = inner.vertices()
    nn = np.outer(v, v)
    for k in range(len(breaks) - 1):
        s_a, s_b = breaks[k], breaks[k + 1]
        if s_b - s_a <= 1e-15:
            continue
        slope = profile.leg_slope(k)
        if axis is not None:
            lo_s = max(s_a, inner.lo[axis])
            hi_s = min(s_b, inner.hi[axis])
            if hi_s - lo_s <= 1e-15:
                continue
            if axis == 0:
                verts = [(lo_s, inner.lo[1]), (hi_s, inner.lo[1]), (hi_s, inner.hi[1]), (lo_s, inner.hi[1])]
            else:
                verts = [(inner.lo[0], lo_s), (inner.hi[0], lo_s), (inner.hi[0], hi_s), (inner.lo[0], hi_s)]
        else:
            verts = clip_slab(box_verts, (v[0], v[1]), s_a, s_b)
            if len(verts) < 3 or polygon_area(verts) == 0:
                continue
        grad = a + slope * nn
        off = base_offset + (profile.u(s_a) - slope * s_a) * v
        phase = "B" if k % 3 in (0, 2) else "C"
        cells.append(Cell(verts, grad, off, tag=f"bulk:{phase}"))


def _add_band_cells(cells, profile, v, axis, domain, inner, w, sides, band, a, base_offset, layers):
    breaks = profile.leg_breaks()
    (x0, y0), (x1, y1) = domain.lo, domain.hi
    (ix0, iy0), (ix1, iy1) = inner.lo, inner.hi
    gm_cache: Dict[tuple, np.ndarray] = {}

    def crossings(fixed_axis, level, lo, hi):
        """s-breakpoint crossings of the horizontal/vertical inner edge."""
        pts = []
        for s in breaks[1:-1]:
            if fixed_axis == 1:  # edge y = level, x varies
                if abs(v[0]) < 1e-15:
                    continue
                x = (s - v[1] * level) / v[0]
                if lo + 1e-12 < x < hi - 1e-12:
                    pts.append(x)
            else:
                if abs(v[1]) < 1e-15:
                    continue
                y = (s - v[0] * level) / v[1]
                if lo + 1e-12 < y < hi - 1e-12:
                    pts.append(y)
        return sorted(set(pts))

    def add_strip(side):
        if side == "bottom":
            lo, hi, inner_level, outer_level, fixed = ix0 if "left" in sides else x0, ix1 if "right" in sides else x1, iy0, y0, 1
        elif side == "top":
            lo, hi, inner_level, outer_level, fixed = ix0 if "left" in sides else x0, ix1 if "right" in sides else x1, iy1, y1, 1
        elif side == "left":
            lo, hi, inner_level, outer_level, fixed = iy0 if "bottom" in sides else y0, iy1 if "top" in sides else y1, ix0, x0, 0
        else:
            lo, hi, inner_level, outer_level, fixed = iy0 if "bottom" in sides else y0, iy1 if "top" in sides else y1, ix1, x1, 0
        xs = [lo] + crossings(fixed, inner_level, lo, hi) + [hi]
        levels = [outer_level + (inner_level - outer_level) * k / layers for k in range(layers + 1)]
        for i in range(len(xs) - 1):
            p, q = xs[i], xs[i + 1]
            if q - p <= 1e-15:
                continue
            for k in range(layers):
                la, lb = levels[k], levels[k + 1]
                if fixed == 1:
                    o1, o2 = (p, la), (q, la)
                    i1, i2 = (p, lb), (q, lb)
                else:
                    o1, o2 = (la, p), (la, q)
                    i1, i2 = (lb, p), (lb, q)
                _emit_macros(cells, [(o1, o2, i2), (o1, i2, i1)], band, a, base_offset, gm_cache)

    for side in sides:
        add_strip(side)

    if len(sides) == 4:
        # corner squares on an layers x layers grid, each square split along
        # the local diagonal parallel to the distance ridge
        for cx, cy, sx, sy in (
            (x0, y0, 1, 1), (x1, y0, -1, 1), (x1, y1, -1, -1), (x0, y1, 1, -1),
        ):
            step = w / layers
            for i in range(layers):
                for j in range(layers):
                    ax = cx + sx * i * step
                    bx = cx + sx * (i + 1) * step
                    ay = cy + sy * j * step
                    by = cy + sy * (j + 1) * step
                    p00, p10, p01, p11 = (ax, ay), (bx, ay), (ax, by), (bx, by)
                    # ridge {|x-cx| = |y-cy|} runs corner-to-corner; split parallel
                    _emit_macros(
                        cells,
                        [(p00, p10, p11), (p00, p11, p01)],
                        band, a, base_offset, gm_cache,
                    )


def _emit_macros(cells, tris, band, a, base_offset, gm_cache):
    for tri in tris:
        tri = ensure_ccw(list(tri))
        vals = [band.value(np.asarray(p)) for p in tri]
        grads = [band.gradient(np.asarray(p)) for p in tri]
        mids = []
        for i in range(3):
            pa, pb = tri[(i + 1) % 3], tri[(i + 2) % 3]
            key = tuple(sorted((pa, pb)))
            if key not in gm_cache:
                p0, p1 = key
                mid = np.array([(p0[0] + p1[0]) / 2.0, (p0[1] + p1[1]) / 2.0])
                t = np.array([p1[0] - p0[0], p1[1] - p0[1]])
                nu = np.array([-t[1], t[0]])
                nu /= np.linalg.norm(nu)
                target = float(band.gradient(mid) @ nu)
                gm_cache[key] = midpoint_gradient(
                    p0, p1,
                    band.value(np.asarray(p0)), band.value(np.asarray(p1)),
                    band.gradient(np.asarray(p0)), band.gradient(np.asarray(p1)),
                    target,
                )
            mids.append(gm_cache[key])
        for verts, hess, g0 in macro_cells(tri, vals, grads, mids):
            cells.append(Cell(verts, a + hess, base_offset + g0, tag="band"))


def _post_check_cells(cells, a, b, c, v, c_coeff, lam, delta, l_inv, opt, flags) -> bool:
    worst_seg = 0.0
    worst_eig = math.inf
    norm_cap = max(np.linalg.norm(b, 2), np.linalg.norm(c, 2)) + delta
    bad = 0
    for cell in cells:
        if not cell.tag.startswith("band"):
            continue
        d = _segment_distance(cell.matrix, a, c_coeff, v, lam)
        ev = cell.min_symmetric_eigenvalue()
        worst_seg = max(worst_seg, d)
        worst_eig = min(worst_eig, ev)
        if d > delta or ev < (1.0 - delta) * l_inv or cell.operator_norm() > norm_cap:
            bad += 1
            cell.tag = "band:relaxed"
    flags["band_segment_distance"] = worst_seg
    flags["band_min_eigenvalue"] = worst_eig if worst_eig < math.inf else None
    flags["band_violations"] = bad
    return bad == 0


# ---------------------------------------------------------------------------
# Whole-measure realization over the split tree
# ---------------------------------------------------------------------------

def realize_laminate(
    nu: DiscreteMatrixMeasure,
    domain: BoxDomain,
    delta: float,
    eps_bnd: float,
    base_offset=(0.0, 0.0),
    options: Optional[RealizeOptions] = None,
) -> PiecewiseAffineMap:
    """Recursive strip realization of a certified laminate.

    Gradients on the non-transition bulk equal the atoms exactly; each atom's
    volume fraction lands within eps_bnd (relatively) of its weight.
    """
    opt = options or RealizeOptions()
    report = certify_laminate(nu)
    if not report.passed:
        raise RealizeError(f"measure not certified: {report.status} {report.violations[:3]}")
    tree = nu.certificate
    for atom in nu.atoms:
        m = _as_float_matrix(atom.matrix)
        if np.linalg.eigvalsh(0.5 * (m + m.T))[0] <= 0:
            raise RealizeError("atoms must be positive definite for a homeomorphism")
    mats = [_as_float_matrix(m) for m in tree.nodes]
    if len(nu.atoms) > 1:
        min_gap = min(
            float(np.linalg.norm(_as_float_matrix(x.matrix) - _as_float_matrix(y.matrix), 2))
            for i, x in enumerate(nu.atoms)
            for y in nu.atoms[i + 1:]
        )
        if opt.strict and delta >= 0.5 * min_gap:
            raise RealizeError(f"delta {delta} too large for atom separation {min_gap:.6g}")
    children = {s.parent: s for s in tree.splits}
    depth = _tree_depth(children, 0)
    eps_level = eps_bnd / max(depth, 1)

    cells = _realize_node(0, tree, children, mats, domain, delta, eps_level, np.asarray(base_offset, float), opt)
    out = PiecewiseAffineMap(domain, cells, mats[0], np.asarray(base_offset, float))
    if opt.validate:
        out.validate()
    return out


def _tree_depth(children, idx) -> int:
    s = children.get(idx)
    if s is None:
        return 0
    return 1 + max(_tree_depth(children, s.b), _tree_depth(children, s.c))


def _realize_node(idx, tree, children, mats, region: BoxDomain, delta, eps_level, offset, opt):
    split = children.get(idx)
    if split is None:
        return [Cell(region.vertices(), mats[idx], offset, tag=f"bulk:leaf:{idx}")]
    sub_opt = RealizeOptions(
        strict=opt.strict, strip_cap=opt.strip_cap, max_amplitude=opt.max_amplitude, validate=False
    )
    cells, _, _ = _build_split_cells(
        float(split.lam), mats[split.b], mats[split.c], region, delta, eps_level, offset, sub_opt
    )
    out = []
    for cell in cells:
        target = None
        if cell.tag == "bulk:B" and children.get(split.b) is not None:
            target = split.b
        elif cell.tag == "bulk:C" and children.get(split.c) is not None:
            target = split.c
        if target is None:
            if cell.tag == "bulk:B":
                cell.tag = f"bulk:leaf:{split.b}"
            elif cell.tag == "bulk:C":
                cell.tag = f"bulk:leaf:{split.c}"
            out.append(cell)
            continue
        box = _cell_as_box(cell)
        if box is None:
            raise RealizeError(
                "re-splitting a non-rectangular bulk cell is not supported; "
                "deeper trees need axis-aligned split directions"
            )
        out.extend(
            _realize_node(target, tree, children, mats, box, delta, eps_level, cell.offset.copy(), opt)
        )
    return out


def _cell_as_box(cell: Cell) -> Optional[BoxDomain]:
    vs = cell.vertices
    if len(vs) != 4:
        return None
    xs = sorted({v[0] for v in vs})
    ys = sorted({v[1] for v in vs})
    if len(xs) != 2 or len(ys) != 2:
        return None
    expect = {(xs[0], ys[0]), (xs[1], ys[0]), (xs[1], ys[1]), (xs[0], ys[1])}
    if set(vs) != expect:
        return None
    return BoxDomain((xs[0], ys[0]), (xs[1], ys[1]))
