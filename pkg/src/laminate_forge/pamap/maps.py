"""Piecewise-affine maps on planar boxes: the cell complex and its checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import ensure_ccw, point_in_polygon, polygon_area

CONTINUITY_TOL = 1e-10
BOUNDARY_TOL = 1e-10
VOLUME_REL_TOL = 1e-9
LOOP_RESIDUAL_ERROR = 1e-8


class MapError(ValueError):
    pass


@dataclass(frozen=True)
class BoxDomain:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or any(a >= b for a, b in zip(self.lo, self.hi)):
            raise MapError("box needs lo < hi componentwise")

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> Fraction:
        out = Fraction(1)
        for a, b in zip(self.lo, self.hi):
            out *= Fraction(b) - Fraction(a)
        return out

    def vertices(self):
        (x0, y0), (x1, y1) = self.lo, self.hi
        return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]

    def contains(self, pt, tol=1e-9) -> bool:
        return all(a - tol <= x <= b + tol for x, a, b in zip(pt, self.lo, self.hi))


class Cell:
    """Convex polygon with one affine map f(x) = M x + b."""

    __slots__ = ("vertices", "matrix", "offset", "tag")

    def __init__(self, vertices, matrix, offset, tag=""):
        self.vertices = tuple(ensure_ccw([tuple(map(float, v)) for v in vertices]))
        if len(self.vertices) < 3:
            raise MapError("degenerate cell")
        self.matrix = np.asarray(matrix, dtype=float).reshape(2, 2)
        self.offset = np.asarray(offset, dtype=float).reshape(2)
        self.tag = tag

    def apply(self, pt) -> np.ndarray:
        return self.matrix @ np.asarray(pt, dtype=float) + self.offset

    @property
    def area(self) -> Fraction:
        return polygon_area(self.vertices)

    def centroid(self):
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return (sum(xs) / len(xs), sum(ys) / len(ys))

    def operator_norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    def min_symmetric_eigenvalue(self) -> float:
        s = 0.5 * (self.matrix + self.matrix.T)
        return float(np.linalg.eigvalsh(s)[0])

    def asymmetry(self) -> float:
        return float(abs(self.matrix[0, 1] - self.matrix[1, 0]))


class _GridIndex:
    """Uniform bucket grid over cell bounding boxes for point location."""

    def __init__(self, cells: Sequence[Cell], domain: BoxDomain):
        self.cells = cells
        self.domain = domain
        n = max(1, int(math.sqrt(max(1, len(cells)))))
        self.res = min(n, 256)
        self.x0, self.y0 = domain.lo
        self.dx = (domain.hi[0] - domain.lo[0]) / self.res
        self.dy = (domain.hi[1] - domain.lo[1]) / self.res
        self.buckets = {}
        for idx, c in enumerate(cells):
            xs = [v[0] for v in c.vertices]
            ys = [v[1] for v in c.vertices]
            for bx in range(self._ix(min(xs)), self._ix(max(xs)) + 1):
                for by in range(self._iy(min(ys)), self._iy(max(ys)) + 1):
                    self.buckets.setdefault((bx, by), []).append(idx)

    def _ix(self, x):
        return min(self.res - 1, max(0, int((x - self.x0) / self.dx)))

    def _iy(self, y):
        return min(self.res - 1, max(0, int((y - self.y0) / self.dy)))

    def candidates(self, pt):
        return self.buckets.get((self._ix(pt[0]), self._iy(pt[1])), ())

    def locate(self, pt, tol=1e-9) -> Optional[int]:
        for idx in self.candidates(pt):
            if point_in_polygon(pt, self.cells[idx].vertices, tol):
                return idx
        return None


class PiecewiseAffineMap:
    """Finite cell complex over a box with an affine boundary trace."""

    def __init__(self, domain: BoxDomain, cells: Sequence[Cell], boundary_matrix, boundary_offset=None):
        if domain.n != 2:
            raise MapError("planar domains only; higher dimensions are out of scope here")
        self.domain = domain
        self.cells = list(cells)
        self.boundary_matrix = np.asarray(boundary_matrix, dtype=float).reshape(2, 2)
        self.boundary_offset = (
            np.zeros(2) if boundary_offset is None else np.asarray(boundary_offset, dtype=float).reshape(2)
        )
        self._index = None

    @property
    def index(self) -> _GridIndex:
        if self._index is None:
            self._index = _GridIndex(self.cells, self.domain)
        return self._index

    def evaluate(self, pt):
        idx = self.index.locate(pt)
        if idx is None:
            raise MapError(f"point {pt} not inside any cell")
        return self.cells[idx].apply(pt)

    def locate(self, pt) -> Optional[int]:
        return self.index.locate(pt)

    # -- verification ------------------------------------------------------
    def total_cell_volume(self) -> Fraction:
        return sum((c.area for c in self.cells), Fraction(0))

    def volume_defect(self) -> float:
        return float(abs(self.total_cell_volume() - self.domain.volume) / self.domain.volume)

    def continuity_residual(self) -> float:
        """Max disagreement of incident affine maps over all cell vertices."""
        worst = 0.0
        seen = {}
        for idx, c in enumerate(self.cells):
            for v in c.vertices:
                seen.setdefault(v, []).append(idx)
        for v, owners in seen.items():
            incident = set(owners)
            for cand in self.index.candidates(v):
                if point_in_polygon(v, self.cells[cand].vertices, 1e-12):
                    incident.add(cand)
            incident = sorted(incident)
            if len(incident) < 2:
                continue
            vals = [self.cells[i].apply(v) for i in incident]
            for i in range(1, len(vals)):
                worst = max(worst, float(np.abs(vals[i] - vals[0]).max()))
        return worst

    def boundary_residual(self) -> float:
        """Max |f(v) - (A v + b)| over cell vertices on the domain boundary."""
        (x0, y0), (x1, y1) = self.domain.lo, self.domain.hi
        worst = 0.0
        for c in self.cells:
            for v in c.vertices:
                on = (
                    abs(v[0] - x0) <= 1e-12 or abs(v[0] - x1) <= 1e-12
                    or abs(v[1] - y0) <= 1e-12 or abs(v[1] - y1) <= 1e-12
                )
                if on:
                    target = self.boundary_matrix @ np.asarray(v) + self.boundary_offset
                    worst = max(worst, float(np.abs(c.apply(v) - target).max()))
        return worst

    def validate(self, continuity_tol=CONTINUITY_TOL, boundary_tol=BOUNDARY_TOL):
        vd = self.volume_defect()
        if vd > VOLUME_REL_TOL:
            raise MapError(f"cells cover {1 - vd:.12f} of the domain")
        cr = self.continuity_residual()
        if cr > continuity_tol:
            raise MapError(f"facet continuity residual {cr:.3e}")
        br = self.boundary_residual()
        if br > boundary_tol:
            raise MapError(f"boundary trace residual {br:.3e}")
        return {"volume_defect": vd, "continuity": cr, "boundary": br}

    # -- statistics ----------------------------------------------------------
    def gradient_histogram(self, references, delta: float):
        """Volume fraction per reference matrix (within delta, op norm)."""
        refs = [np.asarray(r, dtype=float) for r in references]
        fractions = [Fraction(0) for _ in refs]
        residual = Fraction(0)
        for c in self.cells:
            dists = [float(np.linalg.norm(c.matrix - r, 2)) for r in refs]
            best = int(np.argmin(dists)) if refs else -1
            if refs and dists[best] < delta:
                fractions[best] += c.area
            else:
                residual += c.area
        total = self.domain.volume
        return GradientHistogram(
            [(refs[i], delta, fractions[i] / total) for i in range(len(refs))],
            residual / total,
        )

    def tail_fractions(self, thresholds):
        """t -> volume fraction {|Df| > t}."""
        norms = [(c.operator_norm(), c.area) for c in self.cells]
        total = self.domain.volume
        out = []
        for t in sorted(thresholds):
            mass = sum((a for nm, a in norms if nm > t), Fraction(0))
            out.append((float(t), float(mass / total)))
        return out

    def lp_cell_sum(self, p: float) -> float:
        return float(sum(c.operator_norm() ** p * float(c.area) for c in self.cells))


@dataclass(frozen=True)
class GradientHistogram:
    entries: list  # (reference matrix, delta, fraction)
    residual: Fraction

    def __post_init__(self):
        total = sum((f for _, _, f in self.entries), Fraction(0)) + self.residual
        if abs(float(total) - 1.0) > 1e-9:
            raise MapError(f"histogram fractions sum to {float(total)}")

    def fraction(self, i) -> float:
        return float(self.entries[i][2])


def affine_map(domain: BoxDomain, matrix, offset=None, tag="") -> PiecewiseAffineMap:
    off = np.zeros(2) if offset is None else np.asarray(offset, dtype=float)
    cell = Cell(domain.vertices(), matrix, off, tag=tag)
    return PiecewiseAffineMap(domain, [cell], matrix, off)


# ---------------------------------------------------------------------------
# Holder estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HolderEstimate:
    lower: float
    upper: float
    sup_norm: float
    lipschitz: float

    def to_dict(self):
        return {
            "lower": self.lower,
            "upper": self.upper,
            "sup_norm": self.sup_norm,
            "lipschitz": self.lipschitz,
        }


def _difference_fields(f: PiecewiseAffineMap, g):
    """Per-cell (matrix, offset) of f - g when g is affine, else None."""
    if isinstance(g, PiecewiseAffineMap):
        return None
    gm, go = g
    gm = np.asarray(gm, dtype=float)
    go = np.asarray(go, dtype=float)
    return [(c.matrix - gm, c.offset - go) for c in f.cells]


def holder_seminorm_estimate(f: PiecewiseAffineMap, g, alpha: float, pairs: int = 10 ** 4, seed: int = 0):
    """Certified upper bound and sampled lower bound for |f - g|_{C^alpha}.

    g is either an affine pair (matrix, offset) or a map on the same domain.
    The upper bound interpolates the Lipschitz constant against the sup norm,
    cellwise where the difference vanishes on all cell boundaries (then the
    cutting-and-pasting factor 2 applies), globally otherwise.
    """
    if isinstance(g, PiecewiseAffineMap) and g.domain != f.domain:
        raise MapError("mismatched domains")
    if not (0 < alpha <= 1):
        raise MapError("alpha must lie in (0, 1]")
    diff = _difference_fields(f, g)

    def d_eval(pt):
        fv = f.evaluate(pt)
        gv = g.evaluate(pt) if isinstance(g, PiecewiseAffineMap) else (
            np.asarray(g[0], dtype=float) @ np.asarray(pt) + np.asarray(g[1], dtype=float)
        )
        return fv - gv

    # sup norm and per-cell data from vertices (attained there for affine cells)
    sup = 0.0
    vertex_pool = []
    if diff is not None:
        cell_sup = []
        cell_lip = []
        boundary_ok = True
        for c, (dm, doff) in zip(f.cells, diff):
            s = 0.0
            for v in c.vertices:
                val = float(np.abs(dm @ np.asarray(v) + doff).max())
                sval = float(np.linalg.norm(dm @ np.asarray(v) + doff))
                s = max(s, sval)
                vertex_pool.append(v)
                if val > 1e-11:
                    boundary_ok_here = False
            cell_sup.append(s)
            cell_lip.append(float(np.linalg.norm(dm, 2)))
            sup = max(sup, s)
        lip = max(cell_lip) if cell_lip else 0.0
        global_bound = lip ** alpha * (2.0 * sup) ** (1 - alpha) if sup > 0 else 0.0
        # factor-2 assembly is valid when the difference vanishes on every
        # shared facet; detect via vertices incident to more than one cell
        shared_zero = _difference_vanishes_on_shared_vertices(f, diff)
        if shared_zero:
            assembled = 2.0 * max(
                (l ** alpha * (2.0 * s) ** (1 - alpha) if s > 0 else 0.0)
                for l, s in zip(cell_lip, cell_sup)
            )
            upper = min(global_bound, assembled)
        else:
            upper = global_bound
    else:
        for c in f.cells:
            vertex_pool.extend(c.vertices)
        sup = max((float(np.linalg.norm(d_eval(v))) for v in _sample(vertex_pool, 4000, seed)), default=0.0)
        lip_f = max((c.operator_norm() for c in f.cells), default=0.0)
        lip_g = max((c.operator_norm() for c in g.cells), default=0.0)
        lip = lip_f + lip_g
        upper = lip ** alpha * (2.0 * sup) ** (1 - alpha) if sup > 0 else 0.0

    # sampled lower bound
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(f.domain.lo), np.asarray(f.domain.hi)
    lower = 0.0
    verts = _sample(vertex_pool, 141, seed)  # ~1e4 vertex pairs
    for i in range(len(verts)):
        for j in range(i + 1, len(verts)):
            x, y = np.asarray(verts[i]), np.asarray(verts[j])
            dist = float(np.linalg.norm(x - y))
            if dist < 1e-14:
                continue
            gap = float(np.linalg.norm(d_eval(verts[i]) - d_eval(verts[j])))
            lower = max(lower, gap / dist ** alpha)
    for _ in range(pairs):
        x = lo + rng.random(2) * (hi - lo)
        y = lo + rng.random(2) * (hi - lo)
        dist = float(np.linalg.norm(x - y))
        if dist < 1e-14:
            continue
        gap = float(np.linalg.norm(d_eval(tuple(x)) - d_eval(tuple(y))))
        lower = max(lower, gap / dist ** alpha)
    return HolderEstimate(lower, max(upper, lower), sup, lip)


def _difference_vanishes_on_shared_vertices(f, diff) -> bool:
    owners = {}
    for idx, c in enumerate(f.cells):
        for v in c.vertices:
            owners.setdefault(v, set()).add(idx)
    for v, who in owners.items():
        if len(who) < 2:
            continue
        idx = next(iter(who))
        dm, doff = diff[idx]
        if float(np.linalg.norm(dm @ np.asarray(v) + doff)) > 1e-11:
            return False
    return True


def _sample(pool, k, seed):
    if len(pool) <= k:
        return list(pool)
    rng = np.random.default_rng(seed + 1)
    picks = rng.choice(len(pool), size=k, replace=False)
    return [pool[i] for i in picks]


# ---------------------------------------------------------------------------
# Gluing
# ---------------------------------------------------------------------------

def glue(base: PiecewiseAffineMap, patches, alpha: float = 0.5, verify_bound: bool = True):
    """Replace the base cells covered by each patch domain with patch cells.

    Each patch is (subdomain: BoxDomain, map) whose boundary trace must match
    the base map on the patch boundary vertexwise.  Returns (map, report).
    """
    replaced = set()
    new_cells = []
    norms = []
    for k, (sub, patch) in enumerate(patches):
        covered = []
        for idx, c in enumerate(base.cells):
            if idx in replaced:
                continue
            if all(sub.contains(v, 1e-12) for v in c.vertices):
                covered.append(idx)
        cov_area = sum((base.cells[i].area for i in covered), Fraction(0))
        if abs(float(cov_area - sub.volume)) > 1e-9 * float(sub.volume):
            raise MapError(f"patch {k} subdomain is not a union of base cells")
        for i in covered:
            for v in base.cells[i].vertices:
                if _on_box_boundary(v, sub):
                    got = patch.evaluate(v)
                    want = base.cells[i].apply(v)
                    if float(np.abs(got - want).max()) > CONTINUITY_TOL:
                        raise MapError(
                            f"patch {k} trace mismatch at vertex {v}: "
                            f"{got} vs {want}"
                        )
        replaced.update(covered)
        if verify_bound and len(covered) == 1:
            c = base.cells[next(iter(covered))]
            est = holder_seminorm_estimate(patch, (c.matrix, c.offset), alpha)
            norms.append(est.upper)
        new_cells.extend(patch.cells)
    kept = [c for i, c in enumerate(base.cells) if i not in replaced]
    out = PiecewiseAffineMap(
        base.domain, kept + new_cells, base.boundary_matrix, base.boundary_offset
    )
    bound = 2.0 * max(norms) if norms else 0.0
    return out, {"patch_count": len(patches), "holder_bound": bound}


def _on_box_boundary(v, box: BoxDomain, tol=1e-12) -> bool:
    return (
        abs(v[0] - box.lo[0]) <= tol or abs(v[0] - box.hi[0]) <= tol
        or abs(v[1] - box.lo[1]) <= tol or abs(v[1] - box.hi[1]) <= tol
    )


# ---------------------------------------------------------------------------
# Potential reconstruction and injectivity
# ---------------------------------------------------------------------------

class Potential:
    """Piecewise quadratic u with grad u = f, glued over a spanning tree."""

    def __init__(self, f: PiecewiseAffineMap, constants, loop_residual):
        self.map = f
        self.constants = constants
        self.loop_residual = loop_residual

    def evaluate(self, pt) -> float:
        idx = self.map.locate(pt)
        if idx is None:
            raise MapError(f"point {pt} outside the complex")
        c = self.map.cells[idx]
        x = np.asarray(pt, dtype=float)
        s = 0.5 * (c.matrix + c.matrix.T)
        return float(0.5 * x @ (s @ x) + c.offset @ x + self.constants[idx])

    def midpoint_convexity_violations(self, trials: int = 10 ** 4, seed: int = 7, tol: float = 1e-10):
        rng = np.random.default_rng(seed)
        lo, hi = np.asarray(self.map.domain.lo), np.asarray(self.map.domain.hi)
        bad = 0
        for _ in range(trials):
            x = lo + rng.random(2) * (hi - lo)
            y = lo + rng.random(2) * (hi - lo)
            try:
                um = self.evaluate(tuple(0.5 * (x + y)))
                ux, uy = self.evaluate(tuple(x)), self.evaluate(tuple(y))
            except MapError:
                continue
            if um > 0.5 * (ux + uy) + tol:
                bad += 1
        return bad


def _adjacency(f: PiecewiseAffineMap):
    """(i, j, shared point) pairs via edge midpoints; handles T-junctions."""
    pairs = {}
    for idx, c in enumerate(f.cells):
        vs = c.vertices
        for k in range(len(vs)):
            a, b = vs[k], vs[(k + 1) % len(vs)]
            mid = ((a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0)
            for other in f.index.candidates(mid):
                if other == idx:
                    continue
                if point_in_polygon(mid, f.cells[other].vertices, 1e-12):
                    key = (min(idx, other), max(idx, other))
                    pairs.setdefault(key, mid)
    return [(i, j, m) for (i, j), m in pairs.items()]


def reconstruct_potential(f: PiecewiseAffineMap, symmetry_tol: float = 1e-9) -> Potential:
    """Integrate the gradient field; raises on asymmetric cells or a
    path-dependence residual above 1e-8."""
    for idx, c in enumerate(f.cells):
        scale = max(1.0, float(np.abs(c.matrix).max()))
        if c.asymmetry() > symmetry_tol * scale:
            raise MapError(f"cell {idx} has asymmetric gradient (defect {c.asymmetry():.3e})")

    def u_free(idx, pt):
        c = f.cells[idx]
        x = np.asarray(pt, dtype=float)
        s = 0.5 * (c.matrix + c.matrix.T)
        return float(0.5 * x @ (s @ x) + c.offset @ x)

    edges = _adjacency(f)
    graph = {}
    for i, j, m in edges:
        graph.setdefault(i, []).append((j, m))
        graph.setdefault(j, []).append((i, m))
    n = len(f.cells)
    constants = [None] * n
    for root in range(n):
        if constants[root] is not None:
            continue
        constants[root] = 0.0
        stack = [root]
        while stack:
            i = stack.pop()
            for j, m in graph.get(i, ()):
                if constants[j] is None:
                    constants[j] = constants[i] + u_free(i, m) - u_free(j, m)
                    stack.append(j)
    residual = 0.0
    for i, j, m in edges:
        gap = abs((u_free(i, m) + constants[i]) - (u_free(j, m) + constants[j]))
        residual = max(residual, gap)
    if residual > LOOP_RESIDUAL_ERROR:
        raise MapError(f"non-integrable field: loop residual {residual:.3e}")
    return Potential(f, constants, residual)


@dataclass
class InjectivityReport:
    passed: bool
    min_eigenvalue: float
    failing_cells: list = field(default_factory=list)
    loop_residual: Optional[float] = None
    convexity_violations: Optional[int] = None
    sampled_pair_failures: Optional[int] = None

    def to_dict(self):
        return {
            "pass": self.passed,
            "min_eigenvalue": self.min_eigenvalue,
            "failing_cells": list(self.failing_cells),
            "loop_residual": self.loop_residual,
            "convexity_violations": self.convexity_violations,
            "sampled_pair_failures": self.sampled_pair_failures,
        }


def check_injectivity(f: PiecewiseAffineMap, pair_trials: int = 10 ** 4, seed: int = 11) -> InjectivityReport:
    """Symmetric positive-definite cell gradients plus a convex potential."""
    failing = []
    min_eig = math.inf
    for idx, c in enumerate(f.cells):
        scale = max(1.0, float(np.abs(c.matrix).max()))
        if c.asymmetry() > 1e-9 * scale:
            failing.append(idx)
            continue
        ev = c.min_symmetric_eigenvalue()
        min_eig = min(min_eig, ev)
        if ev <= 0:
            failing.append(idx)
    if failing:
        return InjectivityReport(False, min_eig if min_eig < math.inf else 0.0, failing)
    try:
        pot = reconstruct_potential(f)
    except MapError:
        return InjectivityReport(False, min_eig, ["potential"])
    violations = pot.midpoint_convexity_violations(trials=2000, seed=seed)
    # monotone gradient maps expand by at least the minimum eigenvalue
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(f.domain.lo), np.asarray(f.domain.hi)
    bad_pairs = 0
    for _ in range(pair_trials):
        x = lo + rng.random(2) * (hi - lo)
        y = lo + rng.random(2) * (hi - lo)
        if np.linalg.norm(x - y) < 1e-12:
            continue
        try:
            fx, fy = f.evaluate(tuple(x)), f.evaluate(tuple(y))
        except MapError:
            continue
        if float(np.linalg.norm(fx - fy)) < 0.5 * min_eig * float(np.linalg.norm(x - y)) - 1e-12:
            bad_pairs += 1
    ok = violations == 0 and bad_pairs == 0
    return InjectivityReport(ok, min_eig, [], pot.loop_residual, violations, bad_pairs)
