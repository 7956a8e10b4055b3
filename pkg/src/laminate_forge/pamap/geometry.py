"""Planar convex-polygon primitives for the cell complex.

Vertices are floats; areas and volume fractions are accumulated in exact
rationals over those floats, so partition sums telescope exactly.
"""

from __future__ import annotations

from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

Point = Tuple[float, float]

CLIP_EPS = 1e-13


def polygon_area(vertices: Sequence[Point]) -> Fraction:
    """Shoelace area over exact rational lifts of the float coordinates."""
    n = len(vertices)
    if n < 3:
        return Fraction(0)
    acc = Fraction(0)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        acc += Fraction(x1) * Fraction(y2) - Fraction(x2) * Fraction(y1)
    return abs(acc) / 2


def polygon_centroid(vertices: Sequence[Point]) -> Point:
    sx = sum(x for x, _ in vertices)
    sy = sum(y for _, y in vertices)
    return (sx / len(vertices), sy / len(vertices))


def clip_halfplane(vertices: Sequence[Point], a: Point, b: float) -> List[Point]:
    """Sutherland-Hodgman clip of a convex polygon against {a . x <= b}."""
    out: List[Point] = []
    n = len(vertices)
    if n == 0:
        return out
    vals = [a[0] * x + a[1] * y - b for x, y in vertices]
    for i in range(n):
        p, q = vertices[i], vertices[(i + 1) % n]
        vp, vq = vals[i], vals[(i + 1) % n]
        if vp <= CLIP_EPS:
            out.append(p)
        if (vp < -CLIP_EPS and vq > CLIP_EPS) or (vp > CLIP_EPS and vq < -CLIP_EPS):
            t = vp / (vp - vq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return _dedup(out)


def clip_slab(vertices: Sequence[Point], direction: Point, lo: float, hi: float) -> List[Point]:
    """Polygon cut to {lo <= direction . x <= hi}."""
    out = clip_halfplane(vertices, direction, hi)
    out = clip_halfplane(out, (-direction[0], -direction[1]), -lo)
    return out


def _dedup(vertices: List[Point]) -> List[Point]:
    out: List[Point] = []
    for p in vertices:
        if not out or (abs(p[0] - out[-1][0]) > CLIP_EPS or abs(p[1] - out[-1][1]) > CLIP_EPS):
            out.append(p)
    if len(out) > 1 and abs(out[0][0] - out[-1][0]) <= CLIP_EPS and abs(out[0][1] - out[-1][1]) <= CLIP_EPS:
        out.pop()
    return out


def point_in_polygon(pt: Point, vertices: Sequence[Point], tol: float = 1e-9) -> bool:
    """Membership in a convex polygon (vertices in consistent orientation)."""
    n = len(vertices)
    if n < 3:
        return False
    sign = 0
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        cross = (x2 - x1) * (pt[1] - y1) - (y2 - y1) * (pt[0] - x1)
        if abs(cross) <= tol:
            continue
        s = 1 if cross > 0 else -1
        if sign == 0:
            sign = s
        elif s != sign:
            return False
    return True


def triangle_orientation(p0: Point, p1: Point, p2: Point) -> float:
    return (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])


def ensure_ccw(vertices: Sequence[Point]) -> List[Point]:
    vs = list(vertices)
    if len(vs) >= 3 and signed_area(vs) < 0:
        vs.reverse()
    return vs


def signed_area(vertices: Sequence[Point]) -> float:
    acc = 0.0
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        acc += x1 * y2 - x2 * y1
    return acc / 2.0
