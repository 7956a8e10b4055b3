"""Finitely supported probability measures on matrices with split certificates.

A measure carries an optional :class:`SplitTree` certifying that it is a
laminate of finite order: a binary tree rooted at the barycenter whose every
split moves mass along a rank-one line.  Certification is machine-checked,
exactly in rational mode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

from .core import Scalar, SquareMatrix, rank_one_defect

WEIGHT_TOL = 1e-12
MERGE_TOL = 1e-12
SEPARATION_TOL = 1e-9


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class Atom:
    matrix: SquareMatrix
    weight: Scalar


@dataclass(frozen=True)
class Split:
    parent: int
    b: int
    c: int
    lam: Scalar


@dataclass(frozen=True)
class SplitTree:
    """Node table plus splits; node 0 is the root."""

    nodes: tuple
    splits: tuple

    def __post_init__(self):
        seen_parents = set()
        for s in self.splits:
            for idx in (s.parent, s.b, s.c):
                if not 0 <= idx < len(self.nodes):
                    raise MeasureError(f"split references missing node {idx}")
            if s.parent in seen_parents:
                raise MeasureError(f"node {s.parent} split twice")
            seen_parents.add(s.parent)

    @property
    def root(self) -> SquareMatrix:
        return self.nodes[0]

    def leaf_weights(self):
        """Propagate weights from the root; returns {node_index: weight}."""
        parents = {s.parent: s for s in self.splits}
        exact = self.root.exact
        one = Fraction(1) if exact else 1.0
        weights = {0: one}
        order = [0]
        leaves = {}
        while order:
            idx = order.pop()
            w = weights[idx]
            s = parents.get(idx)
            if s is None:
                leaves[idx] = leaves.get(idx, Fraction(0) if exact else 0.0) + w
                continue
            weights[s.b] = weights.get(s.b, Fraction(0) if exact else 0.0) + w * s.lam
            weights[s.c] = weights.get(s.c, Fraction(0) if exact else 0.0) + w * (one - s.lam)
            order.extend([s.b, s.c])
        return leaves


def _matrices_equal(a: SquareMatrix, b: SquareMatrix, exact: bool) -> bool:
    if exact:
        return a.rows == b.rows
    return (a - b).norm_inf() <= MERGE_TOL


def merge_atoms(pairs: Iterable, exact: bool) -> tuple:
    """Merge by matrix equality, summing weights and dropping zero weights."""
    out = []
    for matrix, weight in pairs:
        if weight == 0:
            continue
        for k, (m0, w0) in enumerate(out):
            if _matrices_equal(m0, matrix, exact):
                out[k] = (m0, w0 + weight)
                break
        else:
            out.append((matrix, weight))
    return tuple(Atom(m, w) for m, w in out if w != 0)


@dataclass(frozen=True)
class DiscreteMatrixMeasure:
    atoms: tuple
    certificate: Optional[SplitTree] = None
    mode: str = "rational"

    def __post_init__(self):
        if self.mode not in ("rational", "float64"):
            raise MeasureError(f"unknown mode {self.mode!r}")
        if not self.atoms:
            raise MeasureError("empty atom list")
        n = self.atoms[0].matrix.n
        for a in self.atoms:
            if a.matrix.n != n:
                raise MeasureError("atoms of mixed dimension")
            if a.weight < 0:
                raise MeasureError(f"negative weight {a.weight}")
            if self.mode == "rational" and not a.matrix.exact:
                raise MeasureError("float atom in rational measure")
        total = sum(a.weight for a in self.atoms)
        if self.mode == "rational":
            if total != 1:
                raise MeasureError(f"weights sum to {total}, not 1")
        elif abs(total - 1) > WEIGHT_TOL:
            raise MeasureError(f"weights sum to {total}, not 1")
        for i in range(len(self.atoms)):
            for j in range(i + 1, len(self.atoms)):
                d = self.atoms[i].matrix - self.atoms[j].matrix
                if self.mode == "rational":
                    if self.atoms[i].matrix.rows == self.atoms[j].matrix.rows:
                        raise MeasureError("duplicate atoms")
                elif d.norm_inf() <= SEPARATION_TOL:
                    raise MeasureError("atoms closer than separation tolerance")

    @property
    def n(self) -> int:
        return self.atoms[0].matrix.n

    @property
    def exact(self) -> bool:
        return self.mode == "rational"

    @staticmethod
    def dirac(matrix: SquareMatrix) -> "DiscreteMatrixMeasure":
        mode = "rational" if matrix.exact else "float64"
        one = Fraction(1) if matrix.exact else 1.0
        tree = SplitTree((matrix,), ())
        return DiscreteMatrixMeasure((Atom(matrix, one),), tree, mode)

    def mass(self, predicate) -> Scalar:
        zero = Fraction(0) if self.exact else 0.0
        return sum((a.weight for a in self.atoms if predicate(a.matrix)), zero)


def barycenter(nu: DiscreteMatrixMeasure) -> SquareMatrix:
    """Weighted atom sum."""
    acc = nu.atoms[0].matrix.scale(nu.atoms[0].weight)
    for a in nu.atoms[1:]:
        acc = acc + a.matrix.scale(a.weight)
    return acc


@dataclass
class CertificateReport:
    status: str  # "pass" | "fail" | "uncertified"
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self):
        return {"status": self.status, "violations": list(self.violations)}


def certify_laminate(nu: DiscreteMatrixMeasure) -> CertificateReport:
    """Check the split tree node by node; missing certificate is not a failure."""
    tree = nu.certificate
    if tree is None:
        return CertificateReport("uncertified", ["no certificate attached"])
    exact = nu.exact
    violations = []
    scale = max(1.0, max(m.norm_inf() for m in tree.nodes))
    for k, s in enumerate(tree.splits):
        p, b, c = tree.nodes[s.parent], tree.nodes[s.b], tree.nodes[s.c]
        if not (0 <= s.lam <= 1):
            violations.append(f"split {k}: lambda {s.lam} outside [0,1]")
        recomb = b.scale(s.lam) + c.scale(1 - s.lam)
        if exact:
            if recomb.rows != p.rows:
                violations.append(f"split {k}: barycenter mismatch")
        elif (recomb - p).norm_inf() > WEIGHT_TOL * scale:
            violations.append(f"split {k}: barycenter mismatch")
        defect = rank_one_defect(b, c)
        if exact:
            if defect != 0:
                violations.append(f"split {k}: rank-one violation (defect {defect})")
        elif float(defect) > WEIGHT_TOL * scale:
            violations.append(f"split {k}: rank-one violation (defect {float(defect):.3e})")
    leaf_pairs = [(tree.nodes[i], w) for i, w in sorted(tree.leaf_weights().items())]
    leaves = merge_atoms(leaf_pairs, exact)
    if len(leaves) != len(nu.atoms):
        violations.append(
            f"leaf/atom mismatch: {len(leaves)} collapsed leaves vs {len(nu.atoms)} atoms"
        )
    else:
        for a in nu.atoms:
            match = next((l for l in leaves if _matrices_equal(l.matrix, a.matrix, exact)), None)
            if match is None:
                violations.append("leaf/atom mismatch: atom missing from leaves")
            elif exact and match.weight != a.weight:
                violations.append(f"weight mismatch on atom ({match.weight} vs {a.weight})")
            elif not exact and abs(match.weight - a.weight) > WEIGHT_TOL:
                violations.append("weight mismatch on atom")
    total = sum(a.weight for a in nu.atoms)
    if exact:
        if total != 1:
            violations.append(f"weight-sum violation: {total}")
    elif abs(total - 1) > WEIGHT_TOL:
        violations.append(f"weight-sum violation: {total}")
    return CertificateReport("fail" if violations else "pass", violations)


def compose(
    outer: Sequence,
    base: Optional[DiscreteMatrixMeasure] = None,
) -> DiscreteMatrixMeasure:
    """Mixture sum(w_j nu_j) with atoms merged.

    Certificates are grafted when every input carries one and the outer
    structure is available: either ``base`` (a certified measure whose atoms
    are the inputs' roots with the given weights) supplies it, or all roots
    coincide so trivial splits chain the trees.  Otherwise the result is
    uncertified.
    """
    outer = list(outer)
    if not outer:
        raise MeasureError("empty composition")
    modes = {nu.mode for _, nu in outer}
    if len(modes) != 1:
        raise MeasureError("mixed modes in composition")
    mode = modes.pop()
    exact = mode == "rational"
    total = sum(w for w, _ in outer)
    if exact:
        if total != 1:
            raise MeasureError(f"outer weights sum to {total}, not 1")
    elif abs(total - 1) > WEIGHT_TOL:
        raise MeasureError(f"outer weights sum to {total}, not 1")

    pairs = [(a.matrix, w * a.weight) for w, nu in outer for a in nu.atoms]
    atoms = merge_atoms(pairs, exact)
    tree = _graft(outer, base, exact)
    return DiscreteMatrixMeasure(atoms, tree, mode)


def _append_tree(nodes, splits, tree: SplitTree, at: int) -> None:
    """Copy `tree` into the node table, identifying its root with node `at`."""
    offset = len(nodes)
    remap = {}
    for i, m in enumerate(tree.nodes):
        if i == 0:
            remap[i] = at
        else:
            remap[i] = offset + len(remap) - 1
            nodes.append(m)
    for s in tree.splits:
        splits.append(Split(remap[s.parent], remap[s.b], remap[s.c], s.lam))


def _graft(outer, base, exact) -> Optional[SplitTree]:
    if any(nu.certificate is None for _, nu in outer):
        return None
    if base is not None:
        if base.certificate is None:
            return None
        bt = base.certificate
        nodes = list(bt.nodes)
        splits = list(bt.splits)
        leaf_nodes = list(bt.leaf_weights().keys())
        for w, nu in outer:
            root = nu.certificate.root
            targets = [i for i in leaf_nodes if _matrices_equal(nodes[i], root, exact)]
            if not targets:
                return None
            for t in targets:
                _append_tree(nodes, splits, nu.certificate, t)
        return SplitTree(tuple(nodes), tuple(splits))
    roots = [nu.certificate.root for _, nu in outer]
    if len(outer) == 1:
        return outer[0][1].certificate
    if all(_matrices_equal(r, roots[0], exact) for r in roots):
        # chain trivial splits of the common root, then hang each tree
        one = Fraction(1) if exact else 1.0
        nodes = [roots[0]]
        splits = []
        remaining = one
        current = 0
        for k, (w, nu) in enumerate(outer):
            if k == len(outer) - 1:
                _append_tree(nodes, splits, nu.certificate, current)
                break
            lam = w / remaining
            nodes.append(roots[0])
            nodes.append(roots[0])
            b, c = len(nodes) - 2, len(nodes) - 1
            splits.append(Split(current, b, c, lam))
            _append_tree(nodes, splits, nu.certificate, b)
            current = c
            remaining = remaining - w
        return SplitTree(tuple(nodes), tuple(splits))
    return None


@dataclass(frozen=True)
class TailProfile:
    """Sampled map t -> mass{|A| > t}; mass is nonincreasing in t."""

    points: tuple

    def __post_init__(self):
        last = None
        for t, mass in self.points:
            if t <= 0:
                raise MeasureError("thresholds must be positive")
            if last is not None and mass > last + WEIGHT_TOL:
                raise MeasureError("tail profile not monotone")
            last = mass

    def mass_at(self, t):
        for tt, mass in self.points:
            if tt == t:
                return mass
        raise KeyError(t)


def tail(nu: DiscreteMatrixMeasure, thresholds: Sequence[Scalar]) -> TailProfile:
    """Mass of atoms with operator norm > t, per threshold."""
    norms = [(a.matrix.operator_norm(), a.weight) for a in nu.atoms]
    pts = []
    for t in sorted(thresholds):
        if t <= 0:
            raise MeasureError("thresholds must be positive")
        zero = Fraction(0) if nu.exact else 0.0
        mass = sum((w for nm, w in norms if nm > t), zero)
        pts.append((t, mass))
    return TailProfile(tuple(pts))


# ---------------------------------------------------------------------------
# JSON serialization (lossless in rational mode; scalars as "p/q" strings)
# ---------------------------------------------------------------------------

def _scalar_out(x: Scalar, exact: bool):
    if exact:
        f = Fraction(x)
        return f"{f.numerator}/{f.denominator}"
    return float(x)


def _scalar_in(x, exact: bool) -> Scalar:
    if exact:
        if isinstance(x, str):
            num, _, den = x.partition("/")
            return Fraction(int(num), int(den) if den else 1)
        return Fraction(x)
    return float(Fraction(*x.split("/"))) if isinstance(x, str) else float(x)


def _matrix_out(m: SquareMatrix, exact: bool):
    return [[_scalar_out(x, exact) for x in row] for row in m.rows]


def _matrix_in(rows, exact: bool) -> SquareMatrix:
    return SquareMatrix([[_scalar_in(x, exact) for x in row] for row in rows])


def measure_to_dict(nu: DiscreteMatrixMeasure) -> dict:
    exact = nu.exact
    out = {
        "n": nu.n,
        "mode": nu.mode,
        "atoms": [
            {"matrix": _matrix_out(a.matrix, exact), "weight": _scalar_out(a.weight, exact)}
            for a in nu.atoms
        ],
    }
    if nu.certificate is not None:
        out["nodes"] = [_matrix_out(m, exact) for m in nu.certificate.nodes]
        out["splits"] = [
            {"parent": s.parent, "b": s.b, "c": s.c, "lambda": _scalar_out(s.lam, exact)}
            for s in nu.certificate.splits
        ]
    return out


def measure_from_dict(data: dict) -> DiscreteMatrixMeasure:
    mode = data["mode"]
    exact = mode == "rational"
    atoms = tuple(
        Atom(_matrix_in(a["matrix"], exact), _scalar_in(a["weight"], exact))
        for a in data["atoms"]
    )
    tree = None
    if data.get("nodes") is not None:
        nodes = tuple(_matrix_in(m, exact) for m in data["nodes"])
        splits = tuple(
            Split(s["parent"], s["b"], s["c"], _scalar_in(s["lambda"], exact))
            for s in data.get("splits", [])
        )
        tree = SplitTree(nodes, splits)
    return DiscreteMatrixMeasure(atoms, tree, mode)


def measure_to_json(nu: DiscreteMatrixMeasure) -> str:
    return json.dumps(measure_to_dict(nu), indent=2, sort_keys=True)


def measure_from_json(text: str) -> DiscreteMatrixMeasure:
    return measure_from_dict(json.loads(text))
