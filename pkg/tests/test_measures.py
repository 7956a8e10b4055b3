"""Measure construction, certification, composition, tails, JSON round-trip."""

from fractions import Fraction

import pytest

from laminate_forge.core import SquareMatrix
from laminate_forge.measures import (
    Atom,
    DiscreteMatrixMeasure,
    MeasureError,
    Split,
    SplitTree,
    barycenter,
    certify_laminate,
    compose,
    measure_from_json,
    measure_to_json,
    tail,
)

F = Fraction


def nu2_with_certificate():
    """The two-split measure {diag(0,1): 1/2, diag(2,0): 1/4, diag(2,2): 1/4}."""
    ident = SquareMatrix.identity(2)
    d01 = SquareMatrix.diag([F(0), F(1)])
    d21 = SquareMatrix.diag([F(2), F(1)])
    d20 = SquareMatrix.diag([F(2), F(0)])
    d22 = SquareMatrix.diag([F(2), F(2)])
    nodes = (ident, d01, d21, d20, d22)
    splits = (Split(0, 1, 2, F(1, 2)), Split(2, 3, 4, F(1, 2)))
    atoms = (Atom(d01, F(1, 2)), Atom(d20, F(1, 4)), Atom(d22, F(1, 4)))
    return DiscreteMatrixMeasure(atoms, SplitTree(nodes, splits), "rational")


def test_barycenter_dirac():
    ident = SquareMatrix.identity(2)
    assert barycenter(DiscreteMatrixMeasure.dirac(ident)) == ident


def test_barycenter_nu2_is_identity():
    assert barycenter(nu2_with_certificate()) == SquareMatrix.identity(2)


def test_certify_nu2_passes():
    report = certify_laminate(nu2_with_certificate())
    assert report.passed, report.violations


def test_certify_uncertified_is_distinct_status():
    nu = nu2_with_certificate()
    bare = DiscreteMatrixMeasure(nu.atoms, None, "rational")
    assert certify_laminate(bare).status == "uncertified"


def test_certify_flags_perturbed_weight():
    base = nu2_with_certificate()
    atoms = [
        Atom(SquareMatrix([[float(x) for x in r] for r in a.matrix.rows]), float(a.weight))
        for a in base.atoms
    ]
    atoms[1] = Atom(atoms[1].matrix, 0.25 + 1e-6)
    nodes = tuple(SquareMatrix([[float(x) for x in r] for r in m.rows]) for m in base.certificate.nodes)
    splits = tuple(Split(s.parent, s.b, s.c, float(s.lam)) for s in base.certificate.splits)
    with pytest.raises(MeasureError):
        # the weight sum invariant is violated at construction already
        DiscreteMatrixMeasure(tuple(atoms), SplitTree(nodes, splits), "float64")
    atoms[0] = Atom(atoms[0].matrix, 0.5 - 1e-6)
    nu = DiscreteMatrixMeasure(tuple(atoms), SplitTree(nodes, splits), "float64")
    report = certify_laminate(nu)
    assert not report.passed
    assert any("weight" in v for v in report.violations)


def test_certify_flags_rank_one_violation():
    a = SquareMatrix.identity(2)
    b = SquareMatrix.diag([F(0), F(0)])
    c = SquareMatrix.identity(2).scale(F(2))
    nodes = (a, b, c)
    splits = (Split(0, 1, 2, F(1, 2)),)
    nu = DiscreteMatrixMeasure(
        (Atom(b, F(1, 2)), Atom(c, F(1, 2))), SplitTree(nodes, splits), "rational"
    )
    report = certify_laminate(nu)
    assert not report.passed
    assert any("rank-one" in v for v in report.violations)


def test_compose_single_input_is_identity():
    d = DiscreteMatrixMeasure.dirac(SquareMatrix.diag([F(1), F(3)]))
    out = compose([(F(1), d)])
    assert out.atoms == d.atoms
    assert certify_laminate(out).passed


def test_compose_merges_equal_diracs():
    d = DiscreteMatrixMeasure.dirac(SquareMatrix.diag([F(1), F(3)]))
    out = compose([(F(1, 2), d), (F(1, 2), d)])
    assert len(out.atoms) == 1
    assert out.atoms[0].weight == 1
    assert certify_laminate(out).passed


def test_compose_weight_sum_enforced():
    d = DiscreteMatrixMeasure.dirac(SquareMatrix.identity(2))
    with pytest.raises(MeasureError):
        compose([(F(1, 2), d)])


def test_compose_preserves_barycenter_mixture():
    a = DiscreteMatrixMeasure.dirac(SquareMatrix.diag([F(0), F(1)]))
    b = DiscreteMatrixMeasure.dirac(SquareMatrix.diag([F(2), F(1)]))
    out = compose([(F(1, 2), a), (F(1, 2), b)])
    assert barycenter(out) == SquareMatrix.identity(2)
    # rank-one roots differ, no base: result is honest about certification
    assert out.certificate is None


def test_tail_values():
    assert tail(DiscreteMatrixMeasure.dirac(SquareMatrix.identity(2)), [2]).points[0][1] == 0
    profile = tail(nu2_with_certificate(), [1, 2])
    assert profile.mass_at(1) == F(1, 2)
    assert profile.mass_at(2) == 0


def test_tail_monotone():
    profile = tail(nu2_with_certificate(), [F(1, 2), 1, F(3, 2), 2, 3])
    masses = [m for _, m in profile.points]
    assert all(a >= b for a, b in zip(masses, masses[1:]))


def test_json_roundtrip_exact_lossless():
    nu = nu2_with_certificate()
    text = measure_to_json(nu)
    back = measure_from_json(text)
    assert back.atoms == nu.atoms
    assert back.certificate.nodes == nu.certificate.nodes
    assert back.certificate.splits == nu.certificate.splits
    assert certify_laminate(back).passed
    # big denominators survive
    nu3 = DiscreteMatrixMeasure.dirac(SquareMatrix.diag([F(10**40, 3), F(1, 7**30)]))
    assert measure_from_json(measure_to_json(nu3)).atoms == nu3.atoms


def test_zero_weight_atoms_dropped_by_merge():
    from laminate_forge.measures import merge_atoms

    m1 = SquareMatrix.diag([F(1), F(1)])
    m2 = SquareMatrix.diag([F(2), F(1)])
    out = merge_atoms([(m1, F(1)), (m2, F(0))], exact=True)
    assert len(out) == 1
