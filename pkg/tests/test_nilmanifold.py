import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apdensity.errors import ConfigInvalid, GroupMismatch, SubgroupViolation
from apdensity.nilmanifold import (
    NilPoint,
    NilPolySeq,
    decompose_nil,
    group_from_name,
    heisenberg,
    load_seqs,
    nil_metric,
    project_mod_level,
    torus,
)
from apdensity.polyarith import RationalPoly, snap
from apdensity.schmidt import decompose_interval

import oracles

H = heisenberg()
small_q = st.fractions(-4, 4, max_denominator=12)
triples = st.tuples(small_q, small_q, small_q)
ints = st.tuples(*[st.integers(-3, 3)] * 3)


@given(triples, triples)
def test_heisenberg_law_is_matrix_product(x, y):
    prod = oracles.matmul3(oracles.heis_matrix(x), oracles.heis_matrix(y))
    assert H.mul(x, y) == oracles.heis_from_matrix(prod)


@given(triples, triples, triples)
def test_group_axioms_exact(x, y, z):
    X, Y, Z = (NilPoint(H, t) for t in (x, y, z))
    assert ((X * Y) * Z).coords == (X * (Y * Z)).coords
    e = NilPoint.identity(H)
    assert (X * e).coords == (e * X).coords == X.coords
    assert (X * X.inverse()).coords == e.coords == (X.inverse() * X).coords


def test_bracket_table_lands_in_center():
    a, b = (Fraction(1), Fraction(0), Fraction(0)), (Fraction(0), Fraction(1), Fraction(0))
    comm = H.mul(H.mul(H.mul(a, b), H.inv(a)), H.inv(b))
    assert comm[:2] == (0, 0) and comm[2] != 0
    assert H.level(2) == 2 and H.level(0) == H.level(1) == 1
    assert not H.is_abelian and torus(3).is_abelian


def test_catalog_limits():
    with pytest.raises(ConfigInvalid):
        torus(9)
    assert group_from_name("torus:4").dim == 4
    with pytest.raises(ConfigInvalid):
        group_from_name("sl2")


def test_lattice_membership():
    assert NilPoint(H, (1, -2, 5)).in_lattice()
    assert not NilPoint(H, (1, Fraction(1, 2), 5)).in_lattice()


def test_group_mismatch():
    with pytest.raises(GroupMismatch):
        NilPoint(H, (0, 0, 0)) * NilPoint(torus(3), (0, 0, 0))


@given(triples, triples, ints, ints)
def test_metric_right_lattice_invariant(x, y, g1, g2):
    X, Y = NilPoint(H, x), NilPoint(H, y)
    Xg, Yg = X * NilPoint(H, g1), Y * NilPoint(H, g2)
    assert nil_metric(Xg, Yg) == nil_metric(X, Y)
    assert X.rep() == Xg.rep()


@settings(max_examples=25)
@given(triples, triples)
def test_metric_matches_brute_force_window(x, y):
    assert nil_metric(NilPoint(H, x), NilPoint(H, y)) == pytest.approx(oracles.heis_metric_naive(x, y), abs=1e-12)


@given(triples, triples)
def test_metric_symmetric(x, y):
    X, Y = NilPoint(H, x), NilPoint(H, y)
    assert nil_metric(X, Y) == pytest.approx(nil_metric(Y, X), abs=1e-12)
    assert nil_metric(X, X) == 0


@settings(max_examples=200)
@given(triples, triples, triples)
def test_triangle_inequality_within_constant_two(x, y, z):
    X, Y, Z = (NilPoint(H, t) for t in (x, y, z))
    assert nil_metric(X, Z) <= 2 * (nil_metric(X, Y) + nil_metric(Y, Z)) + 1e-12


def test_torus_metric_is_weighted_circle_distance():
    x, y = (Fraction(1, 10), Fraction(9, 10)), (0, 0)
    assert nil_metric(NilPoint(torus(2), x), NilPoint(torus(2), y)) == pytest.approx(0.1)
    # at filtration level 2 every coordinate carries the power 1/2
    T = torus(2, degree=2)
    assert nil_metric(NilPoint(T, x), NilPoint(T, y)) == pytest.approx(math.sqrt(0.1))


def test_degree_compatibility_enforced():
    with pytest.raises(ValueError):
        NilPolySeq(H, (RationalPoly([0, 0, 1]), RationalPoly([0]), RationalPoly([0])))
    NilPolySeq(H, (RationalPoly([0, 1]), RationalPoly([0, 1]), RationalPoly([0, 0, 1])))
    with pytest.raises(SubgroupViolation):
        NilPolySeq(H, (RationalPoly([0, 1]), RationalPoly([0]), RationalPoly([0])), level=2)


def test_project_mod_level():
    g = NilPolySeq(H, (RationalPoly([0, 1]), RationalPoly([0, 2]), RationalPoly([0, 0, 3])))
    assert len(project_mod_level(g, 1)) == 2 and len(project_mod_level(g, 2)) == 3


def test_torus_residue_classes():
    g = NilPolySeq(torus(1), (RationalPoly([0, Fraction(1, 7)]),))
    dec = decompose_nil([g], 70)
    assert dec.is_partition()
    for part in dec.parts:
        assert len({int(x) % 7 for x in part.elements()}) == 1
    assert dec.measured_diameter == (0.0,)


def test_identity_sequence_single_part():
    dec = decompose_nil([NilPolySeq.identity(H)], 500)
    assert [(p.first, p.step, p.length) for p in dec.parts] == [(1, 1, 500)]
    assert dec.certified_diameter == (0.0,)


def check_log_exactly(dec):
    for entry in dec.log:
        g, part = entry["g"], entry["local"]
        G = g.group
        for n in range(1, part.length + 1):
            e, h, c = entry["eps"](n), entry["g_prime"](n), entry["gam"](n)
            assert all(Fraction(t).denominator == 1 for t in c.coords)
            assert all(h.coords[j] == 0 for j in G.horizontal(g.level))
            if G.name == "heisenberg":
                M = oracles.matmul3(oracles.matmul3(oracles.heis_matrix(e.coords), oracles.heis_matrix(h.coords)),
                                    oracles.heis_matrix(c.coords))
                assert oracles.heis_from_matrix(M) == g(part.start + part.step * n).coords
            else:
                assert tuple(a + b + d for a, b, d in zip(e.coords, h.coords, c.coords)) == \
                    g(part.start + part.step * n).coords


def test_heisenberg_sqrt2_large():
    g = NilPolySeq(H, (RationalPoly([0, Fraction(1, 2)]), RationalPoly([0, snap(math.sqrt(2))]), RationalPoly([0])))
    dec = decompose_nil([g], 10**4, keep_log=True)
    assert dec.is_partition()
    assert dec.certificates_hold()
    assert dec.min_length == min(p.length for p in dec.parts)
    check_log_exactly(dec)


@settings(max_examples=15)
@given(st.integers(0, 10**6), st.sampled_from([2, 3, 4, 6, 10**4]), st.integers(20, 800))
def test_heisenberg_reduction_identity(seed, den, N):
    rng = np.random.default_rng(seed)
    r = lambda: Fraction(int(rng.integers(0, den)), den)
    g = NilPolySeq(H, (RationalPoly([r(), r()]), RationalPoly([r(), r()]), RationalPoly([r(), r(), r()])))
    dec = decompose_nil([g], N, keep_log=True)
    assert dec.is_partition()
    assert dec.certificates_hold()
    check_log_exactly(dec)


def shatter(dec):
    cut = math.sqrt(dec.N / dec.L)
    out = set()
    for p in dec.parts:
        if p.length <= cut:
            out.update((int(x), 1, 1) for x in p.elements())
        else:
            out.add((p.first, p.step, p.length))
    return out


@settings(max_examples=20)
@given(st.integers(0, 10**6), st.integers(1, 4), st.integers(16, 1500))
def test_abelian_consistency(seed, d, N):
    rng = np.random.default_rng(seed)
    polys = [RationalPoly([snap(a), snap(b)]) for a, b in rng.random((d, 2))]
    seq = NilPolySeq(torus(d), tuple(polys))
    nil = decompose_nil([seq], N)
    flat = decompose_interval(polys, N)
    assert {(p.first, p.step, p.length) for p in nil.parts} == shatter(flat)


def test_load_seqs(tmp_path):
    path = tmp_path / "s.json"
    rec = {"seqs": [{"group": "heisenberg", "coords": [{"coeffs": ["0", "1/2"]}, {"coeffs": ["0", "1/3"]},
                                                          {"coeffs": ["0"]}]}]}
    path.write_text(json.dumps(rec))
    (g,) = load_seqs(path)
    assert g.group == H and g(6).coords == (3, 2, 0)
    bad = tmp_path / "b.json"
    bad.write_text(json.dumps({"seqs": [{"group": "heisenberg"}]}))
    with pytest.raises(ConfigInvalid):
        load_seqs(bad)
