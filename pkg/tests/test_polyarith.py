import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from apdensity.errors import ConfigInvalid, DiameterTooLarge
from apdensity.polyarith import (
    Progression,
    RationalPoly,
    check_small_int_lemma,
    diameter_mod1,
    dump_polys,
    eval_mod1,
    frac_norm,
    load_polys,
    rebase,
    smoothness_norm,
    snap,
    split_small_int,
)

import oracles

rationals = st.fractions(min_value=-5, max_value=5, max_denominator=50)
polys = st.lists(rationals, min_size=1, max_size=5).map(RationalPoly)


def test_eval_mod1_examples():
    assert eval_mod1(RationalPoly([0, 3]), 5) == 0
    assert eval_mod1(RationalPoly([0, Fraction(1, 3)]), 4) == pytest.approx(1 / 3, abs=0)
    assert eval_mod1(RationalPoly([0, 0, Fraction(1, 2)]), 5) == 0


def test_snap_is_dyadic_and_exact_for_rationals():
    assert snap("2/6") == Fraction(1, 3)
    s = snap(math.sqrt(2))
    assert s.denominator & (s.denominator - 1) == 0
    assert float(s) == math.sqrt(2)


@given(polys, st.integers(0, 200))
def test_binomial_eval_matches_oracle_and_horner(P, n):
    assert P(n) == oracles.binom_eval(P.coeffs, n)
    assert oracles.horner(P.to_monomial(), n) == P(n)


@given(polys)
def test_monomial_round_trip(P):
    assert RationalPoly.from_monomial(P.to_monomial()) == P


@given(polys, st.integers(1, 5), st.integers(-5, 5), st.integers(1, 5), st.integers(-5, 5))
def test_rebase_functorial(P, a, b, a2, b2):
    assert rebase(rebase(P, a, b), a2, b2) == rebase(P, a * a2, a * b2 + b)


@given(polys, st.integers(1, 6), st.integers(-10, 10), st.integers(0, 30))
def test_rebase_evaluates(P, a, b, n):
    assert rebase(P, a, b)(n) == P(a * n + b)


@given(polys, st.integers(1, 40))
def test_smoothness_zero_iff_integer_nonconstant_coeffs(P, N):
    is_zero = smoothness_norm(P, N) == 0
    assert is_zero == (N == 1 or all(c.denominator == 1 for c in P.coeffs[1:]))


@given(polys, st.integers(2, 40))
def test_smoothness_norm_definition(P, N):
    expect = max((Fraction(N) ** i * oracles.frac_norm(c) for i, c in enumerate(P.coeffs) if i), default=0)
    assert smoothness_norm(P, N) == expect


@given(st.fractions(min_value=-3, max_value=3, max_denominator=97))
def test_frac_norm(x):
    r = frac_norm(x)
    assert 0 <= r <= Fraction(1, 2)
    assert r == min(abs(x - math.floor(x)), abs(math.ceil(x) - x))
    assert (r == 0) == (x.denominator == 1)


@given(st.lists(rationals, min_size=2, max_size=4), st.integers(2, 60))
def test_diameter_matches_exact_oracle(coeffs, N):
    P = RationalPoly(coeffs)
    ns = range(1, N + 1)
    exact = oracles.exact_circular_diameter(P.values(ns))
    assert diameter_mod1(P, ns) == pytest.approx(float(exact), abs=1e-12)


@given(st.lists(st.integers(-9, 9), min_size=1, max_size=4),
       st.lists(st.floats(-1, 1), min_size=1, max_size=4), st.integers(2, 50))
def test_split_small_int_reconstructs(ints, smalls, N):
    small = [snap(s * 1e-3 / N**i) for i, s in enumerate(smalls)]
    small[0] = snap(smalls[0] / 4)
    P = RationalPoly(ints) + RationalPoly(small)
    sp = split_small_int(P, N, 0.25, bound_factor=None)
    for n in range(1, N + 1):
        assert sp.small(n) + sp.integer(n) == P(n)
        assert sp.integer(n).denominator == 1
    assert abs(sp.constant_term) <= Fraction(1, 2)


def test_split_rejects_wide_polynomial():
    with pytest.raises(DiameterTooLarge):
        split_small_int(RationalPoly([0, Fraction(1, 3)]), 10, 0.1)


def test_linear_planted_ratio_is_one():
    N, eps = 100, Fraction(1, 1000)
    assert smoothness_norm(RationalPoly([0, eps / N]), N) / eps == 1


def test_integer_coefficient_ratio_zero():
    assert smoothness_norm(RationalPoly([3, -2, 7]), 100) == 0


def test_small_int_lemma_report_is_finite():
    rep = check_small_int_lemma(3, 200, 1e-3, 60, seed=1)
    assert rep["trials"] == 60
    assert math.isfinite(rep["max_ratio"]) and rep["max_ratio"] > 0


def test_poly_file_round_trip(tmp_path):
    ps = [RationalPoly([Fraction(1, 7), Fraction(-2, 9)]), RationalPoly([0, 0, Fraction(3, 5)])]
    path = tmp_path / "p.json"
    path.write_text(dump_polys(ps))
    assert load_polys(path) == ps
    mono = tmp_path / "m.json"
    mono.write_text(json.dumps({"basis": "monomial", "coeffs": ["0", "0", "1"]}))
    assert load_polys(mono)[0](7) == 49


def test_poly_file_errors(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_polys(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"coeffs": ["1/0"]}))
    with pytest.raises(ConfigInvalid):
        load_polys(bad)


def test_progression_indexing():
    p = Progression(3, 4, 5, 23)
    assert p.elements().tolist() == [7, 11, 15, 19, 23]
    assert p.to_record() == {"first": 7, "step": 4, "length": 5}
    sub = Progression(1, 2, 2, 5)  # elements 3, 5 of [5]
    assert p.compose(sub).elements().tolist() == [15, 23]
    with pytest.raises(ValueError):
        Progression(3, 4, 6, 23)
    assert np.array_equal(Progression.interval(4).elements(), [1, 2, 3, 4])
