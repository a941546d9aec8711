import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apdensity.errors import BadExtension, ConfigInvalid, Infeasible
from apdensity.gowers import (
    GridFunction,
    ap_operator,
    fourier_u2_power,
    gowers_norm_cyclic,
    gowers_norm_interval,
    gowers_power_cyclic,
    load_function,
    von_neumann_check,
)

import oracles


def bounded(rng, N, complex_=True):
    z = rng.normal(size=N) + (1j * rng.normal(size=N) if complex_ else 0)
    return z / np.maximum(1.0, np.abs(z)) * rng.uniform(0, 1, size=N)


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=30)
@given(seeds, st.integers(1, 9), st.integers(1, 3))
def test_direct_matches_enumeration(seed, N, s):
    v = bounded(np.random.default_rng(seed), N)
    assert gowers_power_cyclic(v, s, "direct") == pytest.approx(oracles.gowers_power_naive(v, s).real, abs=1e-12)


@settings(max_examples=30)
@given(seeds, st.integers(1, 40), st.integers(2, 3))
def test_fourier_matches_direct(seed, N, s):
    v = bounded(np.random.default_rng(seed), N)
    assert gowers_power_cyclic(v, s, "fourier") == pytest.approx(gowers_power_cyclic(v, s, "direct"), abs=1e-12)


@settings(max_examples=30)
@given(seeds, st.integers(1, 64))
def test_u1_is_abs_mean(seed, N):
    v = bounded(np.random.default_rng(seed), N)
    assert gowers_norm_cyclic(GridFunction(v, "cyclic"), 1) == pytest.approx(abs(v.mean()), abs=1e-12)


@settings(max_examples=30)
@given(seeds, st.integers(2, 48), st.integers(2, 3), st.integers(0, 47))
def test_modulation_invariance(seed, N, s, xi):
    v = bounded(np.random.default_rng(seed), N)
    chi = np.exp(2j * np.pi * xi * np.arange(N) / N)
    a = gowers_norm_cyclic(GridFunction(v, "cyclic"), s)
    b = gowers_norm_cyclic(GridFunction(v * chi, "cyclic"), s)
    assert a == pytest.approx(b, abs=1e-9)


@settings(max_examples=20)
@given(seeds, st.integers(2, 40))
def test_monotone_in_s(seed, N):
    f = GridFunction(bounded(np.random.default_rng(seed), N), "cyclic")
    norms = [gowers_norm_cyclic(f, s, "direct") for s in (1, 2, 3)]
    assert norms[0] <= norms[1] + 1e-9 <= norms[2] + 2e-9


def test_u2_fourier_identity_small():
    f = GridFunction(bounded(np.random.default_rng(5), 30), "cyclic")
    assert gowers_norm_cyclic(f, 2, "direct") ** 4 == pytest.approx(fourier_u2_power(f), abs=1e-12)


def test_budget_guards():
    with pytest.raises(Infeasible):
        gowers_power_cyclic(np.ones(200), 3, "direct")
    with pytest.raises(Infeasible):
        gowers_power_cyclic(np.ones(10**5), 3, "fourier")


def test_interval_norm_of_indicator_is_one():
    assert gowers_norm_interval(GridFunction(np.ones(20)), 2) == pytest.approx(1.0, abs=1e-12)
    assert gowers_norm_interval(GridFunction(np.ones(20)), 3) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(BadExtension):
        gowers_norm_interval(GridFunction(np.ones(20)), 2, Ntilde=79)


def test_lambda3_fixture():
    assert ap_operator([GridFunction.indicator([1, 2, 4], 5)] * 3) == Fraction(1, 12)


@settings(max_examples=40)
@given(st.integers(1, 25), st.data())
def test_lambda_matches_enumeration(N, data):
    A = data.draw(st.sets(st.integers(1, N)))
    f = GridFunction.indicator(sorted(A), N)
    ind = [int(x in A) for x in range(1, N + 1)]
    assert ap_operator([f] * 3) == oracles.lambda_naive([ind] * 3, N)


@settings(max_examples=30)
@given(st.integers(1, 12), st.data())
def test_lambda_multilinear_exact(N, data):
    vec = st.lists(st.fractions(-3, 3, max_denominator=9), min_size=N, max_size=N)
    f, g, h, k = (data.draw(vec) for _ in range(4))
    a, b = data.draw(st.fractions(-2, 2, max_denominator=5)), data.draw(st.fractions(-2, 2, max_denominator=5))
    combo = [a * x + b * y for x, y in zip(f, g)]
    G = lambda v: GridFunction(v if any(isinstance(x, Fraction) for x in v) else [Fraction(x) for x in v])
    lhs = ap_operator([G(combo), G(h), G(k)])
    rhs = a * ap_operator([G(f), G(h), G(k)]) + b * ap_operator([G(g), G(h), G(k)])
    assert lhs == rhs


def test_lambda_real_input_real_output():
    v = np.random.default_rng(0).uniform(-1, 1, 30)
    val = ap_operator([GridFunction(v)] * 3)
    assert isinstance(val, float)


@pytest.mark.parametrize("seed", range(200))
def test_von_neumann_l1_bound(seed):
    rng = np.random.default_rng(seed)
    fs = [GridFunction(bounded(rng, 64), bounded=True) for _ in range(4)]
    rep = von_neumann_check(fs)
    assert rep["l1_ok"] and rep["lambda"] <= rep["l1_bound"] + 1e-12


def test_von_neumann_trivial_cases():
    ones = GridFunction(np.ones(16))
    rep = von_neumann_check([ones] * 3)
    assert rep["u_ratio"] > 0
    zero = GridFunction(np.zeros(16))
    assert von_neumann_check([ones, zero, ones])["lambda"] == 0


@settings(max_examples=20)
@given(seeds, st.integers(4, 40))
def test_telescoping_bound(seed, N):
    # swap one slot at a time; each swap costs at most the L1 bound of f - g
    rng = np.random.default_rng(seed)
    f, g = bounded(rng, N, False), bounded(rng, N, False)
    lhs = abs(ap_operator([GridFunction(f)] * 3) - ap_operator([GridFunction(g)] * 3))
    assert lhs <= 3 * N / (N + 1) * float(np.abs(f - g).mean()) + 1e-12


def test_load_function_formats(tmp_path):
    p = tmp_path / "f.json"
    p.write_text(json.dumps({"set": [1, 2, 4], "n": 5}))
    f = load_function(p)
    assert f.values.tolist() == [1, 1, 0, 1, 0]
    p.write_text(json.dumps([[1, 0], [0, 1]]))
    assert load_function(p).values.tolist() == [1, 1j]
    with pytest.raises(ConfigInvalid):
        load_function(tmp_path / "nope.json")


def test_bounded_flag_enforced():
    with pytest.raises(ValueError):
        GridFunction([2.0], bounded=True)
