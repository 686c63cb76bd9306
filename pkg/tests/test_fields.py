from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mintime.fields import (ControlSystem, DimensionError, PolyVectorField, eval_field,
                            eval_jacobian, hormander_rank, lie_bracket)
from mintime.systems import UnknownSystemError, registry_lookup


def _field(n, comps):
    return PolyVectorField.from_terms(n, comps)


d1 = PolyVectorField.coordinate(2, 0)
grushin_f2 = _field(2, [[], [(1, (1, 0))]])


def test_eval_grushin_f2():
    assert np.allclose(eval_field(grushin_f2, [2, 5]), [0, 2])


def test_eval_zero_point_without_constants():
    f = _field(3, [[(2, (1, 0, 0))], [(1, (0, 1, 1))], [(-3, (0, 0, 2))]])
    assert np.all(eval_field(f, np.zeros(3)) == 0)


def test_eval_acs3_f2(systems):
    assert np.allclose(eval_field(systems["acs3"].fields[1], [1, 0, 0]), [0, 0, 1])


def test_eval_dimension_mismatch():
    with pytest.raises(DimensionError):
        eval_field(grushin_f2, [1, 2, 3])


def test_jacobians():
    assert np.allclose(eval_jacobian(grushin_f2, [3.0, -1.0]), [[0, 0], [1, 0]])
    assert np.all(eval_jacobian(d1, [0.3, 0.2]) == 0)
    J = eval_jacobian(registry_lookup("heisenberg").fields[0], np.zeros(3))
    expect = np.zeros((3, 3))
    expect[2, 1] = -0.5
    assert np.allclose(J, expect)


def test_bracket_examples(systems):
    assert lie_bracket(d1, grushin_f2) == PolyVectorField.coordinate(2, 1)
    assert lie_bracket(grushin_f2, grushin_f2).is_zero()
    f1, f2 = systems["acs3"].fields
    assert lie_bracket(f1, f2) == _field(3, [[], [(-1, (0, 0, 0))], [(2, (1, 0, 0))]])


def test_zero_coefficients_not_stored():
    f = _field(2, [[(1, (1, 0)), (-1, (1, 0))], [(Fraction(0), (0, 0))]])
    assert f.is_zero() and f.components == ({}, {})


def test_spec_round_trip(systems):
    for s in systems.values():
        assert ControlSystem.from_spec(s.to_spec()).fields == s.fields


def test_hormander_examples(systems):
    e = hormander_rank(systems["euclidean2"], [0.4, -2.0])
    assert (e.rank, e.step) == (2, 1)
    assert hormander_rank(systems["grushin"], [0, 0]).step == 2
    assert hormander_rank(systems["grushin"], [1, 0]).step == 1
    assert hormander_rank(systems["martinet"], [0, 0, 0]).step == 3


def test_hormander_not_reached_in_band():
    s = ControlSystem((PolyVectorField.coordinate(3, 0), PolyVectorField.coordinate(3, 1)))
    rep = hormander_rank(s, np.zeros(3))
    assert rep.rank == 2 and rep.step is None and not rep.full_rank


def test_registry_suggestion():
    with pytest.raises(UnknownSystemError) as exc:
        registry_lookup("grushn")
    assert "grushin" in str(exc.value)


# --- properties -------------------------------------------------------------

coeff = st.integers(-3, 3)


def monomial(n):
    return st.tuples(coeff, st.lists(st.integers(0, 2), min_size=n, max_size=n))


def poly_fields(n):
    return st.lists(st.lists(monomial(n), max_size=3), min_size=n, max_size=n).map(
        lambda comps: PolyVectorField.from_terms(n, comps))


@given(poly_fields(3), poly_fields(3), poly_fields(3))
def test_jacobi_identity(f, g, h):
    total = (lie_bracket(f, lie_bracket(g, h)) + lie_bracket(g, lie_bracket(h, f))
             + lie_bracket(h, lie_bracket(f, g)))
    assert total.is_zero()


@given(poly_fields(3), poly_fields(3))
def test_antisymmetry(f, g):
    assert lie_bracket(f, g) == -lie_bracket(g, f)


@given(poly_fields(2), poly_fields(2),
       st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_bracket_matches_jacobians(f, g, x):
    x = np.asarray(x)
    expect = eval_jacobian(g, x) @ eval_field(f, x) - eval_jacobian(f, x) @ eval_field(g, x)
    got = eval_field(lie_bracket(f, g), x)
    assert np.allclose(got, expect, rtol=1e-12, atol=1e-10)


@given(st.sampled_from(["grushin", "heisenberg", "martinet", "acs3"]),
       st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_rank_monotone_in_depth(name, x):
    s = registry_lookup(name)
    x = np.asarray(x[: s.n])
    ranks = [hormander_rank(s, x, max_depth=d).rank for d in range(1, 5)]
    assert ranks == sorted(ranks)
