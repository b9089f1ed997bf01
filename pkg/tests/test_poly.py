import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wassos.poly import (Poly, PolySyntaxError, add, evaluate, lift, monomial_basis, mul,
                         parse_poly, squared_distance, to_string)

x = Poly.var(1, 0)
x1, x2 = Poly.var(2, 0), Poly.var(2, 1)


def test_additive_inverse_is_zero():
    p = x + (-x)
    assert p.is_zero() and p.degree == 0


def test_add_two_variables():
    assert add(x1 ** 2 + 1, x2) == parse_poly("x1^2 + x2 + 1", 2)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        add(x, x1)
    with pytest.raises(ValueError):
        mul(x, x1)
    with pytest.raises(ValueError):
        evaluate(x1, [1.0])


def test_mul_examples():
    assert (x - 1) * (x + 1) == x ** 2 - 1
    assert (x1 + x2) ** 2 == x1 ** 2 + 2 * x1 * x2 + x2 ** 2
    assert mul(x1 * x2, Poly.constant(2, 1.0)) == x1 * x2


def test_eval_examples():
    assert evaluate(x ** 2 - 4 * x + 4, [2]) == 0.0
    assert evaluate(Poly.constant(3, 1.0), [5, -2, 7]) == 1.0
    assert evaluate(x1 * x2, [3, 5]) == 15.0


def test_drop_tolerance():
    p = x + 1e-15 * x ** 2
    assert len(p) == 1


def test_lift():
    lp = lift(x ** 2)
    assert lp.nvars == 2 and lp == Poly.var(2, 0) ** 2
    assert lift(Poly.zero(2)).is_zero() and lift(Poly.zero(2)).nvars == 3


@pytest.mark.parametrize("n,d,count", [(1, 2, 3), (2, 2, 6), (3, 4, 35)])
def test_monomial_basis_counts(n, d, count):
    basis = monomial_basis(n, d)
    assert len(basis) == count == math.comb(n + d, d)
    assert len(set(basis)) == count


def test_monomial_basis_order():
    assert monomial_basis(1, 2) == [(0,), (1,), (2,)]
    assert monomial_basis(2, 2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def test_squared_distance_examples():
    assert squared_distance([0, 0]) == x1 ** 2 + x2 ** 2
    assert squared_distance([2]) == x ** 2 - 4 * x + 4
    assert squared_distance([1, 1]) == x1 ** 2 + x2 ** 2 - 2 * x1 - 2 * x2 + 2
    assert squared_distance([1, 1]).degree == 2


def test_parse_customer_polynomial():
    p = parse_poly("-4*x1^3 + 9*x1^2 - 6.75*x1 - 7.3125", 1)
    q = -4 * (x - 0.75) ** 3 - 9
    assert p.allclose(q, atol=1e-12)


def test_parse_lifted_and_errors():
    p = parse_poly("xt - x1^2", 1, lifted=True)
    assert p.nvars == 2 and p == Poly.var(2, 1) - Poly.var(2, 0) ** 2
    for bad in ("x1 +", "x3", "2 ** ", "(x1", "xt"):
        with pytest.raises(PolySyntaxError):
            parse_poly(bad, 2)


def test_to_string_round_trip():
    p = parse_poly("-1 + x1 + x1*x2 - x1*x3 - 2*x1^3", 3)
    assert parse_poly(to_string(p), 3) == p


coef = st.floats(-3, 3, allow_nan=False).filter(lambda c: abs(c) > 1e-6)


@st.composite
def polys(draw, n=2, deg=3):
    basis = monomial_basis(n, deg)
    chosen = draw(st.lists(st.sampled_from(basis), max_size=6, unique=True))
    return Poly(n, {e: draw(coef) for e in chosen})


points = st.lists(st.floats(-1, 1), min_size=2, max_size=2)


@settings(max_examples=60, deadline=None)
@given(polys(), polys(), points)
def test_eval_is_a_ring_homomorphism(a, b, p):
    s, t = evaluate(a, p), evaluate(b, p)
    scale = 1 + abs(s) + abs(t) + abs(s * t)
    assert abs(evaluate(a + b, p) - (s + t)) <= 1e-12 * scale
    assert abs(evaluate(a * b, p) - s * t) <= 1e-12 * scale


@settings(max_examples=40, deadline=None)
@given(polys(), polys())
def test_mul_degree_bound(a, b):
    assert (a * b).degree <= a.degree + b.degree


@settings(max_examples=40, deadline=None)
@given(polys(), points)
def test_lift_preserves_values(a, p):
    assert evaluate(lift(a), p + [7.0]) == pytest.approx(evaluate(a, p), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=3))
def test_squared_distance_vanishes_at_center(c):
    assert evaluate(squared_distance(c), c) == pytest.approx(0.0, abs=1e-9)


def test_eval_many_matches_eval():
    p = parse_poly("x1^2*x2 - 3*x2 + 0.5", 2)
    pts = np.random.default_rng(0).uniform(-1, 1, (20, 2))
    assert np.allclose(p.eval_many(pts), [evaluate(p, q) for q in pts])
