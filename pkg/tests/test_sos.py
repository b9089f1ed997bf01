import numpy as np
import pytest

from wassos import backend
from wassos.poly import Poly, parse_poly
from wassos.sos import (DegreeOverflow, LevelTooSmall, PolyExpr, SdpProblem,
                        multiplier_degree)
from sos_cases import certify, random_sos

x = Poly.var(1, 0)


@pytest.mark.parametrize("n,deg,size", [(2, 4, 6), (2, 2, 3), (1, 0, 1)])
def test_new_sos_sizes(n, deg, size):
    assert SdpProblem().new_sos(n, deg).size == size


def test_assert_zero_row_count():
    prob = SdpProblem()
    G = prob.new_sos(2, 4)
    rows = prob.assert_zero(PolyExpr(2).plus_gram(G, -1.0), 4)
    assert len(rows) == 15


def test_explicit_gram_rows():
    prob = SdpProblem()
    G = prob.new_sos(1, 2)
    rows = prob.assert_zero(PolyExpr.of(1 + x ** 2).plus_gram(G, -1.0), 2)
    # constants 1, 0, 1 against G11, 2*G12 (entry coefficient 1, doubled by symmetry), G22
    assert [r.const for r in rows] == [1.0, 0.0, 1.0]
    assert rows[0].grams == {(G.id, 0, 0): -1.0}
    assert rows[1].grams == {(G.id, 0, 1): -1.0}
    assert rows[2].grams == {(G.id, 1, 1): -1.0}


def test_degree_overflow():
    prob = SdpProblem()
    with pytest.raises(DegreeOverflow):
        prob.assert_zero(PolyExpr.of(x ** 3), 2)


@pytest.mark.parametrize("cap,dh,want", [(4, 3, 0), (4, 2, 2), (4, 1, 2)])
def test_multiplier_degree(cap, dh, want):
    assert multiplier_degree(cap, dh) == want


def test_multiplier_degree_too_small():
    with pytest.raises(LevelTooSmall) as info:
        multiplier_degree(2, 3)
    assert info.value.min_r == 2


def test_one_plus_square_compiles_to_three_rows():
    prob = SdpProblem()
    prob.assert_is_sos(PolyExpr.of(1 + x ** 2), 2)
    form = backend.compile(prob)
    assert form.block_sizes == [2] and form.m == 3


@pytest.mark.parametrize("p", [1 + x ** 2, Poly.constant(1, 2.0), parse_poly("x1^2 - 2*x1*x2 + x2^2", 2)])
def test_sos_feasible(p):
    status, resid, _ = certify(p)
    assert status == backend.OPTIMAL and resid <= 1e-6


def test_constant_gram_value():
    status, _, res = certify(Poly.constant(1, 2.0), cap=0)
    assert status == backend.OPTIMAL and res.blocks[0][0, 0] == pytest.approx(2.0, abs=1e-7)


@pytest.mark.parametrize("p", [Poly.constant(1, -1.0), x])
def test_sos_infeasible(p):
    status, _, _ = certify(p, cap=2)
    assert status == backend.INFEASIBLE


@pytest.mark.parametrize("seed", range(12))
def test_random_sos_round_trip(seed):
    rng = np.random.default_rng(seed)
    n, half = 1 + seed % 3, 1 + (seed // 3) % 3
    status, resid, res = certify(random_sos(rng, n, half))
    assert status == backend.OPTIMAL
    assert resid <= 1e-6
    assert res.max_eq_residual <= 1e-6


def test_compile_is_deterministic():
    def make():
        prob = SdpProblem()
        a = prob.new_scalar("free")
        prob.assert_is_sos(PolyExpr.of(parse_poly("x1^4 + x2^2 + 1", 2)).plus_scalar(a, -1.0), 4)
        prob.set_objective({a: 1.0})
        return backend.dumps_sdpa(backend.compile(prob))

    assert make() == make()


def test_min_of_polynomial_via_sos():
    # max t s.t. x^4 - 3x^2 + 1 - t is SOS  ->  t = 1 - 9/4
    prob = SdpProblem("max")
    t = prob.new_scalar("free")
    prob.assert_is_sos(PolyExpr.of(x ** 4 - 3 * x ** 2 + 1).plus_scalar(t, -1.0), 4)
    prob.set_objective({t: 1.0})
    res = backend.solve(backend.compile(prob))
    assert res.status == backend.OPTIMAL
    assert res.objective == pytest.approx(-1.25, abs=1e-6)
