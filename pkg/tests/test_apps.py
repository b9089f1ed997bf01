import numpy as np
import pytest

from wassos.apps import (BASE_CUSTOMERS, Customer, PortfolioModel, RevenueModel,
                         gen_revenue_samples, gen_sphere_samples, get_preset, portfolio_costs,
                         portfolio_pieces, random_customers, revenue_loss)
from wassos.model import ModelError, Samples
from wassos.poly import Poly, parse_poly
from wassos.sos import SdpProblem

x = Poly.var(1, 0)


def test_customer_one_pieces():
    loss, support = revenue_loss(RevenueModel((Customer(4.0, 0.75, 9.0),), 12.0))
    g1, g2 = loss.pieces[0]
    assert g1.allclose(-4 * (x - 0.75) ** 3 - 9, atol=1e-12)
    assert g2 == Poly.constant(1, -9.0)
    assert support.norm_bound == 12.0
    assert support.contains([0.0]) and support.contains([12.0]) and not support.contains([12.5])


def test_price_past_knot_and_at_zero():
    c = Customer(4.0, 0.75, 9.0)
    assert c.price(2.0) == 9.0
    assert c.price(0.0) == pytest.approx(7.3125, abs=1e-12)


def test_revenue_sign_identity():
    rm = RevenueModel(BASE_CUSTOMERS, 12.0)
    loss, _ = revenue_loss(rm)
    pts = np.linspace(0, 12, 97).reshape(-1, 1)
    assert np.allclose(rm.max_revenue(pts[:, 0]), -loss.eval_many(pts), atol=1e-10)
    assert rm.max_revenue(pts[:, 0]).max() <= 14.0 + 1e-12


def test_customer_checks():
    with pytest.raises(ModelError):
        Customer(0.0, 1.0, 1.0).check()
    with pytest.raises(ModelError):
        RevenueModel((Customer(4.0, 2.0, 1.0),), 12.0)  # -a b^3 + d < 0


def test_revenue_samples():
    a = gen_revenue_samples(12.0, 500, 7)
    assert a.points.min() >= 0 and a.points.max() <= 12
    assert np.array_equal(a.points, gen_revenue_samples(12.0, 500, 7).points)
    big = gen_revenue_samples(12.0, 100_000, 1).points
    # clipping is symmetric around R/2, so the mean stays at R/2
    assert abs(big.mean() - 6.0) <= 3 * (12 / 7) / np.sqrt(big.size)


def test_sphere_samples():
    s = gen_sphere_samples(3, 1000, 2)
    assert np.allclose(np.linalg.norm(s.points, axis=1), 1.0, atol=1e-12)
    assert np.array_equal(s.points, gen_sphere_samples(3, 1000, 2).points)
    big = gen_sphere_samples(3, 100_000, 3).points
    assert np.all(np.abs(big.mean(axis=0)) <= 4 / np.sqrt(1e5))


def portfolio(gamma, eta):
    return PortfolioModel(portfolio_costs(3), gamma, eta, 1.0, gen_sphere_samples(3, 4, 0), 1.0)


def piece_multipliers(pm):
    p = SdpProblem("min")
    y = [p.new_scalar("nonneg") for _ in range(pm.m)]
    tau = p.new_scalar("free")
    return portfolio_pieces(pm, y, tau), y, tau


def test_piece_coefficients_preset_setting():
    pm = portfolio(10.0, 0.2)
    (c1, t1), (c2, t2) = pm.piece_coefficients()
    assert (c1, t1) == (1.0, 10.0)
    assert c2 == pytest.approx(51.0) and t2 == pytest.approx(-40.0)
    pieces, y, tau = piece_multipliers(pm)
    mult = {v.id: p for v, p in pieces[1].scalar_terms}
    assert mult[tau.id] == Poly.constant(3, -40.0)
    assert mult[y[0].id].allclose(51 * pm.costs[0])


def test_piece_coefficients_edge_cases():
    assert portfolio(0.0, 0.2).piece_coefficients() == ((1.0, 0.0), (1.0, 0.0))
    (_, _), (c2, t2) = portfolio(3.0, 1.0).piece_coefficients()
    assert c2 == 4.0 and t2 == 0.0


def test_portfolio_validation():
    with pytest.raises(ModelError):
        portfolio(1.0, 0.0)
    with pytest.raises(ModelError):
        portfolio(-1.0, 0.5)


def test_portfolio_costs_family():
    costs = portfolio_costs(5)
    assert costs[2] == parse_poly("-1 + x2*x3 - x3^2 - x3^3", 5)
    assert costs[4] == -(Poly.var(5, 4) ** 3)


def test_empirical_objective_is_mean_of_max():
    pm = portfolio(10.0, 0.2)
    y, tau = [0.2, 0.3, 0.5], 0.1
    vals = pm.piece_values(y, tau, pm.samples.points)
    assert pm.empirical_objective(y, tau) == pytest.approx(vals.max(axis=0).mean())


def test_presets():
    rev = get_preset("paper-revenue")
    assert rev.params["K"] == 3 and rev.params["N"] == 30 and rev.r_list == [2]
    assert rev.eps_list[0] == pytest.approx(1e-3) and rev.eps_list[-1] == pytest.approx(10.0)
    assert len(rev.eps_list) == 25 and rev.replications == 10
    c3 = BASE_CUSTOMERS[2]
    assert (c3.a, c3.d, c3.b) == (1 / 110, 14.0, 11.5)
    port = get_preset("paper-portfolio")
    pm = port.generate(0, eps=1.0)
    assert pm.costs[2] == parse_poly("-1 + x2*x3 - x3^2 - x3^3", 3)
    assert (pm.gamma, pm.eta, pm.R, pm.samples.N) == (10.0, 0.2, 1.0, 30)
    scal = get_preset("scal-revenue")
    assert {g["K"] for g in scal.grid} == {3, 6, 9, 12} and {g["N"] for g in scal.grid} == {30, 60, 90, 120, 150}
    with pytest.raises(KeyError):
        get_preset("nope")


def test_extended_customers():
    rm_model = get_preset("scal-revenue").generate(0, K=6)
    assert rm_model.loss.K == 6
    for c in random_customers(20, 12.0, 1):
        c.check()
        assert 0 < c.a <= 4 and 0 <= c.b <= 12 and 0 <= c.d <= 14


def test_replication_seeds_change_samples_only():
    rev = get_preset("paper-revenue")
    a, b = rev.generate(0), rev.generate(1)
    assert a.loss.pieces == b.loss.pieces
    assert not np.array_equal(a.samples.points, b.samples.points)
