import numpy as np
import pytest

from wassos import oracle
from wassos.model import DroModel, PiecewiseLoss, Samples, ball_support, interval_support
from wassos.poly import Poly

x = Poly.var(1, 0)


def shift_model(eps=0.1):
    return DroModel(interval_support(0, 1), PiecewiseLoss(((x,),)), Samples(np.array([[0.5]])), eps)


def test_grid_interval_examples():
    g = oracle.make_grid(interval_support(0, 12), 25)
    assert len(g) == 25
    assert np.all(g.points >= 0) and np.all(g.points <= 12)
    assert oracle.make_grid(interval_support(0, 1), 2).points.ravel().tolist() == [0.0, 1.0]


def test_grid_ball_example():
    g = oracle.make_grid(ball_support(2, 1.0), 3)
    assert len(g) == 5
    assert all(np.linalg.norm(p) <= 1 + 1e-12 for p in g.points)
    # count against a direct filter of the lattice
    axis = np.linspace(-1, 1, 41)
    lattice = np.array([(a, b) for a in axis for b in axis])
    assert len(oracle.make_grid(ball_support(2, 1.0), 41)) == int((np.linalg.norm(lattice, axis=1) <= 1 + 1e-12).sum())


def test_grid_errors():
    with pytest.raises(oracle.OracleError):
        oracle.make_grid(interval_support(0, 1), 1)
    with pytest.raises(oracle.OracleError):
        oracle.make_grid(ball_support(5, 1.0), 3)


def test_empirical_value():
    m = DroModel(interval_support(0, 1), PiecewiseLoss(((x ** 2,),)),
                 Samples(np.array([[0.0], [0.5], [1.0]])), 0.1)
    assert oracle.empirical_value(m.loss, m.samples) == pytest.approx(1.25 / 3)


def test_grid_bound_shift():
    for per_axis in (201, 401):
        grid = oracle.make_grid(interval_support(0, 1), per_axis)
        spacing = 1.0 / (per_axis - 1)
        value = oracle.grid_primal_bound(shift_model(0.1), grid)
        assert 0.4 - 1e-6 <= value <= 0.4 + spacing


def test_grid_bound_tiny_radius_feasible():
    grid = oracle.make_grid(interval_support(0, 1), 3)
    assert oracle.grid_primal_bound(shift_model(1e-6), grid) == pytest.approx(0.5, abs=1e-5)


def test_semiinfinite_residual():
    m = shift_model(0.1)
    grid = oracle.make_grid(m.support, 201)
    # lambda = 5, alpha = 0.45 is dual optimal: min_x x + 5 (x - 0.5)^2 = 0.45 at x = 0.4
    assert oracle.semiinfinite_residual(5.0, [0.45], m, grid) == pytest.approx(0.0, abs=1e-12)
    assert oracle.semiinfinite_residual(5.0, [1.45], m, grid) == pytest.approx(-1.0, abs=1e-12)
    with pytest.raises(oracle.OracleError):
        oracle.semiinfinite_residual(-1.0, [0.0], m, grid)
    with pytest.raises(oracle.OracleError):
        oracle.semiinfinite_residual(1.0, [0.0, 1.0], m, grid)


def test_cvar_examples():
    assert oracle.cvar_empirical([1, 2, 3, 4], 0.5) == pytest.approx(3.5)
    assert oracle.cvar_empirical([1, 2, 3, 4], 1.0) == pytest.approx(2.5)
    with pytest.raises(oracle.OracleError):
        oracle.cvar_empirical([1.0], 0.0)


@pytest.mark.parametrize("seed", range(10))
def test_cvar_formulas_agree(seed):
    rng = np.random.default_rng(seed)
    L = rng.normal(size=int(rng.integers(1, 40)))
    eta = float(rng.uniform(0.05, 1.0))
    taus = np.linspace(L.min() - 1, L.max() + 1, 20001)
    scan, _ = oracle.best_tau_scan(lambda t: t + np.maximum(L - t, 0).mean() / eta, taus)
    exact = oracle.cvar_empirical(L, eta)
    assert exact == pytest.approx(oracle.tail_average(L, eta), abs=1e-12)
    assert exact <= scan + 1e-12 and scan - exact <= 1e-3
