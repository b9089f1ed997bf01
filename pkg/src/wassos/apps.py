"""Revenue-estimation and mean-CVaR portfolio models, data generators, presets."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .model import (DroModel, ModelError, PiecewiseLoss, Samples, SupportSet,
                    ball_support, interval_support)
from .poly import Poly, parse_poly
from .sos import PolyExpr, ScalarVar

# -- revenue -------------------------------------------------------------------


@dataclass(frozen=True)
class Customer:
    a: float
    b: float
    d: float

    def check(self) -> None:
        if not self.a > 0:
            raise ModelError("customer needs a > 0")
        if self.b < 0 or self.d < 0:
            raise ModelError("customer needs b >= 0 and d >= 0")
        if -self.a * self.b ** 3 + self.d < -1e-12:
            raise ModelError("customer needs -a*b^3 + d >= 0")

    def price(self, x):
        """Offer price ``f(x) = min(a (x - b)^3 + d, d)``; equals ``-max(g1, g2)``."""
        x = np.asarray(x, dtype=float)
        return np.minimum(self.a * (x - self.b) ** 3 + self.d, self.d)


@dataclass(frozen=True)
class RevenueModel:
    customers: Tuple[Customer, ...]
    R: float
    N: int = 30
    eps: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "customers", tuple(self.customers))
        if not self.customers:
            raise ModelError("need at least one customer")
        for c in self.customers:
            c.check()
        if not self.R > 0:
            raise ModelError("R must be positive")

    def max_revenue(self, x):
        """``max_k f_k(x)`` pointwise."""
        return np.max([c.price(x) for c in self.customers], axis=0)


def revenue_loss(rm: RevenueModel) -> Tuple[PiecewiseLoss, SupportSet]:
    """Pieces ``g1 = -a (x - b)^3 - d`` and ``g2 = -d`` per customer on ``[0, R]``."""
    x = Poly.var(1, 0)
    rows = []
    for c in rm.customers:
        g1 = -c.a * (x - c.b) ** 3 - c.d
        g2 = Poly.constant(1, -c.d)
        rows.append((g1, g2))
    return PiecewiseLoss(tuple(rows)), interval_support(0.0, rm.R)


def revenue_dro(rm: RevenueModel, samples: Samples, eps: Optional[float] = None,
                name: str = "revenue") -> DroModel:
    loss, support = revenue_loss(rm)
    return DroModel(support, loss, samples, float(rm.eps if eps is None else eps),
                    report_sign=-1.0, name=name)


def gen_revenue_samples(R: float, N: int, seed: int) -> Samples:
    """``N`` draws of Normal(R/2, (R/7)^2) clipped to ``[0, R]``."""
    if N < 1:
        raise ValueError("N must be at least 1")
    rng = np.random.default_rng(seed)
    x = np.clip(rng.normal(R / 2.0, R / 7.0, size=N), 0.0, R)
    return Samples(x.reshape(-1, 1))


def random_customers(count: int, R: float, seed: int) -> List[Customer]:
    """Customers with a in (0, 4], b in [0, R], d in [0, 14]; rejection on -a b^3 + d >= 0."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        a = 4.0 * (1.0 - rng.random())  # (0, 4]
        b = R * rng.random()
        d = 14.0 * rng.random()
        if -a * b ** 3 + d >= 0:
            out.append(Customer(a, b, d))
    return out


# -- portfolio -----------------------------------------------------------------


@dataclass(frozen=True)
class PortfolioModel:
    costs: Tuple[Poly, ...]
    gamma: float
    eta: float
    R: float
    samples: Samples
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(self.costs))
        if not self.costs:
            raise ModelError("need at least one asset")
        m = self.costs[0].nvars
        if any(c.nvars != m for c in self.costs) or len(self.costs) != m:
            raise ModelError("need one cost polynomial per asset, each in m variables")
        if not 0 < self.eta <= 1:
            raise ModelError("eta must lie in (0, 1]")
        if self.gamma < 0:
            raise ModelError("gamma must be nonnegative")
        if not self.R > 0:
            raise ModelError("R must be positive")
        if self.samples.dim != m:
            raise ModelError("sample dimension differs from the number of assets")

    @property
    def m(self) -> int:
        return len(self.costs)

    @property
    def support(self) -> SupportSet:
        return ball_support(self.m, self.R)

    @property
    def report_sign(self) -> float:
        return 1.0

    def with_radius(self, eps: float) -> "PortfolioModel":
        return replace(self, radius=float(eps))

    def piece_coefficients(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        """``((cy, ct) for k = 1, 2)``: piece k is ``cy * sum y_p c_p + ct * tau``."""
        g, e = self.gamma, self.eta
        return (1.0, g), (1.0 + g / e, (1.0 - 1.0 / e) * g)

    def piece_values(self, y, tau: float, points) -> np.ndarray:
        """Array (2, n_points) of the two piece values at fixed ``(y, tau)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        port = sum(float(yp) * c.eval_many(pts) for yp, c in zip(y, self.costs))
        return np.array([cy * port + ct * tau for cy, ct in self.piece_coefficients()])

    def empirical_objective(self, y, tau: float) -> float:
        """``mean_i max_k g^(k)((y, tau), x_i)``, the objective at radius zero."""
        return float(self.piece_values(y, tau, self.samples.points).max(axis=0).mean())


def portfolio_pieces(pm: PortfolioModel, y: Sequence[ScalarVar], tau: ScalarVar) -> List[PolyExpr]:
    """The two pieces as expressions affine in the decision scalars ``(y, tau)``."""
    m = pm.m
    out = []
    one = Poly.constant(m, 1.0)
    for cy, ct in pm.piece_coefficients():
        e = PolyExpr(m)
        for yp, c in zip(y, pm.costs):
            e = e.plus_scalar(yp, c * cy)
        if ct != 0.0:
            e = e.plus_scalar(tau, one * ct)
        out.append(e)
    return out


def gen_sphere_samples(m: int, N: int, seed: int) -> Samples:
    """``N`` points uniform on the unit sphere in R^m (normalised Gaussians)."""
    if m < 1:
        raise ValueError("m must be at least 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((N, m))
    nrm = np.linalg.norm(z, axis=1, keepdims=True)
    while np.any(nrm == 0):  # pragma: no cover - probability zero
        bad = nrm[:, 0] == 0
        z[bad] = rng.standard_normal((int(bad.sum()), m))
        nrm = np.linalg.norm(z, axis=1, keepdims=True)
    return Samples(z / nrm)


BASE_COSTS = (
    "-1 + x1 + x1*x2 - x1*x3 - 2*x1^3",
    "-1 - x1*x2 + x2^2 - x2*x3 + x2^3",
    "-1 + x2*x3 - x3^2 - x3^3",
)


def portfolio_costs(m: int) -> Tuple[Poly, ...]:
    """Base cubic costs for three assets, ``-x_p^3`` for further assets."""
    if m < 3:
        raise ValueError("the preset cost family needs m >= 3")
    costs = [parse_poly(s, m) for s in BASE_COSTS]
    for p in range(3, m):
        costs.append(-(Poly.var(m, p) ** 3))
    return tuple(costs)


# -- presets -------------------------------------------------------------------

BASE_CUSTOMERS = (
    Customer(a=4.0, b=0.75, d=9.0),
    Customer(a=1.0 / 4.0, b=7.0 / 2.0, d=11.0),
    Customer(a=1.0 / 110.0, b=23.0 / 2.0, d=14.0),
)


@dataclass
class Preset:
    """An experiment: a data generator keyed by seed plus default grids."""

    name: str
    kind: str  # "revenue" | "portfolio"
    hierarchy: str
    r_list: List[int]
    eps_list: List[float]
    replications: int
    seed: int = 0
    params: Dict[str, object] = field(default_factory=dict)
    grid: List[Dict[str, int]] = field(default_factory=list)

    def generate(self, seed: int, eps: Optional[float] = None, **overrides):
        """Regenerate the model for one replication (samples drawn from ``seed``)."""
        p = dict(self.params)
        p.update(overrides)
        eps = float(self.eps_list[0] if eps is None else eps)
        if self.kind == "revenue":
            K = int(p.get("K", 3))
            R = float(p.get("R", 12.0))
            N = int(p.get("N", 30))
            customers = list(BASE_CUSTOMERS[:K])
            if K > len(BASE_CUSTOMERS):
                # extra customers come from a stream independent of the samples
                customers += random_customers(K - len(BASE_CUSTOMERS), R,
                                              int(p.get("customer_seed", 12345)))
            rm = RevenueModel(tuple(customers), R, N, eps)
            return revenue_dro(rm, gen_revenue_samples(R, N, seed), eps, name=self.name)
        m = int(p.get("m", 3))
        N = int(p.get("N", 30))
        return PortfolioModel(
            costs=portfolio_costs(m),
            gamma=float(p.get("gamma", 10.0)),
            eta=float(p.get("eta", 0.2)),
            R=float(p.get("R", 1.0)),
            samples=gen_sphere_samples(m, N, seed),
            radius=eps,
        )


def log_grid(lo: float, hi: float, n: int) -> List[float]:
    if n == 1:
        return [float(lo)]
    return [float(v) for v in np.logspace(np.log10(lo), np.log10(hi), n)]


def preset_revenue() -> Preset:
    return Preset("paper-revenue", "revenue", "ad", [2], log_grid(1e-3, 10.0, 25), 10,
                  params={"K": 3, "R": 12.0, "N": 30})


def preset_portfolio() -> Preset:
    return Preset("paper-portfolio", "portfolio", "pd", [2, 3], log_grid(1e-3, 10.0, 25), 10,
                  params={"m": 3, "N": 30, "gamma": 10.0, "eta": 0.2, "R": 1.0})


def preset_scal_revenue() -> Preset:
    grid = [{"K": K, "N": N} for K in (3, 6, 9, 12) for N in (30, 60, 90, 120, 150)]
    return Preset("scal-revenue", "revenue", "ad", [2], [10.0], 1,
                  params={"K": 3, "R": 12.0, "N": 30}, grid=grid)


def preset_scal_portfolio() -> Preset:
    grid = [{"m": m, "N": N} for m in (3, 6, 9, 12) for N in (30, 60, 90, 120, 150)]
    return Preset("scal-portfolio", "portfolio", "pd", [2], [10.0], 1,
                  params={"m": 3, "N": 30, "gamma": 10.0, "eta": 0.2, "R": 1.0}, grid=grid)


PRESETS = {
    "paper-revenue": preset_revenue,
    "paper-portfolio": preset_portfolio,
    "scal-revenue": preset_scal_revenue,
    "scal-portfolio": preset_scal_portfolio,
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
