"""SDP relaxations of the worst-case expectation problem and radius/level sweeps.

All max-form builders share the dual variables ``lambda >= 0`` and free
``alpha_i`` with objective ``-lambda eps^2 + mean(alpha)``; the portfolio
builder is min-form with objective ``lambda eps^2 - mean(alpha)``.  The
radius enters only through the coefficient of ``lambda``, so a built problem
can be re-targeted with :func:`set_radius`.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from . import backend
from .apps import PortfolioModel, portfolio_pieces
from .model import DroModel, ModelError, lifted_pieces, validate
from .poly import Poly, lift, squared_distance, substitute_scale
from .sos import LevelTooSmall, PolyExpr, SdpProblem, multiplier_degree

KINDS = ("ad", "adtilde", "fd", "pd")
MAX_FORM = {"ad": True, "adtilde": True, "fd": True, "pd": False}


def _min_level(degrees: Iterable[int]) -> int:
    return max(1, math.ceil(max([2, *degrees]) / 2))


def min_level(kind: str, model) -> int:
    """Smallest admissible relaxation level for ``model`` under ``kind``."""
    if kind == "pd":
        return _min_level(c.degree for c in model.costs)
    degs = [h.degree for h in model.support.inequalities]
    gdeg = [g.degree for row in model.loss.pieces for g in row]
    if kind == "ad":
        # lifted pieces xt - g have degree max(1, deg g)
        gdeg = [max(1, d) for d in gdeg]
    return _min_level(degs + gdeg)


def _check_level(kind: str, model, r: int) -> None:
    need = min_level(kind, model)
    if r < need:
        raise LevelTooSmall(f"relaxation level r = {r} too small; minimum admissible r = {need}",
                            min_r=need)


def _check_model(model: DroModel) -> None:
    problems = validate(model)
    if problems:
        raise ModelError("invalid model: " + "; ".join(problems))


def _dual_variables(p: SdpProblem, N: int):
    lam = p.new_scalar("nonneg", "lambda")
    alpha = [p.new_scalar("free", f"alpha[{i}]") for i in range(N)]
    p.tag("lambda", lam)
    p.tag("alpha", *alpha)
    return lam, alpha


def _max_objective(p: SdpProblem, lam, alpha, eps: float) -> None:
    N = len(alpha)
    coefs = {lam: -eps * eps}
    coefs.update({a: 1.0 / N for a in alpha})
    p.set_objective(coefs)
    p.meta["radius"] = eps


def set_radius(p: SdpProblem, eps: float) -> None:
    """Change the Wasserstein radius of a built relaxation in place."""
    if eps <= 0:
        raise ValueError("radius must be positive")
    lam = p.tags["lambda"][0]
    sign = -1.0 if p.sense == "max" else 1.0
    p.objective[lam.id] = sign * eps * eps
    p.meta["radius"] = eps


def _axis_scales(model: DroModel) -> List[float]:
    """Half-widths of the support's bounding box, used to map it into the unit box."""
    return [max(abs(lo), abs(hi)) or 1.0 for lo, hi in model.support.box()]


def _unit(p: Poly) -> Poly:
    """``p`` divided by its largest coefficient; a positive multiple leaves the cone unchanged."""
    big = max((abs(c) for c in p.terms.values()), default=0.0)
    return p / big if big > 0 else p


# The builders work in scaled variables x = s * u.  An invertible diagonal
# substitution maps SOS polynomials of a given degree onto themselves, so the
# relaxation value and the scalars (lambda, alpha) are unchanged, while the
# monomial basis no longer spans several orders of magnitude on wide supports.


def build_ad(model: DroModel, r: int) -> SdpProblem:
    """Lifted relaxation for general min-max piecewise losses."""
    _check_model(model)
    _check_level("ad", model, r)
    m = model.dim
    n = m + 1
    cap = 2 * r
    N = model.samples.N
    p = SdpProblem("max", name=f"AD_{r}")
    lam, alpha = _dual_variables(p, N)
    _max_objective(p, lam, alpha, model.radius)
    base = _axis_scales(model)
    for k in range(model.loss.K):
        t1, t2 = model.tau[k]
        sc = base + [max(abs(t1), abs(t2)) or 1.0]
        xt = substitute_scale(Poly.var(n, m), sc)
        hs = [_unit(substitute_scale(lift(h), sc)) for h in model.support.inequalities]
        h_deg = [multiplier_degree(cap, h.degree) for h in hs]
        gts = [substitute_scale(g, sc) for g in lifted_pieces(model, k)]
        g_deg = [multiplier_degree(cap, g.degree) for g in gts]
        for i in range(N):
            phi = substitute_scale(lift(squared_distance(model.samples.points[i])), sc)
            e = PolyExpr(n, xt).plus_scalar(lam, phi).plus_scalar(alpha[i], -1.0)
            for l, (h, d) in enumerate(zip(hs, h_deg)):
                e = e.plus_gram(p.new_sos(n, d, f"sigma[{k},{i},{l}]"), -h)
            for j, (g, d) in enumerate(zip(gts, g_deg)):
                e = e.plus_gram(p.new_sos(n, d, f"eta[{k},{i},{j}]"), -g)
            p.assert_is_sos(e, cap, name=f"s[{k},{i}]")
    p.meta.update(kind="ad", r=r, report_sign=model.report_sign)
    return p


def _plain_relaxation(model: DroModel, r: int, kind: str) -> SdpProblem:
    _check_model(model)
    _check_level(kind, model, r)
    m = model.dim
    cap = 2 * r
    N = model.samples.N
    p = SdpProblem("max", name=f"{kind.upper()}_{r}")
    lam, alpha = _dual_variables(p, N)
    _max_objective(p, lam, alpha, model.radius)
    sc = _axis_scales(model)
    hs = [_unit(substitute_scale(h, sc)) for h in model.support.inequalities]
    h_deg = [multiplier_degree(cap, h.degree) for h in hs]
    for k in range(model.loss.K):
        pieces = [substitute_scale(g, sc) for g in model.loss.pieces[k]]
        for i in range(N):
            phi = substitute_scale(squared_distance(model.samples.points[i]), sc)
            if kind == "adtilde":
                e = PolyExpr(m, pieces[0])
            else:
                e = PolyExpr(m)
                delta = [p.new_scalar("nonneg", f"delta[{k},{i},{j}]") for j in range(len(pieces))]
                p.tag("delta", *delta)
                for dv, g in zip(delta, pieces):
                    e = e.plus_scalar(dv, g)
                p.add_linear_equality({dv: 1.0 for dv in delta}, 1.0, label=f"simplex[{k},{i}]")
            e = e.plus_scalar(lam, phi).plus_scalar(alpha[i], -1.0)
            for l, (h, d) in enumerate(zip(hs, h_deg)):
                e = e.plus_gram(p.new_sos(m, d, f"sigma[{k},{i},{l}]"), -h)
            p.assert_is_sos(e, cap, name=f"s[{k},{i}]")
    p.meta.update(kind=kind, r=r, report_sign=model.report_sign)
    return p


def build_adtilde(model: DroModel, r: int) -> SdpProblem:
    """Unlifted relaxation for min-polynomial losses (``J == 1``)."""
    if model.loss.J != 1:
        raise ModelError("this relaxation needs a min-polynomial loss (J = 1)")
    return _plain_relaxation(model, r, "adtilde")


def build_fd(model: DroModel, r: int) -> SdpProblem:
    """Relaxation with simplex multipliers for convex pieces and concave constraints."""
    if not model.convex:
        raise ModelError("this relaxation needs the model's convexity attestation")
    return _plain_relaxation(model, r, "fd")


def build_pd(pm: PortfolioModel, r: int) -> SdpProblem:
    """Mean-CVaR portfolio relaxation (min-form)."""
    _check_level("pd", pm, r)
    m = pm.m
    cap = 2 * r
    N = pm.samples.N
    p = SdpProblem("min", name=f"PD_{r}")
    y = [p.new_scalar("nonneg", f"y[{q}]") for q in range(m)]
    tau = p.new_scalar("free", "tau")
    p.tag("y", *y)
    p.tag("tau", tau)
    p.add_linear_equality({v: 1.0 for v in y}, 1.0, label="budget")
    lam, alpha = _dual_variables(p, N)
    coefs = {lam: pm.radius ** 2}
    coefs.update({a: -1.0 / N for a in alpha})
    p.set_objective(coefs)
    p.meta["radius"] = pm.radius
    h = pm.support.inequalities[0]
    sdeg = min(multiplier_degree(cap, h.degree), 2 * (r - 1))
    pieces = portfolio_pieces(pm, y, tau)
    for k, g in enumerate(pieces):
        for i in range(N):
            phi = squared_distance(pm.samples.points[i])
            e = (-g).plus_scalar(lam, phi).plus_scalar(alpha[i], -1.0)
            e = e.plus_gram(p.new_sos(m, sdeg, f"sigma[{k},{i}]"), -h)
            p.assert_is_sos(e, cap, name=f"s[{k},{i}]")
    p.meta.update(kind="pd", r=r, report_sign=1.0)
    return p


BUILDERS: Dict[str, Callable] = {
    "ad": build_ad, "adtilde": build_adtilde, "fd": build_fd, "pd": build_pd,
}


def build(kind: str, model, r: int) -> SdpProblem:
    try:
        builder = BUILDERS[kind]
    except KeyError:
        raise ValueError(f"unknown hierarchy {kind!r}; choose from {KINDS}") from None
    if kind == "pd" and not isinstance(model, PortfolioModel):
        raise ModelError("the portfolio relaxation needs a PortfolioModel")
    if kind != "pd" and not isinstance(model, DroModel):
        raise ModelError(f"hierarchy {kind!r} needs a DroModel")
    return builder(model, r)


# -- solving -------------------------------------------------------------------


@dataclass
class HierarchyResult:
    kind: str
    r: int
    eps: float
    status: str
    objective: Optional[float]
    bound: Optional[float]
    lam: Optional[float]
    alpha: Optional[np.ndarray]
    scalars: Dict[str, np.ndarray]
    wall_ms: float
    solve: backend.SolveResult
    counts: Dict[str, int]


def solve_problem(p: SdpProblem, tol: float = 1e-7, form=None) -> HierarchyResult:
    """Compile and solve a built relaxation; the bound carries the report sign."""
    t0 = time.perf_counter()
    form = form if form is not None else backend.compile(p)
    res = backend.solve(form, tol=tol)
    vals = res.scalar_values(form)
    scalars = {name: np.array([vals[v.id] for v in vs]) for name, vs in p.tags.items()}
    sign = float(p.meta.get("report_sign", 1.0))
    ok = res.status == backend.OPTIMAL
    return HierarchyResult(
        kind=str(p.meta.get("kind", "")),
        r=int(p.meta.get("r", 0)),
        eps=float(p.meta.get("radius", float("nan"))),
        status=res.status,
        objective=None if res.objective is None else float(res.objective),
        bound=sign * float(res.objective) if ok else None,
        lam=float(scalars["lambda"][0]) if "lambda" in scalars else None,
        alpha=scalars.get("alpha"),
        scalars=scalars,
        wall_ms=1000.0 * (time.perf_counter() - t0),
        solve=res,
        counts=p.counts(),
    )


def solve_model(kind: str, model, r: int, tol: float = 1e-7) -> HierarchyResult:
    t0 = time.perf_counter()
    p = build(kind, model, r)
    out = solve_problem(p, tol=tol)
    out.wall_ms = 1000.0 * (time.perf_counter() - t0)
    return out


# -- sweeps --------------------------------------------------------------------

SWEEP_COLUMNS = ["kind", "eps", "r", "rep", "seed", "status", "bound", "wall_ms",
                 "mean", "q20", "q80"]


@dataclass
class SweepRow:
    kind: str
    eps: float
    r: int
    rep: int
    seed: int
    status: str
    bound: Optional[float]
    wall_ms: float


@dataclass
class BoundSweep:
    rows: List[SweepRow] = field(default_factory=list)

    def aggregate(self) -> List[Dict[str, object]]:
        """Per ``(eps, r)``: mean and 20/80 quantiles over optimal replications."""
        groups: Dict[tuple, List[float]] = {}
        kinds: Dict[tuple, str] = {}
        for row in self.rows:
            key = (row.eps, row.r)
            groups.setdefault(key, [])
            kinds[key] = row.kind
            if row.status == backend.OPTIMAL and row.bound is not None:
                groups[key].append(row.bound)
        out = []
        for (eps, r) in sorted(groups):
            vals = np.array(groups[(eps, r)])
            if vals.size:
                mean, q20, q80 = (float(vals.mean()), float(np.quantile(vals, 0.2)),
                                  float(np.quantile(vals, 0.8)))
            else:
                mean = q20 = q80 = None
            out.append({"kind": kinds[(eps, r)], "eps": eps, "r": r, "count": int(vals.size),
                        "mean": mean, "q20": q20, "q80": q80})
        return out

    def means(self) -> Dict[tuple, Optional[float]]:
        return {(a["eps"], a["r"]): a["mean"] for a in self.aggregate()}

    def to_csv(self, meta_line: Optional[str] = None) -> str:
        buf = io.StringIO()
        if meta_line:
            buf.write(f"# {meta_line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in self.rows:
            w.writerow([row.kind, repr(row.eps), row.r, row.rep, row.seed, row.status,
                        "" if row.bound is None else repr(row.bound),
                        f"{row.wall_ms:.1f}", "", "", ""])
        for a in self.aggregate():
            w.writerow([a["kind"], repr(a["eps"]), a["r"], "aggregate", "", "aggregate",
                        "", "", *("" if a[c] is None else repr(a[c]) for c in ("mean", "q20", "q80"))])
        return buf.getvalue()


ModelSource = Union[DroModel, PortfolioModel, Callable[[int], object]]


def _sweep_task(args):
    kind, source, r, eps_list, rep, seed, tol = args
    model = source(seed) if callable(source) else source
    rows = []
    try:
        p = build(kind, model, r)
    except (LevelTooSmall, ModelError, ValueError) as exc:
        return [SweepRow(kind, float(e), r, rep, seed, f"build-error: {exc}", None, 0.0)
                for e in eps_list]
    for eps in eps_list:
        t0 = time.perf_counter()
        try:
            set_radius(p, float(eps))
            res = solve_problem(p, tol=tol)
            status, bound = res.status, res.bound
        except Exception as exc:  # a failed instance must not abort the sweep
            status, bound = f"{backend.NUMERICAL_FAILURE}: {type(exc).__name__}", None
        rows.append(SweepRow(kind, float(eps), r, rep, seed, status, bound,
                             1000.0 * (time.perf_counter() - t0)))
    return rows


def sweep(kind: str, model: ModelSource, r_list: Sequence[int], eps_list: Sequence[float],
          replications: int = 1, seed: int = 0, tol: float = 1e-7, jobs: int = 1) -> BoundSweep:
    """Solve every ``(eps, r, rep)``; replication ``rep`` uses seed ``seed + rep``.

    ``model`` is either a fixed model or a callable ``seed -> model`` that
    regenerates the data for each replication.  Failures are recorded in the
    status column.
    """
    if replications < 1:
        raise ValueError("replications must be at least 1")
    tasks = [(kind, model, int(r), [float(e) for e in eps_list], rep, seed + rep, tol)
             for rep in range(replications) for r in r_list]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            chunks = list(ex.map(_sweep_task, tasks))
    else:
        chunks = [_sweep_task(t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda s: (s.eps, s.r, s.rep))
    return BoundSweep(rows)
