"""Acceptance criteria, one test each; a pass/fail line per criterion is printed
in the terminal summary (and to stdout when run with ``-s``)."""

import time

import numpy as np
import pytest

import conftest
from battery import DRO_SEEDS, PD_SEEDS, random_dro, random_portfolio
from sos_cases import certify, random_sos
from wassos import backend, oracle
from wassos.apps import get_preset
from wassos.hierarchy import build, set_radius, solve_model, solve_problem
from wassos.model import DroModel, PiecewiseLoss, Samples, interval_support
from wassos.poly import Poly


def report(num, name, ok, detail):
    line = f"[{num:2d}] {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_c01_revenue_saturation(revenue_preset):
    got, worst_time = {}, 0.0
    for eps in (6.0, 8.0, 10.0):
        t0 = time.perf_counter()
        res = solve_model("ad", revenue_preset.generate(0, eps=eps), 2)
        worst_time = max(worst_time, time.perf_counter() - t0)
        got[eps] = res.bound if res.status == backend.OPTIMAL else None
    ok = all(v is not None and abs(v - 14.0) <= 1e-2 for v in got.values()) and worst_time <= 120
    detail = ", ".join(f"eps={e:g}: {v:.6f}" if v is not None else f"eps={e:g}: failed"
                       for e, v in got.items())
    report(1, "revenue saturation at 14", ok, f"{detail}; slowest {worst_time:.1f}s")


def test_c02_empirical_limit(revenue_preset):
    model = revenue_preset.generate(0, eps=1e-4)
    res = solve_model("ad", model, 2)
    empirical_revenue = -oracle.empirical_value(model.loss, model.samples)
    gap = abs(res.bound - empirical_revenue) if res.status == backend.OPTIMAL else np.inf
    report(2, "small-radius limit equals empirical revenue", gap <= 1e-3,
           f"bound {res.bound}, empirical {empirical_revenue:.6f}, gap {gap:.2e}")


def test_c03_one_dimensional_shift():
    x = Poly.var(1, 0)
    model = DroModel(interval_support(0, 1), PiecewiseLoss(((x,),)), Samples(np.array([[0.5]])), 0.1)
    vals = [solve_model("adtilde", model, r).bound for r in (1, 2, 3)]
    grid = oracle.make_grid(model.support, 201)
    spacing = 1.0 / 200
    upper = oracle.grid_primal_bound(model, grid)
    ok = all(v is not None and abs(v - 0.4) <= 1e-4 for v in vals) and 0.4 - 1e-6 <= upper <= 0.4 + spacing
    report(3, "1-D shift value 0.4", ok,
           f"r=1..3: {', '.join(f'{v:.7f}' for v in vals)}; grid LP {upper:.7f}")


@pytest.fixture(scope="module")
def battery():
    """Solve every battery instance at r = 2 and r = 3 once; later criteria reuse it."""
    out = []
    for seed in DRO_SEEDS:
        inst = random_dro(seed)
        grid = oracle.make_grid(inst.model.support, 60 if inst.model.dim == 1 else 40)
        upper = oracle.grid_primal_bound(inst.model, grid)
        for kind in inst.kinds:
            res = {r: solve_model(kind, inst.model, r) for r in (2, 3)}
            out.append(dict(name=inst.name, kind=kind, model=inst.model, grid=grid, upper=upper, res=res))
    return out


def test_c04_level_monotonicity(battery):
    bad, n = [], 0
    for item in battery:
        a, b = item["res"][2], item["res"][3]
        n += 1
        if a.status != backend.OPTIMAL or b.status != backend.OPTIMAL or a.objective > b.objective + 1e-6:
            bad.append(f"{item['name']}/{item['kind']}")
    pd_bad = []
    for seed in PD_SEEDS:
        pm = random_portfolio(seed)
        a, b = solve_model("pd", pm, 2), solve_model("pd", pm, 3)
        if a.status != backend.OPTIMAL or b.status != backend.OPTIMAL or b.objective > a.objective + 1e-6:
            pd_bad.append(f"pd{seed}")
    report(4, "level monotonicity", not bad and not pd_bad and n >= 20,
           f"{n} max-form pairs over {len(DRO_SEEDS)} instances, {len(PD_SEEDS)} min-form pairs; "
           f"violations: {bad + pd_bad or 'none'}")


def test_c05_sandwich(battery):
    worst, bad = np.inf, []
    for item in battery:
        for r, res in item["res"].items():
            if res.status != backend.OPTIMAL:
                bad.append(f"{item['name']}/{item['kind']}/r{r} not optimal")
                continue
            slack = item["upper"] + 1e-5 - res.objective
            worst = min(worst, slack)
            if slack < 0:
                bad.append(f"{item['name']}/{item['kind']}/r{r}")
    report(5, "hierarchy bound below grid LP", not bad,
           f"{2 * len(battery)} bounds, smallest slack {worst:.2e}; violations: {bad or 'none'}")


def test_c06_dual_feasibility(battery):
    worst, bad = np.inf, []
    for item in battery:
        for r, res in item["res"].items():
            if res.status != backend.OPTIMAL:
                continue
            val = oracle.semiinfinite_residual(res.lam, res.alpha, item["model"], item["grid"])
            worst = min(worst, val)
            if val < -1e-5:
                bad.append(f"{item['name']}/{item['kind']}/r{r}")
    report(6, "semi-infinite residual of (lambda, alpha)", not bad,
           f"minimum residual {worst:.2e} (threshold -1e-5); violations: {bad or 'none'}")


def test_c07_portfolio_plateau(portfolio_preset):
    eps_list = [1.0, 5.0, 10.0]
    vals = {(r, e): [] for r in (2, 3) for e in eps_list}
    failures = []
    for rep in range(portfolio_preset.replications):
        pm = portfolio_preset.generate(portfolio_preset.seed + rep, eps=eps_list[0])
        for r in (2, 3):
            prob = build("pd", pm, r)
            for e in eps_list:
                set_radius(prob, e)
                res = solve_problem(prob)
                if res.status == backend.OPTIMAL:
                    vals[(r, e)].append(res.bound)
                else:
                    failures.append((rep, r, e))
    means = {k: float(np.mean(v)) if v else np.nan for k, v in vals.items()}
    plateau = abs(means[(2, 5.0)] - means[(2, 10.0)])
    mono = all(means[(3, e)] <= means[(2, e)] + 1e-6 for e in eps_list)
    ok = plateau <= 1e-2 and mono and not failures
    detail = "; ".join(f"eps={e:g}: r2 {means[(2, e)]:.6f}, r3 {means[(3, e)]:.6f}" for e in eps_list)
    report(7, "portfolio plateau and r-monotone means", ok,
           f"|obj(5)-obj(10)| = {plateau:.2e}; {detail}; failed solves: {failures or 'none'}")


def test_c08_sos_compiler():
    rng = np.random.default_rng(2024)
    worst, bad = 0.0, 0
    for k in range(100):
        n = 1 + k % 3
        half = 1 + (k // 3) % 3
        status, resid, _ = certify(random_sos(rng, n, half))
        if status != backend.OPTIMAL or resid > 1e-6:
            bad += 1
        else:
            worst = max(worst, resid)
    x = Poly.var(1, 0)
    infeasible = [certify(p, cap=2)[0] for p in (Poly.constant(1, -1.0), x)]
    ok = bad == 0 and all(s == backend.INFEASIBLE for s in infeasible)
    report(8, "SOS compiler", ok,
           f"100 random SOS: {100 - bad} certified, worst Gram residual {worst:.1e}; "
           f"-1 -> {infeasible[0]}, x -> {infeasible[1]}")


def test_c09_sdpa_round_trip(revenue_preset, portfolio_preset):
    from test_sdpa import toy_form
    cases = {
        "toy": toy_form(),
        "revenue-r2": backend.compile(build("ad", revenue_preset.generate(0, eps=1.0), 2)),
        "portfolio-r2": backend.compile(build("pd", portfolio_preset.generate(0, eps=1.0), 2)),
    }
    bad = []
    for name, form in cases.items():
        text = backend.dumps_sdpa(form)
        again = backend.loads_sdpa(text)
        if not again.structurally_equal(form) or backend.dumps_sdpa(again) != text:
            bad.append(name)
    report(9, "SDPA round trip", not bad, f"{', '.join(cases)}; byte mismatches: {bad or 'none'}")


def _monotone(counts):
    """Counts must grow when one grid parameter grows and the other is fixed."""
    for (a, b), c in counts.items():
        for (a2, b2), c2 in counts.items():
            if (a2 > a and b2 == b) or (a2 == a and b2 > b):
                if not c2["rows"] > c["rows"] or not c2["matrix_unknowns"] > c["matrix_unknowns"]:
                    return False
    return True


def test_c10_dimension_counts():
    details, ok = [], True
    for name, keys in (("scal-revenue", ("K", "N")), ("scal-portfolio", ("m", "N"))):
        pre = get_preset(name)
        counts = {}
        t0 = time.perf_counter()
        for over in pre.grid:
            prob = build(pre.hierarchy, pre.generate(0, **over), pre.r_list[0])
            counts[(over[keys[0]], over[keys[1]])] = prob.counts()
        mono = _monotone(counts)
        ok &= mono
        big = counts[max(counts)]
        details.append(f"{name}: {len(counts)} grid points, largest {big['rows']} rows / "
                       f"{big['blocks']} blocks, monotone={mono}, build {time.perf_counter() - t0:.0f}s")
    report(10, "own dimension counts grow with K, m, N", ok, "; ".join(details))
