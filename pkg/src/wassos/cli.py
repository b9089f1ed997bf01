"""Command-line front end: ``wassos {solve,sweep,oracle}``.

Exit codes: 0 success, 1 usage or configuration error, 2 solver failure
(or a failed oracle check), 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import yaml

from . import __version__, backend, oracle
from .apps import Preset, get_preset, log_grid
from .hierarchy import KINDS, MAX_FORM, build, min_level, solve_problem, sweep
from .model import DroModel, ModelError, model_from_dict, model_to_dict
from .sos import LevelTooSmall

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3
ARTIFACT = "solve_artifact.json"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    preset: Optional[str] = None
    model: Optional[str] = None
    hierarchy: Optional[str] = None
    r: Optional[int] = None
    r_max: Optional[int] = None
    eps: Optional[float] = None
    eps_grid: Optional[str] = None
    reps: Optional[int] = None
    seed: int = 0
    tol: float = 1e-7
    jobs: int = 1
    export_only: bool = False
    out: str = "."
    per_axis: Optional[int] = None
    plot: Optional[str] = None
    extra: Dict[str, object] = field(default_factory=dict)

    def digest(self) -> str:
        blob = json.dumps({k: v for k, v in self.__dict__.items() if k != "out"},
                          sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def meta_line(self) -> str:
        return f"wassos {__version__} seed={self.seed} config={self.digest()}"


# -- configuration -------------------------------------------------------------


def _default_tol() -> float:
    raw = os.environ.get("WASSOS_SOLVER_TOL")
    if raw is None:
        return 1e-7
    try:
        tol = float(raw)
    except ValueError:
        raise ConfigError(f"WASSOS_SOLVER_TOL is not a number: {raw!r}") from None
    if not tol > 0:
        raise ConfigError("WASSOS_SOLVER_TOL must be positive")
    return tol


def _flatten(cfg: dict) -> dict:
    """Config files nest run options under ``run:``; everything else is kept as is."""
    out = dict(cfg)
    run = out.pop("run", None) or {}
    if not isinstance(run, dict):
        raise ConfigError("'run' must be a mapping")
    out.update(run)
    return {k.replace("-", "_"): v for k, v in out.items()}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(tol=_default_tol())
    if args.config:
        try:
            data = yaml.safe_load(Path(args.config).read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
        for key, val in _flatten(data).items():
            if hasattr(cfg, key) and key != "extra":
                setattr(cfg, key, val)
            else:
                cfg.extra[key] = val
    for key in ("preset", "model", "hierarchy", "r", "r_max", "eps", "eps_grid", "reps",
                "seed", "tol", "jobs", "out", "per_axis", "plot"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "export_only", False):
        cfg.export_only = True
    if (cfg.preset is None) == (cfg.model is None) and args.command != "oracle":
        raise ConfigError("give exactly one of --preset or --model")
    if cfg.hierarchy is not None and cfg.hierarchy not in KINDS:
        raise ConfigError(f"unknown hierarchy {cfg.hierarchy!r}; choose from {list(KINDS)}")
    if not float(cfg.tol) > 0:
        raise ConfigError("tol must be positive")
    if int(cfg.jobs) < 1:
        raise ConfigError("jobs must be at least 1")
    return cfg


def parse_eps_grid(text: str) -> List[float]:
    """``lo:hi:n`` on a log scale."""
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigError(f"--eps-grid expects lo:hi:n, got {text!r}") from None
    if not (0 < lo <= hi) or n < 1:
        raise ConfigError("--eps-grid needs 0 < lo <= hi and n >= 1")
    return log_grid(lo, hi, n)


def load_model_file(path: str) -> DroModel:
    p = Path(path)
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping")
    return model_from_dict(data.get("model", data), base_dir=p.parent)


class PresetSource:
    """Picklable ``seed -> model`` for parallel sweeps."""

    def __init__(self, preset: Preset, eps: float):
        self.preset, self.eps = preset, eps

    def __call__(self, seed: int):
        return self.preset.generate(seed, eps=self.eps)


def _preset(cfg: RunConfig) -> Optional[Preset]:
    if cfg.preset is None:
        return None
    try:
        return get_preset(cfg.preset)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None


def _kind(cfg: RunConfig, preset: Optional[Preset]) -> str:
    if cfg.hierarchy:
        return cfg.hierarchy
    if preset is not None:
        return preset.hierarchy
    return "ad"


def _eps_list(cfg: RunConfig, preset: Optional[Preset], fallback: float) -> List[float]:
    if cfg.eps_grid:
        return parse_eps_grid(cfg.eps_grid)
    if cfg.eps is not None:
        return [float(cfg.eps)]
    if preset is not None:
        return list(preset.eps_list)
    return [fallback]


def _r_list(cfg: RunConfig, preset: Optional[Preset], kind: str, model) -> List[int]:
    if cfg.r is not None:
        lo = int(cfg.r)
    elif preset is not None and cfg.r_max is None:
        return list(preset.r_list)
    else:
        lo = min_level(kind, model)
    hi = int(cfg.r_max) if cfg.r_max is not None else lo
    if hi < lo:
        raise ConfigError("--r-max is below --r")
    return list(range(lo, hi + 1))


def _instance(cfg: RunConfig, preset: Optional[Preset], eps: float):
    if preset is not None:
        return preset.generate(int(cfg.seed), eps=eps)
    model = load_model_file(cfg.model)
    return model.with_radius(eps)


def _check_levels(kind: str, model, r_list: Sequence[int]) -> None:
    need = min_level(kind, model)
    low = [r for r in r_list if r < need]
    if low:
        raise ConfigError(f"relaxation level r = {low[0]} too small; minimum admissible r = {need}")


# -- output helpers --------------------------------------------------------------


def _write_csv(path: Path, meta: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    buf = io.StringIO()
    buf.write(f"# {meta}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def svg_chart(aggregate: List[Dict[str, object]], title: str = "") -> str:
    """Static line chart: mean per r over log(eps) with a shaded 20/80 band."""
    W, H, pad = 640, 400, 56
    pts = [a for a in aggregate if a["mean"] is not None]
    if not pts:
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">'
                '<text x="20" y="40">no optimal rows</text></svg>\n')
    xs = np.log10([float(a["eps"]) for a in pts])
    ys = np.array([[a["q20"], a["mean"], a["q80"]] for a in pts], dtype=float)
    x0, x1 = xs.min(), xs.max() if xs.max() > xs.min() else xs.min() + 1
    y0, y1 = ys.min(), ys.max() if ys.max() > ys.min() else ys.min() + 1

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (W - 2 * pad)

    def py(y):
        return H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
             'font-family="sans-serif" font-size="12">',
             f'<rect width="{W}" height="{H}" fill="white"/>',
             f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
             f'<text x="{W / 2}" y="{H - 16}" text-anchor="middle">log10(eps)</text>',
             f'<text x="{W / 2}" y="24" text-anchor="middle">{title}</text>',
             f'<text x="6" y="{pad - 8}">{y1:.4g}</text>',
             f'<text x="6" y="{H - pad}">{y0:.4g}</text>',
             f'<text x="{pad}" y="{H - pad + 16}">{x0:.3g}</text>',
             f'<text x="{W - pad}" y="{H - pad + 16}" text-anchor="end">{x1:.3g}</text>']
    for idx, r in enumerate(sorted({a["r"] for a in pts})):
        sel = [(x, y) for x, y, a in zip(xs, ys, pts) if a["r"] == r]
        col = colors[idx % len(colors)]
        upper = " ".join(f"{px(x):.1f},{py(y[2]):.1f}" for x, y in sel)
        lower = " ".join(f"{px(x):.1f},{py(y[0]):.1f}" for x, y in reversed(sel))
        parts.append(f'<polygon points="{upper} {lower}" fill="{col}" fill-opacity="0.2" stroke="none"/>')
        line = " ".join(f"{px(x):.1f},{py(y[1]):.1f}" for x, y in sel)
        parts.append(f'<polyline points="{line}" fill="none" stroke="{col}" stroke-width="2"/>')
        parts.append(f'<text x="{W - pad - 40}" y="{pad + 16 * idx}" fill="{col}">r = {r}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# -- commands --------------------------------------------------------------------


def cmd_solve(cfg: RunConfig) -> int:
    preset = _preset(cfg)
    kind = _kind(cfg, preset)
    eps_list = _eps_list(cfg, preset, fallback=1.0)
    if cfg.model is not None and cfg.eps is None and not cfg.eps_grid:
        eps_list = [load_model_file(cfg.model).radius]
    eps = eps_list[0]
    model = _instance(cfg, preset, eps)
    r = int(cfg.r) if cfg.r is not None else (preset.r_list[0] if preset else min_level(kind, model))
    _check_levels(kind, model, [r])
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    prob = build(kind, model, r)
    form = backend.compile(prob)
    stem = f"{cfg.preset or Path(cfg.model).stem}_{kind}_r{r}"
    if cfg.export_only:
        path = out / f"{stem}.dat-s"
        backend.export_sdpa(form, path)
        print(f"wrote {path}")
        return EXIT_OK
    res = solve_problem(prob, tol=float(cfg.tol), form=form)
    header = ["kind", "eps", "r", "seed", "status", "bound", "objective", "lambda",
              "iterations", "wall_ms", "rows", "blocks"]
    row = [kind, repr(float(eps)), r, cfg.seed, res.status, _fmt(res.bound), _fmt(res.objective),
           _fmt(res.lam), res.solve.iterations, f"{res.wall_ms:.1f}", res.counts["rows"],
           res.counts["blocks"]]
    _write_csv(out / "solve.csv", cfg.meta_line(), header, [row])
    artifact = {
        "kind": kind, "r": r, "eps": float(eps), "seed": cfg.seed, "status": res.status,
        "objective": None if res.objective is None else float(res.objective),
        "bound": None if res.bound is None else float(res.bound), "lambda": res.lam,
        "alpha": None if res.alpha is None else [float(a) for a in res.alpha],
        "model": model_to_dict(model) if isinstance(model, DroModel) else None,
    }
    (out / ARTIFACT).write_text(json.dumps(artifact, indent=1))
    if res.status != backend.OPTIMAL:
        print(f"solver status {res.status}: {res.solve.message}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"{kind} r={r} eps={eps:g}: bound {res.bound:.6f} ({res.solve.iterations} iterations)")
    return EXIT_OK


def _export_grid(cfg: RunConfig, preset: Preset, kind: str, out: Path) -> int:
    """Scalability grids: one SDPA file and one count row per grid point."""
    rows = []
    for over in preset.grid or [{}]:
        model = preset.generate(int(cfg.seed), **over)
        for r in _r_list(cfg, preset, kind, model):
            _check_levels(kind, model, [r])
            prob = build(kind, model, r)
            tag = "_".join(f"{k}{v}" for k, v in over.items()) or "base"
            path = out / f"{preset.name}_{tag}_r{r}.dat-s"
            backend.export_sdpa(backend.compile(prob), path)
            c = prob.counts()
            rows.append([preset.name, json.dumps(over, sort_keys=True), r, c["rows"], c["scalars"],
                         c["blocks"], c["matrix_unknowns"], c["max_block"], path.name])
    _write_csv(out / "counts.csv", cfg.meta_line(),
               ["preset", "params", "r", "rows", "scalars", "blocks", "matrix_unknowns",
                "max_block", "file"], rows)
    print(f"wrote {len(rows)} SDPA files and counts.csv to {out}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    preset = _preset(cfg)
    kind = _kind(cfg, preset)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.export_only:
        if preset is None:
            raise ConfigError("--export-only sweeps need a preset")
        return _export_grid(cfg, preset, kind, out)
    base = _instance(cfg, preset, 1.0) if preset else load_model_file(cfg.model)
    eps_list = _eps_list(cfg, preset, fallback=base.radius)
    r_list = _r_list(cfg, preset, kind, base)
    _check_levels(kind, base, r_list)
    reps = int(cfg.reps) if cfg.reps is not None else (preset.replications if preset else 1)
    source = PresetSource(preset, eps_list[0]) if preset else base
    result = sweep(kind, source, r_list, eps_list, replications=reps, seed=int(cfg.seed),
                   tol=float(cfg.tol), jobs=int(cfg.jobs))
    (out / "sweep.csv").write_text(result.to_csv(cfg.meta_line()))
    if cfg.plot:
        Path(cfg.plot).write_text(svg_chart(result.aggregate(), title=f"{kind} bound"))
    failed = [row for row in result.rows if row.status != backend.OPTIMAL]
    print(f"{len(result.rows)} solves, {len(failed)} not optimal; wrote {out / 'sweep.csv'}")
    for row in failed:
        print(f"  eps={row.eps:g} r={row.r} rep={row.rep}: {row.status}", file=sys.stderr)
    return EXIT_SOLVER if failed else EXIT_OK


def cmd_oracle(cfg: RunConfig, artifact_path: Optional[str] = None) -> int:
    out = Path(cfg.out)
    path = Path(artifact_path) if artifact_path else out / ARTIFACT
    if not path.exists():
        raise ConfigError(f"no solve artifact at {path}; run 'wassos solve' first")
    art = json.loads(path.read_text())
    if art.get("model") is None:
        raise ConfigError("oracle checks need a model with an explicit loss")
    model = model_from_dict(art["model"])
    if model.dim > oracle.MAX_GRID_DIM:
        raise ConfigError(f"oracle checks need dimension <= {oracle.MAX_GRID_DIM}")
    per_axis = int(cfg.per_axis) if cfg.per_axis else {1: 200, 2: 40}.get(model.dim, 12)
    grid = oracle.make_grid(model.support, per_axis)
    spacing = max(hi - lo for lo, hi in grid.box) / (per_axis - 1)
    rows = []
    emp = oracle.empirical_value(model.loss, model.samples)
    rows.append(["empirical_value", repr(emp), "", "", "info"])
    if art["status"] == backend.OPTIMAL and MAX_FORM.get(art["kind"], False):
        upper = oracle.grid_primal_bound(model, grid, tol=min(float(cfg.tol), 1e-8))
        slack = upper - float(art["objective"])
        rows.append(["sandwich", repr(float(art["objective"])), repr(upper), repr(slack),
                     "pass" if slack >= -1e-5 else "fail"])
        rows.append(["grid_spacing", repr(spacing), "", "", "info"])
    if art.get("lambda") is not None and art.get("alpha") is not None:
        resid = oracle.semiinfinite_residual(float(art["lambda"]), art["alpha"], model, grid)
        rows.append(["semiinfinite_residual", repr(resid), "-1e-05", repr(resid + 1e-5),
                     "pass" if resid >= -1e-5 else "fail"])
    _write_csv(out / "oracle.csv", cfg.meta_line(), ["check", "value", "threshold", "slack", "result"],
               rows)
    fails = [r for r in rows if r[-1] == "fail"]
    for r in rows:
        print(f"{r[0]}: {r[1]} {r[-1]}")
    return EXIT_SOLVER if fails else EXIT_OK


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wassos", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"wassos {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("solve", "sweep", "oracle"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML run configuration (flags override it)")
        sp.add_argument("--preset")
        sp.add_argument("--model", help="YAML model file")
        sp.add_argument("--hierarchy", choices=KINDS)
        sp.add_argument("--r", type=int)
        sp.add_argument("--r-max", dest="r_max", type=int)
        sp.add_argument("--eps", type=float)
        sp.add_argument("--eps-grid", dest="eps_grid", metavar="LO:HI:N")
        sp.add_argument("--reps", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--jobs", type=int)
        sp.add_argument("--export-only", dest="export_only", action="store_true")
        sp.add_argument("--out", help="output directory (default: current)")
        if name == "sweep":
            sp.add_argument("--plot", help="also write an SVG chart to this path")
        if name == "oracle":
            sp.add_argument("--artifact", help="solve artifact JSON (default: OUT/solve_artifact.json)")
            sp.add_argument("--per-axis", dest="per_axis", type=int)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = resolve_config(args)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_oracle(cfg, getattr(args, "artifact", None))
    except (ConfigError, ModelError, LevelTooSmall, oracle.OracleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
