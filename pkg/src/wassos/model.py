"""Problem data for worst-case expectations over a quadratic Wasserstein ball.

A :class:`DroModel` holds the support set ``{h_l >= 0}``, the piecewise loss
``min_k max_j g_j^(k)``, the empirical samples, the radius and the bracketing
constants used by the lifted certificate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .poly import Poly, coefficient_bound, lift, parse_poly, to_string

SAMPLE_TOL = 1e-9


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class SupportSet:
    dim: int
    inequalities: Tuple[Poly, ...]
    norm_bound: float

    def __post_init__(self):
        object.__setattr__(self, "inequalities", tuple(self.inequalities))

    def contains(self, point, tol: float = SAMPLE_TOL) -> bool:
        p = np.asarray(point, dtype=float)
        if np.linalg.norm(p) > self.norm_bound + tol:
            return False
        return all(h(p) >= -tol for h in self.inequalities)

    def box(self) -> Tuple[Tuple[float, float], ...]:
        """``[-rho, rho]`` per axis, tightened by inequalities of the form ``a x_i + c >= 0``."""
        rho = float(self.norm_bound)
        box = [[-rho, rho] for _ in range(self.dim)]
        for h in self.inequalities:
            if h.degree != 1:
                continue
            lin = [(e, c) for e, c in h.terms.items() if sum(e) == 1]
            if len(lin) != 1:
                continue
            e, a = lin[0]
            i = int(np.argmax(e))
            c = float(h.terms.get(tuple([0] * self.dim), 0.0))
            if a > 0:
                box[i][0] = max(box[i][0], -c / a)
            else:
                box[i][1] = min(box[i][1], -c / a)
        return tuple((lo, hi) for lo, hi in box)

    def mask(self, points, tol: float = SAMPLE_TOL) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.linalg.norm(pts, axis=1) <= self.norm_bound + tol
        for h in self.inequalities:
            ok &= h.eval_many(pts) >= -tol
        return ok


def interval_support(lo: float, hi: float) -> SupportSet:
    x = Poly.var(1, 0)
    return SupportSet(1, (x - lo, hi - x), max(abs(lo), abs(hi)))


def ball_support(dim: int, radius: float) -> SupportSet:
    h = Poly.constant(dim, radius**2)
    for i in range(dim):
        xi = Poly.var(dim, i)
        h = h - xi * xi
    return SupportSet(dim, (h,), float(radius))


@dataclass(frozen=True)
class PiecewiseLoss:
    """``g(x) = min_k max_j pieces[k][j](x)``."""

    pieces: Tuple[Tuple[Poly, ...], ...]

    def __post_init__(self):
        pieces = tuple(tuple(row) for row in self.pieces)
        if not pieces or not pieces[0]:
            raise ModelError("loss needs at least one piece")
        width = len(pieces[0])
        if any(len(row) != width for row in pieces):
            raise ModelError("piece grid must be rectangular (K x J)")
        n = pieces[0][0].nvars
        if any(g.nvars != n for row in pieces for g in row):
            raise ModelError("all pieces must share one dimension")
        object.__setattr__(self, "pieces", pieces)

    @property
    def K(self) -> int:
        return len(self.pieces)

    @property
    def J(self) -> int:
        return len(self.pieces[0])

    @property
    def dim(self) -> int:
        return self.pieces[0][0].nvars

    @property
    def degree(self) -> int:
        return max(g.degree for row in self.pieces for g in row)

    def __call__(self, point) -> float:
        return min(max(g(point) for g in row) for row in self.pieces)

    def eval_many(self, points) -> np.ndarray:
        vals = np.array([[g.eval_many(points) for g in row] for row in self.pieces])
        return vals.max(axis=1).min(axis=0)

    def negated(self) -> "PiecewiseLoss":
        """Only defined for K == 1 or J == 1, where ``-min max = min max`` of negations."""
        if self.J == 1:
            return PiecewiseLoss(tuple((-row[0] for row in self.pieces),))
        if self.K == 1:
            return PiecewiseLoss(tuple((-g,) for g in self.pieces[0]))
        raise ModelError("negation of a general min-max loss is not a min-max loss")


@dataclass(frozen=True)
class Samples:
    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 1:
            raise ModelError("need at least one sample")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class TauBounds:
    pairs: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "pairs", tuple((float(a), float(b)) for a, b in self.pairs)
        )

    def __getitem__(self, k: int) -> Tuple[float, float]:
        return self.pairs[k]

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class DroModel:
    support: SupportSet
    loss: PiecewiseLoss
    samples: Samples
    radius: float
    tau: Optional[TauBounds] = None
    convex: bool = False
    # reported value = report_sign * hierarchy optimum (-1 for revenue-style maximisation)
    report_sign: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.tau is None:
            object.__setattr__(
                self, "tau", crude_tau_bounds(self.loss, self.support.norm_bound)
            )

    @property
    def dim(self) -> int:
        return self.support.dim

    def with_radius(self, eps: float) -> "DroModel":
        return replace(self, radius=float(eps))

    def with_samples(self, samples: Samples) -> "DroModel":
        return replace(self, samples=samples)


def crude_tau_bounds(loss: PiecewiseLoss, rho: float) -> TauBounds:
    """Certified brackets ``tau2 < g_j^(k) < tau1`` on the ball of radius ``rho``.

    Uses ``|x^alpha| <= ||x||^|alpha|`` on the ball, plus a unit margin.
    """
    if rho <= 0:
        raise ModelError("rho must be positive")
    pairs = []
    for row in loss.pieces:
        B = max(coefficient_bound(g, rho) for g in row)
        pairs.append((B + 1.0, -B - 1.0))
    return TauBounds(tuple(pairs))


def validate(model: DroModel) -> List[str]:
    """Return human-readable violations; empty when the model is well formed."""
    out: List[str] = []
    sup = model.support
    m = sup.dim
    if m < 1:
        out.append("support dimension must be positive")
    if len(sup.inequalities) < 1:
        out.append("support needs at least one inequality")
    for l, h in enumerate(sup.inequalities):
        if h.nvars != m:
            out.append(f"inequality {l} has {h.nvars} variables, expected {m}")
    if not sup.norm_bound > 0:
        out.append("norm bound must be positive")
    if model.loss.dim != m:
        out.append(f"loss has {model.loss.dim} variables, expected {m}")
    if model.samples.dim != m:
        out.append(f"samples have dimension {model.samples.dim}, expected {m}")
    else:
        for i, p in enumerate(model.samples.points):
            if np.linalg.norm(p) > sup.norm_bound + SAMPLE_TOL:
                out.append(f"sample {i} violates the norm bound")
            for l, h in enumerate(sup.inequalities):
                if h.nvars == m and h(p) < -SAMPLE_TOL:
                    out.append(f"sample {i} violates inequality {l}")
    if not model.radius > 0:
        out.append("radius must be positive")
    tau = model.tau
    if len(tau) != model.loss.K:
        out.append(f"expected {model.loss.K} tau pairs, got {len(tau)}")
    else:
        for k, (t1, t2) in enumerate(tau.pairs):
            if not t1 > t2:
                out.append(f"tau bounds not strict for piece {k}")
                continue
            if model.samples.dim != m:
                continue
            vals = np.array(
                [g.eval_many(model.samples.points) for g in model.loss.pieces[k]]
            )
            if vals.max() >= t1 or vals.min() <= t2:
                out.append(f"tau bounds for piece {k} do not bracket the piece values")
    return out


def interval_archimedean_certificate(R: float):
    """Certificate ``Rbar - x^2 = s0 + s1*x + s2*(R - x)`` for the interval ``[0, R]``.

    Returns ``(Rbar, s0, s1, s2)`` with ``Rbar = R^2 + 1`` and each ``s`` SOS.
    """
    if not R > 0:
        raise ModelError("R must be positive")
    x = Poly.var(1, 0)
    Rbar = R * R + 1.0
    s0 = Poly.constant(1, Rbar - R * R)
    s1 = (R - x) * (R - x) / R
    s2 = x * x / R + R
    return Rbar, s0, s1, s2


def archimedean_residual(R: float) -> Poly:
    Rbar, s0, s1, s2 = interval_archimedean_certificate(R)
    x = Poly.var(1, 0)
    return (Rbar - x * x) - (s0 + s1 * x + s2 * (R - x))


def lifted_pieces(model: DroModel, k: int) -> List[Poly]:
    """The ``J + 2`` lifted constraint polynomials of piece ``k`` in ``(x, xt)``.

    Order: ``xt - g_j`` for each ``j``, then ``tau1 - xt`` and ``xt - tau2``.
    """
    if not 0 <= k < model.loss.K:
        raise IndexError(f"piece index {k} out of range")
    m = model.dim
    xt = Poly.var(m + 1, m)
    t1, t2 = model.tau[k]
    out = [xt - lift(g) for g in model.loss.pieces[k]]
    out.append(t1 - xt)
    out.append(xt - t2)
    return out


# -- model files ---------------------------------------------------------------


def _read_samples_csv(path: Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                continue  # header line
    return np.array(rows, dtype=float)


def model_from_dict(cfg: dict, base_dir: Path | None = None) -> DroModel:
    """Build a model from the parsed contents of a model file.

    Keys: ``dim``, ``inequalities``, ``norm_bound``, ``pieces`` (K x J
    strings), ``samples`` (rows) or ``samples_csv``, ``radius``, optional
    ``tau`` (K pairs), ``convex`` and ``report_sign``.
    """
    try:
        m = int(cfg["dim"])
        ineqs = tuple(parse_poly(s, m) for s in cfg["inequalities"])
        rho = float(cfg["norm_bound"])
        pieces = tuple(tuple(parse_poly(s, m) for s in row) for row in cfg["pieces"])
    except KeyError as exc:
        raise ModelError(f"missing key {exc.args[0]!r}") from None
    if "samples" in cfg:
        pts = np.array(cfg["samples"], dtype=float).reshape(-1, m)
    elif "samples_csv" in cfg:
        path = Path(cfg["samples_csv"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        pts = _read_samples_csv(path).reshape(-1, m)
    else:
        raise ModelError("model needs 'samples' or 'samples_csv'")
    loss = PiecewiseLoss(pieces)
    tau = None
    if cfg.get("tau") is not None:
        tau = TauBounds(tuple(tuple(p) for p in cfg["tau"]))
    return DroModel(
        support=SupportSet(m, ineqs, rho),
        loss=loss,
        samples=Samples(pts),
        radius=float(cfg.get("radius", 1.0)),
        tau=tau,
        convex=bool(cfg.get("convex", False)),
        report_sign=float(cfg.get("report_sign", 1.0)),
        name=str(cfg.get("name", "")),
    )


def model_to_dict(model: DroModel) -> dict:
    return {
        "name": model.name,
        "dim": model.dim,
        "inequalities": [to_string(h) for h in model.support.inequalities],
        "norm_bound": model.support.norm_bound,
        "pieces": [[to_string(g) for g in row] for row in model.loss.pieces],
        "samples": model.samples.points.tolist(),
        "radius": model.radius,
        "tau": [list(p) for p in model.tau.pairs],
        "convex": model.convex,
        "report_sign": model.report_sign,
    }


def hessian_spot_check(model: DroModel, count: int = 200, seed: int = 0) -> List[str]:
    """Sample points of the support and report pieces whose Hessian is not PSD there.

    Only a heuristic: polynomial convexity is attested by the user, not proven.
    """
    rng = np.random.default_rng(seed)
    m = model.dim
    rho = model.support.norm_bound
    pts = rng.uniform(-rho, rho, size=(count * 4, m))
    pts = pts[model.support.mask(pts)][:count]
    warnings = []
    for k, row in enumerate(model.loss.pieces):
        for j, g in enumerate(row):
            if _min_hessian_eig(g, pts) < -1e-8:
                warnings.append(f"piece ({k},{j}) is not convex on sampled points")
    for l, h in enumerate(model.support.inequalities):
        if _min_hessian_eig(-h, pts) < -1e-8:
            warnings.append(f"-h_{l} is not convex on sampled points")
    return warnings


def _min_hessian_eig(p: Poly, pts: np.ndarray) -> float:
    m = p.nvars
    if p.degree < 2 or len(pts) == 0:
        return 0.0
    H = np.zeros((len(pts), m, m))
    for e, c in p.terms.items():
        for a in range(m):
            for b in range(m):
                ea = list(e)
                coef = c
                coef *= ea[a]
                ea[a] -= 1
                if coef == 0:
                    continue
                coef *= ea[b]
                ea[b] -= 1
                if coef == 0 or min(ea) < 0:
                    continue
                H[:, a, b] += coef * np.prod(pts ** np.asarray(ea), axis=1)
    return float(np.linalg.eigvalsh(H).min())
