"""Brute-force checks that never touch the SOS machinery.

The grid LP restricts the worst-case measures to a finite lattice, giving an
upper bound on the minimal expectation; the semi-infinite residual evaluates
the dual constraint on a lattice; the empirical helpers are closed-form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import backend
from .model import DroModel, PiecewiseLoss, Samples, SupportSet

MAX_GRID_DIM = 4
GRID_TOL = 1e-12


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    points: np.ndarray
    per_axis: int
    box: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def make_grid(support: SupportSet, per_axis: int) -> Grid:
    """Uniform lattice with ``per_axis`` points per coordinate, filtered to the support."""
    if per_axis < 2:
        raise OracleError("per_axis must be at least 2")
    if support.dim > MAX_GRID_DIM:
        raise OracleError(f"grid oracles are limited to dimension <= {MAX_GRID_DIM}")
    box = support.box()
    if any(lo > hi for lo, hi in box):
        raise OracleError("support set has an empty bounding box")
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    pts = pts[support.mask(pts, tol=GRID_TOL)]
    if pts.shape[0] == 0:
        raise OracleError("no lattice point lies in the support set")
    return Grid(pts, per_axis, box)


def empirical_value(loss: PiecewiseLoss, samples: Samples) -> float:
    """Average loss over the samples: the zero-radius value."""
    return float(np.mean(loss.eval_many(samples.points)))


def grid_primal_bound(model: DroModel, grid: Grid, tol: float = 1e-8,
                      include_samples: bool = True) -> float:
    """Minimal expected loss over measures supported on the grid (an upper bound).

    Variables ``q[i, s] >= 0`` with ``sum_s q[i, s] = 1`` and
    ``mean_i sum_s q[i, s] |x_s - xhat_i|^2 <= eps^2``.  The samples are added
    to the grid so that the program stays feasible for any radius.
    """
    if len(grid) == 0:
        raise OracleError("empty grid")
    xi = model.samples.points
    pts = grid.points
    if include_samples:
        pts = np.unique(np.vstack([pts, xi]), axis=0)
    N, S = xi.shape[0], pts.shape[0]
    g = model.loss.eval_many(pts)
    d2 = ((xi[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    # nonneg layout: q (row-major N x S) then the budget slack
    nq = N * S
    rows = np.concatenate([np.repeat(np.arange(N), S), np.full(nq, N), [N]])
    cols = np.concatenate([np.arange(nq), np.arange(nq), [nq]])
    vals = np.concatenate([np.ones(nq), d2.ravel() / N, [1.0]])
    c = np.concatenate([np.tile(g, N) / N, [0.0]])
    form = backend.ConicStandardForm(
        block_sizes=[], n_nonneg=nq + 1, n_free=0,
        b=np.concatenate([np.ones(N), [float(model.radius) ** 2]]),
        lin_row=rows, lin_col=cols, lin_val=vals,
        c_nonneg=c, sense="min",
    )
    res = backend.solve(form, tol=tol)
    if res.status != backend.OPTIMAL:
        raise OracleError(f"grid LP not solved: {res.status} ({res.message})")
    return float(res.objective)


def semiinfinite_residual(lam: float, alpha, model: DroModel, grid: Grid) -> float:
    """``min_{i, s} g(x_s) + lam |x_s - xhat_i|^2 - alpha_i`` over the grid."""
    if lam < 0:
        raise OracleError("lambda must be nonnegative")
    alpha = np.asarray(alpha, dtype=float).ravel()
    xi = model.samples.points
    if alpha.size != xi.shape[0]:
        raise OracleError("need one alpha per sample")
    g = model.loss.eval_many(grid.points)
    d2 = ((xi[:, None, :] - grid.points[None, :, :]) ** 2).sum(axis=2)
    return float((g[None, :] + lam * d2 - alpha[:, None]).min())


def cvar_empirical(losses, eta: float) -> float:
    """``min_tau tau + mean(max(L - tau, 0)) / eta``, evaluated at every kink."""
    L = np.sort(np.asarray(losses, dtype=float).ravel())[::-1]
    if L.size == 0:
        raise OracleError("need at least one loss")
    if not 0 < eta <= 1:
        raise OracleError("eta must lie in (0, 1]")
    n = L.size
    # with tau = L[j] the positive part sums L[:j] - j*tau
    csum = np.concatenate([[0.0], np.cumsum(L)])
    j = np.arange(n)
    vals = L + (csum[j] - j * L) / (n * eta)
    return float(vals.min())


def tail_average(losses, eta: float) -> float:
    """Sorted-tail formula for the same quantity (an independent check)."""
    L = np.sort(np.asarray(losses, dtype=float).ravel())[::-1]
    k = eta * L.size
    whole = int(np.floor(k + 1e-12))
    total = L[:whole].sum()
    if whole < L.size and k > whole:
        total += (k - whole) * L[whole]
    return float(total / k)


def best_tau_scan(values_fn, taus) -> Tuple[float, float]:
    """Minimise ``values_fn(tau)`` over the candidate list; returns ``(value, tau)``."""
    best: Optional[Tuple[float, float]] = None
    for t in taus:
        v = float(values_fn(float(t)))
        if best is None or v < best[0]:
            best = (v, float(t))
    if best is None:
        raise OracleError("empty tau list")
    return best
