"""Primal-dual interior-point method for small block SDPs.

Solves the conic standard form (internally always as a minimisation)

    min <C, X> + c_l.x_l + c_f.x_f   s.t.  A(X) + A_l x_l + A_f x_f = b,
    X PSD (block diagonal), x_l >= 0, x_f free,

together with its dual ``max b.y  s.t.  A^T y + Z = C, A_l^T y + z_l = c_l,
A_f^T y = c_f``.  Search directions are HKM with a Mehrotra
predictor-corrector.  Each Newton step solves

    [ M      A_l        A_f ] [dy  ]
    [ A_l^T  -Z_l/X_l   0   ] [dx_l] = rhs
    [ A_f^T  0          0   ] [dx_f]

with ``M[p, q] = sum_blocks tr(F_p X F_q Z^{-1})`` assembled by the Schur
kernel.  Rows linked through shared PSD blocks form independent components
of ``M``; each component is Cholesky-factorised and the scalar variables
(plus rows that touch no PSD block) are handled by a small dense system.
When a component is numerically singular the solver falls back to a sparse
LU factorisation of the whole augmented matrix.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from . import kernels
from .conic import ConicStandardForm

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical-failure"


@dataclass
class SolveResult:
    status: str
    objective: Optional[float]
    primal_objective: float
    dual_objective: float
    blocks: List[np.ndarray]
    x_nonneg: np.ndarray
    x_free: np.ndarray
    y: np.ndarray
    iterations: int
    max_eq_residual: float
    dual_residual: float
    rel_gap: float
    min_eig: float
    wall_time: float
    kernel: str
    message: str = ""
    meta: Dict[str, object] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    @property
    def duality_gap(self) -> float:
        """Relative difference of the primal and dual objectives."""
        p, d = self.primal_objective, self.dual_objective
        return abs(p - d) / (1.0 + abs(p) + abs(d))

    def scalar_values(self, form: ConicStandardForm) -> np.ndarray:
        """Scalar values in the order of the originating :class:`SdpProblem`."""
        smap = form.meta.get("scalar_map")
        if smap is None:
            raise ValueError("form carries no scalar map")
        out = np.empty(len(smap))
        for k, (kind, idx) in enumerate(smap):
            out[k] = self.x_nonneg[idx] if kind == "nonneg" else self.x_free[idx]
        return out


def _runs(sizes: np.ndarray, offs: np.ndarray):
    """Maximal runs of equal sizes: (n, first, count, flat start, flat end)."""
    out = []
    k = 0
    while k < len(sizes):
        n = int(sizes[k])
        j = k
        while j < len(sizes) and sizes[j] == n:
            j += 1
        out.append((n, k, j - k, int(offs[k]), int(offs[j])))
        k = j
    return out


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _amax(*arrs) -> float:
    return max(float(np.abs(a).max(initial=0.0)) for a in arrs)


DENSE_SCALAR_LIMIT = 1500


class _Layout:
    """Index bookkeeping that stays fixed across iterations."""

    def __init__(self, f: ConicStandardForm):
        self.m = m = f.m
        self.nl = nl = f.n_nonneg
        self.nf = nf = f.n_free
        sizes = list(f.block_sizes)
        nb = len(sizes)
        self.nb = nb
        # blocks are stored grouped by size so batched linear algebra applies
        order = sorted(range(nb), key=lambda k: (sizes[k], k))
        pos = np.empty(nb, dtype=np.int64)
        pos[order] = np.arange(nb)
        self.order = order
        self.sizes = np.array([sizes[k] for k in order], dtype=np.int64)
        self.offs = np.concatenate([[0], np.cumsum(self.sizes ** 2)]).astype(np.int64)
        self.flat_len = int(self.offs[-1])
        self.groups = _runs(self.sizes, self.offs)
        self.nu = float(self.sizes.sum() + nl)

        # constraint entries in flat coordinates
        bp = pos[f.psd_blk] if f.psd_blk.size else np.zeros(0, np.int64)
        n_e = self.sizes[bp] if bp.size else np.zeros(0, np.int64)
        base = self.offs[bp] if bp.size else np.zeros(0, np.int64)
        self.e_row = f.psd_row
        self.e_ab = base + f.psd_i * n_e + f.psd_j
        off = f.psd_i != f.psd_j
        self.e_w2 = f.psd_val * np.where(off, 2.0, 1.0)
        self.t_idx = np.concatenate([self.e_ab, (base + f.psd_j * n_e + f.psd_i)[off]])
        self.t_row = np.concatenate([f.psd_row, f.psd_row[off]])
        self.t_val = np.concatenate([f.psd_val, f.psd_val[off]])

        # objective as a flat symmetric vector
        self.c_flat = np.zeros(self.flat_len)
        if f.c_psd_val.size:
            cp = pos[f.c_psd_blk]
            cn = self.sizes[cp]
            cb = self.offs[cp]
            np.add.at(self.c_flat, cb + f.c_psd_i * cn + f.c_psd_j, f.c_psd_val)
            coff = f.c_psd_i != f.c_psd_j
            np.add.at(self.c_flat, (cb + f.c_psd_j * cn + f.c_psd_i)[coff], f.c_psd_val[coff])

        # per-block kernel data: entries sorted by (block, row, i, j)
        srt = np.lexsort((f.psd_j, f.psd_i, f.psd_row, bp)) if bp.size else np.zeros(0, np.int64)
        bounds = np.searchsorted(bp[srt], np.arange(nb + 1))
        self.kdata = []
        for k in range(nb):
            sl = srt[bounds[k]:bounds[k + 1]]
            if sl.size == 0:
                self.kdata.append(None)
                continue
            rows = f.psd_row[sl]
            urows, first = np.unique(rows, return_index=True)
            self.kdata.append((
                urows,
                np.ascontiguousarray(np.concatenate([first, [rows.size]]), dtype=np.int64),
                np.ascontiguousarray(f.psd_i[sl], dtype=np.int64),
                np.ascontiguousarray(f.psd_j[sl], dtype=np.int64),
                np.ascontiguousarray(f.psd_val[sl], dtype=float),
            ))
        self.n_mdata = int(sum(kd[0].size ** 2 for kd in self.kdata if kd is not None))

        self.Al = sp.csr_matrix((f.lin_val, (f.lin_row, f.lin_col)), shape=(m, nl))
        self.Af = sp.csr_matrix((f.free_val, (f.free_row, f.free_col)), shape=(m, nf))
        self.AlT = self.Al.T.tocsr()
        self.AfT = self.Af.T.tocsr()
        # scalar columns: nonnegative first, then free
        self.B = sp.hstack([self.Al, self.Af], format="csr")
        self.lin = (f.lin_row, f.lin_col, f.lin_val)
        self.free = (f.free_row, f.free_col, f.free_val)

    def A_psd(self, xs: np.ndarray) -> np.ndarray:
        if self.e_row.size == 0:
            return np.zeros(self.m)
        return np.bincount(self.e_row, weights=self.e_w2 * xs[self.e_ab], minlength=self.m)

    def At_psd(self, y: np.ndarray) -> np.ndarray:
        if self.t_idx.size == 0:
            return np.zeros(self.flat_len)
        return np.bincount(self.t_idx, weights=self.t_val * y[self.t_row], minlength=self.flat_len)

    def project(self, res: np.ndarray):
        """Least-norm ``(dX, dxl, dxf)`` with ``A(dX, dxl, dxf) = res``, or ``None``.

        Uses a sparse LU of ``A A^T``, whose conditioning does not depend on the
        iterate; built on first use.
        """
        if not hasattr(self, "_aat"):
            self._aat = None
            P = sp.csr_matrix((self.e_w2, (self.e_row, self.e_ab)), shape=(self.m, self.flat_len))
            T = sp.csr_matrix((self.t_val, (self.t_idx, self.t_row)), shape=(self.flat_len, self.m))
            G = (P @ T + self.B @ self.B.T).tocsc()
            try:
                self._aat = spla.splu(G)
            except RuntimeError:
                pass
        if self._aat is None:
            return None
        w = self._aat.solve(np.asarray(res, dtype=float))
        if not np.all(np.isfinite(w)):
            return None
        return self.At_psd(w), self.AlT @ w, self.AfT @ w

    @property
    def ext(self) -> "_ExtOps":
        if not hasattr(self, "_ext"):
            self._ext = _ExtOps(self)
        return self._ext

    def block(self, flat: np.ndarray, k: int) -> np.ndarray:
        n = int(self.sizes[k])
        return flat[self.offs[k]:self.offs[k + 1]].reshape(n, n)


_EXT = np.longdouble if np.finfo(np.longdouble).eps < np.finfo(float).eps else np.float64


class _Reducer:
    """Sum ``weights`` by ``keys`` without leaving the weights' precision."""

    def __init__(self, keys: np.ndarray, size: int):
        self.order = np.argsort(keys, kind="stable")
        sk = keys[self.order]
        self.uniq, self.starts = np.unique(sk, return_index=True)
        self.size = size

    def __call__(self, w: np.ndarray) -> np.ndarray:
        out = np.zeros(self.size, dtype=w.dtype)
        if self.uniq.size:
            out[self.uniq] = np.add.reduceat(w[self.order], self.starts)
        return out


class _ExtOps:
    """Constraint maps evaluated in extended precision."""

    def __init__(self, L: "_Layout"):
        lr, lc, lv = L.lin
        fr, fc, fv = L.free
        self.L = L
        self.rows = np.concatenate([L.e_row, lr, fr]).astype(np.int64)
        self.red_A = _Reducer(self.rows, L.m)
        self.red_At = _Reducer(L.t_idx, L.flat_len)
        self.red_l = _Reducer(lc.astype(np.int64), L.nl)
        self.red_f = _Reducer(fc.astype(np.int64), L.nf)
        self.w_e = L.e_w2.astype(_EXT)
        self.t_val = L.t_val.astype(_EXT)
        self.lv = lv.astype(_EXT)
        self.fv = fv.astype(_EXT)

    def A(self, xs, xl, xf):
        L = self.L
        w = np.concatenate([self.w_e * xs[L.e_ab], self.lv * xl[L.lin[1]],
                            self.fv * xf[L.free[1]]])
        return self.red_A(w)

    def At(self, y):
        return self.red_At(self.t_val * y[self.L.t_row])

    def AlT(self, y):
        return self.red_l(self.lv * y[self.L.lin[0]])

    def AfT(self, y):
        return self.red_f(self.fv * y[self.L.free[0]])


class _SchurSystem:
    """Component-wise Cholesky of ``M`` plus a dense system for the scalars."""

    name = "schur"

    def __init__(self, L: _Layout):
        self.L = L
        m = L.m
        er, ec = [], []
        for k, kd in enumerate(L.kdata):
            if kd is not None:
                er.append(kd[0])
                ec.append(np.full(kd[0].size, m + k))
        er = np.concatenate(er) if er else np.zeros(0, np.int64)
        ec = np.concatenate(ec) if ec else np.zeros(0, np.int64)
        size = m + L.nb
        g = sp.coo_matrix((np.ones(er.size), (er, ec)), shape=(size, size))
        _, labels = connected_components(g, directed=False)
        touched = np.zeros(m, dtype=bool)
        touched[er] = True
        self.prow = np.flatnonzero(touched)
        self.srow = np.flatnonzero(~touched)
        comps: Dict[int, List[int]] = {}
        for r in self.prow:
            comps.setdefault(int(labels[r]), []).append(int(r))
        clist = sorted(comps.values(), key=lambda rows: (len(rows), rows[0]))
        self.csizes = np.array([len(c) for c in clist], dtype=np.int64)
        self.coffs = np.concatenate([[0], np.cumsum(self.csizes ** 2)]).astype(np.int64)
        self.cgroups = _runs(self.csizes, self.coffs)
        self.perm = np.array([r for c in clist for r in c], dtype=np.int64)
        self.roffs = np.concatenate([[0], np.cumsum(self.csizes)]).astype(np.int64)
        comp_of = np.full(m, -1, dtype=np.int64)
        local = np.zeros(m, dtype=np.int64)
        for ci, rows in enumerate(clist):
            comp_of[rows] = ci
            local[rows] = np.arange(len(rows))
        # flat destination of every kernel output entry
        idx = []
        for kd in L.kdata:
            if kd is None:
                continue
            urows = kd[0]
            ci = comp_of[urows[0]]
            n = self.csizes[ci]
            loc = local[urows]
            idx.append((self.coffs[ci] + loc[:, None] * n + loc[None, :]).ravel())
        self.midx = np.concatenate(idx) if idx else np.zeros(0, np.int64)
        self.mlen = int(self.coffs[-1])
        self.ns = L.nl + L.nf
        self.nsr = self.srow.size
        self.Bp = L.B[self.perm].toarray()
        self.Bs = L.B[self.srow].toarray()

    def factor(self, mdata: np.ndarray, wl: np.ndarray) -> bool:
        buf = np.bincount(self.midx, weights=mdata, minlength=self.mlen)
        self.Mc = []
        self.wl = wl
        self.Linv = []
        for (n, _, cnt, s, e) in self.cgroups:
            Mc = _sym(buf[s:e].reshape(cnt, n, n))
            self.Mc.append(Mc)
            try:
                C = np.linalg.cholesky(Mc)
            except np.linalg.LinAlgError:
                d = np.einsum("kii->ki", Mc).max(axis=1)
                Mc = Mc + (1e-13 * np.maximum(d, 1e-300))[:, None, None] * np.eye(n)
                try:
                    C = np.linalg.cholesky(Mc)
                except np.linalg.LinAlgError:
                    return False
            self.Linv.append(np.linalg.inv(C))
        nsr, ns = self.nsr, self.ns
        if nsr + ns == 0:
            self.T = None
            return True
        self.W = self._minv(self.Bp)
        S = -(self.Bp.T @ self.W)
        if self.L.nl:
            S[np.arange(self.L.nl), np.arange(self.L.nl)] -= wl
        T = np.zeros((nsr + ns, nsr + ns))
        T[:nsr, nsr:] = self.Bs
        T[nsr:, :nsr] = self.Bs.T
        T[nsr:, nsr:] = _sym(S)
        if not np.all(np.isfinite(T)):
            return False
        self.T = sla.lu_factor(T, check_finite=False)
        piv = np.abs(np.diag(self.T[0]))
        if piv.min() <= 1e-300 * max(1.0, piv.max()):
            return False
        return True

    def _minv(self, V: np.ndarray) -> np.ndarray:
        """``M^{-1} V`` for ``V`` in permuted PSD-row order."""
        out = np.empty(V.shape)
        vec = V.ndim == 1
        for (n, first, cnt, _, _), Li in zip(self.cgroups, self.Linv):
            s = self.roffs[first]
            e = self.roffs[first + cnt]
            if vec:
                t = np.einsum("kij,kj->ki", Li, V[s:e].reshape(cnt, n))
                t = np.einsum("kji,kj->ki", Li, t)
            else:
                t = Li @ V[s:e].reshape(cnt, n, -1)
                t = np.swapaxes(Li, -1, -2) @ t
            out[s:e] = t.reshape(out[s:e].shape)
        return out

    def apply(self, dy: np.ndarray, u: np.ndarray):
        """The assembled operator applied to ``(dy, u)``."""
        L = self.L
        out1 = np.zeros(L.m)
        seg = dy[self.perm]
        res = np.empty(self.perm.size)
        for (n, first, cnt, _, _), Mc in zip(self.cgroups, self.Mc):
            s = self.roffs[first]
            e = self.roffs[first + cnt]
            res[s:e] = np.einsum("kij,kj->ki", Mc, seg[s:e].reshape(cnt, n)).ravel()
        out1[self.perm] = res
        out2 = np.zeros(self.ns)
        if self.ns:
            out1 += L.B @ u
            out2 = L.B.T @ dy
            out2[:L.nl] -= self.wl * u[:L.nl]
        return out1, out2

    def solve(self, r1: np.ndarray, r2: np.ndarray, steps: int = 3):
        dy, u = self._solve_once(r1, r2)
        if self.T is None:
            return dy, u
        a1, a2 = self.apply(dy, u)
        e1, e2 = r1 - a1, r2 - a2
        err = _amax(e1, e2)
        for _ in range(steps):
            if err == 0.0:
                break
            cy, cu = self._solve_once(e1, e2)
            dy2, u2 = dy + cy, u + cu
            a1, a2 = self.apply(dy2, u2)
            f1, f2 = r1 - a1, r2 - a2
            err2 = _amax(f1, f2)
            if not err2 < 0.5 * err:
                break
            dy, u, e1, e2, err = dy2, u2, f1, f2, err2
        return dy, u

    def _solve_once(self, r1: np.ndarray, r2: np.ndarray):
        v = self._minv(r1[self.perm])
        dy = np.empty(self.L.m)
        if self.T is None:
            dy[self.perm] = v
            return dy, np.zeros(0)
        small = np.concatenate([r1[self.srow], r2 - self.Bp.T @ v])
        sol = sla.lu_solve(self.T, small, check_finite=False)
        u = sol[self.nsr:]
        dy[self.perm] = v - self.W @ u
        dy[self.srow] = sol[:self.nsr]
        return dy, u


class _AugmentedSystem:
    """Sparse LU of the whole augmented matrix."""

    name = "augmented"

    def __init__(self, L: _Layout):
        self.L = L
        m, nl, nf = L.m, L.nl, L.nf
        size = m + nl + nf
        rows, cols = [], []
        for kd in L.kdata:
            if kd is None:
                continue
            u = kd[0]
            rows.append(np.repeat(u, u.size))
            cols.append(np.tile(u, u.size))
        lr, lc, _ = L.lin
        fr, fc, _ = L.free
        diag = np.arange(size, dtype=np.int64)
        rows += [lr, m + lc, fr, m + nl + fc, diag]
        cols += [m + lc, lr, m + nl + fc, fr, diag]
        r_all = np.concatenate(rows).astype(np.int64)
        c_all = np.concatenate(cols).astype(np.int64)
        w = max(size, 1)
        uniq, inv = np.unique(c_all * w + r_all, return_inverse=True)
        self.inv = inv.ravel()
        self.nnz = uniq.size
        self.indices = (uniq % w).astype(np.int32)
        self.indptr = np.searchsorted(uniq // w, np.arange(size + 1)).astype(np.int32)
        self.size = size

    def factor(self, mdata: np.ndarray, wl: np.ndarray) -> bool:
        L = self.L
        data = np.concatenate([mdata, L.lin[2], L.lin[2], L.free[2], L.free[2],
                               np.zeros(L.m), -wl, np.zeros(L.nf)])
        vals = np.bincount(self.inv, weights=data, minlength=self.nnz)
        K = sp.csc_matrix((vals, self.indices, self.indptr), shape=(self.size, self.size))
        try:
            self.lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError:
            return False
        return True

    def solve(self, r1: np.ndarray, r2: np.ndarray):
        sol = self.lu.solve(np.concatenate([r1, r2]))
        return sol[:self.L.m], sol[self.L.m:]


def _max_step(L: _Layout, dflat: np.ndarray, chol_inv: List[np.ndarray],
              vec: np.ndarray, dvec: np.ndarray) -> float:
    """Largest alpha keeping ``X + alpha*dX`` PSD and ``vec + alpha*dvec >= 0``.

    ``chol_inv`` holds inverse Cholesky factors of the current blocks.
    """
    amax = np.inf
    for (n, _, cnt, s, e), Li in zip(L.groups, chol_inv):
        d = dflat[s:e].reshape(cnt, n, n)
        T = Li @ d @ np.swapaxes(Li, -1, -2)
        lam = np.linalg.eigvalsh(_sym(T))[:, 0].min()
        if lam < 0:
            amax = min(amax, -1.0 / lam)
    if vec.size:
        neg = dvec < 0
        if neg.any():
            amax = min(amax, float(np.min(-vec[neg] / dvec[neg])))
    return amax


def _inv_chol(flat: np.ndarray, L: _Layout) -> List[np.ndarray]:
    """Per size group: inverse Cholesky factors with ``M^{-1} = Linv^T Linv``."""
    out = []
    for (n, _, cnt, s, e) in L.groups:
        C = np.linalg.cholesky(flat[s:e].reshape(cnt, n, n))
        out.append(np.linalg.inv(C))
    return out


def _starting_point(f: ConicStandardForm, L: _Layout):
    """Scaled identities in the style of common SDP codes."""
    m = f.m
    b_abs = np.abs(f.b)
    xs = np.zeros(L.flat_len)
    zs = np.zeros(L.flat_len)
    rmax = np.zeros(L.nb)
    nmax = np.zeros(L.nb)
    if L.e_row.size:
        blk = np.searchsorted(L.offs, L.e_ab, side="right") - 1
        sq = f.psd_val ** 2 * np.where(f.psd_i != f.psd_j, 2.0, 1.0)
        w = max(m, 1)
        uk, inv = np.unique(blk * w + L.e_row, return_inverse=True)
        nrm = np.sqrt(np.bincount(inv.ravel(), weights=sq))
        kb = uk // w
        kr = uk % w
        np.maximum.at(rmax, kb, (1.0 + b_abs[kr]) / (1.0 + nrm))
        np.maximum.at(nmax, kb, nrm)
    for k in range(L.nb):
        n = int(L.sizes[k])
        cn = np.linalg.norm(L.block(L.c_flat, k))
        L.block(xs, k)[...] = max(10.0, np.sqrt(n), n * rmax[k]) * np.eye(n)
        L.block(zs, k)[...] = max(10.0, np.sqrt(n), nmax[k], cn) * np.eye(n)
    nl = f.n_nonneg
    if nl:
        Alc = L.Al.tocsc()
        colnorm = np.sqrt(np.asarray(Alc.multiply(Alc).sum(axis=0)).ravel())
        ratio = 0.0
        for j in range(nl):
            rows = Alc.indices[Alc.indptr[j]:Alc.indptr[j + 1]]
            if rows.size:
                ratio = max(ratio, float(np.max((1.0 + b_abs[rows]) / (1.0 + colnorm[j]))))
        xi = max(10.0, np.sqrt(nl), np.sqrt(nl) * ratio)
        eta = max(10.0, np.sqrt(nl), float(colnorm.max(initial=0.0)),
                  float(np.linalg.norm(f.c_nonneg)))
        xl = np.full(nl, xi)
        zl = np.full(nl, eta)
    else:
        xl = np.zeros(0)
        zl = np.zeros(0)
    return xs, zs, xl, zl, np.zeros(f.n_free), np.zeros(m)


def _presolve(f: ConicStandardForm, max_count: int = 4):
    """Substitute out free scalars that occur in at most ``max_count`` rows.

    Eliminating free column ``j`` through pivot row ``r`` subtracts multiples
    of row ``r`` from the other rows containing ``j`` and moves row ``r`` into
    the objective.  Returns the reduced form and the data needed to recover
    the eliminated scalars and multipliers, or ``None`` when nothing applies.
    """
    if f.n_free == 0 or f.free_val.size == 0:
        return None
    nz = f.free_val != 0
    col_cnt = np.bincount(f.free_col[nz], minlength=f.n_free)
    cand = [int(j) for j in np.argsort(col_cnt, kind="stable") if 1 <= col_cnt[j] <= max_count]
    if not cand:
        return None
    # variables: ("p", blk, i, j), ("l", k), ("f", k); rows touched become dicts
    touched = set(int(r) for r in f.free_row[nz][np.isin(f.free_col[nz], cand)])
    rows: Dict[int, Dict[tuple, float]] = {r: {} for r in touched}

    def put(r, key, v):
        d = rows[r]
        d[key] = d.get(key, 0.0) + float(v)

    for r, bk, a, bb, v in zip(f.psd_row, f.psd_blk, f.psd_i, f.psd_j, f.psd_val):
        if int(r) in rows:
            put(int(r), ("p", int(bk), int(a), int(bb)), v)
    for r, c, v in zip(f.lin_row, f.lin_col, f.lin_val):
        if int(r) in rows:
            put(int(r), ("l", int(c)), v)
    for r, c, v in zip(f.free_row, f.free_col, f.free_val):
        if int(r) in rows:
            put(int(r), ("f", int(c)), v)
    b = f.b.astype(float).copy()
    obj: Dict[tuple, float] = {}
    offset = float(f.offset)
    col_rows: Dict[int, set] = {j: set() for j in cand}
    for r, d in rows.items():
        for key in d:
            if key[0] == "f" and key[1] in col_rows:
                col_rows[key[1]].add(r)
    c_free = f.c_free
    steps = []
    dropped = set()
    for j in cand:
        live = [r for r in col_rows[j] if abs(rows[r].get(("f", j), 0.0)) > 0]
        if not live:
            continue
        # pivot on the largest coefficient
        r = max(live, key=lambda q: (abs(rows[q][("f", j)]), -q))
        piv = dict(rows[r])
        a = piv[("f", j)]
        for s in live:
            if s == r:
                continue
            t = rows[s][("f", j)] / a
            for key, v in piv.items():
                nv = rows[s].get(key, 0.0) - t * v
                if abs(nv) < 1e-14 * max(1.0, abs(v)) or key == ("f", j):
                    rows[s].pop(key, None)
                else:
                    rows[s][key] = nv
            b[s] -= t * b[r]
            for key in piv:
                if key[0] == "f" and key[1] in col_rows and key[1] != j:
                    col_rows[key[1]].add(s)
        cj = float(c_free[j]) + obj.pop(("f", j), 0.0)
        if cj != 0.0:
            t = cj / a
            for key, v in piv.items():
                if key != ("f", j):
                    obj[key] = obj.get(key, 0.0) - t * v
            offset += t * b[r]
        steps.append((r, j, a, piv, float(b[r])))
        dropped.add(r)
        for key in piv:
            if key[0] == "f" and key[1] in col_rows:
                col_rows[key[1]].discard(r)
        del rows[r]
    if not steps:
        return None
    # rows reduced to 0 = 0 carry no information
    for r in [r for r, d in rows.items() if not d and abs(b[r]) <= 1e-14]:
        dropped.add(r)
        del rows[r]
    elim_cols = np.array([st[1] for st in steps], dtype=np.int64)
    keep_rows = np.array([k for k in range(f.m) if k not in dropped], dtype=np.int64)
    newrow = np.full(f.m, -1, dtype=np.int64)
    newrow[keep_rows] = np.arange(keep_rows.size)
    keep_cols = np.setdiff1d(np.arange(f.n_free), elim_cols)
    newcol = np.full(f.n_free, -1, dtype=np.int64)
    newcol[keep_cols] = np.arange(keep_cols.size)

    untouched_p = ~np.isin(f.psd_row, list(touched))
    untouched_l = ~np.isin(f.lin_row, list(touched))
    untouched_f = ~np.isin(f.free_row, list(touched))
    P = [list(f.psd_row[untouched_p]), list(f.psd_blk[untouched_p]), list(f.psd_i[untouched_p]),
         list(f.psd_j[untouched_p]), list(f.psd_val[untouched_p])]
    Lc = [list(f.lin_row[untouched_l]), list(f.lin_col[untouched_l]), list(f.lin_val[untouched_l])]
    F = [list(f.free_row[untouched_f]), list(f.free_col[untouched_f]), list(f.free_val[untouched_f])]
    for r, d in rows.items():
        for key, v in d.items():
            if key[0] == "p":
                for lst, val in zip(P, (r, key[1], key[2], key[3], v)):
                    lst.append(val)
            elif key[0] == "l":
                for lst, val in zip(Lc, (r, key[1], v)):
                    lst.append(val)
            else:
                for lst, val in zip(F, (r, key[1], v)):
                    lst.append(val)
    P = [np.asarray(x) for x in P]
    Lc = [np.asarray(x) for x in Lc]
    F = [np.asarray(x) for x in F]
    cp = [k for k in obj if k[0] == "p"]
    c_nonneg = f.c_nonneg.astype(float).copy()
    c_free_new = c_free.astype(float).copy()
    for key, v in obj.items():
        if key[0] == "l":
            c_nonneg[key[1]] += v
        elif key[0] == "f":
            c_free_new[key[1]] += v
    reduced = ConicStandardForm(
        block_sizes=list(f.block_sizes),
        n_nonneg=f.n_nonneg,
        n_free=int(keep_cols.size),
        b=b[keep_rows],
        psd_row=newrow[P[0].astype(np.int64)] if P[0].size else P[0],
        psd_blk=P[1], psd_i=P[2], psd_j=P[3], psd_val=P[4],
        lin_row=newrow[Lc[0].astype(np.int64)] if Lc[0].size else Lc[0],
        lin_col=Lc[1], lin_val=Lc[2],
        free_row=newrow[F[0].astype(np.int64)] if F[0].size else F[0],
        free_col=newcol[F[1].astype(np.int64)] if F[1].size else F[1],
        free_val=F[2],
        c_psd_blk=np.concatenate([f.c_psd_blk, [k[1] for k in cp]]),
        c_psd_i=np.concatenate([f.c_psd_i, [k[2] for k in cp]]),
        c_psd_j=np.concatenate([f.c_psd_j, [k[3] for k in cp]]),
        c_psd_val=np.concatenate([f.c_psd_val, [obj[k] for k in cp]]),
        c_nonneg=c_nonneg, c_free=c_free_new[keep_cols],
        sense=f.sense, offset=offset,
    )
    return reduced, (steps, keep_rows, keep_cols, elim_cols)


def _row_values(f: ConicStandardForm, blocks, xl, xf) -> np.ndarray:
    """``A(X) + A_l x_l + A_f x_f`` for the original form."""
    out = np.zeros(f.m)
    if f.psd_val.size:
        vals = np.array([blocks[k][i, j] for k, i, j in zip(f.psd_blk, f.psd_i, f.psd_j)])
        w = np.where(f.psd_i != f.psd_j, 2.0, 1.0)
        out += np.bincount(f.psd_row, weights=w * f.psd_val * vals, minlength=f.m)
    if f.lin_val.size:
        out += np.bincount(f.lin_row, weights=f.lin_val * xl[f.lin_col], minlength=f.m)
    if f.free_val.size:
        out += np.bincount(f.free_row, weights=f.free_val * xf[f.free_col], minlength=f.m)
    return out


def solve(
    form: ConicStandardForm,
    tol: float = 1e-7,
    max_iter: int = 200,
    kernel: Optional[str] = None,
    verbose: bool = False,
    log: Optional[Callable[[str], None]] = None,
    linear_solver: str = "auto",
    presolve: bool = True,
    equilibrate: Union[bool, str] = "auto",
) -> SolveResult:
    """Solve ``form`` to relative accuracy ``tol``.

    The status is ``optimal`` only when the relative duality gap and the
    scaled primal and dual residuals are all below ``tol``.
    ``linear_solver`` is ``"auto"`` (component Cholesky, sparse LU when that
    fails), ``"schur"`` or ``"augmented"``.  With ``presolve`` free scalars
    that own a row are substituted out before iterating.  With
    ``equilibrate=True`` every equality row is first divided by a power of two
    close to its largest coefficient; ``"auto"`` does so only as a second
    attempt after a numerical failure and keeps the more accurate result.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if linear_solver not in ("auto", "schur", "augmented"):
        raise ValueError("linear_solver must be 'auto', 'schur' or 'augmented'")
    form.check()
    if equilibrate not in (True, False, "auto"):
        raise ValueError("equilibrate must be True, False or 'auto'")
    if equilibrate == "auto":
        first = solve(form, tol, max_iter, kernel, verbose, log, linear_solver, presolve, False)
        if first.status != NUMERICAL_FAILURE or form.m == 0:
            return first
        second = _solve_equilibrated(form, tol, max_iter, kernel, verbose, log,
                                     linear_solver, presolve)
        if second.status != NUMERICAL_FAILURE:
            return second
        return min(first, second, key=lambda r: max(r.rel_gap, r.max_eq_residual, r.dual_residual))
    if equilibrate and form.m:
        return _solve_equilibrated(form, tol, max_iter, kernel, verbose, log,
                                   linear_solver, presolve)
    empty = _empty_free_columns(form)
    if empty.size:
        return _solve_without(form, empty, tol, max_iter, kernel, verbose, log,
                              linear_solver, presolve)
    pre = _presolve(form) if presolve else None
    if pre is None:
        return _solve_core(form, tol, max_iter, kernel, verbose, log, linear_solver)
    reduced, (steps, keep_rows, keep_cols, elim_cols) = pre
    res = _solve_core(reduced, tol, max_iter, kernel, verbose, log, linear_solver)
    xf = np.zeros(form.n_free)
    xf[keep_cols] = res.x_free
    blocks, xl = res.blocks, res.x_nonneg
    # back substitution through the stored pivot rows
    for r, j, a, piv, br in reversed(steps):
        acc = 0.0
        for key, v in piv.items():
            if key[0] == "p":
                w = 1.0 if key[2] == key[3] else 2.0
                acc += w * v * blocks[key[1]][key[2], key[3]]
            elif key[0] == "l":
                acc += v * xl[key[1]]
            elif key[1] != j:
                acc += v * xf[key[1]]
        xf[j] = (br - acc) / a
    # multipliers of the pivot rows from the free-column dual equations
    sgn = 1.0 if form.sense == "min" else -1.0
    y = np.zeros(form.m)
    y[keep_rows] = res.y
    prow = np.array([st[0] for st in steps], dtype=np.int64)
    Af = sp.csr_matrix((form.free_val, (form.free_row, form.free_col)),
                       shape=(form.m, form.n_free))
    rhs = sgn * form.c_free[elim_cols] - (Af[keep_rows][:, elim_cols].T @ res.y)
    y[prow] = np.linalg.solve(Af[prow][:, elim_cols].toarray().T, rhs)
    rp = form.b - _row_values(form, blocks, xl, xf)
    res.x_free = xf
    res.y = y
    res.max_eq_residual = _amax(rp) / (1.0 + _amax(form.b))
    res.meta["presolved_free"] = len(steps)
    if res.status == OPTIMAL and res.max_eq_residual > 10.0 * tol:
        res.status = NUMERICAL_FAILURE
        res.objective = None
        res.message = "residual lost in back substitution"
    return res



def _row_scales(form: ConicStandardForm) -> np.ndarray:
    big = np.zeros(form.m)
    for rows, vals in ((form.psd_row, form.psd_val), (form.lin_row, form.lin_val),
                       (form.free_row, form.free_val)):
        if rows.size:
            np.maximum.at(big, rows, np.abs(vals))
    big[big == 0] = 1.0
    return np.exp2(-np.round(np.log2(big)))


def _solve_equilibrated(form, tol, max_iter, kernel, verbose, log, linear_solver, presolve):
    """Solve with rows scaled by ``d``; the multipliers of the original rows are ``d * y``."""
    d = _row_scales(form)
    scaled = replace(form, b=form.b * d, psd_val=form.psd_val * d[form.psd_row],
                     lin_val=form.lin_val * d[form.lin_row],
                     free_val=form.free_val * d[form.free_row], meta=dict(form.meta))
    res = solve(scaled, tol=tol, max_iter=max_iter, kernel=kernel, verbose=verbose, log=log,
                linear_solver=linear_solver, presolve=presolve, equilibrate=False)
    res.y = res.y * d
    rp = form.b - _row_values(form, res.blocks, res.x_nonneg, res.x_free)
    res.max_eq_residual = _amax(rp) / (1.0 + _amax(form.b))
    return res


def _empty_free_columns(form: ConicStandardForm) -> np.ndarray:
    used = np.zeros(form.n_free, dtype=bool)
    used[form.free_col[form.free_val != 0]] = True
    return np.flatnonzero(~used)


def _solve_without(form, empty, tol, max_iter, kernel, verbose, log, linear_solver, presolve):
    """Free scalars that occur in no row: fixed at zero, or unbounded if they carry cost."""
    keep = np.setdiff1d(np.arange(form.n_free), empty)
    newcol = np.full(form.n_free, -1, dtype=np.int64)
    newcol[keep] = np.arange(keep.size)
    nz = form.free_val != 0
    reduced = replace(form, n_free=int(keep.size), free_row=form.free_row[nz],
                      free_col=newcol[form.free_col[nz]], free_val=form.free_val[nz],
                      c_free=form.c_free[keep], meta=dict(form.meta))
    res = solve(reduced, tol=tol, max_iter=max_iter, kernel=kernel, verbose=verbose, log=log,
                linear_solver=linear_solver, presolve=presolve, equilibrate=False)
    xf = np.zeros(form.n_free)
    xf[keep] = res.x_free
    res.x_free = xf
    if np.any(form.c_free[empty] != 0) and res.status == OPTIMAL:
        res.status = UNBOUNDED
        res.objective = None
        res.message = "a free scalar with nonzero cost occurs in no constraint"
    return res


def _solve_core(form, tol, max_iter, kernel, verbose, log, linear_solver) -> SolveResult:
    t0 = time.perf_counter()
    schur = kernels.get_kernel(kernel) if kernel else kernels.schur_block
    kname = kernel or kernels.ACTIVE
    L = _Layout(form)
    m, nl = L.m, L.nl
    sgn = 1.0 if form.sense == "min" else -1.0
    cfl = sgn * L.c_flat
    cl = sgn * form.c_nonneg
    cf = sgn * form.c_free
    b = form.b
    say = log or (print if verbose else None)
    AlT, AfT = L.AlT, L.AfT
    used: List[str] = []

    def finish(status, it, xs, xl, xf, y, pinf, dinf, relgap, pobj, dobj, msg=""):
        blocks: List[np.ndarray] = [np.zeros((0, 0))] * L.nb
        for k in range(L.nb):
            blocks[L.order[k]] = _sym(L.block(xs, k)).copy()
        min_eig = np.inf
        for (n, _, cnt, s, e) in L.groups:
            min_eig = min(min_eig, float(np.linalg.eigvalsh(_sym(xs[s:e].reshape(cnt, n, n))).min()))
        if xl.size:
            min_eig = min(min_eig, float(xl.min()))
        if not np.isfinite(min_eig):
            min_eig = 0.0
        p_rep = sgn * pobj + form.offset
        d_rep = sgn * dobj + form.offset
        return SolveResult(
            status=status,
            objective=p_rep if status == OPTIMAL else None,
            primal_objective=p_rep,
            dual_objective=d_rep,
            blocks=blocks,
            x_nonneg=xl.copy(),
            x_free=xf.copy(),
            y=y.copy(),
            iterations=it,
            max_eq_residual=pinf,
            dual_residual=dinf,
            rel_gap=relgap,
            min_eig=min_eig,
            wall_time=time.perf_counter() - t0,
            kernel=kname,
            message=msg,
            meta={"linear_solver": sorted(set(used))},
        )

    if m == 0 and L.nb == 0 and nl == 0 and L.nf == 0:
        z = np.zeros(0)
        return finish(OPTIMAL, 0, z, z, z, z, 0.0, 0.0, 0.0, 0.0, 0.0, "empty problem")

    systems: Dict[str, object] = {}

    def get_system(name):
        if name not in systems:
            systems[name] = _SchurSystem(L) if name == "schur" else _AugmentedSystem(L)
        return systems[name]

    if linear_solver != "auto":
        order = [linear_solver]
    elif nl + L.nf > DENSE_SCALAR_LIMIT:
        # the Schur path keeps scalar columns in a dense block; LP-like forms go sparse
        order = ["augmented", "schur"]
    else:
        order = ["schur", "augmented"]

    def assemble(Xa, Xb):
        mdata = np.empty(L.n_mdata)
        pos = 0
        for k, kd in enumerate(L.kdata):
            if kd is None:
                continue
            _, ptr, ea, eb, ev = kd
            Mk = schur(ptr, ea, eb, ev, L.block(Xa, k), L.block(Xb, k))
            mdata[pos:pos + Mk.size] = Mk.ravel()
            pos += Mk.size
        return mdata

    def primal_residual(xs, xl, xf):
        return b - L.A_psd(xs) - L.Al @ xl - L.Af @ xf

    def polish(xs, xl, xf, rounds=3, strict=False):
        """Project onto the equality constraints in the metric of the iterate.

        ``dX = X A^T(w) X`` and ``dx_l = x_l^2 A_l^T w`` stay inside the cone
        for small residuals; free scalars move without weight.
        """
        if nl and np.any(xl <= 0):
            return None
        mdata = assemble(xs, xs)
        wl = 1.0 / xl ** 2 if nl else np.zeros(0)
        sysp = None
        for name in order:
            cand = get_system(name)
            with np.errstate(all="ignore"):
                if cand.factor(mdata, wl):
                    sysp = cand
                    break
        if sysp is None:
            return None
        rp = primal_residual(xs, xl, xf)
        err = _amax(rp)
        with np.errstate(all="ignore"):
            for _ in range(rounds):
                w, u = sysp.solve(rp, np.zeros(nl + L.nf))
                W = L.At_psd(w)
                dX = np.empty_like(xs)
                for (n, _, cnt, s, e) in L.groups:
                    X = xs[s:e].reshape(cnt, n, n)
                    dX[s:e] = _sym(X @ W[s:e].reshape(cnt, n, n) @ X).reshape(-1)
                cx, cl_, cf_ = xs + dX, xl + u[:nl], xf + u[nl:]
                if not (np.all(np.isfinite(cx)) and np.all(np.isfinite(cf_))):
                    break
                r2 = primal_residual(cx, cl_, cf_)
                e2 = _amax(r2)
                if not e2 < err:
                    break
                xs, xl, xf, rp, err = cx, cl_, cf_, r2, e2
        if nl and xl.min() < (0.0 if strict else -tol):
            return None
        for (n, _, cnt, s, e) in L.groups:
            lo = np.linalg.eigvalsh(_sym(xs[s:e].reshape(cnt, n, n))).min()
            if lo < -tol or (strict and lo <= 0):
                return None
        return xs, xl, xf

    def measures(xs, xl, xf, zs, zl, y):
        pobj = float(cfl @ xs + cl @ xl + cf @ xf)
        dobj = float(b @ y)
        gap = float(xs @ zs + xl @ zl)
        relgap = max(gap, abs(pobj - dobj)) / (1.0 + abs(pobj) + abs(dobj))
        return pobj, dobj, gap, relgap, _amax(primal_residual(xs, xl, xf)) / bnorm

    xs, zs, xl, zl, xf, y = _starting_point(form, L)
    bnorm = 1.0 + (float(np.abs(b).max()) if m else 0.0)
    cnorm = 1.0 + _amax(cfl, cl, cf)

    pinf = dinf = relgap = np.inf
    pobj = dobj = 0.0
    status = NUMERICAL_FAILURE
    msg = "iteration limit"
    stall = 0
    last_step = 1.0
    recentred = False
    it = 0
    best = None
    for it in range(max_iter + 1):
        rp = b - L.A_psd(xs) - L.Al @ xl - L.Af @ xf
        Rd = cfl - L.At_psd(y) - zs
        rdl = cl - AlT @ y - zl
        rdf = cf - AfT @ y
        pobj = float(cfl @ xs + cl @ xl + cf @ xf)
        dobj = float(b @ y)
        gap = float(xs @ zs + xl @ zl)
        mu = gap / L.nu if L.nu else 0.0
        relgap = max(gap, abs(pobj - dobj)) / (1.0 + abs(pobj) + abs(dobj))
        pinf = _amax(rp) / bnorm
        dinf = _amax(Rd, rdl, rdf) / cnorm
        if say:
            say(f"{it:3d} pobj={sgn * pobj + form.offset: .10e} dobj={sgn * dobj + form.offset: .10e} "
                f"gap={relgap:.1e} pinf={pinf:.1e} dinf={dinf:.1e}")
        merit = max(relgap, pinf, dinf)
        if best is None or merit < best[0]:
            best = (merit, it, xs, xl, xf, y, pinf, dinf, relgap, pobj, dobj, zs, zl)
        if relgap <= tol and pinf <= tol and dinf <= tol:
            status, msg = OPTIMAL, "converged"
            break
        if relgap <= tol and dinf <= tol:
            # only primal feasibility is missing: try a projection first
            pol = polish(xs, xl, xf)
            if pol is not None:
                pobj2, dobj2, _, rg2, pinf2 = measures(*pol, zs, zl, y)
                if rg2 <= tol and pinf2 <= tol:
                    xs, xl, xf = pol
                    pobj, dobj, relgap, pinf = pobj2, dobj2, rg2, pinf2
                    status, msg = OPTIMAL, "converged after projection"
                    break
        # certificates of infeasibility
        if dobj > 0 and pinf > tol:
            ray = _amax(cfl - Rd, cl - rdl, cf - rdf)
            if ray <= tol * dobj and dobj > 1.0 / tol:
                status, msg = INFEASIBLE, "dual improving ray"
                break
        if pobj < 0 and dinf > tol:
            ray = _amax(b - rp)
            if ray <= tol * (-pobj) and -pobj > 1.0 / tol:
                status, msg = UNBOUNDED, "primal improving ray"
                break
        if it == max_iter:
            break

        try:
            LXi = _inv_chol(xs, L)
            LZi = _inv_chol(zs, L)
        except np.linalg.LinAlgError:
            msg = "lost positive definiteness"
            break
        Zinv = np.empty_like(zs)
        for (n, _, cnt, s, e), Li in zip(L.groups, LZi):
            Zinv[s:e] = _sym(np.swapaxes(Li, -1, -2) @ Li).reshape(-1)

        mdata = assemble(xs, Zinv)
        wl = zl / xl if nl else np.zeros(0)
        system = None
        for name in order:
            cand = get_system(name)
            with np.errstate(all="ignore"):
                okf = cand.factor(mdata, wl)
            if okf:
                system = cand
                used.append(name)
                break
        if system is None:
            msg = "singular Newton system"
            break

        def complete(dy, target, corr_s, rcl, ext=False):
            if ext:
                # extended precision: X dZ Z^{-1} cancels heavily near the optimum
                dZ = Rd - L.ext.At(dy)
                dzl = rdl - L.ext.AlT(dy)
                xs_, zi_, cs_ = xs.astype(_EXT), Zinv.astype(_EXT), corr_s
            else:
                dZ = Rd - L.At_psd(dy)
                dzl = rdl - AlT @ dy
                xs_, zi_, cs_ = xs, Zinv, corr_s
            dX = np.empty_like(dZ)
            for (n, _, cnt, s, e) in L.groups:
                X = xs_[s:e].reshape(cnt, n, n)
                Zi = zi_[s:e].reshape(cnt, n, n)
                T = target * Zi - X - X @ dZ[s:e].reshape(cnt, n, n) @ Zi
                if cs_ is not None:
                    T -= cs_[s:e].reshape(cnt, n, n).astype(dZ.dtype) @ Zi
                dX[s:e] = _sym(T).reshape(-1)
            dxl = (rcl - xl * dzl) / zl if nl else np.zeros(0, dZ.dtype)
            return dX, dZ, dxl, dzl

        def resid(dX, dxl, dy, dxf, ext=False):
            if ext:
                return rp - L.ext.A(dX, dxl, dxf), rdf - L.ext.AfT(dy)
            return (rp - L.A_psd(dX) - L.Al @ dxl - L.Af @ dxf, rdf - AfT @ dy)

        def refine(dy, dxf, target, corr_s, rcl, ext, rounds):
            """Iterative refinement against the exact operators; keeps the best."""
            if ext:
                dy, dxf = dy.astype(_EXT), dxf.astype(_EXT)
            cur = complete(dy, target, corr_s, rcl, ext)
            res_p, res_f = resid(cur[0], cur[2], dy, dxf, ext)
            err = _amax(res_p, res_f)
            for _ in range(rounds):
                if err == 0 or not np.isfinite(err):
                    break
                cy, cu = system.solve(res_p.astype(float),
                                      np.concatenate([np.zeros(nl), res_f.astype(float)]))
                dy2 = dy + cy
                dxf2 = dxf + cu[nl:]
                cand = complete(dy2, target, corr_s, rcl, ext)
                rp2, rf2 = resid(cand[0], cand[2], dy2, dxf2, ext)
                e2 = _amax(rp2, rf2)
                if not e2 < 0.5 * err:
                    break
                dy, dxf, cur, res_p, res_f, err = dy2, dxf2, cand, rp2, rf2, e2
            return dy, dxf, cur, err

        def direction(target, corr_s, corr_l):
            G = np.empty_like(xs)
            for (n, _, cnt, s, e) in L.groups:
                X = xs[s:e].reshape(cnt, n, n)
                Zi = Zinv[s:e].reshape(cnt, n, n)
                T = target * Zi - X - X @ Rd[s:e].reshape(cnt, n, n) @ Zi
                if corr_s is not None:
                    T -= corr_s[s:e].reshape(cnt, n, n) @ Zi
                G[s:e] = _sym(T).reshape(-1)
            rcl = target - xl * zl
            if corr_l is not None:
                rcl = rcl - corr_l
            r1 = rp - L.A_psd(G)
            if nl:
                r1 = r1 - L.Al @ ((rcl - xl * rdl) / zl)
            r2 = np.concatenate([np.zeros(nl), rdf])
            dy, u = system.solve(r1, r2)
            dy, dxf, cur, err = refine(dy, u[nl:], target, corr_s, rcl, False, 2)
            if err > 0.01 * tol * bnorm and _EXT is not np.float64:
                dy, dxf, cur, err = refine(dy, dxf, target, corr_s, rcl, True, 3)
            dX, dZ, dxl, dzl = (np.asarray(a, dtype=float) for a in cur)
            dy, dxf = np.asarray(dy, dtype=float), np.asarray(dxf, dtype=float)
            if err > 0.1 * tol * bnorm:
                # the Newton solve lost the primal equations: restore them by a
                # least-norm correction of the primal direction
                fix = L.project(rp - L.A_psd(dX) - L.Al @ dxl - L.Af @ dxf)
                if fix is not None:
                    dX, dxl, dxf = dX + fix[0], dxl + fix[1], dxf + fix[2]
            return dX, dZ, dxl, dzl, dy, dxf

        with np.errstate(all="ignore"):
            dX, dZ, dxl, dzl, dy, dxf = direction(0.0, None, None)
            ap = min(1.0, _max_step(L, dX, LXi, xl, dxl))
            ad = min(1.0, _max_step(L, dZ, LZi, zl, dzl))
            mu_aff = (float((xs + ap * dX) @ (zs + ad * dZ))
                      + float((xl + ap * dxl) @ (zl + ad * dzl))) / L.nu
            sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3 if mu > 0 else 0.0
            recentred = last_step < 0.2 and not recentred
            if recentred:
                # a short step means the iterate hugs the boundary: recentre once
                sigma = max(sigma, 1.0 - last_step)
            corr_s = np.empty_like(xs)
            for (n, _, cnt, s, e) in L.groups:
                corr_s[s:e] = (dX[s:e].reshape(cnt, n, n) @ dZ[s:e].reshape(cnt, n, n)).reshape(-1)
            dX, dZ, dxl, dzl, dy, dxf = direction(sigma * mu, corr_s, dxl * dzl)
            if not all(np.all(np.isfinite(v)) for v in (dX, dZ, dxl, dzl, dy, dxf)):
                msg = "non-finite direction"
                break
            apm = _max_step(L, dX, LXi, xl, dxl)
            adm = _max_step(L, dZ, LZi, zl, dzl)
        gam = 0.9 + 0.09 * min(1.0, apm, adm)
        ap = min(1.0, gam * apm)
        ad = min(1.0, gam * adm)
        last_step = min(ap, ad)
        xs = xs + ap * dX
        xl = xl + ap * dxl
        xf = xf + ap * dxf
        y = y + ad * dy
        zs = zs + ad * dZ
        zl = zl + ad * dzl
        pnew = _amax(primal_residual(xs, xl, xf)) / bnorm
        if pnew > 0.1 * tol and pnew > 10.0 * pinf:
            # the step broke primal feasibility (ill-conditioned Newton system)
            pol = polish(xs, xl, xf, strict=True)
            if pol is not None and _amax(primal_residual(*pol)) / bnorm < pnew:
                xs, xl, xf = pol
        if max(ap, ad) < 1e-9:
            stall += 1
            if stall >= 3:
                msg = "step length stalled"
                break
        else:
            stall = 0

    if status == NUMERICAL_FAILURE and best is not None:
        # report the most accurate iterate rather than the last one
        _, it_b, xs, xl, xf, y, pinf, dinf, relgap, pobj, dobj = best[:11]
        msg = f"{msg}; best iterate {it_b}"
        zs_b, zl_b = best[11], best[12]
        if relgap <= tol and dinf <= tol:
            pol = polish(xs, xl, xf)
            if pol is not None:
                pobj2, dobj2, _, rg2, pinf2 = measures(*pol, zs_b, zl_b, y)
                if rg2 <= tol and pinf2 <= tol:
                    xs, xl, xf = pol
                    pobj, dobj, relgap, pinf = pobj2, dobj2, rg2, pinf2
                    status, msg = OPTIMAL, f"converged after projection of iterate {it_b}"
    return finish(status, it, xs, xl, xf, y, pinf, dinf, relgap, pobj, dobj, msg)
