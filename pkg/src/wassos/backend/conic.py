"""Conic standard form shared by the embedded solver and the SDPA writer.

The form is

    minimize / maximize   <C, X> + c_l . x_l + c_f . x_f + offset
    subject to            <A_i, X> + (A_l x_l)_i + (A_f x_f)_i = b_i
                          X_k PSD,  x_l >= 0,  x_f free.

PSD coefficients are stored as upper-triangle COO triples ``(block, i, j)``
with ``i <= j``; the inner product doubles off-diagonal entries, i.e.
``<F, X> = sum_i F_ii X_ii + 2 sum_{i<j} F_ij X_ij``, which is the SDPA
convention for symmetric data matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..sos import SdpProblem


def _arr(x, dtype=float) -> np.ndarray:
    return np.asarray(x, dtype=dtype).copy()


@dataclass
class ConicStandardForm:
    block_sizes: List[int]
    n_nonneg: int
    n_free: int
    b: np.ndarray
    # constraint triples
    psd_row: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    psd_blk: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    psd_i: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    psd_j: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    psd_val: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lin_row: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    lin_col: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    lin_val: np.ndarray = field(default_factory=lambda: np.zeros(0))
    free_row: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    free_col: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    free_val: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # objective
    c_psd_blk: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    c_psd_i: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    c_psd_j: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    c_psd_val: np.ndarray = field(default_factory=lambda: np.zeros(0))
    c_nonneg: np.ndarray = field(default_factory=lambda: np.zeros(0))
    c_free: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sense: str = "min"
    offset: float = 0.0
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.block_sizes = [int(n) for n in self.block_sizes]
        self.b = np.asarray(self.b, dtype=float)
        for name in ("psd_row", "psd_blk", "psd_i", "psd_j", "lin_row", "lin_col",
                     "free_row", "free_col", "c_psd_blk", "c_psd_i", "c_psd_j"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        for name in ("psd_val", "lin_val", "free_val", "c_psd_val", "c_nonneg", "c_free"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.c_nonneg.size == 0 and self.n_nonneg:
            self.c_nonneg = np.zeros(self.n_nonneg)
        if self.c_free.size == 0 and self.n_free:
            self.c_free = np.zeros(self.n_free)
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")

    @property
    def m(self) -> int:
        return int(self.b.shape[0])

    def n_entries(self) -> int:
        return int(self.psd_val.size + self.lin_val.size + self.free_val.size)

    def check(self) -> None:
        """Raise ``ValueError`` if any triple references an undeclared variable."""
        m = self.m
        for rows in (self.psd_row, self.lin_row, self.free_row):
            if rows.size and (rows.min() < 0 or rows.max() >= m):
                raise ValueError("row index out of range")
        sizes = np.asarray(self.block_sizes + [0], dtype=np.int64)
        for blk, ii, jj in ((self.psd_blk, self.psd_i, self.psd_j),
                            (self.c_psd_blk, self.c_psd_i, self.c_psd_j)):
            if blk.size == 0:
                continue
            if blk.min() < 0 or blk.max() >= len(self.block_sizes):
                raise ValueError("block index out of range")
            n = sizes[blk]
            if ii.min() < 0 or (jj >= n).any() or (ii > jj).any():
                raise ValueError("PSD entries must satisfy 0 <= i <= j < size")
        if self.lin_col.size and (self.lin_col.min() < 0 or self.lin_col.max() >= self.n_nonneg):
            raise ValueError("nonnegative column out of range")
        if self.free_col.size and (self.free_col.min() < 0 or self.free_col.max() >= self.n_free):
            raise ValueError("free column out of range")

    def structurally_equal(self, other: "ConicStandardForm", atol: float = 0.0) -> bool:
        """Same sizes and the same (summed, sorted) coefficient data."""
        if (self.block_sizes != other.block_sizes or self.n_nonneg != other.n_nonneg
                or self.n_free != other.n_free or self.m != other.m
                or self.sense != other.sense):
            return False
        if not np.allclose(self.b, other.b, atol=atol, rtol=0):
            return False
        if abs(self.offset - other.offset) > atol:
            return False
        for a, b in zip(_canonical(self), _canonical(other)):
            if a[0].shape != b[0].shape or not np.array_equal(a[0], b[0]):
                return False
            if not np.allclose(a[1], b[1], atol=atol, rtol=0):
                return False
        return True


def _merge(keys: np.ndarray, vals: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if keys.size == 0:
        return keys.reshape(0, keys.shape[1] if keys.ndim == 2 else 0), vals
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    summed = np.bincount(inv.ravel(), weights=vals, minlength=len(uniq))
    keep = summed != 0
    return uniq[keep], summed[keep]


def _canonical(f: ConicStandardForm):
    out = []
    out.append(_merge(np.stack([f.psd_row, f.psd_blk, f.psd_i, f.psd_j], 1), f.psd_val))
    out.append(_merge(np.stack([f.lin_row, f.lin_col], 1), f.lin_val))
    out.append(_merge(np.stack([f.free_row, f.free_col], 1), f.free_val))
    out.append(_merge(np.stack([f.c_psd_blk, f.c_psd_i, f.c_psd_j], 1), f.c_psd_val))
    out.append((np.arange(f.n_nonneg).reshape(-1, 1), f.c_nonneg))
    out.append((np.arange(f.n_free).reshape(-1, 1), f.c_free))
    return out


def compile_problem(p: SdpProblem) -> ConicStandardForm:
    """Translate an :class:`SdpProblem` into conic standard form.

    Free scalars stay free (the embedded solver handles them directly);
    rows that are identically ``0 = 0`` are dropped.
    """
    scalar_map: List[Tuple[str, int]] = []
    n_nonneg = n_free = 0
    for v in p.scalars:
        if v.kind == "nonneg":
            scalar_map.append(("nonneg", n_nonneg))
            n_nonneg += 1
        else:
            scalar_map.append(("free", n_free))
            n_free += 1

    psd_row, psd_blk, psd_i, psd_j, psd_val = [], [], [], [], []
    lin_row, lin_col, lin_val = [], [], []
    free_row, free_col, free_val = [], [], []
    b = []
    kept = []
    r = 0
    for k, row in enumerate(p.rows):
        if row.is_empty() and row.const == 0.0:
            continue
        kept.append(k)
        b.append(-row.const)
        for vid, c in row.scalars.items():
            kind, idx = scalar_map[vid]
            if c == 0.0:
                continue
            if kind == "nonneg":
                lin_row.append(r); lin_col.append(idx); lin_val.append(c)
            else:
                free_row.append(r); free_col.append(idx); free_val.append(c)
        for (gid, a, bb), c in row.grams.items():
            if c == 0.0:
                continue
            psd_row.append(r); psd_blk.append(gid); psd_i.append(a); psd_j.append(bb)
            psd_val.append(c)
        r += 1

    c_nonneg = np.zeros(n_nonneg)
    c_free = np.zeros(n_free)
    for vid, c in p.objective.items():
        kind, idx = scalar_map[vid]
        if kind == "nonneg":
            c_nonneg[idx] += c
        else:
            c_free[idx] += c

    form = ConicStandardForm(
        block_sizes=[g.size for g in p.grams],
        n_nonneg=n_nonneg,
        n_free=n_free,
        b=np.array(b, dtype=float),
        psd_row=psd_row, psd_blk=psd_blk, psd_i=psd_i, psd_j=psd_j, psd_val=psd_val,
        lin_row=lin_row, lin_col=lin_col, lin_val=lin_val,
        free_row=free_row, free_col=free_col, free_val=free_val,
        c_nonneg=c_nonneg, c_free=c_free,
        sense=p.sense,
        offset=p.objective_constant,
        meta={"scalar_map": scalar_map, "kept_rows": kept, "free_split": False,
              "name": p.name},
    )
    return form
