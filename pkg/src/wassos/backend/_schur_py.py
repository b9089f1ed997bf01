"""Pure-numpy Schur complement kernels (fallback when the extension is absent).

Both functions compute, for one PSD block, the local matrix

    M[p, q] = tr(F_p X F_q Zinv)

where ``F_p`` is the symmetric data matrix of the block's p-th touched row.
Entries are given as upper-triangle triples grouped by local row:
``ptr`` (length p+1) delimits the entries of each row, ``ea <= eb`` are the
matrix indices and ``ev`` the values.
"""

from __future__ import annotations

import numpy as np


def schur_block(ptr, ea, eb, ev, X, Zinv):
    """Entry-pair formulation, vectorised over all entry pairs of the block."""
    ea = np.asarray(ea)
    eb = np.asarray(eb)
    # diagonal entries appear once in F, off-diagonal ones twice
    w = np.where(ea == eb, 0.5, 1.0) * ev
    t = X[np.ix_(eb, ea)] * Zinv[np.ix_(ea, eb)]
    t += X[np.ix_(eb, eb)] * Zinv[np.ix_(ea, ea)]
    t += X[np.ix_(ea, ea)] * Zinv[np.ix_(eb, eb)]
    t += X[np.ix_(ea, eb)] * Zinv[np.ix_(eb, ea)]
    t *= w[:, None]
    t *= w[None, :]
    starts = np.asarray(ptr[:-1])
    t = np.add.reduceat(t, starts, axis=0)
    return np.add.reduceat(t, starts, axis=1)


def schur_block_kron(ptr, ea, eb, ev, X, Zinv):
    """Dense formulation ``Fv (X kron Zinv) Fv^T`` with vectorised F_p.

    Kept for benchmarking; cost grows like n^4 in the block size.
    """
    n = X.shape[0]
    p = len(ptr) - 1
    F = np.zeros((p, n, n))
    rows = np.repeat(np.arange(p), np.diff(ptr))
    np.add.at(F, (rows, ea, eb), ev)
    off = ea != eb
    np.add.at(F, (rows[off], eb[off], ea[off]), ev[off])
    # tr(F_p X F_q Zinv) = vec(F_p)^T vec(X F_q Zinv) with F symmetric
    G = np.einsum("ab,qbc,cd->qad", X, F, Zinv)
    return F.reshape(p, -1) @ G.reshape(p, -1).T
