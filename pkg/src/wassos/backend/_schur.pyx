# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Schur complement kernel: M[p, q] = tr(F_p X F_q Zinv) per block."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def schur_block(const cnp.int64_t[::1] ptr, const cnp.int64_t[::1] ea,
                const cnp.int64_t[::1] eb, const double[::1] ev,
                const double[:, ::1] X, const double[:, ::1] Zinv):
    cdef Py_ssize_t p = ptr.shape[0] - 1
    cdef Py_ssize_t P, Q, e, f, a, b, c, d
    cdef double we, wf, acc
    out = np.zeros((p, p), dtype=np.float64)
    cdef double[:, ::1] M = out
    for P in range(p):
        for Q in range(P, p):
            acc = 0.0
            for e in range(ptr[P], ptr[P + 1]):
                a = ea[e]
                b = eb[e]
                we = ev[e] * (0.5 if a == b else 1.0)
                for f in range(ptr[Q], ptr[Q + 1]):
                    c = ea[f]
                    d = eb[f]
                    wf = ev[f] * (0.5 if c == d else 1.0)
                    acc += we * wf * (X[b, c] * Zinv[d, a] + X[b, d] * Zinv[c, a]
                                      + X[a, c] * Zinv[d, b] + X[a, d] * Zinv[c, b])
            M[P, Q] = acc
            M[Q, P] = acc
    return out
