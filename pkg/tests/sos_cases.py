"""Small SOS feasibility problems shared by the compiler and acceptance tests."""

import numpy as np

from wassos import backend
from wassos.poly import Poly, monomial_basis
from wassos.sos import PolyExpr, SdpProblem, gram_polynomial


def random_sos(rng, n: int, half: int) -> Poly:
    """``q1^2 + q2^2`` with dense random ``q`` of degree ``half``."""
    basis = monomial_basis(n, half)
    total = Poly.zero(n)
    for _ in range(2):
        q = Poly(n, {e: float(rng.normal()) for e in basis})
        total = total + q * q
    return total


def certify(p: Poly, cap: int = None, tol: float = 1e-7):
    """Solve ``p in SOS``; returns (status, reconstruction residual or None)."""
    cap = cap if cap is not None else p.degree + (p.degree % 2)
    prob = SdpProblem("max")
    S = prob.assert_is_sos(PolyExpr.of(p), cap)
    form = backend.compile(prob)
    res = backend.solve(form, tol=tol)
    if res.status != backend.OPTIMAL:
        return res.status, None, res
    G = res.blocks[S.id]
    diff = gram_polynomial(S, G) - p
    resid = max((abs(c) for c in diff.terms.values()), default=0.0)
    return res.status, resid, res
