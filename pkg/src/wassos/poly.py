"""Sparse multivariate polynomials over the reals.

A :class:`Poly` maps exponent tuples to float coefficients.  Instances are
immutable; every arithmetic operation returns a new polynomial with
coefficients below :data:`DROP_TOL` removed.

Monomials are ordered graded-lexicographically everywhere in the package
(total degree first, then ``x1 > x2 > ...`` within a degree), so that the
compiled SDP data is reproducible byte for byte.
"""

from __future__ import annotations

import itertools
import math
import re
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

Exponent = Tuple[int, ...]

DROP_TOL = 1e-14


def grlex_key(exp: Exponent) -> Tuple:
    """Sort key for graded lexicographic order (``x1`` before ``x2``)."""
    return (sum(exp), tuple(-e for e in exp))


class Poly:
    __slots__ = ("nvars", "_terms", "_hash")

    def __init__(self, nvars: int, terms: Mapping[Exponent, float] | None = None):
        if nvars < 1:
            raise ValueError("nvars must be positive")
        clean: Dict[Exponent, float] = {}
        if terms:
            for exp, c in terms.items():
                exp = tuple(int(e) for e in exp)
                if len(exp) != nvars:
                    raise ValueError(f"exponent {exp} does not have length {nvars}")
                if any(e < 0 for e in exp):
                    raise ValueError(f"negative exponent in {exp}")
                c = float(c)
                if abs(c) >= DROP_TOL:
                    clean[exp] = clean.get(exp, 0.0) + c
            clean = {e: c for e, c in clean.items() if abs(c) >= DROP_TOL}
        self.nvars = nvars
        self._terms = clean
        self._hash = None

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> "Poly":
        return cls(nvars)

    @classmethod
    def constant(cls, nvars: int, c: float) -> "Poly":
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def var(cls, nvars: int, i: int) -> "Poly":
        """The coordinate polynomial ``x_{i+1}`` (0-based ``i``)."""
        if not 0 <= i < nvars:
            raise IndexError(f"variable index {i} out of range for {nvars} vars")
        exp = [0] * nvars
        exp[i] = 1
        return cls(nvars, {tuple(exp): 1.0})

    @classmethod
    def monomial(cls, exp: Sequence[int], c: float = 1.0) -> "Poly":
        return cls(len(exp), {tuple(exp): c})

    # -- inspection ---------------------------------------------------------

    @property
    def terms(self) -> Dict[Exponent, float]:
        return dict(self._terms)

    def items(self) -> List[Tuple[Exponent, float]]:
        """Terms in graded-lex order."""
        return sorted(self._terms.items(), key=lambda t: grlex_key(t[0]))

    def coeff(self, exp: Sequence[int]) -> float:
        return self._terms.get(tuple(exp), 0.0)

    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degree(self) -> int:
        if not self._terms:
            return 0
        return max(sum(e) for e in self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    # -- arithmetic ---------------------------------------------------------

    def _check(self, other: "Poly") -> None:
        if self.nvars != other.nvars:
            raise ValueError(
                f"dimension mismatch: {self.nvars} vs {other.nvars} variables"
            )

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Poly.constant(self.nvars, float(other))
        return NotImplemented

    def __add__(self, other) -> "Poly":
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for e, c in other._terms.items():
            out[e] = out.get(e, 0.0) + c
        return Poly(self.nvars, out)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly(self.nvars, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other) -> "Poly":
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other) -> "Poly":
        return (-self) + other

    def __mul__(self, other) -> "Poly":
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Poly(self.nvars, {e: c * other for e, c in self._terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: Dict[Exponent, float] = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Poly(self.nvars, out)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Poly":
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self * (1.0 / other)
        return NotImplemented

    def __pow__(self, k: int) -> "Poly":
        if int(k) != k or k < 0:
            raise ValueError("only nonnegative integer powers are supported")
        out = Poly.constant(self.nvars, 1.0)
        base = self
        k = int(k)
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, Poly):
            return NotImplemented
        return self.nvars == other.nvars and self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.nvars, frozenset(self._terms.items())))
        return self._hash

    def allclose(self, other: "Poly", atol: float = 1e-9) -> bool:
        diff = self - other
        return all(abs(c) <= atol for c in diff._terms.values())

    # -- evaluation ---------------------------------------------------------

    def __call__(self, point) -> float:
        return evaluate(self, point)

    def eval_many(self, points) -> np.ndarray:
        """Evaluate at each row of a ``(count, nvars)`` array."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.nvars:
            raise ValueError(f"points must have {self.nvars} columns")
        out = np.zeros(pts.shape[0])
        for e, c in self._terms.items():
            out += c * np.prod(pts ** np.asarray(e), axis=1)
        return out

    def __repr__(self) -> str:
        return f"Poly({self.nvars}, {to_string(self)!r})"


def add(a: Poly, b: Poly) -> Poly:
    a._check(b)
    return a + b


def mul(a: Poly, b: Poly) -> Poly:
    a._check(b)
    return a * b


def evaluate(a: Poly, point) -> float:
    pt = np.asarray(point, dtype=float).ravel()
    if pt.shape[0] != a.nvars:
        raise ValueError(f"point has length {pt.shape[0]}, expected {a.nvars}")
    total = 0.0
    for e, c in a._terms.items():
        term = c
        for x, k in zip(pt, e):
            if k:
                term *= x**k
        total += term
    return float(total)


def lift(a: Poly) -> Poly:
    """Embed ``a`` into the ring with one extra trailing variable."""
    return Poly(a.nvars + 1, {e + (0,): c for e, c in a._terms.items()})


def substitute_scale(a: Poly, scales: Sequence[float]) -> Poly:
    """Return ``a(s1*x1, ..., sn*xn)``."""
    s = [float(v) for v in scales]
    if len(s) != a.nvars:
        raise ValueError("one scale per variable required")
    out = {}
    for e, c in a._terms.items():
        f = c
        for si, k in zip(s, e):
            f *= si**k
        out[e] = f
    return Poly(a.nvars, out)


def monomial_basis(n: int, d: int) -> List[Exponent]:
    """All exponents of length ``n`` with total degree ``<= d``, graded-lex."""
    if n < 1:
        raise ValueError("n must be positive")
    if d < 0:
        return []
    out: List[Exponent] = []
    for deg in range(d + 1):
        out.extend(_exponents_of_degree(n, deg))
    return out


def _exponents_of_degree(n: int, deg: int) -> List[Exponent]:
    # stars and bars; combinations come out in an order we then fix explicitly
    exps = []
    for bars in itertools.combinations(range(deg + n - 1), n - 1):
        prev = -1
        e = []
        for b in bars:
            e.append(b - prev - 1)
            prev = b
        e.append(deg + n - 2 - prev)
        exps.append(tuple(e))
    exps.sort(key=grlex_key)
    return exps


def basis_size(n: int, d: int) -> int:
    return math.comb(n + d, d) if d >= 0 else 0


def squared_distance(center: Sequence[float]) -> Poly:
    """``||x - center||_2^2`` as a polynomial in ``len(center)`` variables."""
    c = [float(v) for v in center]
    n = len(c)
    out = Poly.zero(n)
    for i, ci in enumerate(c):
        xi = Poly.var(n, i)
        out = out + (xi - ci) * (xi - ci)
    return out


# -- text format -------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<var>x(?:t|\d+))|(?P<op>\*\*|[-+*/^()]))"
)


class PolySyntaxError(ValueError):
    pass


def _tokenize(text: str):
    pos = 0
    text = text.strip()
    toks = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise PolySyntaxError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
        pos = m.end()
        kind = m.lastgroup
        val = m.group(kind)
        if kind == "op" and val == "**":
            val = "^"
        toks.append((kind, val))
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return toks


def parse_poly(text: str, nvars: int, lifted: bool = False) -> Poly:
    """Parse expressions such as ``-4*x1^3 + 9*x1^2 - 6.75*x1 - 7.3125``.

    Variables are ``x1`` .. ``xn``.  With ``lifted=True`` the result lives in
    ``nvars + 1`` variables and ``xt`` names the trailing lifted variable.
    Parentheses, ``/`` by constants and integer powers are accepted.
    """
    total = nvars + 1 if lifted else nvars
    toks = _tokenize(str(text))
    pos = 0

    def peek():
        return toks[pos] if pos < len(toks) else (None, None)

    def take():
        nonlocal pos
        tok = peek()
        pos += 1
        return tok

    def expr() -> Poly:
        kind, val = peek()
        sign = 1.0
        if kind == "op" and val in "+-":
            take()
            sign = -1.0 if val == "-" else 1.0
        out = term() * sign
        while True:
            kind, val = peek()
            if kind == "op" and val in "+-":
                take()
                t = term()
                out = out + t if val == "+" else out - t
            else:
                return out

    def term() -> Poly:
        out = factor()
        while True:
            kind, val = peek()
            if kind == "op" and val == "*":
                take()
                out = out * factor()
            elif kind == "op" and val == "/":
                take()
                den = factor()
                if den.degree != 0 or den.is_zero():
                    raise PolySyntaxError("division only by nonzero constants")
                out = out / den.coeff((0,) * total)
            else:
                return out

    def factor() -> Poly:
        base = atom()
        kind, val = peek()
        if kind == "op" and val == "^":
            take()
            k_kind, k_val = take()
            if k_kind != "num" or not k_val.isdigit():
                raise PolySyntaxError("exponent must be a nonnegative integer")
            return base ** int(k_val)
        return base

    def atom() -> Poly:
        kind, val = take()
        if kind == "num":
            return Poly.constant(total, float(val))
        if kind == "var":
            if val == "xt":
                if not lifted:
                    raise PolySyntaxError("xt is only allowed in lifted polynomials")
                return Poly.var(total, nvars)
            i = int(val[1:])
            if not 1 <= i <= nvars:
                raise PolySyntaxError(f"{val} out of range for {nvars} variables")
            return Poly.var(total, i - 1)
        if kind == "op" and val == "(":
            inner = expr()
            k2, v2 = take()
            if v2 != ")":
                raise PolySyntaxError("missing closing parenthesis")
            return inner
        if kind == "op" and val == "-":
            return -factor()
        raise PolySyntaxError(f"unexpected token {val!r}")

    if not toks:
        raise PolySyntaxError("empty polynomial")
    result = expr()
    if pos != len(toks):
        raise PolySyntaxError(f"trailing input at token {toks[pos][1]!r}")
    return result


def to_string(a: Poly, lifted: bool = False) -> str:
    """Inverse of :func:`parse_poly` (up to float formatting)."""
    if a.is_zero():
        return "0"
    names = [f"x{i + 1}" for i in range(a.nvars)]
    if lifted:
        names[-1] = "xt"
    parts = []
    for exp, c in sorted(a._terms.items(), key=lambda t: grlex_key(t[0]), reverse=True):
        mono = "*".join(
            name if k == 1 else f"{name}^{k}" for name, k in zip(names, exp) if k
        )
        mag = abs(c)
        if mono:
            body = mono if mag == 1.0 else f"{mag!r}*{mono}"
        else:
            body = repr(mag)
        sign = "-" if c < 0 else "+"
        parts.append((sign, body))
    first_sign, first = parts[0]
    out = ("-" if first_sign == "-" else "") + first
    for sign, body in parts[1:]:
        out += f" {sign} {body}"
    return out


def coefficient_bound(a: Poly, rho: float) -> float:
    """``sum |c_alpha| rho^|alpha|``: bounds ``|a|`` on the ball of radius ``rho``."""
    return float(sum(abs(c) * rho ** sum(e) for e, c in a._terms.items()))


def from_terms(nvars: int, items: Iterable[Tuple[Exponent, float]]) -> Poly:
    return Poly(nvars, dict(items))
