"""Compile polynomial identities with SOS unknowns into SDP data.

Unknowns are scalars (free or nonnegative) and Gram blocks.  A Gram block
``G`` over a monomial basis ``b`` stands for the SOS polynomial ``b^T G b``.
:meth:`SdpProblem.assert_zero` matches coefficients of an affine polynomial
expression monomial by monomial and appends one equality row per monomial.

Row coefficients on Gram entries use the symmetric inner product
convention: a row stores ``F[a, b]`` for ``a <= b`` and means
``sum_a F[a,a] G[a,a] + 2 sum_{a<b} F[a,b] G[a,b]``.  The coefficient
stored for a basis pair is therefore just the factor coefficient, whether or
not the pair is on the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .poly import Exponent, Poly, monomial_basis


class LevelTooSmall(ValueError):
    """The relaxation level cannot accommodate a constraint's degree."""

    def __init__(self, message: str, min_r: Optional[int] = None):
        super().__init__(message)
        self.min_r = min_r


class DegreeOverflow(ValueError):
    pass


@dataclass(frozen=True)
class ScalarVar:
    id: int
    kind: str  # "free" | "nonneg"
    name: str = ""


@dataclass(frozen=True)
class GramVar:
    id: int
    nvars: int
    basis: Tuple[Exponent, ...]
    name: str = ""

    @property
    def size(self) -> int:
        return len(self.basis)

    @property
    def half_degree(self) -> int:
        return max((sum(e) for e in self.basis), default=0)


class PolyExpr:
    """``constant + sum s_v * p_v + sum f_g * (b_g^T G b_g)``, affine in the unknowns."""

    __slots__ = ("nvars", "constant", "scalar_terms", "gram_terms")

    def __init__(
        self,
        nvars: int,
        constant: Poly | None = None,
        scalar_terms: Iterable[Tuple[ScalarVar, Poly]] = (),
        gram_terms: Iterable[Tuple[GramVar, Poly]] = (),
    ):
        self.nvars = nvars
        self.constant = constant if constant is not None else Poly.zero(nvars)
        self.scalar_terms: List[Tuple[ScalarVar, Poly]] = list(scalar_terms)
        self.gram_terms: List[Tuple[GramVar, Poly]] = list(gram_terms)
        if self.constant.nvars != nvars:
            raise ValueError("constant has the wrong dimension")
        for _, p in self.scalar_terms:
            if p.nvars != nvars:
                raise ValueError("scalar multiplier has the wrong dimension")
        for g, p in self.gram_terms:
            if p.nvars != nvars or g.nvars != nvars:
                raise ValueError("gram term has the wrong dimension")

    @classmethod
    def of(cls, p: Poly) -> "PolyExpr":
        return cls(p.nvars, p)

    def copy(self) -> "PolyExpr":
        return PolyExpr(self.nvars, self.constant, self.scalar_terms, self.gram_terms)

    def __add__(self, other) -> "PolyExpr":
        if isinstance(other, (Poly, int, float)):
            return PolyExpr(
                self.nvars, self.constant + other, self.scalar_terms, self.gram_terms
            )
        if other.nvars != self.nvars:
            raise ValueError("dimension mismatch")
        return PolyExpr(
            self.nvars,
            self.constant + other.constant,
            self.scalar_terms + other.scalar_terms,
            self.gram_terms + other.gram_terms,
        )

    def __mul__(self, c: float) -> "PolyExpr":
        c = float(c)
        return PolyExpr(
            self.nvars,
            self.constant * c,
            [(v, p * c) for v, p in self.scalar_terms],
            [(g, p * c) for g, p in self.gram_terms],
        )

    __rmul__ = __mul__

    def __neg__(self) -> "PolyExpr":
        return self * -1.0

    def __sub__(self, other) -> "PolyExpr":
        if isinstance(other, (Poly, int, float)):
            return self + (-other)
        return self + (-other)

    def plus_scalar(self, var: ScalarVar, mult: Poly | float = 1.0) -> "PolyExpr":
        if not isinstance(mult, Poly):
            mult = Poly.constant(self.nvars, mult)
        return PolyExpr(
            self.nvars, self.constant, self.scalar_terms + [(var, mult)], self.gram_terms
        )

    def plus_gram(self, var: GramVar, factor: Poly | float = 1.0) -> "PolyExpr":
        if not isinstance(factor, Poly):
            factor = Poly.constant(self.nvars, factor)
        return PolyExpr(
            self.nvars, self.constant, self.scalar_terms, self.gram_terms + [(var, factor)]
        )

    def degree(self) -> int:
        d = self.constant.degree
        for _, p in self.scalar_terms:
            d = max(d, p.degree)
        for g, f in self.gram_terms:
            d = max(d, f.degree + 2 * g.half_degree)
        return d

    def evaluate(self, scalar_values: Dict[int, float], gram_values: Dict[int, "object"]) -> Poly:
        """Substitute numeric values for every unknown and return the polynomial."""
        out = self.constant
        for v, p in self.scalar_terms:
            out = out + p * float(scalar_values[v.id])
        for g, f in self.gram_terms:
            out = out + f * gram_polynomial(g, gram_values[g.id])
        return out


def gram_polynomial(g: GramVar, G) -> Poly:
    """``b^T G b`` for a numeric matrix ``G``."""
    terms: Dict[Exponent, float] = {}
    n = g.size
    for a in range(n):
        for b in range(n):
            e = tuple(x + y for x, y in zip(g.basis[a], g.basis[b]))
            terms[e] = terms.get(e, 0.0) + float(G[a][b])
    return Poly(g.nvars, terms)


@lru_cache(maxsize=None)
def _pair_exponents(basis: Tuple[Exponent, ...]) -> Tuple[Tuple[int, int, Exponent], ...]:
    out = []
    n = len(basis)
    for a in range(n):
        for b in range(a, n):
            out.append((a, b, tuple(x + y for x, y in zip(basis[a], basis[b]))))
    return tuple(out)


@lru_cache(maxsize=None)
def _row_index(n: int, cap: int) -> Tuple[Tuple[Exponent, ...], Dict[Exponent, int]]:
    basis = tuple(monomial_basis(n, cap))
    return basis, {e: i for i, e in enumerate(basis)}


def multiplier_degree(total_cap: int, factor_degree: int) -> int:
    """Largest even degree of an SOS multiplier ``s`` with ``deg(s * h) <= total_cap``."""
    if total_cap < factor_degree:
        raise LevelTooSmall(
            f"relaxation level too small for this constraint: 2r={total_cap} < degree {factor_degree}",
            min_r=(factor_degree + 1) // 2,
        )
    return 2 * ((total_cap - factor_degree) // 2)


@dataclass
class Row:
    const: float = 0.0
    scalars: Dict[int, float] = field(default_factory=dict)
    grams: Dict[Tuple[int, int, int], float] = field(default_factory=dict)
    label: str = ""

    def is_empty(self) -> bool:
        return not self.scalars and not self.grams


class SdpProblem:
    """Scalars, Gram blocks, equality rows and a linear objective over scalars."""

    def __init__(self, sense: str = "max", name: str = ""):
        if sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")
        self.sense = sense
        self.name = name
        self.scalars: List[ScalarVar] = []
        self.grams: List[GramVar] = []
        self.rows: List[Row] = []
        self.objective: Dict[int, float] = {}
        self.objective_constant = 0.0
        # named groups of scalars (e.g. "lambda", "alpha") for post-solve extraction
        self.tags: Dict[str, List[ScalarVar]] = {}
        self.meta: Dict[str, object] = {}

    # -- variables ----------------------------------------------------------

    def new_scalar(self, kind: str = "free", name: str = "") -> ScalarVar:
        if kind not in ("free", "nonneg"):
            raise ValueError("kind must be 'free' or 'nonneg'")
        v = ScalarVar(len(self.scalars), kind, name)
        self.scalars.append(v)
        return v

    def new_sos(self, nvars: int, max_total_degree: int, name: str = "") -> GramVar:
        """A fresh SOS polynomial of degree ``<= max_total_degree`` (rounded down to even)."""
        if max_total_degree < 0:
            raise ValueError("degree must be nonnegative")
        d = max_total_degree // 2
        g = GramVar(len(self.grams), nvars, tuple(monomial_basis(nvars, d)), name)
        self.grams.append(g)
        return g

    def tag(self, name: str, *vars: ScalarVar) -> None:
        self.tags.setdefault(name, []).extend(vars)

    # -- constraints --------------------------------------------------------

    def add_linear_equality(self, coefs: Dict[ScalarVar, float], rhs: float, label: str = "") -> None:
        """``sum coefs[v] * v == rhs``."""
        row = Row(const=-float(rhs), label=label)
        for v, c in coefs.items():
            row.scalars[v.id] = row.scalars.get(v.id, 0.0) + float(c)
        self.rows.append(row)

    def assert_zero(self, expr: PolyExpr, degree_cap: int, label: str = "") -> List[Row]:
        """Append one equality row per monomial of degree ``<= degree_cap`` forcing ``expr == 0``."""
        n = expr.nvars
        basis, index = _row_index(n, degree_cap)
        rows = [Row(label=label) for _ in basis]

        def locate(e: Exponent, what: str) -> int:
            i = index.get(e)
            if i is None:
                raise DegreeOverflow(
                    f"{what} reaches degree {sum(e)} above the cap {degree_cap}"
                )
            return i

        for e, c in expr.constant.terms.items():
            rows[locate(e, "constant term")].const += c
        for v, p in expr.scalar_terms:
            for e, c in p.terms.items():
                row = rows[locate(e, f"scalar {v.name or v.id}")]
                row.scalars[v.id] = row.scalars.get(v.id, 0.0) + c
        for g, f in expr.gram_terms:
            pairs = _pair_exponents(g.basis)
            fterms = f.items()
            for a, b, eab in pairs:
                for mu, c in fterms:
                    e = tuple(x + y for x, y in zip(mu, eab))
                    row = rows[locate(e, f"gram {g.name or g.id}")]
                    key = (g.id, a, b)
                    row.grams[key] = row.grams.get(key, 0.0) + c
        self.rows.extend(rows)
        return rows

    def assert_is_sos(self, expr: PolyExpr, degree_cap: int, name: str = "") -> GramVar:
        """Require ``expr`` to be SOS of degree ``<= degree_cap``; returns the residual Gram."""
        S = self.new_sos(expr.nvars, degree_cap, name=name or "residual")
        self.assert_zero(expr.plus_gram(S, -1.0), degree_cap, label=name)
        return S

    # -- objective ----------------------------------------------------------

    def set_objective(self, coefs: Dict[ScalarVar, float], constant: float = 0.0) -> None:
        self.objective = {v.id: float(c) for v, c in coefs.items()}
        self.objective_constant = float(constant)

    # -- summaries ----------------------------------------------------------

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def block_sizes(self) -> List[int]:
        return [g.size for g in self.grams]

    def counts(self) -> Dict[str, int]:
        """Dimension summary: rows, scalars, Gram blocks and matrix unknowns."""
        return {
            "rows": self.n_rows,
            "scalars": len(self.scalars),
            "blocks": len(self.grams),
            "matrix_unknowns": sum(g.size * (g.size + 1) // 2 for g in self.grams),
            "max_block": max((g.size for g in self.grams), default=0),
        }


def sos_multiplier(
    prob: SdpProblem, nvars: int, total_cap: int, factor: Poly, name: str = ""
) -> GramVar:
    """An SOS multiplier for ``factor`` of the largest admissible even degree."""
    return prob.new_sos(nvars, multiplier_degree(total_cap, factor.degree), name=name)

