"""Monomial bases and sparse polynomial arithmetic.

Monomials are sorted tuples of variable indices with multiplicity, so
``(0, 0, 2)`` is x0^2 * x2 and ``()`` is the constant monomial. Polynomials
are sparse dicts mapping monomials to coefficients. The basis orders
monomials graded lexicographically with the empty multiset at position 0.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

Monomial = tuple[int, ...]
Poly = dict[Monomial, float]


def basis_size(num_vars: int, max_degree: int) -> int:
    return math.comb(num_vars + max_degree, max_degree)


@dataclass(frozen=True)
class MonomialBasis:
    """Graded-lex indexing of all monomials of degree <= max_degree."""

    num_vars: int
    max_degree: int
    monomials: tuple[Monomial, ...] = field(init=False, repr=False)
    index: dict[Monomial, int] = field(init=False, repr=False)

    def __post_init__(self):
        mons: list[Monomial] = []
        for deg in range(self.max_degree + 1):
            mons.extend(
                itertools.combinations_with_replacement(range(self.num_vars), deg)
            )
        object.__setattr__(self, "monomials", tuple(mons))
        object.__setattr__(self, "index", {m: i for i, m in enumerate(mons)})
        assert len(mons) == basis_size(self.num_vars, self.max_degree)

    @property
    def size(self) -> int:
        return len(self.monomials)

    def half_basis(self, room: int = 0) -> tuple[Monomial, ...]:
        """Monomials usable as localizer entries when `room` degree is taken."""
        cap = (self.max_degree - room) // 2
        return tuple(m for m in self.monomials if len(m) <= cap)

    def exponents(self) -> np.ndarray:
        """(size, num_vars) exponent table, cached after first use."""
        try:
            return self._exp  # type: ignore[attr-defined]
        except AttributeError:
            exp = np.zeros((self.size, self.num_vars), dtype=np.int8)
            for i, m in enumerate(self.monomials):
                for j in m:
                    exp[i, j] += 1
            object.__setattr__(self, "_exp", exp)
            return exp


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    return tuple(sorted(a + b))


def poly_add(p: Poly, q: Poly, cp: float = 1.0, cq: float = 1.0) -> Poly:
    out = {m: cp * c for m, c in p.items()}
    for m, c in q.items():
        out[m] = out.get(m, 0.0) + cq * c
    return {m: c for m, c in out.items() if c != 0.0}


def poly_scale(p: Poly, c: float) -> Poly:
    return {m: c * v for m, v in p.items()}


def poly_mul(p: Poly, q: Poly) -> Poly:
    out: Poly = {}
    for mp, cp in p.items():
        for mq, cq in q.items():
            m = mono_mul(mp, mq)
            out[m] = out.get(m, 0.0) + cp * cq
    return {m: c for m, c in out.items() if c != 0.0}


def poly_square(p: Poly) -> Poly:
    return poly_mul(p, p)


def poly_degree(p: Poly) -> int:
    return max((len(m) for m in p.keys()), default=0)


def poly_norm2(p: Poly) -> float:
    """l2 norm of the coefficient vector."""
    return math.sqrt(sum(c * c for c in p.values()))


def poly_eval(p: Poly, values: np.ndarray) -> float:
    total = 0.0
    for m, c in p.items():
        v = c
        for i in m:
            v *= values[i]
        total += v
    return total


def poly_to_vec(p: Poly, basis: MonomialBasis) -> np.ndarray:
    vec = np.zeros(basis.size)
    for m, c in p.items():
        vec[basis.index[m]] = c
    return vec


def vec_to_poly(vec: np.ndarray, basis: MonomialBasis) -> Poly:
    return {basis.monomials[i]: float(v) for i, v in enumerate(vec) if v != 0.0}


def monomial_values(values: np.ndarray, basis: MonomialBasis) -> np.ndarray:
    """Evaluate every basis monomial at a point assignment.

    This is the moment vector of the point mass at ``values``; position 0
    is always 1.
    """
    values = np.asarray(values, dtype=float)
    return np.prod(values[None, :] ** basis.exponents(), axis=1)
