"""Monomial bases, Gram matrices, and the coefficient-matching system ``A y = b``.

A Gram matrix ``G`` over a basis ``v`` represents ``v(x)^T G v(x)``.  The
unknowns of the matching system are the upper-triangle entries ``(i, j)``,
``i <= j``, in row-major order; ``vec(G)`` follows the same order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath
import numpy as np

from .linalg import project_affine
from .poly import FloatPolynomial, Monomial, Polynomial, grlex_key, monomial_text

DEFAULT_BASIS_CAP = 5000


class BasisTooLarge(ValueError):
    pass


class BasisTooSmall(ValueError):
    """Some monomial of the target cannot be written as a product of two basis monomials."""

    def __init__(self, monomial: Monomial):
        super().__init__(f"monomial {monomial_text(monomial) or '1'} is not a product of two basis monomials")
        self.monomial = monomial


@dataclass(frozen=True)
class MonomialBasis:
    nvars: int
    monomials: tuple

    def __post_init__(self):
        if len(set(self.monomials)) != len(self.monomials):
            raise ValueError("duplicate monomials in basis")
        for m in self.monomials:
            if len(m) != self.nvars:
                raise ValueError(f"monomial {m} has wrong length")
        object.__setattr__(self, "_index", {m: i for i, m in enumerate(self.monomials)})

    @classmethod
    def from_monomials(cls, nvars: int, monomials: Iterable[Monomial]) -> "MonomialBasis":
        """Basis over the given monomials, deduplicated and sorted in ascending graded-lex order."""
        return cls(nvars, tuple(sorted({tuple(m) for m in monomials}, key=grlex_key)))

    def __len__(self):
        return len(self.monomials)

    def __iter__(self):
        return iter(self.monomials)

    def __getitem__(self, i):
        return self.monomials[i]

    def __contains__(self, m):
        return tuple(m) in self._index

    def index(self, m: Monomial) -> int:
        return self._index[tuple(m)]

    def extend(self, extra: Iterable[Monomial]) -> "MonomialBasis":
        return MonomialBasis.from_monomials(self.nvars, list(self.monomials) + [tuple(m) for m in extra])

    def restrict(self, keep: Sequence[int]) -> "MonomialBasis":
        return MonomialBasis(self.nvars, tuple(self.monomials[i] for i in keep))

    def polynomial(self, coeffs: Sequence) -> Polynomial:
        """The polynomial ``sum(coeffs[i] * basis[i])`` with exact coefficients."""
        return Polynomial(self.nvars, {m: c for m, c in zip(self.monomials, coeffs) if c})

    def float_polynomial(self, coeffs: Sequence, prec: int = 53) -> FloatPolynomial:
        return FloatPolynomial(self.nvars, {m: c for m, c in zip(self.monomials, coeffs) if c}, prec)

    def coefficients(self, q: Polynomial | FloatPolynomial) -> list:
        """Coefficient vector of ``q`` over this basis; raises ``KeyError`` on a foreign monomial."""
        out = [0] * len(self)
        for m, c in q.as_dict().items():
            out[self.index(m)] = c
        return out

    def __str__(self):
        return "[" + ", ".join(monomial_text(m) or "1" for m in self.monomials) + "]"


def _monomials_of_degree(nvars: int, deg: int):
    # compositions of deg into nvars parts, x1-heaviest first
    if nvars == 1:
        yield (deg,)
        return
    for first in range(deg, -1, -1):
        for rest in _monomials_of_degree(nvars - 1, deg - first):
            yield (first,) + rest


def full_basis(nvars: int, half_degree: int, cap: int = DEFAULT_BASIS_CAP) -> MonomialBasis:
    """All monomials of degree <= ``half_degree``, ascending graded-lex."""
    if half_degree < 0:
        raise ValueError("half_degree must be >= 0")
    size = math.comb(nvars + half_degree, half_degree)
    if size > cap:
        raise BasisTooLarge(f"full basis has {size} monomials, cap is {cap}")
    mons = [m for d in range(half_degree + 1) for m in _monomials_of_degree(nvars, d)]
    return MonomialBasis(nvars, tuple(mons))


def support_restricted_basis(f: Polynomial, cap: int = DEFAULT_BASIS_CAP) -> MonomialBasis:
    """Monomials inside a coordinate box containing half the Newton polytope of ``f``.

    Keeps ``beta`` with ``ceil(min_a a_v / 2) <= beta_v <= floor(max_a a_v / 2)``
    for every variable and ``ceil(mindeg/2) <= |beta| <= deg/2``.
    """
    if f.is_zero():
        return MonomialBasis(f.nvars, ())
    deg = f.total_degree()
    if deg % 2:
        raise ValueError(f"polynomial has odd degree {deg}")
    supp = f.support()
    hi = [max(m[v] for m in supp) // 2 for v in range(f.nvars)]
    lo = [-(-min(m[v] for m in supp) // 2) for v in range(f.nvars)]
    dlo = -(-f.min_degree() // 2)
    mons = []
    for d in range(dlo, deg // 2 + 1):
        for m in _box_monomials(lo, hi, d):
            mons.append(m)
            if len(mons) > cap:
                raise BasisTooLarge(f"restricted basis exceeds cap {cap}")
    return MonomialBasis.from_monomials(f.nvars, mons)


def _box_monomials(lo, hi, deg):
    n = len(lo)
    if n == 1:
        if lo[0] <= deg <= hi[0]:
            yield (deg,)
        return
    rest_lo, rest_hi = sum(lo[1:]), sum(hi[1:])
    for first in range(min(hi[0], deg), lo[0] - 1, -1):
        r = deg - first
        if rest_lo <= r <= rest_hi:
            for tail in _box_monomials(lo[1:], hi[1:], r):
                yield (first,) + tail


# ---------------------------------------------------------------- Gram matrices


def _check_square_symmetric(entries, m, exact):
    if len(entries) != m or any(len(r) != m for r in entries):
        raise ValueError(f"Gram matrix must be {m}x{m}")
    if exact:
        for i in range(m):
            for j in range(i):
                if entries[i][j] != entries[j][i]:
                    raise ValueError("Gram matrix is not symmetric")


@dataclass(frozen=True)
class GramRational:
    basis: MonomialBasis
    entries: tuple  # tuple of tuples of Fraction

    def __init__(self, basis: MonomialBasis, entries):
        rows = tuple(tuple(Fraction(v) for v in r) for r in entries)
        _check_square_symmetric(rows, len(basis), exact=True)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "entries", rows)

    @property
    def size(self) -> int:
        return len(self.basis)

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def vec(self) -> list[Fraction]:
        m = self.size
        return [self.entries[i][j] for i in range(m) for j in range(i, m)]

    @classmethod
    def from_vec(cls, basis: MonomialBasis, y: Sequence[Fraction]) -> "GramRational":
        m = len(basis)
        G = [[Fraction(0)] * m for _ in range(m)]
        it = iter(y)
        for i in range(m):
            for j in range(i, m):
                G[i][j] = G[j][i] = Fraction(next(it))
        return cls(basis, G)

    def to_numpy(self) -> np.ndarray:
        return np.array([[float(v) for v in r] for r in self.entries], dtype=float).reshape(self.size, self.size)

    def restrict(self, keep: Sequence[int]) -> "GramRational":
        return GramRational(self.basis.restrict(keep), [[self.entries[i][j] for j in keep] for i in keep])


@dataclass(frozen=True)
class GramNumeric:
    """Numerical Gram matrix; entries are mpf values at ``prec`` bits (upper triangle mirrored)."""

    basis: MonomialBasis
    entries: tuple
    prec: int = 53

    def __init__(self, basis: MonomialBasis, entries, prec: int = 53):
        m = len(basis)
        with mpmath.workprec(prec):
            rows = [[mpmath.mpf(_as_mpf_input(v)) for v in r] for r in entries]
        if len(rows) != m or any(len(r) != m for r in rows):
            raise ValueError(f"Gram matrix must be {m}x{m}")
        for i in range(m):
            for j in range(i):
                rows[i][j] = rows[j][i]
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "entries", tuple(tuple(r) for r in rows))
        object.__setattr__(self, "prec", prec)

    @property
    def size(self) -> int:
        return len(self.basis)

    def to_numpy(self) -> np.ndarray:
        m = self.size
        return np.array([[float(v) for v in r] for r in self.entries], dtype=float).reshape(m, m)

    def restrict(self, keep: Sequence[int]) -> "GramNumeric":
        return GramNumeric(self.basis.restrict(keep), [[self.entries[i][j] for j in keep] for i in keep], self.prec)

    @classmethod
    def from_rational(cls, G: GramRational, prec: int = 53) -> "GramNumeric":
        return cls(G.basis, G.entries, prec)


def _as_mpf_input(v):
    if isinstance(v, Fraction):
        return mpmath.mpf(v.numerator) / v.denominator
    return v


def gram_to_poly(G: GramRational | GramNumeric):
    """Expand ``v(x)^T G v(x)``."""
    b = G.basis
    m = len(b)
    if isinstance(G, GramRational):
        out: dict = {}
        for i in range(m):
            for j in range(i, m):
                c = G.entries[i][j]
                if c:
                    mono = tuple(x + y for x, y in zip(b[i], b[j]))
                    out[mono] = out.get(mono, 0) + (c if i == j else 2 * c)
        return Polynomial(b.nvars, out)
    with mpmath.workprec(G.prec):
        out = {}
        for i in range(m):
            for j in range(i, m):
                c = G.entries[i][j]
                if c:
                    mono = tuple(x + y for x, y in zip(b[i], b[j]))
                    out[mono] = out.get(mono, mpmath.mpf(0)) + (c if i == j else 2 * c)
        return FloatPolynomial(b.nvars, out, G.prec)


# ---------------------------------------------------------------- matching system


@dataclass(frozen=True)
class LinearSystem:
    """Coefficient matching ``A vec(G) = b``.

    ``rows[r]`` is a sparse dict ``{unknown index: coefficient}``; each row
    corresponds to ``target_monomials[r]``.
    """

    basis: MonomialBasis
    unknowns: tuple
    rows: tuple
    rhs: tuple
    target_monomials: tuple

    def dense(self) -> list[list[Fraction]]:
        n = len(self.unknowns)
        out = []
        for r in self.rows:
            row = [Fraction(0)] * n
            for j, c in r.items():
                row[j] = c
            out.append(row)
        return out

    def residual(self, y: Sequence) -> list:
        return [sum((c * y[j] for j, c in r.items()), Fraction(0)) - b for r, b in zip(self.rows, self.rhs)]

    def is_satisfied(self, y: Sequence[Fraction]) -> bool:
        return not any(self.residual(y))

    def frobenius_weights_inverse(self) -> list[Fraction]:
        """``W^-1`` making the weighted norm of ``vec(G)`` equal the Frobenius norm of ``G``."""
        return [Fraction(1) if i == j else Fraction(1, 2) for i, j in self.unknowns]


def matching_system(f: Polynomial, basis: MonomialBasis) -> LinearSystem:
    """Linear constraints on the Gram entries for ``f == v^T G v``."""
    if f.nvars != basis.nvars:
        raise ValueError("nvars mismatch between polynomial and basis")
    m = len(basis)
    unknowns = tuple((i, j) for i in range(m) for j in range(i, m))
    by_mono: dict[Monomial, dict[int, Fraction]] = {}
    for u, (i, j) in enumerate(unknowns):
        mono = tuple(x + y for x, y in zip(basis[i], basis[j]))
        by_mono.setdefault(mono, {})[u] = Fraction(1 if i == j else 2)
    for mono in f.support():
        if mono not in by_mono:
            raise BasisTooSmall(mono)
    monos = sorted(by_mono, key=grlex_key)
    rows = tuple(by_mono[mo] for mo in monos)
    rhs = tuple(f.coeff(mo) for mo in monos)
    return LinearSystem(basis, unknowns, rows, rhs, tuple(monos))


def project_onto_affine(G0: GramRational, sys: LinearSystem) -> GramRational:
    """Nearest (Frobenius norm) symmetric ``G`` to ``G0`` with ``A vec(G) = b``, exactly."""
    if len(G0.basis) != len(sys.basis) or G0.basis != sys.basis:
        raise ValueError("Gram basis does not match the linear system")
    y = project_affine(G0.vec(), sys.rows, sys.rhs, sys.frobenius_weights_inverse())
    return GramRational.from_vec(G0.basis, y)


def least_norm_gram(sys: LinearSystem) -> GramRational:
    """Minimum-Frobenius-norm symmetric solution of the matching system."""
    m = len(sys.basis)
    zero = GramRational(sys.basis, [[0] * m for _ in range(m)])
    return project_onto_affine(zero, sys)


def pair_products(basis: MonomialBasis):
    """Map each product monomial ``b_i * b_j`` to the list of ordered pairs ``(i, j)``."""
    out: dict[Monomial, list] = {}
    for i, j in itertools.product(range(len(basis)), repeat=2):
        mono = tuple(x + y for x, y in zip(basis[i], basis[j]))
        out.setdefault(mono, []).append((i, j))
    return out
