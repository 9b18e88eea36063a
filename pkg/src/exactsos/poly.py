"""Sparse multivariate polynomials with exact rational or multi-precision float coefficients.

Monomials are exponent tuples of length ``nvars``.  Terms are stored in a dict
without zero coefficients and iterated in descending graded-lex order, which is
also the printing order::

    >>> p = parse_polynomial("(x1 + 1)^2", 1)
    >>> p.to_text()
    'x1^2 + 2*x1 + 1'
"""

from __future__ import annotations

import math
import re
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Union

import mpmath

Monomial = tuple  # tuple[int, ...]
Rational = Union[int, Fraction]

DEFAULT_TAU_COEFF = 1e-5


class ParseError(ValueError):
    """Raised for malformed polynomial text; ``position`` is a 0-based offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


def grlex_key(m: Monomial):
    """Ascending graded-lex key: lower degree first, ``x1`` before ``x2`` within a degree."""
    return (sum(m), tuple(-e for e in m))


def grlex_desc_key(m: Monomial):
    return (-sum(m), tuple(-e for e in m))


def monomial_text(m: Monomial, names: list[str] | None = None) -> str:
    parts = []
    for i, e in enumerate(m):
        if e == 0:
            continue
        name = names[i] if names else f"x{i + 1}"
        parts.append(name if e == 1 else f"{name}^{e}")
    return "*".join(parts)


def rational_text(c: Fraction) -> str:
    c = Fraction(c)
    if c.denominator == 1:
        return str(c.numerator)
    return f"{c.numerator}/{c.denominator}"


def _add_monomials(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


class Polynomial:
    """Immutable sparse polynomial over the rationals."""

    __slots__ = ("nvars", "_terms", "_hash")

    def __init__(self, nvars: int, terms: Mapping[Monomial, Rational] | None = None):
        if nvars < 1:
            raise ValueError("nvars must be positive")
        clean: dict[Monomial, Fraction] = {}
        for m, c in (terms or {}).items():
            m = tuple(int(e) for e in m)
            if len(m) != nvars:
                raise ValueError(f"monomial {m} does not have {nvars} exponents")
            if any(e < 0 for e in m):
                raise ValueError(f"negative exponent in {m}")
            c = Fraction(c)
            if c:
                clean[m] = clean.get(m, Fraction(0)) + c
                if not clean[m]:
                    del clean[m]
        self.nvars = nvars
        self._terms = clean
        self._hash = None

    @classmethod
    def _raw(cls, nvars: int, terms: dict) -> "Polynomial":
        p = cls.__new__(cls)
        p.nvars = nvars
        p._terms = terms
        p._hash = None
        return p

    # constructors
    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls._raw(nvars, {})

    @classmethod
    def constant(cls, c: Rational, nvars: int) -> "Polynomial":
        c = Fraction(c)
        return cls._raw(nvars, {(0,) * nvars: c} if c else {})

    @classmethod
    def variable(cls, index: int, nvars: int) -> "Polynomial":
        """The polynomial ``x_index`` (1-based, like the text syntax)."""
        if not 1 <= index <= nvars:
            raise ValueError(f"variable x{index} out of range for nvars={nvars}")
        m = [0] * nvars
        m[index - 1] = 1
        return cls._raw(nvars, {tuple(m): Fraction(1)})

    @classmethod
    def monomial(cls, m: Monomial, c: Rational = 1) -> "Polynomial":
        return cls(len(m), {tuple(m): c})

    # container protocol
    def terms(self) -> Iterator[tuple[Monomial, Fraction]]:
        for m in sorted(self._terms, key=grlex_desc_key):
            yield m, self._terms[m]

    def as_dict(self) -> dict[Monomial, Fraction]:
        return dict(self._terms)

    def coeff(self, m: Monomial) -> Fraction:
        return self._terms.get(tuple(m), Fraction(0))

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def with_nvars(self, n: int) -> "Polynomial":
        """Same polynomial viewed over ``n`` variables (padding or dropping unused trailing ones)."""
        if n == self.nvars:
            return self
        if n < self.nvars and any(i > n for i in self.variables_used()):
            raise ValueError(f"polynomial uses variables beyond x{n}")
        pad = (0,) * max(0, n - self.nvars)
        return Polynomial._raw(n, {(m + pad)[:n]: c for m, c in self._terms.items()})

    def support(self) -> set[Monomial]:
        return set(self._terms)

    def total_degree(self) -> int:
        """Degree of the highest term; -1 for the zero polynomial."""
        return max((sum(m) for m in self._terms), default=-1)

    def min_degree(self) -> int:
        return min((sum(m) for m in self._terms), default=-1)

    def variables_used(self) -> set[int]:
        """1-based indices of variables appearing with a nonzero exponent."""
        return {i + 1 for m in self._terms for i, e in enumerate(m) if e}

    # arithmetic
    def _check(self, other: "Polynomial"):
        if self.nvars != other.nvars:
            raise ValueError(f"nvars mismatch: {self.nvars} vs {other.nvars}")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, Fraction)):
            return Polynomial.constant(other, self.nvars)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for m, c in other._terms.items():
            v = out.get(m, 0) + c
            if v:
                out[m] = v
            else:
                out.pop(m, None)
        return Polynomial._raw(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial._raw(self.nvars, {m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c: Rational) -> "Polynomial":
        c = Fraction(c)
        if not c:
            return Polynomial.zero(self.nvars)
        return Polynomial._raw(self.nvars, {m: v * c for m, v in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = _add_monomials(m1, m2)
                out[m] = out.get(m, 0) + c1 * c2
        return Polynomial._raw(self.nvars, {m: c for m, c in out.items() if c})

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise ValueError("exponent must be a nonnegative integer")
        result = Polynomial.constant(1, self.nvars)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def __eq__(self, other):
        if isinstance(other, Polynomial):
            return self.nvars == other.nvars and self._terms == other._terms
        if isinstance(other, (int, Fraction)):
            return self == Polynomial.constant(other, self.nvars)
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.nvars, frozenset(self._terms.items())))
        return self._hash

    def evaluate(self, point) -> Fraction:
        """Exact value at a point of rationals (floats are converted exactly)."""
        if len(point) != self.nvars:
            raise ValueError("point dimension mismatch")
        xs = [Fraction(v) for v in point]
        total = Fraction(0)
        for m, c in self._terms.items():
            t = c
            for x, e in zip(xs, m):
                if e:
                    t *= x**e
            total += t
        return total

    def to_text(self, names: list[str] | None = None) -> str:
        return _format_terms(((m, c) for m, c in self.terms()), rational_text, names)

    def __str__(self):
        return self.to_text()

    def __repr__(self):
        return f"Polynomial({self.nvars}, {self.to_text()!r})"

    def to_float(self, prec: int = 53) -> "FloatPolynomial":
        return FloatPolynomial.from_polynomial(self, prec)


def _format_terms(items: Iterable, fmt_coeff, names=None) -> str:
    pieces: list[str] = []
    for m, c in items:
        neg = c < 0
        mag = -c if neg else c
        mono = monomial_text(m, names)
        if not mono:
            body = fmt_coeff(mag)
        elif mag == 1:
            body = mono
        else:
            body = f"{fmt_coeff(mag)}*{mono}"
        if not pieces:
            pieces.append(f"-{body}" if neg else body)
        else:
            pieces.append(f"- {body}" if neg else f"+ {body}")
    return " ".join(pieces) if pieces else "0"


class FloatPolynomial:
    """Sparse polynomial whose coefficients are binary floats with ``prec`` mantissa bits.

    Coefficients are mpmath ``mpf`` values; every operation runs inside
    ``mpmath.workprec(prec)``.
    """

    __slots__ = ("nvars", "prec", "_terms")

    def __init__(self, nvars: int, terms: Mapping[Monomial, object] | None = None, prec: int = 53):
        self.nvars = nvars
        self.prec = prec
        out = {}
        with mpmath.workprec(prec):
            for m, c in (terms or {}).items():
                m = tuple(int(e) for e in m)
                if len(m) != nvars:
                    raise ValueError(f"monomial {m} does not have {nvars} exponents")
                c = _to_mpf(c)
                if not mpmath.isfinite(c):
                    raise ValueError("non-finite coefficient")
                if c:
                    out[m] = out.get(m, mpmath.mpf(0)) + c
        self._terms = {m: c for m, c in out.items() if c}

    @classmethod
    def from_polynomial(cls, p: Polynomial, prec: int = 53) -> "FloatPolynomial":
        return cls(p.nvars, p.as_dict(), prec)

    @classmethod
    def zero(cls, nvars: int, prec: int = 53) -> "FloatPolynomial":
        return cls(nvars, {}, prec)

    def terms(self):
        for m in sorted(self._terms, key=grlex_desc_key):
            yield m, self._terms[m]

    def as_dict(self):
        return dict(self._terms)

    def coeff(self, m: Monomial):
        return self._terms.get(tuple(m), mpmath.mpf(0))

    def __len__(self):
        return len(self._terms)

    def support(self, tau_coeff: float = DEFAULT_TAU_COEFF) -> set[Monomial]:
        return {m for m, c in self._terms.items() if abs(c) > tau_coeff}

    def total_degree(self, tau_coeff: float = 0.0) -> int:
        return max((sum(m) for m in self.support(tau_coeff)), default=-1)

    def variables_used(self, tau_coeff: float = 0.0) -> set[int]:
        return {i + 1 for m in self.support(tau_coeff) for i, e in enumerate(m) if e}

    def _binary(self, other, sign):
        if isinstance(other, Polynomial):
            other = FloatPolynomial.from_polynomial(other, self.prec)
        if other.nvars != self.nvars:
            raise ValueError(f"nvars mismatch: {self.nvars} vs {other.nvars}")
        prec = max(self.prec, other.prec)
        with mpmath.workprec(prec):
            out = dict(self._terms)
            for m, c in other._terms.items():
                out[m] = out.get(m, mpmath.mpf(0)) + sign * c
        return FloatPolynomial(self.nvars, out, prec)

    def __add__(self, other):
        return self._binary(other, 1)

    def __sub__(self, other):
        return self._binary(other, -1)

    def __neg__(self):
        return FloatPolynomial(self.nvars, {m: -c for m, c in self._terms.items()}, self.prec)

    def scale(self, c) -> "FloatPolynomial":
        with mpmath.workprec(self.prec):
            c = _to_mpf(c)
            return FloatPolynomial(self.nvars, {m: v * c for m, v in self._terms.items()}, self.prec)

    def __mul__(self, other):
        if not isinstance(other, (FloatPolynomial, Polynomial)):
            return self.scale(other)
        if isinstance(other, Polynomial):
            other = FloatPolynomial.from_polynomial(other, self.prec)
        if other.nvars != self.nvars:
            raise ValueError(f"nvars mismatch: {self.nvars} vs {other.nvars}")
        prec = max(self.prec, other.prec)
        out: dict = {}
        with mpmath.workprec(prec):
            for m1, c1 in self._terms.items():
                for m2, c2 in other._terms.items():
                    m = _add_monomials(m1, m2)
                    out[m] = out.get(m, mpmath.mpf(0)) + c1 * c2
        return FloatPolynomial(self.nvars, out, prec)

    def to_text(self, digits: int | None = None) -> str:
        digits = digits or max(17, int(self.prec * 0.30103) + 2)

        def fmt(c):
            return mpmath.nstr(c, digits, min_fixed=-math.inf, max_fixed=math.inf, strip_zeros=True)

        with mpmath.workprec(self.prec):
            return _format_terms(self.terms(), fmt)

    def __repr__(self):
        return f"FloatPolynomial({self.nvars}, {self.to_text(8)!r}, prec={self.prec})"


def _to_mpf(c):
    if isinstance(c, Fraction):
        return mpmath.mpf(c.numerator) / c.denominator
    return mpmath.mpf(c)


AnyPolynomial = Union[Polynomial, FloatPolynomial]


def expand_weighted_squares(terms: Iterable[tuple[Rational, Polynomial]], nvars: int | None = None) -> Polynomial:
    """Return ``sum(k * q**2 for k, q in terms)`` exactly.

    ``nvars`` is only needed when ``terms`` may be empty.
    """
    total = None
    for k, q in terms:
        sq = (q * q).scale(k)
        total = sq if total is None else total + sq
    if total is None:
        return Polynomial.zero(nvars or 1)
    return total


def coeff_l2_distance(f: AnyPolynomial, g: AnyPolynomial, prec: int | None = None) -> float:
    """Euclidean norm of the coefficient difference over the union of supports."""
    if f.nvars != g.nvars:
        raise ValueError(f"nvars mismatch: {f.nvars} vs {g.nvars}")
    if isinstance(f, Polynomial) and isinstance(g, Polynomial):
        sq = sum(((f - g).coeff(m) ** 2 for m in (f - g).support()), Fraction(0))
        return _sqrt_fraction(sq)
    if prec is None:
        prec = max(p.prec for p in (f, g) if isinstance(p, FloatPolynomial))
    with mpmath.workprec(prec):
        fd = {m: _to_mpf(c) for m, c in f.as_dict().items()}
        gd = {m: _to_mpf(c) for m, c in g.as_dict().items()}
        acc = mpmath.mpf(0)
        for m in fd.keys() | gd.keys():
            d = fd.get(m, 0) - gd.get(m, 0)
            acc += d * d
        return float(mpmath.sqrt(acc))


def _sqrt_fraction(x: Fraction) -> float:
    if not x:
        return 0.0
    with mpmath.workprec(80):
        return float(mpmath.sqrt(mpmath.mpf(x.numerator) / x.denominator))


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<var>[A-Za-z_]\w*)|(?P<op>\*\*|[-+*/^()]))"
)
_VARNAME = re.compile(r"x(\d+)$")


def _tokenize(text: str):
    pos = 0
    tokens = []
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup)
        kind = m.lastgroup
        val = m.group(kind)
        if kind == "op" and val == "**":
            val = "^"
        tokens.append((kind, val, start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str, nvars: int):
        self.tokens = _tokenize(text)
        self.i = 0
        self.nvars = nvars

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, val):
        kind, v, pos = self.take()
        if v != val:
            raise ParseError(f"expected {val!r}, found {v or 'end of input'!r}", pos)

    def parse(self) -> Polynomial:
        p = self.expr()
        kind, v, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {v!r}", pos)
        return p

    def expr(self) -> Polynomial:
        p = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self) -> Polynomial:
        p = self.unary()
        while self.peek()[1] in ("*", "/"):
            op, pos = self.take()[1:]
            q = self.unary()
            if op == "*":
                p = p * q
            else:
                if q.total_degree() > 0:
                    raise ParseError("division by a non-constant polynomial", pos)
                c = q.coeff((0,) * self.nvars)
                if not c:
                    raise ParseError("division by zero", pos)
                p = p.scale(1 / c)
        return p

    def unary(self) -> Polynomial:
        if self.peek()[1] == "-":
            self.take()
            return -self.unary()
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Polynomial:
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            kind, v, pos = self.take()
            paren = False
            if v == "(":
                paren = True
                kind, v, pos = self.take()
            if v == "-":
                raise ParseError("negative exponent", pos)
            if kind != "num" or not v.isdigit():
                raise ParseError(f"expected a nonnegative integer exponent, found {v!r}", pos)
            if paren:
                self.expect(")")
            return base ** int(v)
        return base

    def atom(self) -> Polynomial:
        kind, v, pos = self.take()
        if kind == "num":
            return Polynomial.constant(_parse_number(v), self.nvars)
        if kind == "var":
            m = _VARNAME.match(v)
            if not m:
                raise ParseError(f"unknown identifier {v!r}", pos)
            idx = int(m.group(1))
            if idx < 1 or idx > self.nvars:
                raise ParseError(f"variable {v} exceeds nvars={self.nvars}", pos)
            return Polynomial.variable(idx, self.nvars)
        if v == "(":
            p = self.expr()
            self.expect(")")
            return p
        raise ParseError(f"unexpected token {v or 'end of input'!r}", pos)


def _parse_number(text: str) -> Fraction:
    # Fraction parses decimal and exponent notation exactly: "2.99" -> 299/100
    return Fraction(text)


def parse_polynomial(text: str, nvars: int) -> Polynomial:
    """Parse polynomial text over variables ``x1..x{nvars}`` into expanded canonical form."""
    return _Parser(text, nvars).parse()


def infer_nvars(text: str) -> int:
    idx = [int(m) for m in re.findall(r"\bx(\d+)\b", text)]
    return max(idx, default=1)


# ---------------------------------------------------------------- problem files

def read_problem(path) -> tuple[Polynomial, dict[str, str]]:
    """Read a ``.poly`` file: ``# key: value`` metadata lines followed by polynomial text."""
    meta: dict[str, str] = {}
    body = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            s = line.strip()
            if s.startswith("#"):
                key, sep, val = s[1:].partition(":")
                if sep:
                    meta[key.strip()] = val.strip()
            elif s:
                body.append(s)
    text = " ".join(body)
    if not text:
        raise ValueError(f"{path}: no polynomial found")
    nvars = int(meta["nvars"]) if "nvars" in meta else infer_nvars(text)
    return parse_polynomial(text, nvars), meta


def write_problem(path, f: Polynomial, meta: Mapping[str, object] | None = None) -> None:
    lines = [f"# nvars: {f.nvars}"]
    for k, v in (meta or {}).items():
        if k != "nvars":
            lines.append(f"# {k}: {v}")
    lines.append(f.to_text())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
