"""Exact SOS certificates: the checker every other stage defers to, plus file I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .gram import GramRational
from .poly import Polynomial, expand_weighted_squares, parse_polynomial, rational_text
from .recover import exact_psd_check


@dataclass(frozen=True)
class SosCertificate:
    """``f = sum(k_i * q_i**2)`` with exact rational weights ``k_i >= 0``."""

    nvars: int
    squares: tuple = ()

    def __init__(self, nvars: int, squares: Iterable = ()):
        sq = tuple((Fraction(k), q) for k, q in squares)
        for _, q in sq:
            if q.nvars != nvars:
                raise ValueError(f"square has nvars={q.nvars}, certificate has {nvars}")
        object.__setattr__(self, "nvars", nvars)
        object.__setattr__(self, "squares", sq)

    def __len__(self):
        return len(self.squares)

    def __iter__(self):
        return iter(self.squares)

    def expand(self) -> Polynomial:
        return expand_weighted_squares(self.squares, self.nvars)


@dataclass
class Verdict:
    ok: bool
    identity_residual: Polynomial
    weight_violations: list = field(default_factory=list)


def check_certificate(f: Polynomial, cert: SosCertificate) -> Verdict:
    """Exact check that ``cert`` expands to ``f`` and every weight is nonnegative."""
    if f.nvars != cert.nvars:
        return Verdict(False, f, [("nvars", f.nvars, cert.nvars)])
    violations = [(i, k) for i, (k, _) in enumerate(cert.squares) if k < 0]
    residual = f - cert.expand()
    return Verdict(residual.is_zero() and not violations, residual, violations)


class NotPsdError(ValueError):
    def __init__(self, witness):
        super().__init__("Gram matrix is not positive semidefinite")
        self.witness = witness


def gram_to_certificate(G: GramRational) -> SosCertificate:
    """Weighted squares from an exact LDL^T of a PSD Gram matrix (zero pivots dropped)."""
    res = exact_psd_check(G)
    if not res.is_psd:
        raise NotPsdError(res.witness)
    fac = res.factors
    basis = G.basis
    m = len(basis)
    squares = []
    for i, d in enumerate(fac.D):
        if not d:
            continue
        coeffs = [Fraction(0)] * m
        for j in range(m):
            coeffs[fac.perm[j]] = fac.L[j][i]
        squares.append((d, basis.polynomial(coeffs)))
    return SosCertificate(basis.nvars, squares)


# ---------------------------------------------------------------- certificate files


def format_certificate(cert: SosCertificate) -> str:
    lines = [f"{cert.nvars} {len(cert)}"]
    for k, q in cert.squares:
        lines.append(f"{k.numerator}/{k.denominator}\t{q.to_text()}")
    return "\n".join(lines) + "\n"


def write_certificate(path, cert: SosCertificate) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_certificate(cert))


def parse_certificate(text: str) -> SosCertificate:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError("empty certificate")
    try:
        nvars, k = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise ValueError(f"bad certificate header {lines[0]!r}") from exc
    body = lines[1:]
    if len(body) != k:
        raise ValueError(f"header announces {k} squares, found {len(body)}")
    squares = []
    for ln in body:
        w, sep, poly = ln.partition("\t")
        if not sep:
            raise ValueError(f"missing tab separator in {ln!r}")
        squares.append((Fraction(w.strip()), parse_polynomial(poly, nvars)))
    return SosCertificate(nvars, squares)


def read_certificate(path) -> SosCertificate:
    with open(path, encoding="utf-8") as fh:
        return parse_certificate(fh.read())


def certificate_text(cert: SosCertificate) -> str:
    """Human-readable ``k*(q)^2 + ...`` form (also valid polynomial syntax)."""
    if not cert.squares:
        return "0"
    parts = []
    for k, q in cert.squares:
        parts.append(f"({q.to_text()})^2" if k == 1 else f"{rational_text(k)}*({q.to_text()})^2")
    return " + ".join(parts)
