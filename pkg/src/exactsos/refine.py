"""Damped Gauss-Newton refinement of a factored SOS representation ``f ~ sum_i l_i(x)^2``.

The factor coefficients are held in fixed point: Python integers scaled by
``2**precision_bits``.  Residuals, the backward error and acceptance tests are
computed exactly at that precision; each correction step is the damped
least-squares solution from an SVD of the float64 Jacobian (a mixed-precision
iterative refinement, so the residual can shrink far below double precision).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from .gram import GramNumeric, MonomialBasis
from .lattice import mpf_man_exp
from .poly import FloatPolynomial, Polynomial, grlex_key

log = logging.getLogger(__name__)


@dataclass
class RefineConfig:
    tol_tau: float = 1e-15
    max_iters: int = 50
    precision_bits: int = 256
    damping_init: float = 1e-10  # relative to the largest squared singular value
    damping_growth: float = 10.0
    damping_shrink: float = 0.1
    damping_max: float = 1e12

    def __post_init__(self):
        if self.tol_tau <= 0:
            raise ValueError("tol_tau must be positive")
        if self.precision_bits < 53:
            raise ValueError("precision_bits must be >= 53")


@dataclass
class FactorMatrix:
    """``k`` coefficient vectors over ``basis``; ``data[i, a] / 2**frac_bits`` is ``c_{i,a}``."""

    basis: MonomialBasis
    data: np.ndarray  # object array of Python ints, shape (k, m)
    frac_bits: int = 256
    extended: tuple = ()  # monomials added to cover the candidate

    @property
    def k(self) -> int:
        return self.data.shape[0]

    @classmethod
    def from_values(cls, basis: MonomialBasis, rows: Sequence[Sequence], frac_bits: int = 256) -> "FactorMatrix":
        m = len(basis)
        k = len(rows)
        data = np.empty((k, m), dtype=object)
        for i, row in enumerate(rows):
            if len(row) != m:
                raise ValueError("factor row length does not match basis")
            for a, v in enumerate(row):
                data[i, a] = _to_fixed(v, frac_bits)
        return cls(basis, data, frac_bits)

    def values(self, prec: int | None = None) -> list[list]:
        prec = prec or self.frac_bits
        with mpmath.workprec(prec):
            return [[mpmath.ldexp(mpmath.mpf(int(v)), -self.frac_bits) for v in row] for row in self.data]

    def to_float(self) -> np.ndarray:
        return np.array([[math.ldexp(int(v), -self.frac_bits) if v else 0.0 for v in row] for row in self.data], dtype=float).reshape(self.data.shape)

    def squares(self, prec: int | None = None) -> list[FloatPolynomial]:
        prec = prec or self.frac_bits
        return [self.basis.float_polynomial(row, prec) for row in self.values(prec)]


def _to_fixed(v, bits: int) -> int:
    if isinstance(v, (int, Fraction)):
        return round(Fraction(v) * (1 << bits))
    if isinstance(v, float):
        return round(Fraction(v) * (1 << bits))
    if isinstance(v, mpmath.mpf):
        man, exp = mpf_man_exp(v)
        e = exp + bits
        return man << e if e >= 0 else round(Fraction(man, 1 << -e))
    return round(Fraction(v) * (1 << bits))


def initial_factor(squares: Sequence, basis: MonomialBasis, frac_bits: int = 256, extend: bool = True) -> FactorMatrix:
    """Fold weights into the squares: row ``i`` holds ``sqrt(k_i) * coeffs(q_i)``.

    ``squares`` is a sequence of ``(weight, q)`` with ``q`` a Polynomial or
    FloatPolynomial.  Monomials outside ``basis`` extend it (recorded in
    ``extended``) unless ``extend`` is false, in which case ``KeyError`` is raised.
    """
    extra = set()
    for k, q in squares:
        if k < 0:
            raise ValueError("negative weight in candidate")
        extra |= {m for m in q.as_dict() if m not in basis}
    if extra:
        if not extend:
            raise KeyError(f"candidate monomials outside basis: {sorted(extra)}")
        basis = basis.extend(extra)
    prec = frac_bits + 16
    rows = []
    with mpmath.workprec(prec):
        for k, q in squares:
            if isinstance(k, Fraction):
                s = mpmath.sqrt(mpmath.mpf(k.numerator) / k.denominator)
            else:
                s = mpmath.sqrt(mpmath.mpf(k))
            row = [mpmath.mpf(0)] * len(basis)
            for mono, c in q.as_dict().items():
                cm = mpmath.mpf(c.numerator) / c.denominator if isinstance(c, Fraction) else mpmath.mpf(c)
                row[basis.index(mono)] = s * cm
            rows.append(row)
    fm = FactorMatrix.from_values(basis, rows, frac_bits)
    fm.extended = tuple(sorted(extra, key=grlex_key))
    return fm


class _Problem:
    """Index bookkeeping shared by residual and Jacobian evaluation."""

    def __init__(self, f: Polynomial, basis: MonomialBasis, frac_bits: int):
        if f.nvars != basis.nvars:
            raise ValueError("nvars mismatch between target and basis")
        m = len(basis)
        monos = {tuple(x + y for x, y in zip(basis[a], basis[b])) for a in range(m) for b in range(m)}
        monos |= f.support()
        self.monomials = sorted(monos, key=grlex_key)
        row_of = {mo: r for r, mo in enumerate(self.monomials)}
        self.pair_row = np.zeros((m, m), dtype=np.int64)
        for a in range(m):
            for b in range(m):
                self.pair_row[a, b] = row_of[tuple(x + y for x, y in zip(basis[a], basis[b]))]
        self.R = len(self.monomials)
        self.m = m
        self.frac_bits = frac_bits
        scale = 1 << (2 * frac_bits)
        self.f_scaled = [round(f.coeff(mo) * scale) for mo in self.monomials]
        self.A_idx, self.B_idx = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        self.A_idx = self.A_idx.ravel()
        self.B_idx = self.B_idx.ravel()
        self.R_idx = self.pair_row.ravel()

    def residual_scaled(self, data: np.ndarray) -> list[int]:
        """Residual coefficients times ``2**(2*frac_bits)`` (exact integers)."""
        G = data.T.dot(data) if data.shape[0] else np.zeros((self.m, self.m), dtype=object)
        r = [-v for v in self.f_scaled]
        pr = self.pair_row
        for a in range(self.m):
            Ga = G[a]
            pa = pr[a]
            for b in range(self.m):
                r[pa[b]] += int(Ga[b])
        return r

    def theta(self, r_scaled: Sequence[int]) -> float:
        sq = sum(v * v for v in r_scaled)
        return _scaled_sqrt(sq, 2 * self.frac_bits)

    def jacobian(self, Cf: np.ndarray) -> np.ndarray:
        """d r_beta / d c_{i,a} = 2 * sum_b c_{i,b} [b_a + b_b = beta]  (float64)."""
        k, m = Cf.shape
        J = np.zeros((self.R, k * m))
        for i in range(k):
            np.add.at(J, (self.R_idx, i * m + self.A_idx), 2.0 * Cf[i, self.B_idx])
        return J


def _scaled_sqrt(sq: int, shift: int) -> float:
    """sqrt(sq) / 2**shift as a float, accurate even when the ratio is tiny."""
    if sq == 0:
        return 0.0
    extra = 128
    root = math.isqrt(sq << (2 * extra))
    return math.ldexp(float(root >> max(0, root.bit_length() - 60)), max(0, root.bit_length() - 60) - extra - shift)


def backward_error(f: Polynomial, L: FactorMatrix) -> float:
    """``|| coeff(sum_i l_i^2 - f) ||_2`` at the factor's fixed-point precision."""
    prob = _Problem(f, L.basis, L.frac_bits)
    return prob.theta(prob.residual_scaled(L.data))


def residual_vector(f: Polynomial, L: FactorMatrix) -> tuple[list, list[Fraction]]:
    """``(monomials, residual)`` with exact rational residual entries."""
    prob = _Problem(f, L.basis, L.frac_bits)
    r = prob.residual_scaled(L.data)
    den = 1 << (2 * L.frac_bits)
    return prob.monomials, [Fraction(v, den) for v in r]


def jacobian(f: Polynomial, L: FactorMatrix) -> np.ndarray:
    prob = _Problem(f, L.basis, L.frac_bits)
    return prob.jacobian(L.to_float())


def factor_to_gram(L: FactorMatrix, prec: int | None = None) -> GramNumeric:
    """``G = sum_i c_i c_i^T`` over the factor's basis, rounded to ``prec`` bits."""
    prec = prec or L.frac_bits
    m = len(L.basis)
    if L.k:
        G = L.data.T.dot(L.data)
    else:
        G = np.zeros((m, m), dtype=object)
    shift = -2 * L.frac_bits
    with mpmath.workprec(prec):
        rows = [[mpmath.ldexp(mpmath.mpf(int(G[a, b])), shift) for b in range(m)] for a in range(m)]
    return GramNumeric(L.basis, rows, prec)


@dataclass
class RefineOutcome:
    L_refined: FactorMatrix
    gram: GramNumeric
    theta_final: float
    iterations: int
    converged: bool
    theta_history: list = field(default_factory=list)
    reason: str = ""


def gauss_newton(f: Polynomial, L0: FactorMatrix, cfg: RefineConfig | None = None, deadline: float | None = None) -> RefineOutcome:
    """Refine ``L0`` until the backward error drops below ``cfg.tol_tau``.

    Only steps that strictly decrease the backward error are accepted, so
    ``theta_history`` is non-increasing.  ``deadline`` is a ``time.monotonic``
    timestamp checked once per iteration.
    """
    cfg = cfg or RefineConfig()
    bits = cfg.precision_bits
    if L0.frac_bits != bits:
        shift = bits - L0.frac_bits
        data = np.vectorize(lambda v: v << shift if shift >= 0 else v >> -shift, otypes=[object])(L0.data)
        L0 = FactorMatrix(L0.basis, data, bits, L0.extended)
    prob = _Problem(f, L0.basis, bits)
    C = L0.data.copy()
    r = prob.residual_scaled(C)
    theta = prob.theta(r)
    history = [theta]
    mu_rel = cfg.damping_init
    reason = "max_iters"
    it = 0
    k, m = C.shape
    if k == 0 or m == 0:
        reason = "empty factor"
    while k and m:
        if theta < cfg.tol_tau:
            reason = "converged"
            break
        if it >= cfg.max_iters:
            break
        if deadline is not None and time.monotonic() > deadline:
            reason = "timeout"
            break
        it += 1
        Cf = np.array([[math.ldexp(int(v), -bits) for v in row] for row in C], dtype=float)
        J = prob.jacobian(Cf)
        rf = np.array([math.ldexp(v, -2 * bits) if abs(v).bit_length() < 1000 + 2 * bits else float("inf") for v in r])
        if not (np.all(np.isfinite(J)) and np.all(np.isfinite(rf))):
            reason = "non-finite"
            break
        U, s, Vt = np.linalg.svd(J, full_matrices=False)
        if s.size == 0 or s[0] == 0:
            reason = "zero jacobian"
            break
        Utr = U.T @ rf
        smax2 = s[0] ** 2
        accepted = False
        while True:
            mu = mu_rel * smax2
            if mu_rel < 1e-30:
                keep = s > s[0] * 1e-13
                coef = np.where(keep, Utr / np.where(keep, s, 1.0), 0.0)
            else:
                coef = Utr * s / (s * s + mu)
            delta = -(Vt.T @ coef)
            if not np.all(np.isfinite(delta)):
                reason = "non-finite"
                break
            step = np.array([_to_fixed(float(d), bits) for d in delta], dtype=object).reshape(k, m)
            C_new = C + step
            r_new = prob.residual_scaled(C_new)
            theta_new = prob.theta(r_new)
            if theta_new < theta:
                C, r, theta = C_new, r_new, theta_new
                mu_rel = mu_rel * cfg.damping_shrink
                accepted = True
                break
            mu_rel = max(mu_rel, 1e-16) * cfg.damping_growth
            if mu_rel > cfg.damping_max:
                reason = "damping overflow"
                break
        if not accepted:
            break
        history.append(theta)
    converged = theta < cfg.tol_tau
    if converged:
        reason = "converged"
    L = FactorMatrix(L0.basis, C, bits, L0.extended)
    return RefineOutcome(L, factor_to_gram(L), theta, it, converged, history, reason)


def float_gauss_newton(
    f: Polynomial,
    basis: MonomialBasis,
    C0: np.ndarray,
    max_iters: int = 100,
    tol: float = 1e-12,
    deadline: float | None = None,
) -> tuple[np.ndarray, float]:
    """Plain float64 damped Gauss-Newton; used for cheap restarts before high-precision refinement."""
    prob = _Problem(f, basis, 0)
    fvec = np.array([float(f.coeff(mo)) for mo in prob.monomials])
    pair_row = prob.pair_row
    m = len(basis)
    P = np.zeros((prob.R, m * m))
    P[pair_row.ravel(), np.arange(m * m)] = 1.0

    def resid(C):
        G = C.T @ C
        return P @ G.ravel() - fvec

    C = np.array(C0, dtype=float)
    r = resid(C)
    theta = float(np.linalg.norm(r))
    mu_rel = 1e-6
    for _ in range(max_iters):
        if theta < tol or (deadline is not None and time.monotonic() > deadline):
            break
        J = prob.jacobian(C)
        U, s, Vt = np.linalg.svd(J, full_matrices=False)
        if s.size == 0 or s[0] == 0:
            break
        Utr = U.T @ r
        improved = False
        for _ in range(30):
            coef = Utr * s / (s * s + mu_rel * s[0] ** 2)
            Cn = C - (Vt.T @ coef).reshape(C.shape)
            rn = resid(Cn)
            tn = float(np.linalg.norm(rn))
            if tn < theta:
                C, r, theta = Cn, rn, tn
                mu_rel = max(mu_rel * 0.1, 1e-15)
                improved = True
                break
            mu_rel *= 10
        if not improved:
            break
    return C, theta
