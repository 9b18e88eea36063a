"""Continued fractions, exact LLL reduction, and simultaneous Diophantine approximation."""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

import mpmath

DEFAULT_ENUM_NODES = 200_000


def to_fraction(x) -> Fraction:
    """Exact rational value of an int, Fraction, float or mpf."""
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError("non-finite value")
        return Fraction(x)
    if isinstance(x, mpmath.mpf):
        if not mpmath.isfinite(x):
            raise ValueError("non-finite value")
        man, exp = mpf_man_exp(x)
        return Fraction(man * 2**exp) if exp >= 0 else Fraction(man, 2**-exp)
    return Fraction(x)


def mpf_man_exp(x) -> tuple[int, int]:
    """Signed integer mantissa and exponent with ``x == man * 2**exp``."""
    sign, man, exp, _ = x._mpf_
    man = int(man)
    return (-man if sign else man), int(exp)


def continued_fraction(x: Fraction, max_terms: int | None = None) -> list[int]:
    x = Fraction(x)
    out = []
    while max_terms is None or len(out) < max_terms:
        a = math.floor(x)
        out.append(a)
        frac = x - a
        if not frac:
            break
        x = 1 / frac
    return out


def rationalize(x, denom_bound: int) -> Fraction:
    """Last continued-fraction convergent of ``x`` whose denominator is ``<= denom_bound``.

    Satisfies ``|x - p/q| <= 1/(q * denom_bound)``.
    """
    if denom_bound < 1:
        raise ValueError("denom_bound must be >= 1")
    x = to_fraction(x)
    h0, h1 = 0, 1  # p_{-2}, p_{-1}
    k0, k1 = 1, 0  # q_{-2}, q_{-1}
    best = Fraction(math.floor(x))
    y = x
    while True:
        a = math.floor(y)
        h0, h1 = h1, a * h1 + h0
        k0, k1 = k1, a * k1 + k0
        if k1 > denom_bound:
            return best
        best = Fraction(h1, k1)
        frac = y - a
        if not frac:
            return best
        y = 1 / frac


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def lll_reduce(basis: Sequence[Sequence[int]], delta: Fraction = Fraction(3, 4)) -> list[list[int]]:
    """LLL-reduce the rows of an integer matrix with exact rational Gram-Schmidt data.

    Raises ``ValueError`` if the rows are linearly dependent.
    """
    delta = Fraction(delta)
    if not Fraction(1, 4) < delta <= 1:
        raise ValueError("delta must lie in (1/4, 1]")
    b = [[int(v) for v in row] for row in basis]
    n = len(b)
    if n == 0:
        return []
    mu = [[Fraction(0)] * n for _ in range(n)]
    B = [Fraction(0)] * n

    def dot(u, v):
        return sum(x * y for x, y in zip(u, v))

    def gso_row(k):
        for j in range(k):
            s = Fraction(dot(b[k], b[j]))
            for i in range(j):
                s -= mu[j][i] * mu[k][i] * B[i]
            mu[k][j] = s / B[j]
        s = Fraction(dot(b[k], b[k]))
        for j in range(k):
            s -= mu[k][j] ** 2 * B[j]
        B[k] = s
        if B[k] == 0:
            raise ValueError("lattice basis rows are linearly dependent")

    def red(k, l):
        if abs(mu[k][l]) > Fraction(1, 2):
            q = _round_half_up(mu[k][l])
            bl = b[l]
            b[k] = [x - q * y for x, y in zip(b[k], bl)]
            mu[k][l] -= q
            for i in range(l):
                mu[k][i] -= q * mu[l][i]

    gso_row(0)
    k, kmax = 1, 0
    while k < n:
        if k > kmax:
            kmax = k
            gso_row(k)
        red(k, k - 1)
        if B[k] < (delta - mu[k][k - 1] ** 2) * B[k - 1]:
            # swap b_k and b_{k-1}
            m = mu[k][k - 1]
            Bn = B[k] + m * m * B[k - 1]
            b[k], b[k - 1] = b[k - 1], b[k]
            for j in range(k - 1):
                mu[k][j], mu[k - 1][j] = mu[k - 1][j], mu[k][j]
            mu[k][k - 1] = m * B[k - 1] / Bn
            B[k] = B[k - 1] * B[k] / Bn
            B[k - 1] = Bn
            for i in range(k + 1, kmax + 1):
                t = mu[i][k]
                mu[i][k] = mu[i][k - 1] - m * t
                mu[i][k - 1] = t + mu[k][k - 1] * mu[i][k]
            k = max(1, k - 1)
        else:
            for l in range(k - 2, -1, -1):
                red(k, l)
            k += 1
    return b


def gram_schmidt(basis: Sequence[Sequence[int]]):
    """Exact ``(mu, B)``: Gram-Schmidt coefficients and squared norms of the orthogonalised rows."""
    n = len(basis)
    mu = [[Fraction(0)] * n for _ in range(n)]
    B = [Fraction(0)] * n
    for k in range(n):
        for j in range(k):
            s = Fraction(sum(x * y for x, y in zip(basis[k], basis[j])))
            for i in range(j):
                s -= mu[j][i] * mu[k][i] * B[i]
            mu[k][j] = s / B[j]
        s = Fraction(sum(x * x for x in basis[k]))
        for j in range(k):
            s -= mu[k][j] ** 2 * B[j]
        B[k] = s
    return mu, B


def lovasz_ok(basis, delta=Fraction(3, 4)) -> bool:
    """Post-hoc check of size reduction and the Lovasz condition."""
    mu, B = gram_schmidt(basis)
    n = len(basis)
    for k in range(1, n):
        if any(abs(mu[k][j]) > Fraction(1, 2) for j in range(k)):
            return False
        if B[k] < (Fraction(delta) - mu[k][k - 1] ** 2) * B[k - 1]:
            return False
    return True


def _enumerate_short(basis, radius_sq: Fraction, max_nodes: int):
    """Yield lattice vectors ``sum(u_i b_i)`` with squared norm <= radius_sq (Fincke-Pohst)."""
    n = len(basis)
    mu, B = gram_schmidt(basis)
    dim = len(basis[0])
    u = [0] * n
    nodes = 0

    def rec(level, partial):
        nonlocal nodes
        if level < 0:
            yield [sum(u[i] * basis[i][c] for i in range(n)) for c in range(dim)]
            return
        center = -sum((u[i] * mu[i][level] for i in range(level + 1, n)), Fraction(0))
        rem = radius_sq - partial
        if rem < 0:
            return
        t = rem / B[level]
        s = math.isqrt(math.ceil(t)) + 1
        lo = math.ceil(center - s)
        hi = math.floor(center + s)
        for val in range(lo, hi + 1):
            d = (val - center) ** 2 * B[level]
            if d > rem:
                continue
            nodes += 1
            if nodes > max_nodes:
                raise _EnumBudget
            u[level] = val
            yield from rec(level - 1, partial + d)
        u[level] = 0

    try:
        yield from rec(n - 1, Fraction(0))
    except _EnumBudget:
        return


class _EnumBudget(Exception):
    pass


def simultaneous_diophantine(
    v: Sequence,
    Q: int,
    lll_delta: Fraction = Fraction(3, 4),
    max_nodes: int = DEFAULT_ENUM_NODES,
    accept=None,
) -> tuple[int, list[int]]:
    """Common denominator ``q <= Q`` and integers ``p`` minimising ``max_i |q*v_i - p_i|``.

    Works on the lattice spanned by ``(lam, S*v_1, ..., S*v_n)`` and ``S*e_i``
    where ``S`` clears every denominator of ``v`` (floats are dyadic, so the
    lattice is exact).  The LLL-reduced basis seeds the search; a bounded
    enumeration over the reduced basis then certifies the optimum.  If the
    node budget runs out, the best vector found so far is returned.
    Ties go to the smallest ``q``.  ``accept(q, p)`` may end the search early
    once a good enough answer is known (optimality is then not certified).
    """
    if Q < 1:
        raise ValueError("Q must be >= 1")
    vals = [to_fraction(x) for x in v]
    n = len(vals)
    if n == 0:
        return 1, []
    S = 1
    for x in vals:
        S = S * x.denominator // math.gcd(S, x.denominator)
    a = [int(x * S) for x in vals]

    def score(q):
        p = [_round_half_up(Fraction(q * ai, S)) for ai in a]
        err = max(abs(q * ai - pi * S) for ai, pi in zip(a, p))
        return err, q, p

    best = score(1)
    if best[0] == 0:
        return 1, best[2]

    # balance q*lam <= lam*Q against the Dirichlet error scale S*Q^(-1/n)
    qroot = max(1, round(Q ** (1.0 / n)))
    lam = max(1, S // (Q * qroot))
    rows = [[lam] + a]
    for i in range(n):
        r = [0] * (n + 1)
        r[i + 1] = S
        rows.append(r)
    reduced = lll_reduce(rows, lll_delta)

    def consider(x):
        nonlocal best
        x0 = x[0]
        if x0 == 0:
            return
        if x0 < 0:
            x = [-c for c in x]
            x0 = -x0
        q = x0 // lam
        if q > Q:
            return
        err = max(abs(c) for c in x[1:])
        p = [(q * ai - xi) // S for ai, xi in zip(a, x[1:])]
        if (err, q) < (best[0], best[1]):
            best = (err, q, p)

    for row in reduced:
        consider(row)
    if accept is not None and accept(best[1], best[2]):
        return best[1], best[2]
    radius_sq = Fraction((lam * Q) ** 2 + n * best[0] ** 2)
    for x in _enumerate_short(reduced, radius_sq, max_nodes):
        if abs(x[0]) <= lam * Q and max(abs(c) for c in x[1:]) <= best[0]:
            consider(x)
            if accept is not None and accept(best[1], best[2]):
                break
    return best[1], best[2]


def brute_force_diophantine(v: Sequence, Q: int) -> tuple[Fraction, int]:
    """Exhaustive oracle: ``(min error, smallest q attaining it)`` over ``1 <= q <= Q``."""
    vals = [to_fraction(x) for x in v]
    best = None
    for q in range(1, Q + 1):
        err = max(abs(q * x - _round_half_up(q * x)) for x in vals) if vals else Fraction(0)
        if best is None or err < best[0]:
            best = (err, q)
    return best
