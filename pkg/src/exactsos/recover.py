"""Exact rational recovery of a PSD Gram matrix from a refined numerical one.

Two regimes, chosen by numerical rank:

* interior: rationalize every entry, project exactly onto the matching
  affine space, then confirm PSD with an exact pivoted LDL^T;
* boundary: truncated pivoted LDL^T keeps the ``r`` dominant pivots, each
  retained column is recovered as a rational vector by simultaneous
  Diophantine approximation, and only the middle ``r x r`` factor is then
  solved exactly against the matching system.

Nothing returned from here is unsound: both paths end with an exact identity
check and an exact PSD check, and raise ``RecoveryError`` otherwise.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

from .gram import BasisTooSmall, GramNumeric, GramRational, LinearSystem, MonomialBasis, gram_to_poly, matching_system
from .lattice import rationalize, simultaneous_diophantine, to_fraction
from .linalg import InconsistentSystem, project_affine
from .poly import Polynomial

log = logging.getLogger(__name__)


class RecoveryError(RuntimeError):
    pass


@dataclass
class RecoverConfig:
    rank_eps: float = 1e-8
    denom_bound: int = 10**6
    lll_delta: Fraction = Fraction(3, 4)
    max_denom_escalations: int = 3
    vector_tol: float = 1e-9
    enum_nodes: int = 2_000
    boundary_time_s: float = 2.0  # cap on one boundary attempt before the kernel fallback

    def __post_init__(self):
        if self.rank_eps <= 0:
            raise ValueError("rank_eps must be positive")
        if self.denom_bound < 1:
            raise ValueError("denom_bound must be >= 1")
        self.lll_delta = Fraction(self.lll_delta)

    def denominator_ladder(self) -> list[int]:
        """10^3, 10^6, ... up to ``denom_bound``, then ``max_denom_escalations`` further x10^3 steps."""
        ladder = []
        q = 1000
        while q < self.denom_bound:
            ladder.append(q)
            q *= 1000
        ladder.append(self.denom_bound)
        for _ in range(self.max_denom_escalations):
            ladder.append(ladder[-1] * 1000)
        return ladder


# ---------------------------------------------------------------- exact PSD check


@dataclass
class LdltFactors:
    """``P G P^T = L D L^T`` with ``P`` given by ``perm`` (row i of PGP^T is row perm[i] of G)."""

    perm: list[int]
    L: list[list[Fraction]]
    D: list[Fraction]

    @property
    def rank(self) -> int:
        return sum(1 for d in self.D if d)


@dataclass
class PsdResult:
    is_psd: bool
    factors: LdltFactors | None = None
    witness: list[Fraction] | None = None

    def __iter__(self):
        yield self.is_psd
        yield self.factors if self.is_psd else self.witness


def _matrix_entries(G) -> list[list[Fraction]]:
    if isinstance(G, GramRational):
        return [list(r) for r in G.entries]
    return [[Fraction(v) for v in r] for r in G]


def exact_psd_check(G) -> PsdResult:
    """Exact PSD test by symmetric LDL^T with largest-diagonal pivoting.

    Accepts a ``GramRational`` or a square list of rationals.  On failure the
    result carries a rational witness ``y`` with ``y^T G y < 0``.
    """
    A = _matrix_entries(G)
    m = len(A)
    perm = list(range(m))
    L = [[Fraction(int(i == j)) for j in range(m)] for i in range(m)]
    D = [Fraction(0)] * m
    for k in range(m):
        diag = [(A[i][i], i) for i in range(k, m)]
        dmin, imin = min(diag)
        if dmin < 0:
            w = [Fraction(0)] * m
            w[imin] = Fraction(1)
            return PsdResult(False, witness=_witness(L, perm, k, w))
        dmax, p = max(diag, key=lambda t: (t[0], -t[1]))
        if dmax == 0:
            for i in range(k, m):
                for j in range(k, m):
                    if i != j and A[i][j]:
                        # every remaining diagonal is zero, so [[0, a], [a, 0]] gives -2|a|
                        a = A[i][j]
                        w = [Fraction(0)] * m
                        w[i] = Fraction(1)
                        w[j] = Fraction(-1 if a > 0 else 1)
                        return PsdResult(False, witness=_witness(L, perm, k, w))
            break
        if p != k:
            A[k], A[p] = A[p], A[k]
            for row in A:
                row[k], row[p] = row[p], row[k]
            perm[k], perm[p] = perm[p], perm[k]
            for j in range(k):
                L[k][j], L[p][j] = L[p][j], L[k][j]
        d = A[k][k]
        D[k] = d
        col = [A[i][k] / d for i in range(k + 1, m)]
        for idx, i in enumerate(range(k + 1, m)):
            L[i][k] = col[idx]
        for idx_i, i in enumerate(range(k + 1, m)):
            li = col[idx_i]
            if not li:
                continue
            Ai = A[i]
            Ak = A[k]
            for j in range(k + 1, m):
                if Ak[j]:
                    Ai[j] -= li * Ak[j]
        for i in range(k + 1, m):
            A[i][k] = A[k][i] = Fraction(0)
    return PsdResult(True, factors=LdltFactors(perm, L, D))


def _witness(L, perm, k, w):
    """Map a trailing-block vector ``w`` back to original coordinates: ``y = P^T L^{-T} w``."""
    m = len(L)
    z = list(w)
    for i in range(k - 1, -1, -1):
        z[i] = w[i] - sum((L[j][i] * z[j] for j in range(i + 1, m)), Fraction(0))
    y = [Fraction(0)] * m
    for i, pi in enumerate(perm):
        y[pi] = z[i]
    return y


def quadratic_form(G, y) -> Fraction:
    A = _matrix_entries(G)
    return sum((y[i] * A[i][j] * y[j] for i in range(len(A)) for j in range(len(A)) if A[i][j]), Fraction(0))


# ---------------------------------------------------------------- numerical factorizations


def pivoted_ldl_numeric(G: GramNumeric, rank_eps: float, max_rank: int | None = None):
    """Truncated pivoted LDL^T at the Gram matrix's precision.

    Stops when the largest remaining diagonal is ``<= rank_eps * first pivot``.
    Returns ``(perm, L, D)`` with ``L`` an ``m x r`` list (rows in permuted order).
    """
    m = G.size
    with mpmath.workprec(G.prec):
        A = [list(r) for r in G.entries]
        perm = list(range(m))
        L = [[mpmath.mpf(0)] * m for _ in range(m)]
        D = []
        first = None
        for k in range(m):
            if max_rank is not None and k >= max_rank:
                break
            p = max(range(k, m), key=lambda i: A[i][i])
            dmax = A[p][p]
            if first is None:
                first = dmax
            if dmax <= 0 or dmax <= rank_eps * first:
                break
            if p != k:
                A[k], A[p] = A[p], A[k]
                for row in A:
                    row[k], row[p] = row[p], row[k]
                perm[k], perm[p] = perm[p], perm[k]
                L[k], L[p] = L[p], L[k]
            d = A[k][k]
            D.append(d)
            L[k][k] = mpmath.mpf(1)
            for i in range(k + 1, m):
                L[i][k] = A[i][k] / d
            for i in range(k + 1, m):
                li = L[i][k]
                for j in range(k + 1, m):
                    A[i][j] -= li * A[k][j]
        r = len(D)
        L = [row[:r] for row in L]
    return perm, L, D


def numerical_rank(G: GramNumeric, rank_eps: float = 1e-8) -> int:
    """Number of pivots above ``rank_eps`` times the largest one in a pivoted LDL^T."""
    if G.size == 0:
        return 0
    return len(pivoted_ldl_numeric(G, rank_eps)[2])


def prune_redundant(G: GramNumeric, f: Polynomial, rank_eps: float) -> GramNumeric:
    """Drop rows/columns whose entries are all below ``rank_eps`` in magnitude.

    The pruning is skipped when the smaller basis could no longer express ``f``.
    """
    m = G.size
    keep = [i for i in range(m) if max(abs(v) for v in G.entries[i]) >= rank_eps]
    if len(keep) == m:
        return G
    pruned = G.restrict(keep)
    try:
        matching_system(f, pruned.basis)
    except BasisTooSmall:
        return G
    return pruned


# ---------------------------------------------------------------- diagnostics


def sufficiency_bound(G_N: GramNumeric, sys: LinearSystem, tau: float) -> float:
    """``||G_N||_F^2 * kappa_2(A)^2 * tau^2`` (float estimate; diagnostic only)."""
    A = np.array([[float(v) for v in row] for row in sys.dense()], dtype=float)
    if A.size == 0:
        return 0.0
    s = np.linalg.svd(A, compute_uv=False)
    s = s[s > s[0] * 1e-14]
    kappa = s[0] / s[-1]
    gn = G_N.to_numpy()
    return float(np.sum(gn * gn) * kappa**2 * tau**2)


# ---------------------------------------------------------------- interior case


def interior_recover(
    f: Polynomial,
    G_N: GramNumeric,
    sys: LinearSystem | None = None,
    cfg: RecoverConfig | None = None,
    tau: float | None = None,
    diagnostics: dict | None = None,
    deadline: float | None = None,
) -> GramRational:
    """Rationalize + exact projection + exact PSD check, escalating the denominator bound."""
    cfg = cfg or RecoverConfig()
    sys = sys or matching_system(f, G_N.basis)
    diag = diagnostics if diagnostics is not None else {}
    m = G_N.size
    if tau is not None:
        diag["sufficiency_bound"] = sufficiency_bound(G_N, sys, tau)
    for bound in cfg.denominator_ladder():
        _deadline_check(deadline)
        G0 = [[Fraction(0)] * m for _ in range(m)]
        for i in range(m):
            for j in range(i, m):
                G0[i][j] = G0[j][i] = rationalize(G_N.entries[i][j], bound)
        try:
            G = _project(GramRational(G_N.basis, G0), sys)
        except InconsistentSystem as exc:
            raise RecoveryError(f"matching system is inconsistent: {exc}") from exc
        res = exact_psd_check(G)
        diag.setdefault("attempts", []).append({"denom_bound": bound, "psd": res.is_psd})
        if res.is_psd:
            if gram_to_poly(G) != f:
                raise RecoveryError("projected Gram matrix does not reproduce f")
            diag["denom_bound"] = bound
            return G
    raise RecoveryError(f"no PSD rational projection up to denominator bound {cfg.denominator_ladder()[-1]}")


def _project(G0: GramRational, sys: LinearSystem) -> GramRational:
    y = project_affine(G0.vec(), sys.rows, sys.rhs, sys.frobenius_weights_inverse())
    return GramRational.from_vec(G0.basis, y)


# ---------------------------------------------------------------- boundary case


def _deadline_check(deadline):
    if deadline is not None and time.monotonic() > deadline:
        raise RecoveryError("deadline reached during recovery")


def _recover_vector(values, cfg: RecoverConfig, deadline: float | None = None) -> list[Fraction]:
    """Rational vector with one common denominator close to ``values`` (within ``vector_tol``)."""
    vals = [to_fraction(v) for v in values]
    if not vals:
        return []
    tol = Fraction(cfg.vector_tol) * max(1, max(abs(v) for v in vals))

    def close(q, p):
        return all(abs(Fraction(pi, q) - v) <= tol for pi, v in zip(p, vals))

    for Q in cfg.denominator_ladder():
        _deadline_check(deadline)
        # cheap try: common denominator of the per-entry convergents
        q = 1
        for v in vals:
            d = rationalize(v, Q).denominator
            q = q * d // math.gcd(q, d)
            if q > Q:
                break
        if q <= Q:
            p = [round(v * q) for v in vals]
            if close(q, p):
                return [Fraction(pi, q) for pi in p]
        q, p = simultaneous_diophantine(vals, Q, cfg.lll_delta, cfg.enum_nodes, accept=close)
        if close(q, p):
            return [Fraction(pi, q) for pi in p]
    raise RecoveryError("no rational vector within tolerance for a retained LDL^T column")


def _solve_middle(f: Polynomial, basis: MonomialBasis, Lt: list, S0: list, cfg: RecoverConfig, deadline=None) -> GramRational:
    """Exact ``G = Lt S Lt^T`` matching ``f`` with ``S`` nearest to ``S0`` and PSD.

    ``Lt`` is ``m x r`` rational, ``S0`` an ``r x r`` numeric target.
    """
    m = len(basis)
    r = len(S0)
    columns = [basis.polynomial([Lt[i][j] for i in range(m)]) for j in range(r)]
    unknowns = [(a, b) for a in range(r) for b in range(a, r)]
    by_mono: dict = {}
    for u, (a, b) in enumerate(unknowns):
        prod = columns[a] * columns[b]
        w = 1 if a == b else 2
        for mono, c in prod.as_dict().items():
            row = by_mono.setdefault(mono, {})
            row[u] = row.get(u, 0) + w * c
    for mono in f.support():
        by_mono.setdefault(mono, {})
    monos = sorted(by_mono)
    rows = [by_mono[mo] for mo in monos]
    rhs = [f.coeff(mo) for mo in monos]
    winv = [Fraction(1) if a == b else Fraction(1, 2) for a, b in unknowns]
    # smallest denominators first: any exact PSD solution will do, and small ones keep certificates short
    S = None
    for bound in cfg.denominator_ladder():
        _deadline_check(deadline)
        y0 = [rationalize(S0[a][b], bound) for a, b in unknowns]
        try:
            s = project_affine(y0, rows, rhs, winv)
        except InconsistentSystem as exc:
            raise RecoveryError(f"identity not attainable within the rank-{r} structure: {exc}") from exc
        cand = [[Fraction(0)] * r for _ in range(r)]
        for (a, b), val in zip(unknowns, s):
            cand[a][b] = cand[b][a] = val
        if exact_psd_check(cand).is_psd:
            S = cand
            break
    if S is None:
        raise RecoveryError("repaired middle factor is not PSD")
    LS = [[sum((Lt[i][a] * S[a][b] for a in range(r) if Lt[i][a]), Fraction(0)) for b in range(r)] for i in range(m)]
    G = [[sum((LS[i][b] * Lt[j][b] for b in range(r) if Lt[j][b]), Fraction(0)) for j in range(m)] for i in range(m)]
    Gr = GramRational(basis, G)
    if gram_to_poly(Gr) != f:
        raise RecoveryError("recovered Gram matrix does not reproduce f")
    return Gr


def _zero_gram(f: Polynomial, basis: MonomialBasis) -> GramRational:
    if f.is_zero():
        m = len(basis)
        return GramRational(basis, [[0] * m for _ in range(m)])
    raise RecoveryError("numerical rank 0 but target polynomial is nonzero")


def boundary_recover(
    f: Polynomial,
    G_N: GramNumeric,
    sys: LinearSystem | None = None,
    cfg: RecoverConfig | None = None,
    rank: int | None = None,
    diagnostics: dict | None = None,
    deadline: float | None = None,
) -> GramRational:
    """Rank-preserving recovery through a truncated LDL^T and rational column recovery.

    With ``G ~ Lt S Lt^T`` where the columns of ``Lt`` are the recovered
    rational LDL^T columns, the symmetric ``r x r`` middle factor ``S`` is the
    exact Frobenius-nearest solution (to the numerical pivots) of the matching
    system; PSD of ``S`` is then equivalent to PSD of the result.
    """
    cfg = cfg or RecoverConfig()
    diag = diagnostics if diagnostics is not None else {}
    basis = G_N.basis
    m = G_N.size
    if rank is None:
        rank = numerical_rank(G_N, cfg.rank_eps)
    if rank == 0:
        return _zero_gram(f, basis)
    perm, Lnum, Dnum = pivoted_ldl_numeric(G_N, cfg.rank_eps, max_rank=rank)
    r = len(Dnum)
    diag["rank"] = r
    # rational columns, rows in original basis order
    Lt = [[Fraction(0)] * r for _ in range(m)]
    for j in range(r):
        tail = [Lnum[i][j] for i in range(j + 1, m)]
        rec = _recover_vector(tail, cfg, deadline)
        Lt[perm[j]][j] = Fraction(1)
        for off, val in enumerate(rec):
            Lt[perm[j + 1 + off]][j] = val
    S0 = [[Dnum[a] if a == b else 0 for b in range(r)] for a in range(r)]
    return _solve_middle(f, basis, Lt, S0, cfg, deadline)


def _float_rref(M: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form with largest-entry pivoting; returns (R, pivot columns)."""
    R = np.array(M, dtype=float)
    d, m = R.shape
    pivots: list[int] = []
    for i in range(d):
        free = [c for c in range(m) if c not in pivots]
        c = max(free, key=lambda c: abs(R[i, c]))
        if abs(R[i, c]) == 0:
            raise RecoveryError("degenerate kernel basis")
        R[i] /= R[i, c]
        for k in range(d):
            if k != i:
                R[k] -= R[k, c] * R[i]
        pivots.append(c)
    return R, pivots


def kernel_recover(
    f: Polynomial,
    G_N: GramNumeric,
    cfg: RecoverConfig | None = None,
    rank: int | None = None,
    diagnostics: dict | None = None,
    deadline: float | None = None,
) -> GramRational:
    """Rank-deficient recovery through a rational basis of the numerical kernel.

    The reduced row echelon form of the kernel does not depend on which point
    of the face ``G_N`` is, so it is rational whenever the face is.  Its
    entries are rationalized, ``W`` is an exact basis of the orthogonal
    complement, and ``G = W S W^T`` is solved as in the boundary case.
    """
    cfg = cfg or RecoverConfig()
    diag = diagnostics if diagnostics is not None else {}
    basis = G_N.basis
    m = G_N.size
    if rank is None:
        rank = numerical_rank(G_N, cfg.rank_eps)
    if rank == 0:
        return _zero_gram(f, basis)
    A = G_N.to_numpy()
    _, _, Vt = np.linalg.svd(A)
    K = Vt[rank:]
    if K.shape[0] == 0:
        raise RecoveryError("matrix has full numerical rank; no kernel to recover")
    R, pivots = _float_rref(K)
    free = [c for c in range(m) if c not in pivots]
    diag["rank"] = rank
    last_err = None
    for Q in cfg.denominator_ladder():
        _deadline_check(deadline)
        Z = [[rationalize(float(v), Q) for v in row] for row in R]
        for i, c in enumerate(pivots):
            for j in pivots:
                Z[i][j] = Fraction(int(j == c))
        # columns of W: for each free column c, e_c - sum_i Z[i][c] e_{pivot_i}
        Lt = [[Fraction(0)] * len(free) for _ in range(m)]
        for j, c in enumerate(free):
            Lt[c][j] = Fraction(1)
            for i, pc in enumerate(pivots):
                Lt[pc][j] = -Z[i][c]
        Wf = np.array([[float(v) for v in row] for row in Lt])
        P = np.linalg.pinv(Wf)
        S0 = P @ A @ P.T
        S0 = (S0 + S0.T) / 2
        try:
            G = _solve_middle(f, basis, Lt, S0.tolist(), cfg, deadline)
        except RecoveryError as exc:
            last_err = exc
            continue
        diag["denom_bound"] = Q
        return G
    raise RecoveryError(f"kernel recovery failed: {last_err}")
