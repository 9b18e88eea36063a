"""Exact rational linear algebra on small sparse systems.

Rows are dicts ``{column: Fraction}``.  Everything here is exact; callers
convert floats with ``Fraction(x)`` (which is exact for binary floats).
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence


class InconsistentSystem(ValueError):
    pass


class SingularSystem(ValueError):
    pass


def _row_dot(row: dict, vec: Sequence) -> Fraction:
    return sum((c * vec[j] for j, c in row.items()), Fraction(0))


def independent_rows(rows: Sequence[dict], rhs: Sequence[Fraction]):
    """Drop linearly dependent rows (first-seen rows win).

    Raises ``InconsistentSystem`` if a dependent row contradicts the others.
    Returns ``(kept_rows, kept_rhs, kept_indices)``.
    """
    # fast path: pairwise disjoint supports (the coefficient-matching case)
    seen: set = set()
    disjoint = True
    for r in rows:
        cols = set(r)
        if cols & seen:
            disjoint = False
            break
        seen |= cols
    if disjoint:
        kept, kept_b, idx = [], [], []
        for i, (r, b) in enumerate(zip(rows, rhs)):
            nz = {j: c for j, c in r.items() if c}
            if nz:
                kept.append(nz)
                kept_b.append(Fraction(b))
                idx.append(i)
            elif b:
                raise InconsistentSystem(f"row {i} reads 0 = {float(b):.3g}")
        return kept, kept_b, idx

    # general path: incremental elimination against an echelon basis
    basis: list[tuple[int, dict, Fraction]] = []  # (pivot col, reduced row, reduced rhs)
    kept, kept_b, idx = [], [], []
    for i, (r, b) in enumerate(zip(rows, rhs)):
        red = {j: Fraction(c) for j, c in r.items() if c}
        rb = Fraction(b)
        for piv, prow, pb in basis:
            c = red.get(piv)
            if c:
                for j, v in prow.items():
                    nv = red.get(j, 0) - c * v
                    if nv:
                        red[j] = nv
                    else:
                        red.pop(j, None)
                rb -= c * pb
        if not red:
            if rb:
                raise InconsistentSystem(f"row {i} is dependent but inconsistent (residual {float(rb):.3g})")
            continue
        piv = min(red)
        inv = 1 / red[piv]
        prow = {j: v * inv for j, v in red.items()}
        pb = rb * inv
        # keep earlier basis rows reduced with respect to the new pivot
        new_basis = []
        for q, qrow, qb in basis:
            c = qrow.get(piv)
            if c:
                qrow = dict(qrow)
                for j, v in prow.items():
                    nv = qrow.get(j, 0) - c * v
                    if nv:
                        qrow[j] = nv
                    else:
                        qrow.pop(j, None)
                qb = qb - c * pb
            new_basis.append((q, qrow, qb))
        basis = new_basis
        basis.append((piv, prow, pb))
        kept.append(dict(r))
        kept_b.append(Fraction(b))
        idx.append(i)
    return kept, kept_b, idx


def solve_dense(M: list[list[Fraction]], d: Sequence[Fraction]) -> list[Fraction]:
    """Solve a square nonsingular system exactly by Gaussian elimination."""
    n = len(M)
    A = [[Fraction(v) for v in row] + [Fraction(d[i])] for i, row in enumerate(M)]
    for k in range(n):
        p = next((i for i in range(k, n) if A[i][k]), None)
        if p is None:
            raise SingularSystem("matrix is singular")
        A[k], A[p] = A[p], A[k]
        inv = 1 / A[k][k]
        pivot_row = A[k]
        for i in range(k + 1, n):
            c = A[i][k]
            if c:
                f = c * inv
                row = A[i]
                for j in range(k, n + 1):
                    if pivot_row[j]:
                        row[j] -= f * pivot_row[j]
    x = [Fraction(0)] * n
    for k in range(n - 1, -1, -1):
        s = A[k][n] - sum((A[k][j] * x[j] for j in range(k + 1, n)), Fraction(0))
        x[k] = s / A[k][k]
    return x


def project_affine(
    y0: Sequence[Fraction],
    rows: Sequence[dict],
    rhs: Sequence[Fraction],
    winv: Sequence[Fraction] | None = None,
) -> list[Fraction]:
    """Weighted orthogonal projection of ``y0`` onto ``{y : A y = b}``.

    Minimises ``sum(w_j * (y_j - y0_j)**2)`` where ``w = 1 / winv``;
    ``y* = y0 - W^-1 A^T (A W^-1 A^T)^-1 (A y0 - b)``.  Dependent rows are
    dropped first.
    """
    rows, rhs, _ = independent_rows(rows, rhs)
    n = len(y0)
    y0 = [Fraction(v) for v in y0]
    winv = [Fraction(1)] * n if winv is None else [Fraction(v) for v in winv]
    resid = [_row_dot(r, y0) - b for r, b in zip(rows, rhs)]
    if not any(resid):
        return y0
    scaled = [{j: c * winv[j] for j, c in r.items()} for r in rows]
    m = len(rows)
    M = [[Fraction(0)] * m for _ in range(m)]
    diagonal = True
    col_rows: dict[int, list[int]] = {}
    for i, r in enumerate(rows):
        for j in r:
            col_rows.setdefault(j, []).append(i)
    for i, r in enumerate(scaled):
        for j, c in r.items():
            for k in col_rows[j]:
                M[i][k] += c * rows[k][j]
                if k != i:
                    diagonal = False
    if diagonal:
        z = [resid[i] / M[i][i] for i in range(m)]
    else:
        z = solve_dense(M, resid)
    y = list(y0)
    for i, r in enumerate(scaled):
        if z[i]:
            for j, c in r.items():
                y[j] -= c * z[i]
    return y


def matmul(A, B):
    n, k, m = len(A), len(B), len(B[0]) if B else 0
    out = [[Fraction(0)] * m for _ in range(n)]
    for i in range(n):
        Ai = A[i]
        oi = out[i]
        for t in range(k):
            a = Ai[t]
            if a:
                Bt = B[t]
                for j in range(m):
                    if Bt[j]:
                        oi[j] += a * Bt[j]
    return out


def transpose(A):
    return [list(col) for col in zip(*A)] if A else []
