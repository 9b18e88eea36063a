"""Generators of (nonnegative polynomial, exact SOS decomposition) training pairs.

Five constructions, all producing an exact PSD Gram matrix first and the
polynomial second:

* ``shift``      symmetric integer matrix shifted by the floor of its least eigenvalue;
* ``factored``   ``sum_j d_j r_j r_j^T`` from sparse integer rows ``r_j``;
* ``opt_shift``  random integer polynomial, least-norm Gram solution, integer diagonal shift;
* ``dd``         nonnegative combination of ``u u^T`` with ``u`` in ``{e_k, e_k +- e_l}``;
* ``sdd``        the dd construction after a positive diagonal congruence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .gram import GramRational, MonomialBasis, full_basis, gram_to_poly, least_norm_gram, matching_system
from .poly import Polynomial, write_problem
from .recover import exact_psd_check
from .verify import SosCertificate, check_certificate, gram_to_certificate, write_certificate

METHODS = ("shift", "factored", "opt_shift", "dd", "sdd")


@dataclass
class GenConfig:
    nvars: int = 2
    half_degree: int = 1
    coefficient_range: tuple = (-9, 9)
    sparsity: float = 0.6
    rank_k: int | None = None
    seed: int = 0
    basis_size: int | None = None  # random subset of the full basis; None = full basis

    def __post_init__(self):
        if self.nvars < 1:
            raise ValueError("nvars must be >= 1")
        if self.half_degree < 1:
            raise ValueError("half_degree must be >= 1")
        lo, hi = self.coefficient_range
        if lo > hi:
            raise ValueError("empty coefficient range")
        if not 0 <= self.sparsity < 1:
            raise ValueError("sparsity must lie in [0, 1)")


@dataclass
class TrainingPair:
    f: Polynomial
    decomposition: SosCertificate
    method_tag: str
    gram: GramRational | None = None


def _rng(cfg_or_rng) -> np.random.Generator:
    if isinstance(cfg_or_rng, np.random.Generator):
        return cfg_or_rng
    return np.random.default_rng(cfg_or_rng.seed)


def sample_basis(cfg: GenConfig, rng: np.random.Generator) -> MonomialBasis:
    full = full_basis(cfg.nvars, cfg.half_degree)
    if cfg.basis_size is None or cfg.basis_size >= len(full):
        return full
    # always keep one monomial of top degree so the degree is what was asked for
    top = [i for i, m in enumerate(full) if sum(m) == cfg.half_degree]
    first = int(rng.choice(top))
    rest = [i for i in range(len(full)) if i != first]
    chosen = [first] + list(rng.choice(rest, size=cfg.basis_size - 1, replace=False))
    return MonomialBasis.from_monomials(cfg.nvars, [full[i] for i in chosen])


def _rand_int(rng, cfg: GenConfig) -> int:
    if rng.random() < cfg.sparsity:
        return 0
    lo, hi = cfg.coefficient_range
    return int(rng.integers(lo, hi + 1))


def _pair(G: GramRational, tag: str, decomposition: SosCertificate | None = None) -> TrainingPair:
    f = gram_to_poly(G)
    if decomposition is None:
        decomposition = gram_to_certificate(G)
    return TrainingPair(f, decomposition, tag, G)


# ---------------------------------------------------------------- computation-driven


def float_min_eigenvalue(G: Sequence[Sequence]) -> float:
    A = np.array([[float(v) for v in row] for row in G], dtype=float)
    return float(np.linalg.eigvalsh(A)[0]) if A.size else 0.0


def shift_gram(G: Sequence[Sequence[int]]) -> tuple[int, list[list[Fraction]]]:
    """``(k, G - k I)`` with ``k = floor(lambda_min)`` confirmed by the exact PSD check.

    The float eigenvalue is only a starting hint; ``k`` is decreased until the
    shifted matrix passes the exact check.
    """
    m = len(G)
    lam = float_min_eigenvalue(G)
    scale = max([abs(float(v)) for row in G for v in row] + [1.0])
    k = math.floor(lam + 1e-9 * scale)
    while True:
        Gt = [[Fraction(G[i][j]) - (k if i == j else 0) for j in range(m)] for i in range(m)]
        if exact_psd_check(Gt).is_psd:
            return k, Gt
        k -= 1


def gen_shift(cfg: GenConfig, rng: np.random.Generator | None = None) -> TrainingPair:
    rng = rng or _rng(cfg)
    basis = sample_basis(cfg, rng)
    m = len(basis)
    G = [[0] * m for _ in range(m)]
    for i in range(m):
        for j in range(i, m):
            G[i][j] = G[j][i] = _rand_int(rng, cfg)
    _, Gt = shift_gram(G)
    return _pair(GramRational(basis, Gt), "shift")


def factored_gram(rows: Sequence[Sequence[int]], weights: Sequence) -> list[list[Fraction]]:
    """``sum_j weights[j] * rows[j]^T rows[j]`` (one row per square)."""
    m = len(rows[0]) if rows else 0
    G = [[Fraction(0)] * m for _ in range(m)]
    for r, d in zip(rows, weights):
        d = Fraction(d)
        for a in range(m):
            if r[a]:
                for b in range(m):
                    if r[b]:
                        G[a][b] += d * r[a] * r[b]
    return G


def gen_factored(cfg: GenConfig, rng: np.random.Generator | None = None, max_retries: int = 100) -> TrainingPair:
    rng = rng or _rng(cfg)
    basis = sample_basis(cfg, rng)
    m = len(basis)
    k = cfg.rank_k if cfg.rank_k is not None else int(rng.integers(1, m + 1))
    if not 1 <= k <= m:
        raise ValueError(f"rank_k={k} must lie in [1, {m}]")
    rows = []
    for _ in range(k):
        for _ in range(max_retries):
            r = [_rand_int(rng, cfg) for _ in range(m)]
            if any(r):
                break
        else:
            r = [0] * m
            r[int(rng.integers(m))] = 1
        rows.append(r)
    weights = [Fraction(int(rng.integers(1, 5)), int(rng.choice([1, 1, 2]))) for _ in range(k)]
    G = factored_gram(rows, weights)
    cert = SosCertificate(basis.nvars, [(d, basis.polynomial(r)) for d, r in zip(weights, rows)])
    return _pair(GramRational(basis, G), "factored", cert)


def random_integer_polynomial(basis: MonomialBasis, cfg: GenConfig, rng: np.random.Generator) -> Polynomial:
    """Random integer coefficients on the products of basis monomials."""
    monos = sorted({tuple(x + y for x, y in zip(a, b)) for a in basis for b in basis})
    return Polynomial(basis.nvars, {mo: _rand_int(rng, cfg) for mo in monos})


def opt_shift_polynomial(f: Polynomial, basis: MonomialBasis) -> tuple[int, Polynomial, GramRational]:
    """Shift ``f`` by ``k * sum(w^2 for w in basis)`` so its least-norm Gram matrix becomes PSD.

    Returns ``(k, f_shifted, G + k I)``.
    """
    sys = matching_system(f, basis)
    G = least_norm_gram(sys)
    lam = float_min_eigenvalue(G.entries)
    k = max(0, math.ceil(-lam - 1e-9 * max(1.0, abs(lam))))
    m = len(basis)
    while True:
        Gk = [[G.entries[i][j] + (k if i == j else 0) for j in range(m)] for i in range(m)]
        if exact_psd_check(Gk).is_psd:
            break
        k += 1
    shift = Polynomial(basis.nvars, {tuple(2 * e for e in w): k for w in basis})
    return k, f + shift, GramRational(basis, Gk)


def gen_opt_shift(cfg: GenConfig, rng: np.random.Generator | None = None) -> TrainingPair:
    rng = rng or _rng(cfg)
    basis = sample_basis(cfg, rng)
    f = random_integer_polynomial(basis, cfg, rng)
    _, ft, G = opt_shift_polynomial(f, basis)
    pair = _pair(G, "opt_shift")
    assert pair.f == ft
    return pair


# ---------------------------------------------------------------- structure-driven


def dd_generators(m: int) -> list[tuple]:
    """Sparse generator vectors ``e_k`` and ``e_k +- e_l`` (k < l) as ``((index, sign), ...)``.

    ``-e_k`` gives the same rank-one matrix as ``e_k``, and ``-(e_k +- e_l)`` the
    same as ``e_k +- e_l``, so those duplicates are omitted.
    """
    gens = [((k, 1),) for k in range(m)]
    for k in range(m):
        for l in range(k + 1, m):
            gens.append(((k, 1), (l, 1)))
            gens.append(((k, 1), (l, -1)))
    return gens


def _sample_dd(cfg: GenConfig, rng, m: int):
    gens = dd_generators(m)
    n_active = cfg.rank_k if cfg.rank_k is not None else int(rng.integers(1, m + 1))
    n_active = max(1, min(n_active, len(gens)))
    idx = rng.choice(len(gens), size=n_active, replace=False)
    hi = max(1, cfg.coefficient_range[1])
    eta = [Fraction(int(rng.integers(1, hi + 1))) for _ in idx]
    return [gens[i] for i in sorted(idx)], [e for _, e in sorted(zip(idx, eta))]


def dd_gram(m: int, generators: Sequence[tuple], eta: Sequence, scale: Sequence | None = None) -> list[list[Fraction]]:
    """``sum_i eta_i w_i w_i^T`` with ``w_i = D^-1 u_i`` (``scale`` holds the diagonal of D)."""
    inv = [Fraction(1)] * m if scale is None else [1 / Fraction(d) for d in scale]
    G = [[Fraction(0)] * m for _ in range(m)]
    for gen, e in zip(generators, eta):
        w = {k: s * inv[k] for k, s in gen}
        for a, wa in w.items():
            for b, wb in w.items():
                G[a][b] += Fraction(e) * wa * wb
    return G


def _dd_certificate(basis: MonomialBasis, generators, eta, scale=None) -> SosCertificate:
    m = len(basis)
    inv = [Fraction(1)] * m if scale is None else [1 / Fraction(d) for d in scale]
    squares = []
    for gen, e in zip(generators, eta):
        coeffs = [Fraction(0)] * m
        for k, s in gen:
            coeffs[k] = s * inv[k]
        squares.append((Fraction(e), basis.polynomial(coeffs)))
    return SosCertificate(basis.nvars, squares)


def gen_dd(cfg: GenConfig, rng: np.random.Generator | None = None) -> TrainingPair:
    rng = rng or _rng(cfg)
    basis = sample_basis(cfg, rng)
    m = len(basis)
    gens, eta = _sample_dd(cfg, rng, m)
    G = GramRational(basis, dd_gram(m, gens, eta))
    return _pair(G, "dd", _dd_certificate(basis, gens, eta))


def gen_sdd(cfg: GenConfig, rng: np.random.Generator | None = None, scale: Sequence | None = None) -> TrainingPair:
    rng = rng or _rng(cfg)
    basis = sample_basis(cfg, rng)
    m = len(basis)
    if scale is None:
        scale = [Fraction(int(rng.integers(1, 4))) for _ in range(m)]
    if any(Fraction(d) <= 0 for d in scale):
        raise ValueError("sdd scaling diagonal must be positive")
    gens, eta = _sample_dd(cfg, rng, m)
    G = GramRational(basis, dd_gram(m, gens, eta, scale))
    return _pair(G, "sdd", _dd_certificate(basis, gens, eta, scale))


def is_diagonally_dominant(G: Sequence[Sequence]) -> bool:
    m = len(G)
    return all(G[i][i] >= sum(abs(G[i][j]) for j in range(m) if j != i) for i in range(m))


def congruence(G: Sequence[Sequence], scale: Sequence) -> list[list[Fraction]]:
    """``D G D`` for diagonal ``D = diag(scale)``."""
    m = len(G)
    return [[Fraction(scale[i]) * G[i][j] * Fraction(scale[j]) for j in range(m)] for i in range(m)]


GENERATORS = {
    "shift": gen_shift,
    "factored": gen_factored,
    "opt_shift": gen_opt_shift,
    "dd": gen_dd,
    "sdd": gen_sdd,
}


_MAX_REDRAWS = 100  # a sparse draw can cancel to the zero polynomial; redraw


def generate(method: str, cfg: GenConfig, rng: np.random.Generator | None = None) -> TrainingPair:
    try:
        gen = GENERATORS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}") from None
    rng = rng or _rng(cfg)
    for _ in range(_MAX_REDRAWS):
        pair = gen(cfg, rng)
        if not pair.f.is_zero():
            return pair
    raise RuntimeError(f"{method}: only zero polynomials after {_MAX_REDRAWS} draws; lower the sparsity")


# ---------------------------------------------------------------- corpus


def emit_corpus(cfg: GenConfig, count: int, out_dir, methods: Sequence[str] = METHODS) -> list[dict]:
    """Write ``problems/NNNN.poly``, ``certs/NNNN.cert`` and ``manifest.tsv``.

    Draw ``i`` uses ``methods[i % len(methods)]`` and its own child seed of
    ``cfg.seed``, so reruns are byte-identical.  Every pair is re-verified
    before it is written.
    """
    out = Path(out_dir)
    (out / "problems").mkdir(parents=True, exist_ok=True)
    (out / "certs").mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(cfg.seed).spawn(count) if count else []
    rows = []
    for i, ss in enumerate(seeds):
        method = methods[i % len(methods)]
        pair = generate(method, cfg, np.random.default_rng(ss))
        if not check_certificate(pair.f, pair.decomposition).ok:
            raise AssertionError(f"draw {i} ({method}) failed exact verification")
        name = f"{i:04d}"
        write_problem(out / "problems" / f"{name}.poly", pair.f, {"source": f"generated/{method}", "seed": cfg.seed})
        write_certificate(out / "certs" / f"{name}.cert", pair.decomposition)
        rows.append(
            {
                "id": name,
                "method": method,
                "nvars": pair.f.nvars,
                "degree": pair.f.total_degree(),
                "squares": len(pair.decomposition),
            }
        )
    with open(out / "manifest.tsv", "w", encoding="utf-8") as fh:
        fh.write("id\tmethod\tnvars\tdegree\tsquares\n")
        for r in rows:
            fh.write(f"{r['id']}\t{r['method']}\t{r['nvars']}\t{r['degree']}\t{r['squares']}\n")
    return rows
