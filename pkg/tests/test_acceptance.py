"""Acceptance criteria 1-10, one printed PASS/FAIL line per criterion.

Measured bars (pinned from the measurement runs and frozen):
  criterion 3: 97% measured, bar 95%
  criterion 4: 99% measured, bar 90% (timing-sensitive, so a wider margin)
"""

import math
import random
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from exactsos.conjecture import ReplaySource, format_sos_expression
from exactsos.datagen import METHODS, GenConfig, emit_corpus, gen_factored, generate
from exactsos.lattice import brute_force_diophantine, simultaneous_diophantine
from exactsos.lean import LeanEmitConfig, default_lean_command, lean_check
from exactsos.pipeline import PipelineConfig, audit, bench, solve
from exactsos.poly import Polynomial
from exactsos.recover import exact_psd_check, quadratic_form
from exactsos.refine import FactorMatrix, RefineConfig, gauss_newton, initial_factor
from exactsos.reward import RewardConfig, sdr, total_reward
from exactsos.verify import check_certificate, read_certificate

from .conftest import DATA, PARRILO_TEXT, P

GOLDEN = Path(__file__).parent / "golden" / "parrilo.lean"

C3_BAR = 0.95
C4_BAR = 0.90


@pytest.fixture
def emit(capsys):
    def _emit(n, ok, detail):
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        with capsys.disabled():
            print(f"\ncriterion {n}: {status} - {detail}")
        return ok

    return _emit


# ---------------------------------------------------------------- 1


def _criterion1_run(tmp_path):
    f = P(PARRILO_TEXT)
    cfg = PipelineConfig(source="replay", replay_path=str(DATA / "parrilo.sos"))
    t = time.perf_counter()
    rep = solve(f, cfg, problem_id="parrilo", out_dir=tmp_path)
    return f, rep, time.perf_counter() - t


def test_criterion_1_worked_example(tmp_path, emit):
    f, rep, dt = _criterion1_run(tmp_path)
    checks = {}
    checks["proved"] = rep.outcome == "proved"
    cert = read_certificate(tmp_path / "parrilo.cert") if checks["proved"] else None
    checks["zero residual"] = cert is not None and check_certificate(f, cert).identity_residual.is_zero()
    if rep.gram is not None:
        b = list(rep.gram.basis)
        i1, i2, i3 = b.index((2, 0)), b.index((0, 2)), b.index((1, 1))
        q = rep.gram.entries
        checks["gram constraints"] = (
            q[i1][i1] == 2 and q[i2][i2] == 5 and q[i3][i3] + 2 * q[i1][i2] == -1 and 2 * q[i1][i3] == 2 and 2 * q[i2][i3] == 0
        )
    else:
        checks["gram constraints"] = False
    script = (tmp_path / "parrilo.lean").read_text() if checks["proved"] else ""
    golden = GOLDEN.read_text().splitlines()
    lines = script.splitlines()
    checks["lean structure"] = len(lines) == len(golden) and all(
        a == b for a, b in zip(lines, golden) if not b.startswith("    [ ")
    )
    checks["runtime < 1 s"] = dt < 1.0
    ok = all(checks.values())
    emit(1, ok, ", ".join(f"{k}={v}" for k, v in checks.items()) + f", t={dt:.3f}s")
    assert ok


# ---------------------------------------------------------------- 2


def test_criterion_2_round_trip_soundness(emit):
    grid = [(n, d) for n in range(1, 5) for d in range(1, 4)]
    t = time.perf_counter()
    bad = []
    total = 0
    for method in METHODS:
        for i in range(100):
            n, d = grid[i % len(grid)]
            pair = generate(method, GenConfig(nvars=n, half_degree=d, seed=i))
            total += 1
            if not check_certificate(pair.f, pair.decomposition).ok:
                bad.append((method, i))
    dt = time.perf_counter() - t
    ok = not bad and dt < 60
    emit(2, ok, f"{total - len(bad)}/{total} pairs verify exactly, t={dt:.1f}s (limit 60s)")
    assert ok


# ---------------------------------------------------------------- 3


def test_criterion_3_refinement(emit):
    successes = violations = 0
    n_inst = 200
    for i in range(n_inst):
        n, hd = 2 + i % 3, 1 + (i // 3) % 2
        pair = gen_factored(GenConfig(nvars=n, half_degree=hd, seed=5000 + i))
        basis = pair.gram.basis
        L = initial_factor(list(pair.decomposition), basis, 256)
        rng = np.random.default_rng(i)
        noisy = FactorMatrix.from_values(basis, (L.to_float() + 1e-3 * rng.standard_normal(L.data.shape)).tolist())
        out = gauss_newton(pair.f, noisy, RefineConfig(max_iters=50, precision_bits=256))
        h = out.theta_history
        violations += sum(1 for a, b in zip(h, h[1:]) if b > a)
        successes += out.theta_final < 1e-15 and out.iterations <= 50
    frac = successes / n_inst
    ok = frac >= C3_BAR and violations == 0
    emit(3, ok, f"theta < 1e-15 within 50 iterations on {successes}/{n_inst} ({100 * frac:.1f}%, bar {100 * C3_BAR:.0f}%), {violations} theta increases")
    assert ok


# ---------------------------------------------------------------- 4


def test_criterion_4_end_to_end(tmp_path, emit):
    proved = audited = 0
    audit_fail = []
    n_inst = 100
    for i in range(n_inst):
        n, hd = 2 + i % 3, 1 + (i // 3) % 2
        pair = generate(METHODS[i % 5], GenConfig(nvars=n, half_degree=hd, seed=1000 + i, basis_size=6))
        t = time.perf_counter()
        rep = solve(pair.f, PipelineConfig(timeout_s=10, budget_k=32, seed=i), problem_id=f"p{i:03d}", out_dir=tmp_path)
        dt = time.perf_counter() - t
        if rep.outcome == "proved":
            audited += 1
            if audit(pair.f, rep) and rep.certificate_path:
                if dt <= 10:
                    proved += 1
            else:
                audit_fail.append(i)
    frac = proved / n_inst
    ok = frac >= C4_BAR and not audit_fail
    emit(4, ok, f"proved within 10s on {proved}/{n_inst} ({100 * frac:.0f}%, bar {100 * C4_BAR:.0f}%), re-verified from disk {audited - len(audit_fail)}/{audited}")
    assert ok


# ---------------------------------------------------------------- 5


def _random_symmetric(rng, m):
    kind = rng.randrange(4)
    if kind == 0:  # arbitrary symmetric
        A = [[Fraction(rng.randint(-20, 20), rng.randint(1, 9)) for _ in range(m)] for _ in range(m)]
        return [[(A[i][j] + A[j][i]) / 2 for j in range(m)] for i in range(m)]
    rows = [[Fraction(rng.randint(-5, 5), rng.randint(1, 4)) for _ in range(m)] for _ in range(rng.randint(1, m + 1))]
    G = [[sum(r[i] * r[j] for r in rows) for j in range(m)] for i in range(m)]
    if kind == 2:  # small shift either way
        s = Fraction(rng.randint(-10, 10), rng.randint(1, 100))
        G = [[G[i][j] + (s if i == j else 0) for j in range(m)] for i in range(m)]
    return G


def test_criterion_5_psd_oracle(emit):
    rng = random.Random(2024)
    compared = disagreements = margin_cases = inconsistent = 0
    psd_count = 0
    for _ in range(1000):
        G = _random_symmetric(rng, 5)
        res = exact_psd_check(G)
        psd_count += res.is_psd
        lam = float(np.linalg.eigvalsh(np.array([[float(v) for v in r] for r in G]))[0])
        # the exact verdict must carry its own proof
        if res.is_psd:
            f = res.factors
            LD = [[f.L[i][k] * f.D[k] for k in range(5)] for i in range(5)]
            rebuilt = all(
                sum(LD[a][k] * f.L[b][k] for k in range(5)) == G[f.perm[a]][f.perm[b]] for a in range(5) for b in range(5)
            )
            inconsistent += not (rebuilt and all(d >= 0 for d in f.D))
        else:
            inconsistent += not quadratic_form(G, res.witness) < 0
        if abs(lam) > 1e-6:
            compared += 1
            disagreements += res.is_psd != (lam > 0)
        else:
            margin_cases += 1
    ok = disagreements == 0 and inconsistent == 0
    emit(5, ok, f"{disagreements} disagreements over {compared} matrices with |lambda_min| > 1e-6 ({psd_count} PSD); {margin_cases} margin cases decided exactly with {inconsistent} unproven verdicts")
    assert ok


# ---------------------------------------------------------------- 6


def test_criterion_6_diophantine_optimality(emit):
    rng = random.Random(6)
    matches = 0
    n_inst = 500
    for t in range(n_inst):
        n = rng.randint(1, 3)
        Q = rng.randint(1, 200)
        if t % 2:
            q0 = rng.randint(1, 400)
            v = [rng.randint(-3 * q0, 3 * q0) / q0 + rng.uniform(-1e-4, 1e-4) for _ in range(n)]
        else:
            v = [rng.uniform(-3, 3) for _ in range(n)]
        q, p = simultaneous_diophantine(v, Q)
        err = max(abs(q * Fraction(x) - pi) for x, pi in zip(v, p))
        best_err, best_q = brute_force_diophantine(v, Q)
        matches += q <= Q and err == best_err and q == best_q
    ok = matches == n_inst
    emit(6, ok, f"optimum matches brute force on {matches}/{n_inst} inputs (dim <= 3, Q <= 200)")
    assert ok


# ---------------------------------------------------------------- 7


def test_criterion_7_reward_arithmetic(emit):
    cfg = RewardConfig()
    perfect = total_reward(P("x1^2 + 2*x1 + 1", 1), "(SOS Expression): (x1 + 1)^2", cfg).total
    f4 = P("x1^2 + x1*x2 + x2^2 + 1")
    sdr_val = sdr(f4, P("x1^2 + x1*x2 + x2^2 + x1"))
    rng = random.Random(7)
    worst = 0.0
    for _ in range(10_000):
        terms = {}
        for _ in range(rng.randint(1, 4)):
            terms[(rng.randint(0, 2), rng.randint(0, 2))] = rng.randint(-9, 9)
        f = Polynomial(2, terms)
        if f.is_zero():
            f = P("x1^2")
        squares = [
            (Fraction(rng.randint(0, 9), rng.randint(1, 4)), Polynomial(3, {(rng.randint(0, 1), rng.randint(0, 1), rng.randint(0, 1)): rng.randint(-3, 3) or 1}))
            for _ in range(rng.randint(0, 3))
        ]
        text = format_sos_expression(squares) if squares and rng.random() < 0.9 else "no answer"
        b = total_reward(f, text, cfg)
        expect = cfg.w_acc * b.r_acc + cfg.w_fmt * b.r_fmt - (b.p_soft + b.p_hard)
        worst = max(worst, abs(b.total - expect) / math.ulp(max(abs(expect), 1.0)))
    ok = perfect == 1.0 and sdr_val == 0.5 and worst <= 1
    emit(7, ok, f"perfect total={perfect!r}, SDR example={sdr_val}, breakdown identity worst {worst:.0f} ulp over 10^4 candidates")
    assert ok


# ---------------------------------------------------------------- 8


def test_criterion_8_robinson_negative_control(robinson, tmp_path, emit):
    attempts = []
    t = time.perf_counter()
    rep = solve(robinson, PipelineConfig(timeout_s=60, budget_k=32), problem_id="robinson_baseline", out_dir=tmp_path)
    attempts.append(("baseline", rep))
    near = [
        "(x1^3 - x1*x2^2)^2 + (x2^3 - x2*x3^2)^2 + (x3^3 - x3*x1^2)^2",
        "0.5*(x1^3 - x1*x2^2 - x1*x3^2)^2 + 0.5*(x2^3 - x2*x1^2 - x2*x3^2)^2 + 0.5*(x3^3 - x3*x1^2 - x3*x2^2)^2",
        "(x1^2*x2 - x2*x3^2)^2 + (x1*x2^2 - x1*x3^2)^2 + (x1^2*x3 - x2^2*x3)^2",
    ]
    for budget in (1, 3):
        rep = solve(robinson, PipelineConfig(timeout_s=60, budget_k=budget), source=ReplaySource(near), problem_id=f"robinson_replay{budget}", out_dir=tmp_path)
        attempts.append((f"replay/{budget}", rep))
    dt = time.perf_counter() - t
    never = all(r.outcome != "proved" for _, r in attempts)
    sound = all(audit(robinson, r) for _, r in attempts) and not list(tmp_path.glob("*.cert"))
    ok = never and sound
    outcomes = ", ".join(f"{name}: {r.outcome}" for name, r in attempts)
    emit(8, ok, f"Robinson never proved ({outcomes}), no certificate written, t={dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 9


def test_criterion_9_bench_determinism(tmp_path, emit):
    corpus = tmp_path / "corpus"
    emit_corpus(GenConfig(nvars=2, half_degree=2, seed=77, basis_size=5), 8, corpus)
    problems = corpus / "problems"
    for name in ("parrilo", "dexample", "quadratic3"):
        (problems / f"{name}.poly").write_text((DATA / f"{name}.poly").read_text())
    cfg = PipelineConfig(timeout_s=60, budget_k=16, seed=5)
    bench(problems, cfg, tmp_path / "run1")
    bench(problems, cfg, tmp_path / "run2")
    a = (tmp_path / "run1" / "report.tsv").read_bytes()
    b = (tmp_path / "run2" / "report.tsv").read_bytes()
    rows = a.decode().count("\n") - 1
    ok = a == b and rows == 11
    emit(9, ok, f"report.tsv byte-identical across two runs ({rows} problems)")
    assert ok


# ---------------------------------------------------------------- 10


def test_criterion_10_lean_toolchain(tmp_path, emit):
    cmd = default_lean_command()
    if cmd is None:
        emit(10, None, "no Lean toolchain installed")
        pytest.skip("no Lean toolchain installed")
    f, rep, _ = _criterion1_run(tmp_path)
    cfg = LeanEmitConfig(lean_check_command=cmd)
    good = lean_check(rep.lean_script, cfg)
    corrupted = rep.lean_script.replace("h1 : I = 2*x1^4", "h1 : I = 3*x1^4")
    bad = lean_check(corrupted, cfg)
    ok = good.status == "pass" and bad.status == "fail" and bad.returncode != 0
    emit(10, ok, f"valid script: {good.status}, corrupted script: {bad.status}")
    assert ok, good.output[-2000:]
