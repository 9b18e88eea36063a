"""End-to-end proof search: conjecture, refine, recover, verify, emit Lean; plus the benchmark harness."""

from __future__ import annotations

import logging
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .conjecture import ConjectureRequest, ConjectureSource, HttpSourceConfig, make_source, rank
from .gram import BasisTooLarge, GramRational, support_restricted_basis
from .lean import LeanEmitConfig, UnsoundCertificate, emit_lean, lean_check
from .poly import Polynomial, read_problem
from .recover import RecoverConfig, RecoveryError, boundary_recover, interior_recover, kernel_recover, numerical_rank, prune_redundant
from .refine import RefineConfig, gauss_newton, initial_factor
from .reward import RewardConfig
from .verify import SosCertificate, check_certificate, gram_to_certificate, read_certificate, write_certificate

log = logging.getLogger(__name__)

OUTCOMES = ("proved", "recovery_failed", "no_candidate", "timeout")
STAGES = ("conjecture", "refine", "recover", "verify", "lean")


@dataclass
class PipelineConfig:
    source: str = "baseline"
    replay_path: str | None = None
    budget_k: int = 32
    timeout_s: float = 3600.0
    seed: int = 0
    parallelism: int = 1
    recover_theta_max: float = 1e-6  # skip recovery for candidates refined no further than this
    emit_lean: bool = True
    refine: RefineConfig = field(default_factory=RefineConfig)
    recover: RecoverConfig = field(default_factory=RecoverConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    lean: LeanEmitConfig = field(default_factory=LeanEmitConfig)
    http: HttpSourceConfig = field(default_factory=HttpSourceConfig)

    def __post_init__(self):
        if self.budget_k < 1:
            raise ValueError("budget_k must be >= 1")
        if not self.timeout_s > 0:
            raise ValueError("timeout_s must be positive")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


@dataclass
class PipelineReport:
    problem_id: str
    outcome: str
    stage_times: dict = field(default_factory=lambda: {s: 0.0 for s in STAGES})
    theta: float = math.inf  # backward error of the winning (or best) candidate as proposed
    theta_refined: float = math.inf
    candidates_tried: int = 0
    recovery: str = ""
    certificate_path: str = ""
    lean_status: str = ""
    lean_script: str = ""
    message: str = ""
    nvars: int = 0
    degree: int = 0
    certificate: SosCertificate | None = None
    gram: GramRational | None = None

    @property
    def total_time(self) -> float:
        return sum(self.stage_times.values())


class _Clock:
    def __init__(self, report: PipelineReport):
        self.report = report

    def stage(self, name):
        clock = self

        class _Ctx:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                clock.report.stage_times[name] += time.perf_counter() - self.t

        return _Ctx()


def _recover(f: Polynomial, G_N, cfg: PipelineConfig, report: PipelineReport, deadline: float) -> GramRational:
    """Interior recovery at full numerical rank, boundary otherwise; each falls back to the next.

    Order: interior (full rank only), boundary (LDL^T columns), kernel basis.
    ``report.recovery`` names the path that succeeded, e.g. ``interior>boundary``.
    """
    rcfg = cfg.recover
    rank_ = numerical_rank(G_N, rcfg.rank_eps)
    attempts = []
    if rank_ == G_N.size:
        attempts.append(("interior", lambda: interior_recover(f, G_N, cfg=rcfg, tau=cfg.refine.tol_tau, deadline=deadline)))
        # a full-rank matrix close to the boundary: retry at the rank a looser threshold sees
        rank_ = numerical_rank(G_N, max(rcfg.rank_eps, 1e-6))
    if rank_ < G_N.size:
        attempts.append(("boundary", lambda: boundary_recover(f, G_N, cfg=rcfg, rank=rank_, deadline=min(deadline, time.monotonic() + rcfg.boundary_time_s))))
        attempts.append(("kernel", lambda: kernel_recover(f, G_N, cfg=rcfg, rank=rank_, deadline=deadline)))
    tried = []
    last = None
    for name, attempt in attempts:
        tried.append(name)
        try:
            G = attempt()
        except RecoveryError as exc:
            log.info("%s recovery failed: %s", name, exc)
            last = exc
            continue
        report.recovery = ">".join(tried)
        return G
    raise last or RecoveryError("no recovery path applies")


def solve(
    f: Polynomial,
    cfg: PipelineConfig | None = None,
    source: ConjectureSource | None = None,
    problem_id: str = "problem",
    out_dir=None,
) -> PipelineReport:
    """Search for an exact SOS certificate of ``f``.

    Candidates are tried in ascending backward error; the first one whose
    recovered certificate verifies exactly wins.  When ``out_dir`` is given the
    certificate (``<id>.cert``) and Lean script (``<id>.lean``) are written there.
    """
    cfg = cfg or PipelineConfig()
    if f.is_zero():
        raise ValueError("target polynomial is zero")
    if f.total_degree() % 2:
        raise ValueError("target polynomial has odd degree")
    start = time.monotonic()
    deadline = start + cfg.timeout_s
    report = PipelineReport(problem_id, "no_candidate", nvars=f.nvars, degree=f.total_degree())
    clock = _Clock(report)
    if source is None:
        source = make_source(cfg.source, replay_path=cfg.replay_path, seed=cfg.seed, http=cfg.http)

    try:
        basis0 = support_restricted_basis(f)
    except BasisTooLarge as exc:
        report.message = str(exc)
        return report

    with clock.stage("conjecture"):
        req = ConjectureRequest(f, cfg.budget_k, max(deadline - time.monotonic(), 1e-3), cfg.seed)
        cands = [c for c in source.propose(req) if c.format_ok and math.isfinite(c.theta)]
        cands = rank(cands)[: cfg.budget_k]
    if not cands:
        report.message = "no well-formed candidate"
        if time.monotonic() > deadline:
            report.outcome = "timeout"
        return report
    report.theta = cands[0].theta
    report.outcome = "recovery_failed"
    failures = []

    for idx, cand in enumerate(cands):
        if time.monotonic() > deadline:
            report.outcome = "timeout"
            break
        report.candidates_tried = idx + 1
        with clock.stage("refine"):
            try:
                L0 = initial_factor(cand.parsed, basis0, cfg.refine.precision_bits)
            except (KeyError, ValueError) as exc:
                failures.append(f"#{idx}: {exc}")
                continue
            if L0.basis.nvars != f.nvars:
                failures.append(f"#{idx}: candidate uses extra variables")
                continue
            out = gauss_newton(f, L0, cfg.refine, deadline)
        report.theta_refined = min(report.theta_refined, out.theta_final)
        if out.reason == "timeout":
            report.outcome = "timeout"
            break
        if not out.theta_final < cfg.recover_theta_max:
            failures.append(f"#{idx}: refinement stalled at {out.theta_final:.3g} ({out.reason})")
            continue
        with clock.stage("recover"):
            try:
                G_N = prune_redundant(out.gram, f, cfg.recover.rank_eps)
                G = _recover(f, G_N, cfg, report, deadline)
            except (RecoveryError, ValueError) as exc:
                failures.append(f"#{idx}: {exc}")
                continue
        with clock.stage("verify"):
            cert = gram_to_certificate(G)
            if not check_certificate(f, cert).ok:
                failures.append(f"#{idx}: certificate failed verification")
                continue
        script, lean_status = "", "skipped"
        if cfg.emit_lean:
            with clock.stage("lean"):
                try:
                    script = emit_lean(f, cert, cfg.lean)
                except UnsoundCertificate as exc:  # pragma: no cover - guarded by the check above
                    failures.append(f"#{idx}: {exc}")
                    continue
                res = lean_check(script, cfg.lean)
                lean_status = res.status
            if lean_status not in ("pass", "skipped"):
                failures.append(f"#{idx}: lean {lean_status}")
                report.lean_status = lean_status
                continue
        report.outcome = "proved"
        report.theta = cand.theta
        report.theta_refined = out.theta_final
        report.certificate = cert
        report.gram = G
        report.lean_script = script
        report.lean_status = lean_status
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            cpath = out / f"{problem_id}.cert"
            write_certificate(cpath, cert)
            report.certificate_path = str(cpath)
            if script:
                (out / f"{problem_id}.lean").write_text(script, encoding="utf-8")
        break
    if report.outcome != "proved":
        report.message = "; ".join(failures[-3:])
    return report


def audit(f: Polynomial, report: PipelineReport) -> bool:
    """Re-read the certificate a proved report points to and verify it from scratch."""
    if report.outcome != "proved":
        return True
    if report.certificate_path:
        cert = read_certificate(report.certificate_path)
    else:
        cert = report.certificate
    return cert is not None and check_certificate(f, cert).ok


# ---------------------------------------------------------------- benchmark


REPORT_COLUMNS = ("id", "nvars", "degree", "outcome", "theta", "theta_refined", "candidates", "recovery", "certificate", "lean")


def problem_seed(problem_id: str, seed: int) -> int:
    return (zlib.crc32(problem_id.encode()) ^ seed) & 0xFFFFFFFF


def _bench_one(args):
    path, cfg, cert_dir = args
    path = Path(path)
    f, meta = read_problem(path)
    pid = path.stem
    pcfg = _replace_seed(cfg, problem_seed(pid, cfg.seed))
    source = None
    if cfg.source == "replay":
        replay = path.with_suffix(".sos")
        source = make_source("replay", replay_path=replay) if replay.exists() else _EmptySource()
    try:
        rep = solve(f, pcfg, source, pid, cert_dir)
    except ValueError as exc:
        rep = PipelineReport(pid, "no_candidate", message=str(exc), nvars=f.nvars, degree=f.total_degree())
    rep.gram = None
    return rep, audit(f, rep)


class _EmptySource:
    tag = "empty"

    def propose(self, req):
        return []


def _replace_seed(cfg: PipelineConfig, seed: int) -> PipelineConfig:
    from dataclasses import replace

    return replace(cfg, seed=seed)


def _fmt_float(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.3e}"


@dataclass
class BenchSummary:
    rows: list
    by_nvars: dict  # nvars -> (count, solved, pass_rate, mean_time_solved)
    audit_failures: list


def bench(problem_dir, cfg: PipelineConfig | None = None, out_dir=None) -> BenchSummary:
    """Run ``solve`` on every ``*.poly`` file of ``problem_dir`` (sorted by name).

    Writes ``report.tsv`` (deterministic for fixed seeds), ``timings.tsv`` and
    ``summary.txt`` to ``out_dir``; certificates go to ``out_dir/certs``.
    """
    cfg = cfg or PipelineConfig()
    paths = sorted(Path(problem_dir).glob("*.poly"))
    out = Path(out_dir) if out_dir is not None else None
    cert_dir = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        cert_dir = out / "certs"
    jobs = []
    for p in paths:
        try:
            read_problem(p)
        except (OSError, ValueError) as exc:
            log.warning("skipping %s: %s", p, exc)
            continue
        jobs.append((str(p), cfg, cert_dir))
    if cfg.parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
            results = list(pool.map(_bench_one, jobs))
    else:
        results = [_bench_one(j) for j in jobs]

    rows = [r for r, _ in results]
    audit_failures = [r.problem_id for r, ok in results if not ok]
    by_nvars: dict = {}
    for r in rows:
        by_nvars.setdefault(r.nvars, []).append(r)
    summary = {}
    for n, rs in sorted(by_nvars.items()):
        solved = [r for r in rs if r.outcome == "proved"]
        mean_t = sum(r.total_time for r in solved) / len(solved) if solved else math.nan
        summary[n] = (len(rs), len(solved), len(solved) / len(rs), mean_t)

    if out is not None:
        with open(out / "report.tsv", "w", encoding="utf-8") as fh:
            fh.write("\t".join(REPORT_COLUMNS) + "\n")
            for r in rows:
                cert = Path(r.certificate_path).name if r.certificate_path else ""
                vals = (r.problem_id, r.nvars, r.degree, r.outcome, _fmt_float(r.theta), _fmt_float(r.theta_refined),
                        r.candidates_tried, r.recovery, cert, r.lean_status)
                fh.write("\t".join(str(v) for v in vals) + "\n")
        with open(out / "timings.tsv", "w", encoding="utf-8") as fh:
            fh.write("id\t" + "\t".join(STAGES) + "\ttotal\n")
            for r in rows:
                fh.write(r.problem_id + "\t" + "\t".join(f"{r.stage_times[s]:.4f}" for s in STAGES) + f"\t{r.total_time:.4f}\n")
        with open(out / "summary.txt", "w", encoding="utf-8") as fh:
            fh.write("nvars\tproblems\tsolved\tpass\tt(s)\n")
            for n, (cnt, ns, rate, mt) in summary.items():
                t = "-" if math.isnan(mt) else f"{mt:.2f}"
                fh.write(f"{n}\t{cnt}\t{ns}\t{100 * rate:.1f}%\t{t}\n")
            if audit_failures:
                fh.write(f"AUDIT FAILURES: {', '.join(audit_failures)}\n")
    return BenchSummary(rows, summary, audit_failures)
