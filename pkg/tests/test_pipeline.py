import time

import pytest

from exactsos.conjecture import ReplaySource
from exactsos.datagen import GenConfig, emit_corpus
from exactsos.lean import LeanEmitConfig
from exactsos.pipeline import PipelineConfig, audit, bench, solve
from exactsos.poly import Polynomial, write_problem
from exactsos.verify import check_certificate, read_certificate

from .conftest import DATA, P, PARRILO_TEXT


def test_parrilo_with_replay(tmp_path, parrilo):
    cfg = PipelineConfig(source="replay", replay_path=str(DATA / "parrilo.sos"))
    rep = solve(parrilo, cfg, problem_id="parrilo", out_dir=tmp_path)
    assert rep.outcome == "proved"
    assert check_certificate(parrilo, read_certificate(tmp_path / "parrilo.cert")).ok
    assert (tmp_path / "parrilo.lean").read_text().startswith("import Mathlib")
    assert rep.lean_status == "skipped"
    assert audit(parrilo, rep)


def test_square_with_baseline():
    t = time.perf_counter()
    rep = solve(P("x1^2", 1), PipelineConfig(budget_k=4))
    assert rep.outcome == "proved" and time.perf_counter() - t < 1.0


def test_robinson_is_never_proved(robinson):
    rep = solve(robinson, PipelineConfig(timeout_s=20, budget_k=8))
    assert rep.outcome != "proved" and rep.certificate is None
    assert audit(robinson, rep)


def test_timeout_is_honoured(robinson):
    t = time.monotonic()
    rep = solve(robinson, PipelineConfig(timeout_s=1.0))
    assert rep.outcome == "timeout"
    assert time.monotonic() - t < 3.0


def test_budget_is_respected():
    f = P("x1^2 + x2^2")
    src = ReplaySource(["(x1 + 5)^2"] * 10)
    rep = solve(f, PipelineConfig(budget_k=3), source=src)
    assert rep.outcome == "recovery_failed" and rep.candidates_tried == 3


def test_malformed_candidates_mean_no_candidate():
    rep = solve(P("x1^2", 1), source=ReplaySource(["<SOS Expression>: garbage"]))
    assert rep.outcome == "no_candidate"


def test_lean_failure_moves_on(parrilo):
    cfg = PipelineConfig(lean=LeanEmitConfig(lean_check_command=["false"]))
    rep = solve(parrilo, cfg, source=ReplaySource.from_file(DATA / "parrilo.sos"))
    assert rep.outcome == "recovery_failed" and rep.lean_status == "fail"


def test_rejects_zero_and_odd_degree():
    with pytest.raises(ValueError):
        solve(Polynomial.zero(2))
    with pytest.raises(ValueError):
        solve(P("x1^3 + x1^2", 1))


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(budget_k=0)
    with pytest.raises(ValueError):
        PipelineConfig(timeout_s=0)


def test_bench_empty_dir(tmp_path):
    (tmp_path / "in").mkdir()
    s = bench(tmp_path / "in", out_dir=tmp_path / "out")
    assert s.rows == [] and s.audit_failures == []
    assert (tmp_path / "out" / "report.tsv").read_text().count("\n") == 1


def test_bench_skips_unreadable_files(tmp_path, caplog):
    (tmp_path / "bad.poly").write_text("x1 + + \n")
    write_problem(tmp_path / "good.poly", P("x1^2 + x2^2"))
    s = bench(tmp_path, PipelineConfig(budget_k=4), tmp_path / "out")
    assert [r.problem_id for r in s.rows] == ["good"]
    assert "bad.poly" in caplog.text


def test_bench_generated_corpus_is_deterministic(tmp_path):
    emit_corpus(GenConfig(nvars=2, half_degree=1, seed=9), 10, tmp_path / "corpus")
    cfg = PipelineConfig(budget_k=8, timeout_s=30, seed=1)
    a = bench(tmp_path / "corpus" / "problems", cfg, tmp_path / "a")
    bench(tmp_path / "corpus" / "problems", cfg, tmp_path / "b")
    assert (tmp_path / "a" / "report.tsv").read_bytes() == (tmp_path / "b" / "report.tsv").read_bytes()
    assert a.by_nvars[2][0] == 10 and a.by_nvars[2][1] >= 8
    summary = (tmp_path / "a" / "summary.txt").read_text().splitlines()
    assert summary[0] == "nvars\tproblems\tsolved\tpass\tt(s)"
    assert summary[1].startswith("2\t10\t")
    assert not a.audit_failures


def test_bench_replay_uses_sibling_files(tmp_path):
    write_problem(tmp_path / "parrilo.poly", P(PARRILO_TEXT))
    (tmp_path / "parrilo.sos").write_text((DATA / "parrilo.sos").read_text())
    write_problem(tmp_path / "other.poly", P("x1^2 + x2^2"))
    s = bench(tmp_path, PipelineConfig(source="replay"), tmp_path / "out")
    outcomes = {r.problem_id: r.outcome for r in s.rows}
    assert outcomes == {"other": "no_candidate", "parrilo": "proved"}
