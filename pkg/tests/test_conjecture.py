import io
import json
import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from exactsos.conjecture import (
    INF,
    BaselineSource,
    ConjectureCandidate,
    ConjectureRequest,
    HttpSource,
    HttpSourceConfig,
    ReplaySource,
    SosFormatError,
    baseline_conjecture,
    build_prompt,
    format_sos_expression,
    make_source,
    parse_sos_response,
    rank,
    score_candidate,
)
from exactsos.datagen import GenConfig, gen_factored
from exactsos.gram import support_restricted_basis
from exactsos.poly import parse_polynomial

from .conftest import DATA, PARRILO_TEXT, P
from .strategies import polynomials


def test_parse_reference_output():
    assert parse_sos_response("(SOS Expression): (x1 + 1)^2") == [(1, P("x1 + 1", 1))]


def test_parse_weighted_terms():
    got = parse_sos_response("<SOS Expression>: 0.5*(x1 - x2)^2 + (x2)^2")
    assert got == [(Fraction(1, 2), P("x1 - x2")), (1, P("x2"))]


@pytest.mark.parametrize(
    "text, code",
    [
        ("hello", "missing_delimiter"),
        ("<SOS Expression>: x1^2 + 1", "non_square_term"),
        ("<SOS Expression>: -1*(x1)^2", "negative_weight"),
        ("<SOS Expression>:", "empty_expression"),
        ("<SOS Expression>: (x1 +)^2", "bad_polynomial"),
    ],
)
def test_parse_errors(text, code):
    with pytest.raises(SosFormatError) as exc:
        parse_sos_response(text)
    assert exc.value.code == code


def test_parse_accepts_double_star_and_fraction_weights():
    got = parse_sos_response("<SOS Expression>: 3/4*(x1*x2 - 2)**2 + 2*(x1)^2")
    assert got == [(Fraction(3, 4), P("x1*x2 - 2")), (2, P("x1"))]


def test_parse_takes_first_line_after_delimiter():
    text = "Thinking...\n<SOS Expression>: (x1)^2 + (x2)^2\nSome trailing remarks"
    assert len(parse_sos_response(text)) == 2


@given(st.lists(st.tuples(st.integers(1, 9), polynomials(3, 2, 4)), min_size=1, max_size=4))
def test_format_parse_round_trip(squares):
    squares = [(Fraction(k), q) for k, q in squares if not q.is_zero()]
    if not squares:
        return
    parsed = parse_sos_response(format_sos_expression(squares), 3)
    assert parsed == squares


def test_prompt_contains_instructions_and_polynomial():
    f = P(PARRILO_TEXT)
    prompt = build_prompt(f)
    assert "Original polynomial:" in prompt
    assert "SOS Expression" in prompt
    line = prompt.split("Original polynomial:")[1].strip().splitlines()[0]
    assert parse_polynomial(line, 2) == f


def test_replay_exact_candidate():
    f = P("x1^2 + 2*x1 + 1", 1)
    cands = ReplaySource(["(x1 + 1)^2"]).propose(ConjectureRequest(f))
    assert len(cands) == 1 and cands[0].theta == 0 and cands[0].format_ok


def test_replay_approximate_candidate():
    f = P("5*x1^2 + 12*x1*x2 + 6*x1 + 9*x2^2 + 9")
    (c,) = ReplaySource(["(x1 + 2.99)^2 + (2*x1 + 3*x2)^2"]).propose(ConjectureRequest(f))
    assert 0 < c.theta < math.inf


def test_replay_empty_and_budget(tmp_path):
    path = tmp_path / "empty.sos"
    path.write_text("")
    assert ReplaySource.from_file(path).propose(ConjectureRequest(P("x1^2"))) == []
    src = ReplaySource(["(x1)^2"] * 5)
    assert len(src.propose(ConjectureRequest(P("x1^2"), budget_k=3))) == 3


def test_replay_bundled_file():
    (c,) = ReplaySource.from_file(DATA / "parrilo.sos").propose(ConjectureRequest(P(PARRILO_TEXT)))
    assert c.theta == 0


def test_malformed_candidate_scores_infinite():
    c = score_candidate(P("x1^2"), "nonsense", "t")
    assert c.theta == INF and not c.format_ok and c.error == "missing_delimiter"


def _cand(theta, tag="t", name=""):
    return ConjectureCandidate(name, [], theta, tag, True)


def test_rank_order_ties_and_sentinels():
    assert [c.theta for c in rank([_cand(3), _cand(1), _cand(2)])] == [1, 2, 3]
    ties = [_cand(1, "b", "first"), _cand(1, "a", "second")]
    assert [c.raw_text for c in rank(ties)] == ["first", "second"]
    assert rank([_cand(INF), _cand(5)])[-1].theta == INF


@given(st.lists(st.floats(0, 10, allow_nan=False) | st.just(INF), max_size=20))
def test_rank_is_sorted_permutation(thetas):
    out = rank([_cand(t, name=str(i)) for i, t in enumerate(thetas)])
    assert sorted(c.theta for c in out) == [c.theta for c in out]
    assert sorted(c.raw_text for c in out) == sorted(str(i) for i in range(len(thetas)))


def test_baseline_exact_square():
    f = P("x1^2", 1)
    cands = baseline_conjecture(f, support_restricted_basis(f), 4)
    assert cands and cands[0].theta < 1e-12


def test_baseline_factored_instance():
    pair = gen_factored(GenConfig(nvars=2, half_degree=2, rank_k=2, seed=4))
    cands = baseline_conjecture(pair.f, support_restricted_basis(pair.f), 20)
    assert cands[0].theta < 1e-8


def test_baseline_no_sos():
    f = P("-x1^2", 1)
    cands = baseline_conjecture(f, support_restricted_basis(f), 6)
    assert all(c.theta >= 0.5 for c in cands)


def test_baseline_is_deterministic():
    f = P(PARRILO_TEXT)
    a = BaselineSource(seed=3).propose(ConjectureRequest(f, budget_k=4))
    b = BaselineSource(seed=3).propose(ConjectureRequest(f, budget_k=4))
    assert [c.raw_text for c in a] == [c.raw_text for c in b]


class _FakeResponse(io.BytesIO):
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def test_http_source_with_fake_transport(monkeypatch):
    monkeypatch.setenv("EXACTSOS_API_TOKEN", "secret")
    seen = []

    def opener(req, timeout):
        seen.append((req, json.loads(req.data)))
        body = {"choices": [{"message": {"content": "(SOS Expression): (x1 + 1)^2"}}]}
        return _FakeResponse(json.dumps(body).encode())

    src = HttpSource(HttpSourceConfig(url="http://example.invalid/v1"), opener=opener)
    f = P("x1^2 + 2*x1 + 1", 1)
    cands = src.propose(ConjectureRequest(f, budget_k=3))
    assert len(cands) == 3 and all(c.theta == 0 for c in cands)
    req, body = seen[0]
    assert req.get_header("Authorization") == "Bearer secret"
    assert "Original polynomial:" in body["messages"][0]["content"]


def test_http_source_transport_failure_yields_no_candidates():
    def opener(req, timeout):
        raise OSError("connection refused")

    src = HttpSource(HttpSourceConfig(retries=0), opener=opener)
    assert src.propose(ConjectureRequest(P("x1^2"), budget_k=2)) == []


def test_make_source():
    assert make_source("baseline").tag == "baseline"
    with pytest.raises(ValueError):
        make_source("replay")
    with pytest.raises(ValueError):
        make_source("oracle")


def test_request_validation():
    with pytest.raises(ValueError):
        ConjectureRequest(P("x1^2"), budget_k=0)
