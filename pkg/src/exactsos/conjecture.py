"""Sources of approximate SOS structure conjectures and their ranking by backward error.

A source turns a target polynomial into candidate expressions of the form
``c1*(q1)^2 + c2*(q2)^2 + ...``.  Three sources are provided: ``ReplaySource``
(one expression per line of a file), ``BaselineSource`` (numeric restarts of
the float Gauss-Newton solver) and ``HttpSource`` (a chat-style model endpoint).
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import time
import urllib.error
import urllib.request
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .gram import BasisTooLarge, MonomialBasis, support_restricted_basis
from .poly import ParseError, Polynomial, coeff_l2_distance, expand_weighted_squares, infer_nvars, parse_polynomial, rational_text
from .refine import float_gauss_newton

log = logging.getLogger(__name__)

PROMPT_TEMPLATE = """\
Task:
You are given a polynomial that is the expanded form of a sum-of-squares (SOS) expression.
Your task is to reconstruct a plausible SOS representation whose expanded form matches the given polynomial as closely as possible.

Instructions:
1. Analyze the input polynomial carefully, focusing on the coefficients and the combinations of variables involved.
2. Infer possible linear or polynomial terms inside each square in the sum-of-squares expression.
3. Construct a sum of square terms without expanding the squares. Keep the output compact and well-structured.
4. Aim for the expanded form of your SOS expression to closely approximate the coefficients in the original polynomial. Minor numerical deviations are acceptable.
5. If multiple valid SOS decompositions exist, prefer one that is simple, symmetric, and easy to interpret.
6. Include variables and constants inside parentheses when appropriate to match constant terms in the input polynomial.

Output format:
Please provide your response in the following structure:
<SOS Expression>: <sum_of_squares_expression>

Where <sum_of_squares_expression> is a sum-of-squares term, expressed compactly.
For example:
(x1 + 1)^2 + (2*x1 + 3*x2)^2

Key considerations:
1. Do not simply rewrite the input polynomial or output expanded terms. The output must be a sum-of-squares expression.
2. Constants inside square terms can be fractional or decimal, as needed, to best approximate the original polynomial.
3. Avoid expanding the squares in the output; always keep terms inside parentheses squared.
4. Aim for clear and interpretable variable groupings. Symmetry and simplicity are preferred if multiple answers fit.
5. Your SOS expression should fully explain the input polynomial's structure and coefficients to the best achievable extent.

Example:
Input polynomial:
x1^2 + 2*x1 + 1
Output:
(SOS Expression): (x1 + 1)^2
Explanation:
The polynomial is a perfect square trinomial; the SOS reconstruction is exact.

Input polynomial:
5*x1^2 + 12*x1*x2 + 6*x1 + 9*x2^2 + 9
Output:
(SOS Expression): (x1 + 2.99)^2 + (2*x1 + 3*x2)^2

Now, please provide the SOS reconstruction for the following polynomial:
Original polynomial: {polynomial}
"""

DELIMITERS = ("<SOS Expression>:", "(SOS Expression):")
INF = float("inf")


def build_prompt(f: Polynomial) -> str:
    return PROMPT_TEMPLATE.format(polynomial=f.to_text())


# ---------------------------------------------------------------- response parsing


class SosFormatError(ValueError):
    """Malformed conjecture text.  ``code`` is one of the class constants."""

    MISSING_DELIMITER = "missing_delimiter"
    NON_SQUARE = "non_square_term"
    NEGATIVE_WEIGHT = "negative_weight"
    BAD_POLYNOMIAL = "bad_polynomial"
    EMPTY = "empty_expression"

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def extract_expression(text: str) -> str:
    """The text after the first SOS delimiter, up to the end of that line."""
    best = None
    for d in DELIMITERS:
        i = text.find(d)
        if i >= 0 and (best is None or i < best[0]):
            best = (i, d)
    if best is None:
        raise SosFormatError(SosFormatError.MISSING_DELIMITER, "no '<SOS Expression>:' delimiter")
    rest = text[best[0] + len(best[1]) :].strip()
    line = rest.splitlines()[0].strip() if rest else ""
    return line.strip("`").strip()


def _split_top_level(expr: str) -> list[tuple[str, str]]:
    """Split on ``+``/``-`` at parenthesis depth 0; returns ``(sign, term)`` pairs."""
    parts = []
    depth = 0
    sign = "+"
    start = 0
    i = 0
    pending = True  # a sign may appear before the first term
    while i < len(expr):
        ch = expr[i]
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise SosFormatError(SosFormatError.BAD_POLYNOMIAL, "unbalanced ')'")
        elif depth == 0 and ch in "+-":
            prev = expr[start:i].strip()
            exp_sign = i >= 2 and expr[i - 1] in "eE" and expr[i - 2].isdigit()
            if not exp_sign:
                if prev:
                    parts.append((sign, prev))
                    sign = ch
                elif pending:
                    sign = "-" if (sign == "-") != (ch == "-") else "+"
                else:
                    raise SosFormatError(SosFormatError.NON_SQUARE, f"dangling operator at {i}")
                start = i + 1
                pending = True
        i += 1
    if depth:
        raise SosFormatError(SosFormatError.BAD_POLYNOMIAL, "unbalanced '('")
    last = expr[start:].strip()
    if last:
        parts.append((sign, last))
    elif parts or sign == "-":
        raise SosFormatError(SosFormatError.NON_SQUARE, "expression ends with an operator")
    return parts


_WEIGHT = r"(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)(?:\s*/\s*(\d+))?"
_TERM = re.compile(r"^(?:" + _WEIGHT + r"\s*\*\s*)?\((.*)\)\s*(?:\^|\*\*)\s*2$", re.S)


def _matching_paren(s: str, open_idx: int) -> int:
    depth = 0
    for i in range(open_idx, len(s)):
        if s[i] == "(":
            depth += 1
        elif s[i] == ")":
            depth -= 1
            if depth == 0:
                return i
    return -1


def parse_sos_response(text: str, nvars: int | None = None) -> list[tuple[Fraction, Polynomial]]:
    """Parse ``<SOS Expression>: c1*(q1)^2 + (q2)^2 + ...`` into exact ``(weight, q)`` pairs.

    Decimal literals are read exactly.  A missing weight means 1.  Raises
    ``SosFormatError`` whose ``code`` tells missing delimiters, non-square
    terms and negative weights apart.
    """
    expr = extract_expression(text)
    if not expr:
        raise SosFormatError(SosFormatError.EMPTY, "nothing after the delimiter")
    n = max(nvars or 1, infer_nvars(expr))
    out = []
    for sign, term in _split_top_level(expr):
        mt = _TERM.match(term)
        if not mt:
            raise SosFormatError(SosFormatError.NON_SQUARE, f"not a square: {term!r}")
        open_idx = term.index("(")
        if _matching_paren(term, open_idx) != term.rindex(")"):
            raise SosFormatError(SosFormatError.NON_SQUARE, f"not a single square: {term!r}")
        num, den, body = mt.group(1), mt.group(2), mt.group(3)
        w = Fraction(num) if num else Fraction(1)
        if den:
            if int(den) == 0:
                raise SosFormatError(SosFormatError.BAD_POLYNOMIAL, "zero denominator in weight")
            w /= int(den)
        if sign == "-" and w:
            raise SosFormatError(SosFormatError.NEGATIVE_WEIGHT, f"negative weight on {term!r}")
        try:
            q = parse_polynomial(body, n)
        except ParseError as exc:
            raise SosFormatError(SosFormatError.BAD_POLYNOMIAL, str(exc)) from exc
        out.append((w, q))
    if not out:
        raise SosFormatError(SosFormatError.EMPTY, "no square terms")
    return out


def format_sos_expression(squares: Sequence[tuple], delimiter: str = DELIMITERS[0]) -> str:
    """Inverse of ``parse_sos_response`` for exact squares."""
    parts = []
    for w, q in squares:
        w = Fraction(w)
        body = f"({q.to_text()})^2"
        parts.append(body if w == 1 else f"{rational_text(w)}*{body}")
    return f"{delimiter} {' + '.join(parts) if parts else '(0)^2'}"


# ---------------------------------------------------------------- candidates


@dataclass
class ConjectureCandidate:
    raw_text: str
    parsed: list
    theta: float
    source_tag: str
    format_ok: bool
    error: str = ""

    def expansion(self, nvars: int) -> Polynomial:
        return expand_weighted_squares(self.parsed, nvars)


@dataclass
class ConjectureRequest:
    f: Polynomial
    budget_k: int = 32
    timeout_s: float = 3600.0
    seed: int = 0

    def __post_init__(self):
        if self.budget_k < 1:
            raise ValueError("budget_k must be >= 1")


def score_candidate(f: Polynomial, raw_text: str, source_tag: str) -> ConjectureCandidate:
    """Parse and score ``raw_text`` against ``f``; malformed text gets ``theta = inf``."""
    try:
        parsed = parse_sos_response(raw_text, f.nvars)
    except SosFormatError as exc:
        return ConjectureCandidate(raw_text, [], INF, source_tag, False, exc.code)
    n = max([f.nvars] + [q.nvars for _, q in parsed])
    fhat = expand_weighted_squares([(w, q.with_nvars(n)) for w, q in parsed], n)
    theta = coeff_l2_distance(f.with_nvars(n), fhat)
    return ConjectureCandidate(raw_text, parsed, theta, source_tag, True)


def rank(candidates: Sequence[ConjectureCandidate]) -> list[ConjectureCandidate]:
    """Ascending backward error; ties keep arrival order, non-finite errors go last."""
    return sorted(candidates, key=lambda c: c.theta)


class ConjectureSource(Protocol):
    tag: str

    def propose(self, req: ConjectureRequest) -> list[ConjectureCandidate]: ...


def source_propose(src: ConjectureSource, req: ConjectureRequest) -> list[ConjectureCandidate]:
    return src.propose(req)


# ---------------------------------------------------------------- replay


class ReplaySource:
    """Candidates read from text, one SOS expression per line (delimiter optional)."""

    tag = "replay"

    def __init__(self, lines: Sequence[str]):
        self.lines = [ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]

    @classmethod
    def from_file(cls, path) -> "ReplaySource":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())

    def propose(self, req: ConjectureRequest) -> list[ConjectureCandidate]:
        out = []
        for ln in self.lines[: req.budget_k]:
            text = ln if any(d in ln for d in DELIMITERS) else f"{DELIMITERS[0]} {ln}"
            out.append(score_candidate(req.f, text, self.tag))
        return out


# ---------------------------------------------------------------- numeric baseline


def _float_text(x: float) -> str:
    return repr(float(x))


def factor_rows_text(C: np.ndarray, basis: MonomialBasis, rel_drop: float = 1e-14) -> str:
    """Print float factor rows as ``<SOS Expression>: (..)^2 + ...``; tiny entries are dropped."""
    scale = float(np.max(np.abs(C))) if C.size else 0.0
    parts = []
    for row in C:
        terms = []
        for c, mono in zip(row, basis):
            if abs(c) <= rel_drop * scale or c == 0:
                continue
            q = Polynomial.monomial(mono, 1).to_text()
            coef = _float_text(abs(c))
            t = coef if q == "1" else f"{coef}*{q}"
            terms.append(("-" if c < 0 else "+", t))
        if not terms:
            continue
        body = ("-" if terms[0][0] == "-" else "") + terms[0][1]
        for s, t in terms[1:]:
            body += f" {s} {t}"
        parts.append(f"({body})^2")
    return f"{DELIMITERS[0]} {' + '.join(parts) if parts else '(0)^2'}"


def problem_seed(f: Polynomial, seed: int) -> int:
    return (zlib.crc32(f.to_text().encode()) ^ (seed * 0x9E3779B1)) & 0xFFFFFFFF


def baseline_conjecture(
    f: Polynomial,
    basis: MonomialBasis | None,
    restarts: int,
    seed: int = 0,
    max_iters: int = 200,
    deadline: float | None = None,
) -> list[ConjectureCandidate]:
    """Random low-rank starts refined by float Gauss-Newton; candidates sorted by theta.

    Restarts alternate between full-rank starts and random smaller ranks.
    Restarts that end with a non-finite backward error are discarded.
    """
    if f.total_degree() % 2:
        raise ValueError("polynomial degree must be even")
    if basis is None:
        basis = support_restricted_basis(f)
    m = len(basis)
    if m == 0:
        return []
    rng = np.random.default_rng(problem_seed(f, seed))
    scale = math.sqrt(max(float(abs(c)) for _, c in f.terms()) / m) if len(f) else 1.0
    out = []
    for i in range(restarts):
        if deadline is not None and time.monotonic() > deadline:
            break
        k = m if i % 2 == 0 else int(rng.integers(1, m + 1))
        C0 = rng.standard_normal((k, m)) * scale
        C, theta = float_gauss_newton(f, basis, C0, max_iters=max_iters, deadline=deadline)
        if not math.isfinite(theta):
            continue
        out.append(score_candidate(f, factor_rows_text(C, basis), BaselineSource.tag))
    return rank([c for c in out if math.isfinite(c.theta)])


class BaselineSource:
    tag = "baseline"

    def __init__(self, seed: int = 0, max_iters: int = 200):
        self.seed = seed
        self.max_iters = max_iters

    def propose(self, req: ConjectureRequest) -> list[ConjectureCandidate]:
        deadline = time.monotonic() + req.timeout_s
        try:
            basis = support_restricted_basis(req.f)
        except (BasisTooLarge, ValueError) as exc:
            log.warning("baseline: %s", exc)
            return []
        return baseline_conjecture(req.f, basis, req.budget_k, self.seed ^ req.seed, self.max_iters, deadline)


# ---------------------------------------------------------------- remote model


class TransportError(RuntimeError):
    pass


@dataclass
class HttpSourceConfig:
    url: str = "http://localhost:8000/v1/chat/completions"
    model: str = "sos-conjecturer"
    token_env: str = "EXACTSOS_API_TOKEN"
    auth_header: str = "Authorization"
    temperature: float = 0.7
    per_call: int = 1
    max_concurrency: int = 4
    retries: int = 2
    request_timeout_s: float = 120.0


class HttpSource:
    """Chat-completions style endpoint.

    Request body: ``{"model", "messages": [{"role": "user", "content": prompt}],
    "temperature", "n"}``.  Response: ``{"choices": [{"message": {"content": text}}]}``
    (a plain ``{"text": ...}`` or ``{"outputs": [...]}`` body is also accepted).
    The bearer token is read from the environment variable ``token_env``.
    """

    tag = "http"

    def __init__(self, cfg: HttpSourceConfig | None = None, opener=None):
        self.cfg = cfg or HttpSourceConfig()
        self._open = opener or urllib.request.urlopen

    def _headers(self) -> dict:
        h = {"Content-Type": "application/json"}
        token = os.environ.get(self.cfg.token_env)
        if token:
            h[self.cfg.auth_header] = f"Bearer {token}"
        return h

    def request_body(self, prompt: str, n: int) -> dict:
        return {
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
            "n": n,
        }

    @staticmethod
    def response_texts(body: dict) -> list[str]:
        if "choices" in body:
            out = []
            for ch in body["choices"]:
                msg = ch.get("message") or {}
                out.append(msg.get("content", ch.get("text", "")))
            return out
        if "outputs" in body:
            return [str(t) for t in body["outputs"]]
        if "text" in body:
            return [str(body["text"])]
        raise TransportError("unrecognised response body")

    def _call(self, prompt: str, n: int, timeout: float) -> list[str]:
        data = json.dumps(self.request_body(prompt, n)).encode()
        last = None
        for _ in range(self.cfg.retries + 1):
            req = urllib.request.Request(self.cfg.url, data=data, headers=self._headers(), method="POST")
            try:
                with self._open(req, timeout=timeout) as resp:
                    return self.response_texts(json.loads(resp.read().decode()))
            except (urllib.error.URLError, OSError, ValueError, TransportError) as exc:
                last = exc
        raise TransportError(f"conjecture endpoint failed: {last}")

    def propose(self, req: ConjectureRequest) -> list[ConjectureCandidate]:
        prompt = build_prompt(req.f)
        n_calls = math.ceil(req.budget_k / self.cfg.per_call)
        timeout = min(self.cfg.request_timeout_s, req.timeout_s)
        texts: list[str] = []
        with ThreadPoolExecutor(max_workers=max(1, self.cfg.max_concurrency)) as pool:
            futures = [pool.submit(self._call, prompt, self.cfg.per_call, timeout) for _ in range(n_calls)]
            for fut in futures:
                try:
                    texts.extend(fut.result())
                except TransportError as exc:
                    log.warning("%s", exc)
        return [score_candidate(req.f, t, self.tag) for t in texts[: req.budget_k]]


def make_source(kind: str, *, replay_path=None, seed: int = 0, http: HttpSourceConfig | None = None) -> ConjectureSource:
    if kind == "replay":
        if replay_path is None:
            raise ValueError("replay source needs a file")
        return ReplaySource.from_file(replay_path)
    if kind == "baseline":
        return BaselineSource(seed=seed)
    if kind == "http":
        return HttpSource(http)
    raise ValueError(f"unknown conjecture source {kind!r}")
