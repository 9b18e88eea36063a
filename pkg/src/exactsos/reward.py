"""Offline scoring of conjecture text: accuracy, format, and structural deviation penalties."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .conjecture import SosFormatError, parse_sos_response
from .poly import DEFAULT_TAU_COEFF, FloatPolynomial, Polynomial, coeff_l2_distance, expand_weighted_squares

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 0.5
    w_acc: float = 0.9
    w_fmt: float = 0.1
    lambda_soft: float = 0.5
    rho_max: float = 2.0
    c_hard: float = 0.5
    tau_coeff: float = DEFAULT_TAU_COEFF

    def __post_init__(self):
        vals = (self.alpha, self.w_acc, self.w_fmt, self.lambda_soft, self.rho_max, self.c_hard, self.tau_coeff)
        if any(v < 0 for v in vals):
            raise ValueError("reward parameters must be nonnegative")
        if abs(self.w_acc + self.w_fmt - 1) > 1e-12:
            raise ValueError("w_acc + w_fmt must equal 1")


@dataclass(frozen=True)
class RewardBreakdown:
    r_acc: float
    r_fmt: int
    sdr: float
    p_soft: float
    p_hard: float
    total: float


AnyPoly = Polynomial | FloatPolynomial


def _common(f: AnyPoly, g: AnyPoly):
    n = max(f.nvars, g.nvars)
    return _widen(f, n), _widen(g, n)


def _widen(p: AnyPoly, n: int) -> AnyPoly:
    if p.nvars == n:
        return p
    if isinstance(p, Polynomial):
        return p.with_nvars(n)
    pad = (0,) * (n - p.nvars)
    return FloatPolynomial(n, {m + pad: c for m, c in p.as_dict().items()}, p.prec)


def _support(p: AnyPoly, tau: float) -> set:
    if isinstance(p, Polynomial):
        return {m for m, c in p.terms() if abs(c) > tau}
    return p.support(tau)


def accuracy_reward(f: Polynomial, fhat: AnyPoly, alpha: float = 0.5) -> float:
    """``1 / (1 + alpha * ||f - fhat||_2)`` over coefficient vectors."""
    if alpha == 0:
        log.warning("alpha = 0 makes the accuracy reward constant")
    f, fhat = _common(f, fhat)
    return 1.0 / (1.0 + alpha * coeff_l2_distance(f, fhat))


def format_reward(raw_text: str) -> int:
    try:
        parse_sos_response(raw_text)
    except SosFormatError:
        return 0
    return 1


def sdr(f: Polynomial, fhat: AnyPoly, tau_coeff: float = DEFAULT_TAU_COEFF) -> float:
    """Structural deviation rate ``(missing + spurious) / required`` over thresholded supports."""
    f, fhat = _common(f, fhat)
    req = _support(f, tau_coeff)
    if not req:
        raise ValueError("structural deviation rate is undefined for the zero polynomial")
    got = _support(fhat, tau_coeff)
    return (len(req - got) + len(got - req)) / len(req)


def structure_penalty(f: Polynomial, fhat: AnyPoly, cfg: RewardConfig = RewardConfig()) -> tuple[float, float]:
    f, fhat = _common(f, fhat)
    p_soft = cfg.lambda_soft * min(sdr(f, fhat, cfg.tau_coeff), cfg.rho_max)
    hat_support = _support(fhat, cfg.tau_coeff)
    hat_deg = max((sum(m) for m in hat_support), default=-1)
    hat_vars = {i + 1 for m in hat_support for i, e in enumerate(m) if e}
    violation = hat_deg > f.total_degree() or not hat_vars <= f.variables_used()
    return p_soft, (cfg.c_hard if violation else 0.0)


def total_reward(f: Polynomial, raw_text: str, cfg: RewardConfig = RewardConfig()) -> RewardBreakdown:
    """Score conjecture text against ``f``.

    Text that does not parse gets ``r_fmt = 0`` and is scored as the zero
    polynomial for the accuracy and structure terms.
    """
    try:
        parsed = parse_sos_response(raw_text, f.nvars)
        r_fmt = 1
    except SosFormatError:
        parsed = []
        r_fmt = 0
    n = max([f.nvars] + [q.nvars for _, q in parsed])
    fhat = expand_weighted_squares([(w, q.with_nvars(n)) for w, q in parsed], n)
    return breakdown(f, fhat, r_fmt, cfg)


def breakdown(f: Polynomial, fhat: AnyPoly, r_fmt: int, cfg: RewardConfig = RewardConfig()) -> RewardBreakdown:
    r_acc = accuracy_reward(f, fhat, cfg.alpha)
    s = sdr(f, fhat, cfg.tau_coeff)
    p_soft, p_hard = structure_penalty(f, fhat, cfg)
    total = cfg.w_acc * r_acc + cfg.w_fmt * r_fmt - (p_soft + p_hard)
    if not math.isfinite(total):
        raise ArithmeticError("non-finite reward")
    return RewardBreakdown(r_acc, r_fmt, s, p_soft, p_hard, total)
