"""Lean 4 proof scripts from exact SOS certificates, and an optional external compile check."""

from __future__ import annotations

import os
import re
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .poly import Polynomial, parse_polynomial
from .verify import SosCertificate, check_certificate

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_']*(\.[A-Za-z_][A-Za-z0-9_']*)*$")


class UnsoundCertificate(ValueError):
    pass


@dataclass
class LeanEmitConfig:
    theorem_name: str = "sos_nonneg"
    variable_names: list | None = None  # default x1..xn
    include_imports: bool = True
    lean_check_command: list | None = None  # e.g. ["lake", "env", "lean"]; script path is appended
    timeout_s: float = 600.0

    def __post_init__(self):
        if not _IDENT.match(self.theorem_name):
            raise ValueError(f"invalid Lean identifier {self.theorem_name!r}")
        if self.variable_names is not None:
            for v in self.variable_names:
                if not _IDENT.match(v) or v == "I":
                    raise ValueError(f"invalid variable name {v!r}")

    def names(self, nvars: int) -> list[str]:
        if self.variable_names is None:
            return [f"x{i}" for i in range(1, nvars + 1)]
        if len(self.variable_names) < nvars:
            raise ValueError(f"need {nvars} variable names, got {len(self.variable_names)}")
        return list(self.variable_names[:nvars])


def _weight_text(w: Fraction) -> str:
    return str(w.numerator) if w.denominator == 1 else f"{w.numerator}/{w.denominator}"


def emit_lean(f: Polynomial, cert: SosCertificate, cfg: LeanEmitConfig | None = None) -> str:
    """Instantiate the four-step SOS proof template for ``f`` and ``cert``.

    Terms are ``(weight, base)`` pairs mapped by ``fun (p, k) => p * k^2``.
    Raises ``UnsoundCertificate`` unless the certificate checks exactly.
    """
    cfg = cfg or LeanEmitConfig()
    verdict = check_certificate(f, cert)
    if not verdict.ok:
        raise UnsoundCertificate("refusing to emit a proof for a certificate that does not verify")
    names = cfg.names(f.nvars)
    terms = ", ".join(f"({_weight_text(w)}, {q.to_text(names)})" for w, q in cert.squares) or "(0, 0)"
    lines = []
    if cfg.include_imports:
        lines += ["import Mathlib", ""]
    lines += [
        f"theorem {cfg.theorem_name} ({' '.join(names)} I : Real)",
        f"  (h1 : I = {f.to_text(names)}) :",
        "  I >= 0 := by",
        "  -- Step 1: Construct SOS term list",
        "  let terms : List (Real × Real) :=",
        f"    [ {terms} ]",
        "  -- Step 2: Prove equality between polynomial and its SOS expansion",
        "  have : I = (terms.map (fun (p, k) => p * k^2)).sum := by",
        "    unfold terms",
        "    simp only [List.map_cons, List.map_nil, List.sum_cons, List.sum_nil,",
        "      one_mul, mul_one, zero_mul, add_zero, zero_add, neg_mul]",
        "    linear_combination h1",
        "  -- Step 3: Substitute and simplify",
        "  rw [this]",
        "  unfold terms",
        "  simp only [List.map_cons, List.map_nil, List.sum_cons, List.sum_nil,",
        "    one_mul, mul_one, zero_mul, add_zero, zero_add, ge_iff_le]",
        "  -- Step 4: Apply positivity tactic to conclude",
        "  positivity",
    ]
    return "\n".join(lines) + "\n"


def _split_depth(s: str, sep: str, depth_target: int) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == depth_target:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def parse_lean_terms(script: str, nvars: int, variable_names: Sequence[str] | None = None) -> list[tuple[Fraction, Polynomial]]:
    """Read the ``terms`` list of an emitted script back into exact ``(weight, base)`` pairs."""
    m = re.search(r"let terms : List \(Real × Real\) :=\s*\[(.*?)\]\s*\n", script, re.S)
    if not m:
        raise ValueError("no terms list found")
    body = m.group(1).strip()
    names = list(variable_names) if variable_names else [f"x{i}" for i in range(1, nvars + 1)]
    out = []
    for entry in _split_depth(body, ",", 0):
        entry = entry.strip()
        if not (entry.startswith("(") and entry.endswith(")")):
            raise ValueError(f"malformed term {entry!r}")
        w, base = _split_depth(entry[1:-1], ",", 0)
        for i, nm in enumerate(names, start=1):
            if nm != f"x{i}":
                base = re.sub(rf"\b{re.escape(nm)}\b", f"x{i}", base)
        out.append((Fraction(w.strip()), parse_polynomial(base, nvars)))
    return out


@dataclass
class LeanResult:
    status: str  # pass | fail | skipped | timeout
    output: str = ""
    returncode: int | None = None


def lean_check(script: str, cfg: LeanEmitConfig | None = None) -> LeanResult:
    """Compile ``script`` with the configured command; ``skipped`` when none is available."""
    cfg = cfg or LeanEmitConfig()
    cmd = cfg.lean_check_command
    if not cmd:
        return LeanResult("skipped", "no Lean command configured")
    if shutil.which(cmd[0]) is None and not os.path.exists(cmd[0]):
        return LeanResult("skipped", f"{cmd[0]} not found")
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, f"{cfg.theorem_name.replace('.', '_')}.lean")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(script)
        try:
            proc = subprocess.run(list(cmd) + [path], capture_output=True, text=True, timeout=cfg.timeout_s)
        except subprocess.TimeoutExpired as exc:
            return LeanResult("timeout", str(exc.stdout or ""))
        except OSError as exc:
            return LeanResult("skipped", str(exc))
    status = "pass" if proc.returncode == 0 else "fail"
    return LeanResult(status, proc.stdout + proc.stderr, proc.returncode)


def default_lean_command() -> list | None:
    """``lake env lean`` or ``lean`` when found on PATH, else None."""
    if shutil.which("lake"):
        return ["lake", "env", "lean"]
    if shutil.which("lean"):
        return ["lean"]
    return None
