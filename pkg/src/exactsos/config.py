"""INI configuration for the pipeline.

Sections map onto the nested config objects::

    [pipeline]   source, replay_path, budget_k, timeout_s, seed, parallelism, recover_theta_max, emit_lean
    [refine]     tol_tau, max_iters, precision_bits, damping_*
    [recover]    rank_eps, denom_bound, lll_delta, max_denom_escalations, vector_tol, enum_nodes, boundary_time_s
    [reward]     alpha, w_acc, w_fmt, lambda_soft, rho_max, c_hard, tau_coeff
    [lean]       theorem_name, variable_names (space separated), include_imports, lean_check_command, timeout_s
    [http]       url, model, token_env, auth_header, temperature, per_call, max_concurrency, retries, request_timeout_s

Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import shlex
from fractions import Fraction

from .pipeline import PipelineConfig

_NESTED = ("refine", "recover", "reward", "lean", "http")


def _convert(raw: str, current, name: str):
    raw = raw.strip()
    if name in ("variable_names",):
        return raw.split() or None
    if name == "lean_check_command":
        return shlex.split(raw) or None
    if isinstance(current, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(current, int):
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, Fraction):
        return Fraction(raw)
    if current is None and name == "replay_path":
        return raw or None
    return raw


def _apply(obj, items, section: str):
    names = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for key, raw in items:
        if key not in names or key in _NESTED:
            raise ValueError(f"unknown key {key!r} in [{section}]")
        changes[key] = _convert(raw, getattr(obj, key), key)
    return dataclasses.replace(obj, **changes)


def load_config(path=None, base: PipelineConfig | None = None) -> PipelineConfig:
    cfg = base or PipelineConfig()
    if path is None:
        return cfg
    cp = configparser.ConfigParser(interpolation=None)
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    for section in cp.sections():
        if section == "pipeline":
            cfg = _apply(cfg, cp.items(section), section)
        elif section in _NESTED:
            sub = _apply(getattr(cfg, section), cp.items(section), section)
            cfg = dataclasses.replace(cfg, **{section: sub})
        else:
            raise ValueError(f"unknown config section [{section}]")
    return cfg
