"""Command-line interface.

Exit codes: 0 success (proved / certificate valid), 1 ran but unproved or
invalid, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import __version__
from .config import load_config
from .datagen import METHODS, GenConfig, emit_corpus
from .lean import LeanEmitConfig, UnsoundCertificate, emit_lean, lean_check
from .pipeline import bench, solve
from .poly import ParseError, read_problem
from .reward import total_reward
from .verify import check_certificate, read_certificate

EXIT_OK, EXIT_UNPROVED, EXIT_ERROR = 0, 1, 2


def _pipeline_config(args):
    cfg = load_config(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.budget is not None:
        over["budget_k"] = args.budget
    if args.timeout is not None:
        over["timeout_s"] = args.timeout
    if args.source is not None:
        over["source"] = args.source
    if getattr(args, "replay", None):
        over["replay_path"] = args.replay
        over.setdefault("source", "replay")
    if getattr(args, "parallelism", None):
        over["parallelism"] = args.parallelism
    cfg = dataclasses.replace(cfg, **over)
    if args.precision_bits is not None:
        cfg = dataclasses.replace(cfg, refine=dataclasses.replace(cfg.refine, precision_bits=args.precision_bits))
    if getattr(args, "lean_cmd", None):
        cfg = dataclasses.replace(cfg, lean=dataclasses.replace(cfg.lean, lean_check_command=args.lean_cmd.split()))
    return cfg


def _add_pipeline_flags(p):
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int, help="candidates per problem")
    p.add_argument("--timeout", type=float, help="seconds per problem")
    p.add_argument("--source", choices=("replay", "baseline", "http"))
    p.add_argument("--precision-bits", type=int)
    p.add_argument("--lean-cmd", help="command that compiles a Lean file, e.g. 'lake env lean'")


def cmd_solve(args) -> int:
    cfg = _pipeline_config(args)
    f, _ = read_problem(args.problem)
    out = args.out or str(Path(args.problem).with_suffix("")) + "_out"
    rep = solve(f, cfg, problem_id=Path(args.problem).stem, out_dir=out)
    print(f"outcome\t{rep.outcome}")
    print(f"candidates\t{rep.candidates_tried}")
    print(f"theta\t{rep.theta:.3e}")
    print(f"theta_refined\t{rep.theta_refined:.3e}")
    if rep.recovery:
        print(f"recovery\t{rep.recovery}")
    if rep.certificate_path:
        print(f"certificate\t{rep.certificate_path}")
        print(f"lean\t{rep.lean_status}")
    print(f"time\t{rep.total_time:.3f}")
    if rep.message:
        print(f"message\t{rep.message}")
    return EXIT_OK if rep.outcome == "proved" else EXIT_UNPROVED


def cmd_bench(args) -> int:
    cfg = _pipeline_config(args)
    summary = bench(args.problem_dir, cfg, args.out)
    print(Path(args.out, "summary.txt").read_text(encoding="utf-8"), end="")
    return EXIT_UNPROVED if summary.audit_failures else EXIT_OK


def cmd_gen(args) -> int:
    cfg = GenConfig(
        nvars=args.nvars,
        half_degree=args.half_degree,
        coefficient_range=(args.coeff_min, args.coeff_max),
        sparsity=args.sparsity,
        rank_k=args.rank,
        seed=args.seed,
        basis_size=args.basis_size,
    )
    methods = args.method or list(METHODS)
    rows = emit_corpus(cfg, args.count, args.out, methods)
    print(f"wrote {len(rows)} pairs to {args.out}")
    return EXIT_OK


def cmd_score(args) -> int:
    f, _ = read_problem(args.problem)
    text = Path(args.response).read_text(encoding="utf-8")
    cfg = load_config(args.config).reward
    b = total_reward(f, text, cfg)
    for k, v in dataclasses.asdict(b).items():
        print(f"{k}\t{v}")
    return EXIT_OK


def cmd_emit_lean(args) -> int:
    f, _ = read_problem(args.problem)
    cert = read_certificate(args.cert)
    cfg = LeanEmitConfig(theorem_name=args.name, lean_check_command=args.lean_cmd.split() if args.lean_cmd else None)
    try:
        script = emit_lean(f, cert, cfg)
    except UnsoundCertificate as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNPROVED
    if args.out:
        Path(args.out).write_text(script, encoding="utf-8")
    else:
        sys.stdout.write(script)
    if args.lean_cmd:
        res = lean_check(script, cfg)
        print(f"lean\t{res.status}", file=sys.stderr)
        if res.status not in ("pass", "skipped"):
            print(res.output, file=sys.stderr)
            return EXIT_UNPROVED
    return EXIT_OK


def cmd_check_cert(args) -> int:
    f, _ = read_problem(args.problem)
    cert = read_certificate(args.cert)
    v = check_certificate(f, cert)
    if v.ok:
        print("ok")
        return EXIT_OK
    print("FAILED")
    if not v.identity_residual.is_zero():
        print(f"residual\t{v.identity_residual.to_text()}")
    for i, k in v.weight_violations:
        print(f"negative weight\tsquare {i}\t{k}")
    return EXIT_UNPROVED


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="exactsos", description="Exact SOS certificates from approximate conjectures.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="search for a certificate of one problem")
    p.add_argument("problem")
    p.add_argument("--replay", help="file of SOS expressions, one per line (implies --source replay)")
    p.add_argument("--out", help="output directory for .cert and .lean")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run solve over a directory of .poly files")
    p.add_argument("problem_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--parallelism", type=int)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", help="generate a corpus of SOS training pairs")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--method", action="append", choices=METHODS)
    p.add_argument("--nvars", type=int, default=2)
    p.add_argument("--half-degree", type=int, default=1)
    p.add_argument("--coeff-min", type=int, default=-9)
    p.add_argument("--coeff-max", type=int, default=9)
    p.add_argument("--sparsity", type=float, default=0.6)
    p.add_argument("--rank", type=int)
    p.add_argument("--basis-size", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("score", help="reward a conjecture response against a problem")
    p.add_argument("problem")
    p.add_argument("response")
    p.add_argument("--config")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("emit-lean", help="write a Lean proof script for a certificate")
    p.add_argument("problem")
    p.add_argument("cert")
    p.add_argument("--name", default="sos_nonneg")
    p.add_argument("--out")
    p.add_argument("--lean-cmd")
    p.set_defaults(func=cmd_emit_lean)

    p = sub.add_parser("check-cert", help="verify a certificate exactly")
    p.add_argument("problem")
    p.add_argument("cert")
    p.set_defaults(func=cmd_check_cert)
    return ap


def main(argv=None) -> int:
    if hasattr(sys, "set_int_max_str_digits"):
        sys.set_int_max_str_digits(0)  # exact certificates can carry very long integers
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
