"""Command-line interface: solve, estimate, check, and bench subcommands.

Exit codes: 0 solved (bound-met or residual-zero), 1 usage or parse
errors, 2 failed preconditions (local admission, norm dominance), 3 runs
that did not certify (diverged, escaped-ball, max-iter, failed checks or
bench assertions), 4 not-certifiable estimation. Reports are JSON on
stdout (or --out); errors are machine-readable JSON on stderr. All
sampling is seeded (default seed 42), so identical invocations produce
byte-identical reports.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from ._serialize import dumps, grid_csv_lines, trace_csv_lines
from .enrichment import (
    EnrichmentCertificate,
    NotCertifiableError,
    SamplePlan,
    check_certificate,
    default_b_grid,
    estimate_grid,
    select_certificate,
)
from .problems import DEFAULT_SEED, Problem, ProblemFileError, parse_problem
from .solver import (
    AdmissionError,
    BackVerificationError,
    DominanceError,
    SolveConfig,
    SolveReport,
    check_bound_validity,
    solve,
    solve_asymptotic,
    solve_local,
    solve_maia,
)
from .spaces import NormPair

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PRECONDITION = 2
EXIT_NOT_CONVERGED = 3
EXIT_NOT_CERTIFIABLE = 4

_CONVERGED = ("bound-met", "residual-zero")


class UsageError(ValueError):
    """Bad invocation detected after argument parsing."""


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(dumps({"error": {"kind": kind, "message": message}}) + "\n")


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text + "\n")
    else:
        Path(path).write_text(text + "\n")


def _resolve_certificate(problem: Problem, args) -> EnrichmentCertificate:
    """Declared certificate, or an estimated one for estimate-mode problems."""
    if problem.certificate_mode == "declared":
        return problem.declared
    plan, grid = _sampling_setup(problem, args)
    grid_arr, theta_hat = estimate_grid(problem.operator, problem.norm, plan, grid)
    return select_certificate(
        grid_arr, theta_hat, "empirical", sample_count=plan.pair_count, seed=plan.seed
    )


def _sampling_setup(problem: Problem, args) -> tuple[SamplePlan, list[float]]:
    params = problem.estimate_params
    pairs = args.pairs if args.pairs is not None else params.pairs
    seed = args.seed if args.seed is not None else params.seed
    b_max = args.b_max if args.b_max is not None else params.b_max
    b_step = args.b_step if args.b_step is not None else params.b_step
    plan = SamplePlan(pair_count=pairs, seed=seed, domain=problem.domain)
    return plan, default_b_grid(b_max, b_step)


def _run_problem(problem: Problem, args) -> tuple[SolveReport, EnrichmentCertificate, int]:
    """Run the problem's configured solve mode; returns (report, cert, seed)."""
    cert = _resolve_certificate(problem, args)
    tol = args.tol if getattr(args, "tol", None) is not None else problem.tol
    max_iter = args.max_iter if getattr(args, "max_iter", None) is not None else problem.max_iter
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    cfg = SolveConfig(
        x0=problem.x0,
        tol=tol,
        max_iter=max_iter,
        lambda_override=getattr(args, "lambda_override", None),
    )
    if problem.mode == "global":
        rep = solve(problem.operator, cert, problem.norm, cfg)
    elif problem.mode == "local":
        rep = solve_local(problem.operator, cert, problem.norm, cfg, problem.radius)
    elif problem.mode == "asymptotic":
        rep = solve_asymptotic(problem.operator, problem.n_power, cert, problem.norm, cfg)
    else:
        pair = NormPair(d=problem.d_norm, rho=problem.norm)
        rep = solve_maia(
            problem.operator,
            cert,
            pair,
            cfg,
            dominance_samples=problem.dominance_samples,
            dominance_seed=seed,
        )
    return rep, cert, seed


def _solve_section(rep: SolveReport) -> dict:
    return {
        "mode": rep.mode,
        "fixed_point": [float(v) for v in rep.fixed_point],
        "iterations": rep.iterations,
        "termination": rep.termination,
        "final_a_priori": rep.final_a_priori,
        "final_a_posteriori": rep.final_a_posteriori,
        "final_residual": rep.final_residual,
        "back_verification": rep.back_verification,
        "ball_radius": rep.ball_radius,
        "lambda": rep.lambda_used,
        "tol": rep.tol,
        "bounds_certified": rep.bounds_certified,
        "falsified": rep.falsified,
        "detail": rep.detail,
        "trace": {
            "total": rep.trace.total,
            "retained": len(rep.trace.rows),
            "truncated": rep.trace.truncated,
        },
    }


def build_run_report(
    problem: Problem, cert: EnrichmentCertificate, rep: SolveReport, seed: int
) -> dict:
    return {
        "version": __version__,
        "seed": seed,
        "problem": problem.echo,
        "certificate": cert.describe(),
        "cost": {"operator_evaluations": rep.evaluations},
        "solve": _solve_section(rep),
    }


def cmd_solve(args) -> int:
    problem = parse_problem(args.problem)
    rep, cert, seed = _run_problem(problem, args)
    doc = build_run_report(problem, cert, rep, seed)
    _write_text(args.out, dumps(doc))
    if args.trace_out is not None:
        Path(args.trace_out).write_text("\n".join(trace_csv_lines(rep.trace.rows)) + "\n")
    return EXIT_OK if rep.termination in _CONVERGED else EXIT_NOT_CONVERGED


def cmd_estimate(args) -> int:
    problem = parse_problem(args.problem)
    plan, grid = _sampling_setup(problem, args)
    grid_arr, theta_hat = estimate_grid(problem.operator, problem.norm, plan, grid)
    if args.grid_out is not None:
        Path(args.grid_out).write_text("\n".join(grid_csv_lines(grid_arr, theta_hat)) + "\n")
    cert = select_certificate(
        grid_arr, theta_hat, "empirical", sample_count=plan.pair_count, seed=plan.seed
    )
    doc = {
        "version": __version__,
        "seed": plan.seed,
        "problem": problem.echo,
        "certificate": cert.describe(),
        "grid": {
            "points": int(grid_arr.size),
            "b_lo": float(grid_arr[0]),
            "b_hi": float(grid_arr[-1]),
        },
    }
    _write_text(args.out, dumps(doc))
    return EXIT_OK


def cmd_check(args) -> int:
    problem = parse_problem(args.problem)
    if problem.certificate_mode != "declared":
        raise ProblemFileError("check requires a declared certificate (mode = \"declared\")")
    params = problem.estimate_params
    pairs = args.pairs if args.pairs is not None else params.pairs
    seed = args.seed if args.seed is not None else params.seed
    plan = SamplePlan(pair_count=pairs, seed=seed, domain=problem.domain)
    verdict = check_certificate(problem.operator, problem.declared, problem.norm, plan)
    doc = {
        "version": __version__,
        "seed": seed,
        "problem": problem.echo,
        "certificate": problem.declared.describe(),
        "check": {
            "passed": verdict.passed,
            "max_ratio": verdict.max_ratio,
            "pairs": verdict.pairs,
            "witness": {
                "x": [float(v) for v in verdict.witness_x],
                "y": [float(v) for v in verdict.witness_y],
            },
        },
    }
    _write_text(args.out, dumps(doc))
    return EXIT_OK if verdict.passed else EXIT_NOT_CONVERGED


def _bench_one(path: Path, args) -> dict:
    """Run one corpus problem and evaluate its assertions; never raises."""
    row = {"problem": path.stem, "status": "", "ok": False, "b": None, "theta": None,
           "c": None, "iterations": None, "final_error": None, "bounds_held": None,
           "report": None}
    try:
        problem = parse_problem(str(path))
        rep, cert, seed = _run_problem(problem, args)
    except (ProblemFileError, ValueError) as exc:
        row["status"] = f"parse-error: {exc}"
        return row
    except (AdmissionError, DominanceError) as exc:
        row["status"] = f"precondition-failed: {exc}"
        return row
    except BackVerificationError as exc:
        row["status"] = f"back-verification-failed: {exc}"
        return row
    except NotCertifiableError as exc:
        row["status"] = f"not-certifiable: {exc}"
        return row

    row.update(b=cert.b, theta=cert.theta, c=cert.c, iterations=rep.iterations,
               status=rep.termination)
    row["report"] = build_run_report(problem, cert, rep, seed)

    converged = rep.termination in _CONVERGED
    if problem.reference is not None:
        from .spaces import norm as norm_of

        row["final_error"] = norm_of(rep.fixed_point - problem.reference.point, problem.norm)
    if problem.expect == "diverge":
        row["ok"] = not converged
        return row

    checks = [converged]
    if problem.reference is not None and converged and rep.bounds_certified:
        validity = check_bound_validity(rep, problem.reference.point, problem.norm)
        row["bounds_held"] = validity.ok
        checks.append(validity.ok)
        checks.append(row["final_error"] <= rep.tol * (1.0 + 1e-9)
                      + problem.reference.residual_tolerance)
    row["ok"] = all(checks)
    return row


def _fmt_cell(value, width, digits=4) -> str:
    if value is None:
        return "-".ljust(width)
    if isinstance(value, bool):
        return ("yes" if value else "no").ljust(width)
    if isinstance(value, int):
        return str(value).ljust(width)
    if isinstance(value, float):
        return f"{value:.{digits}g}".ljust(width)
    return str(value).ljust(width)


def cmd_bench(args) -> int:
    corpus = Path(args.corpus)
    if not corpus.is_dir():
        raise UsageError(f"corpus directory not found: {corpus}")
    files = sorted(corpus.glob("*.toml"))
    if not files:
        raise UsageError(f"corpus directory contains no problem files: {corpus}")
    out_dir = Path(args.out) if args.out is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    rows = [_bench_one(path, args) for path in files]
    header = (f"{'problem':<28} {'b':<8} {'theta':<8} {'c':<8} {'iters':<6} "
              f"{'final_err':<10} {'bounds':<7} {'status':<14} {'ok':<4}")
    print(header)
    print("-" * len(header))
    for row in rows:
        print(
            f"{row['problem']:<28} {_fmt_cell(row['b'], 8)} {_fmt_cell(row['theta'], 8)} "
            f"{_fmt_cell(row['c'], 8)} {_fmt_cell(row['iterations'], 6)} "
            f"{_fmt_cell(row['final_error'], 10, 3)} {_fmt_cell(row['bounds_held'], 7)} "
            f"{_fmt_cell(row['status'], 14)} {'ok' if row['ok'] else 'FAIL'}"
        )
        if out_dir is not None and row["report"] is not None:
            (out_dir / f"{row['problem']}.json").write_text(dumps(row["report"]) + "\n")
    failed = [r["problem"] for r in rows if not r["ok"]]
    print(f"\n{len(rows)} problems, {len(failed)} failed"
          + (f": {', '.join(failed)}" if failed else ""))
    return EXIT_OK if not failed else EXIT_NOT_CONVERGED


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="krasolve",
        description="Fixed-point solver for enriched contractions with certified error bounds.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def sampling_flags(p):
        p.add_argument("--pairs", type=int, help="sample pairs for estimation/checking")
        p.add_argument("--seed", type=int, help="RNG seed (default 42 or the problem file's)")
        p.add_argument("--b-max", dest="b_max", type=float, help="upper end of the b grid")
        p.add_argument("--b-step", dest="b_step", type=float, help="spacing of the b grid")

    p_solve = sub.add_parser("solve", help="solve a problem file")
    p_solve.add_argument("problem")
    p_solve.add_argument("--tol", type=float, help="override the error-bound target")
    p_solve.add_argument("--max-iter", dest="max_iter", type=int)
    p_solve.add_argument("--out", help="write the JSON report here instead of stdout")
    p_solve.add_argument("--trace-out", dest="trace_out", help="write the CSV iteration trace")
    p_solve.add_argument(
        "--lambda-override",
        dest="lambda_override",
        type=float,
        help="expert: force the averaging weight; error bounds are then not claimed",
    )
    sampling_flags(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_est = sub.add_parser("estimate", help="estimate an enrichment certificate")
    p_est.add_argument("problem")
    p_est.add_argument("--out")
    p_est.add_argument("--grid-out", dest="grid_out", help="write the b/theta/c grid as CSV")
    sampling_flags(p_est)
    p_est.set_defaults(func=cmd_estimate)

    p_check = sub.add_parser("check", help="check a declared certificate by sampling")
    p_check.add_argument("problem")
    p_check.add_argument("--out")
    sampling_flags(p_check)
    p_check.set_defaults(func=cmd_check)

    p_bench = sub.add_parser("bench", help="run a corpus of problem files")
    p_bench.add_argument("corpus")
    p_bench.add_argument("--tol", type=float, help="override every problem's tol")
    p_bench.add_argument("--max-iter", dest="max_iter", type=int)
    p_bench.add_argument("--out", help="directory for per-problem JSON reports")
    sampling_flags(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ProblemFileError, UsageError, FileNotFoundError) as exc:
        _emit_error("parse", str(exc))
        return EXIT_USAGE
    except (AdmissionError, DominanceError) as exc:
        _emit_error("precondition-failed", str(exc))
        return EXIT_PRECONDITION
    except BackVerificationError as exc:
        _emit_error("back-verification", str(exc))
        return EXIT_NOT_CONVERGED
    except NotCertifiableError as exc:
        _emit_error("not-certifiable", str(exc))
        return EXIT_NOT_CERTIFIABLE
    except ValueError as exc:
        _emit_error("usage", str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
