"""Command-line front end for single solves, benchmark tables, and the
parameter formulas.

Subcommands
-----------
solve   : run one scheme at one (n, tau, steps, tol) configuration,
          stopping against a freshly computed reference; writes a
          one-row CSV and a per-step report.
tables  : reproduce the benchmark tables (1 = newton, 3 = regularized
          L-scheme, 5 = Holder L-scheme) as CSV files plus a text
          summary; references are shared across tables.
theory  : print delta, L, the contraction factor, C(alpha) and the
          accumulated error bound for a (tol, tau) pair, plus the
          regularized-L value when --eps is given.

Exit codes: 0 on success/convergence, 1 on usage errors, 2 when the
requested solve did not converge.  Identical flags produce identical
outputs; the default output directory is taken from the DEGENMFEM_OUT
environment variable when set.
"""

import argparse
import os
import sys
from pathlib import Path

from degenmfem import benchmark
from degenmfem.benchmark import (
    DEFAULT_SOLUTION,
    ExperimentResult,
    compute_reference,
    make_source_provider,
    reference_fields,
    render_summary,
    run_table,
    write_results_csv,
)
from degenmfem.fem import assemble_forms, project_scalar
from degenmfem.mesh import build_structured_unit_square
from degenmfem.nonlinearity import NonlinearitySpec, RegularizationSpec
from degenmfem.schemes import (
    SchemeConfig,
    StoppingCriterion,
    run_time_series,
    series_converged,
    total_iterations,
)
from degenmfem.theory import (
    TheoryConstants,
    accumulated_error_bound,
    c_alpha,
    contraction_factor,
    delta_closed_form,
    select_L_regularized,
    select_delta,
)

TABLE_SCHEMES = {"1": "newton", "3": "lreg", "5": "hl"}


class _Parser(argparse.ArgumentParser):
    # Usage errors must exit 1 (2 is reserved for non-convergence).
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _usage_error(message):
    print(f"error: {message}", file=sys.stderr)
    sys.exit(1)


def _default_out():
    return os.environ.get("DEGENMFEM_OUT", ".")


def build_parser():
    parser = _Parser(prog="degenmfem",
                     description="Iterative-scheme benchmarks for a "
                                 "degenerate parabolic equation")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run one scheme configuration")
    ps.add_argument("--scheme", required=True, choices=("hl", "lreg", "newton"))
    ps.add_argument("--n", type=int, default=32, help="mesh subdivisions per side")
    ps.add_argument("--tau", type=float, required=True, help="time step size")
    ps.add_argument("--steps", type=int, required=True, help="number of time steps")
    ps.add_argument("--tol", type=float, required=True,
                    help="stopping tolerance against the reference")
    ps.add_argument("--eps", type=float, default=None,
                    help="regularization width (lreg and newton)")
    ps.add_argument("--L", type=float, default=None,
                    help="override the stabilization parameter")
    ps.add_argument("--shift", type=float, default=0.0,
                    help="derivative-shift perturbation weight (default off)")
    ps.add_argument("--reg-kind", choices=("linear", "quadratic"),
                    default="linear")
    ps.add_argument("--out", default=None, help="output directory")

    pt = sub.add_parser("tables", help="reproduce the benchmark tables")
    pt.add_argument("--which", required=True, choices=("1", "3", "5", "all"))
    pt.add_argument("--n", type=int, default=32)
    pt.add_argument("--out", default=None)

    py = sub.add_parser("theory", help="print the parameter formulas")
    py.add_argument("--tol", type=float, required=True)
    py.add_argument("--tau", type=float, required=True)
    py.add_argument("--alpha", type=float, default=0.5)
    py.add_argument("--eps", type=float, default=None)

    return parser


def _run_solve(args) -> int:
    if args.n < 1:
        _usage_error("--n must be >= 1")
    if args.tau <= 0 or args.steps < 1 or args.tol <= 0:
        _usage_error("--tau, --steps and --tol must be positive")
    if args.scheme == "hl":
        if args.eps is not None:
            _usage_error("--eps is only valid for lreg and newton (the hl "
                         "scheme uses no regularization)")
        if args.shift:
            _usage_error("--shift requires a regularized scheme")
    else:
        if args.eps is None:
            _usage_error(f"--eps is required for the {args.scheme} scheme")
        if args.eps <= 0:
            _usage_error("--eps must be positive")
    if args.scheme == "newton" and args.L is not None:
        _usage_error("the newton scheme takes no --L")

    out_dir = Path(args.out if args.out is not None else _default_out())
    out_dir.mkdir(parents=True, exist_ok=True)

    msol = DEFAULT_SOLUTION
    spec = msol.nonlinearity()
    consts = TheoryConstants.for_unit_square(spec)
    mesh = build_structured_unit_square(args.n)
    forms = assemble_forms(mesh, msol.boundary_value)

    reference = compute_reference(mesh, forms, args.tau, args.steps, msol)
    refs = reference_fields(reference)
    stopping = StoppingCriterion(mode="against_reference", tol=args.tol)

    if args.scheme == "hl":
        big_l = args.L if args.L is not None else float(
            select_delta(args.tol, args.tau, consts)[1])
        config = SchemeConfig(kind="hl", tau=args.tau, stopping=stopping,
                              nonlinearity=spec, L=big_l)
        eps = None
    else:
        reg = RegularizationSpec(kind=args.reg_kind, epsilon=args.eps,
                                 base=spec, shift=args.shift)
        eps = args.eps
        if args.scheme == "lreg":
            big_l = args.L if args.L is not None else float(
                select_L_regularized(args.eps, spec))
            config = SchemeConfig(kind="lreg", tau=args.tau, stopping=stopping,
                                  regularization=reg, L=big_l)
        else:
            big_l = None
            config = SchemeConfig(kind="newton", tau=args.tau,
                                  stopping=stopping, regularization=reg)

    u0 = project_scalar(mesh, msol.initial)
    source = make_source_provider(mesh, msol)
    series = run_time_series(config, mesh, forms, u0, source, args.steps,
                             references=refs)
    converged = series_converged(series, args.steps)
    total = total_iterations(series)

    result = ExperimentResult(
        scheme=args.scheme, tol=args.tol, eps=eps, tau=args.tau,
        L=None if big_l is None else int(big_l),
        total_iterations=total if converged else None,
        per_step=total / args.steps if converged else None,
        converged=converged)
    write_results_csv(out_dir / "solve_result.csv", [result])

    lines = [
        "degenmfem solve report",
        f"scheme = {args.scheme}",
        f"n = {args.n}",
        f"tau = {args.tau:g}",
        f"steps = {args.steps}",
        f"tol = {args.tol:g}",
    ]
    if eps is not None:
        lines.append(f"eps = {eps:g}")
        lines.append(f"reg_kind = {args.reg_kind}")
        lines.append(f"shift = {args.shift:g}")
    if big_l is not None:
        lines.append(f"L = {int(big_l)}")
    lines.append(f"converged = {'true' if converged else 'false'}")
    lines.append(f"total_iterations = {total}")
    lines.append("")
    lines.append("step  t        iterations  converged  reason")
    for r in series:
        reason = r.report.failure_reason or "-"
        lines.append(f"{r.step:>4}  {r.t:<7g}  {r.report.iterations_used:>10}  "
                     f"{str(r.report.converged).lower():>9}  {reason}")
    report_text = "\n".join(lines) + "\n"
    (out_dir / "solve_report.txt").write_text(report_text)
    print(report_text, end="")

    return 0 if converged else 2


def _run_tables(args) -> int:
    if args.n < 1:
        _usage_error("--n must be >= 1")
    out_dir = Path(args.out if args.out is not None else _default_out())
    out_dir.mkdir(parents=True, exist_ok=True)

    msol = DEFAULT_SOLUTION
    mesh = build_structured_unit_square(args.n)
    forms = assemble_forms(mesh, msol.boundary_value)

    wanted = list(TABLE_SCHEMES) if args.which == "all" else [args.which]
    references = {}
    for tau in benchmark.GRID_TAU:
        n_steps = benchmark.steps_for_tau(msol, tau)
        print(f"computing reference for tau = {tau:g} ({n_steps} steps) ...")
        references[tau] = compute_reference(mesh, forms, tau, n_steps, msol)

    summaries = []
    for which in wanted:
        kind = TABLE_SCHEMES[which]
        print(f"running table {which} ({kind}) on the n = {args.n} mesh ...")
        results = run_table(kind, mesh, forms, references, msol)
        write_results_csv(out_dir / f"table{which}.csv", results)
        summaries.append(render_summary(
            results, f"table {which} ({kind}), n = {args.n}"))

    summary_text = "\n".join(summaries)
    (out_dir / "summary.txt").write_text(summary_text)
    print(summary_text, end="")
    return 0


def _run_theory(args) -> int:
    if not 0.0 < args.alpha < 1.0:
        _usage_error("--alpha must lie in (0, 1) for the delta selection")
    if args.tol <= 0 or args.tau <= 0:
        _usage_error("--tol and --tau must be positive")
    consts = TheoryConstants(alpha=args.alpha)
    delta_raw = delta_closed_form(args.tol, args.tau, consts)
    delta, big_l = select_delta(args.tol, args.tau, consts)
    print(f"tol = {args.tol:g}, tau = {args.tau:g}, alpha = {args.alpha:g}")
    print(f"C(alpha)            = {c_alpha(consts):.6g}")
    print(f"delta (closed form) = {delta_raw:.6g}")
    print(f"L = ceil(1/delta)   = {big_l}")
    print(f"delta = 1/L         = {delta:.6g}")
    print(f"R(delta, tau)       = {contraction_factor(delta, args.tau, consts):.6g}")
    print(f"accumulated bound   = {accumulated_error_bound(delta, args.tau, consts):.6g}"
          f"  (TOL/2 = {args.tol / 2:.6g})")
    if args.eps is not None:
        if args.eps <= 0:
            _usage_error("--eps must be positive")
        spec = NonlinearitySpec(alpha=args.alpha)
        print(f"regularized-L value = {select_L_regularized(args.eps, spec)}"
              f"  (eps = {args.eps:g})")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "solve":
        return _run_solve(args)
    if args.command == "tables":
        return _run_tables(args)
    return _run_theory(args)


if __name__ == "__main__":
    sys.exit(main())
