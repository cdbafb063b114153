"""CLI entry point for the controlled K-fusion frame laboratory.

Registered as the ``kfusion-lab`` console script via pyproject.toml.

Subcommands
-----------
gen            Write a seeded random spec document.
example        Write the truncated sequence-space example.
check          Sample the frame inequality for given (or optimal) bounds.
bounds         Optimal bounds, frame and Parseval status of a spec.
transform      Transport a spec by an invertible (or unitary) operator.
perturb        Check a perturbed family of subspaces against a radius.
suite          Run the randomized theorem suite.
list-theorems  Print the theorem registry.

Exit codes: 0 success / all checks pass, 1 a check failed, 2 invalid input.

Usage examples
--------------
$ kfusion-lab example --n 16 --alpha 2 --beta 3 --out example.json
$ kfusion-lab bounds example.json --json
$ kfusion-lab check example.json --lower 3 --upper 6 --trials 10000
$ kfusion-lab gen --dim 5 --subspaces 4 --k-rank 3 --seed 7 --out spec.json
$ kfusion-lab transform spec.json --matrix u.json --corollary
$ kfusion-lab suite --all --instances 100 --workers 4 --out reports.jsonl
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from kfusion_lab import __version__
from kfusion_lab.errors import FrameLabError, InvalidConfig

# ---------------------------------------------------------------------------
# Parser construction
# ---------------------------------------------------------------------------


def _common_parser() -> argparse.ArgumentParser:
    """Flags shared by every command that computes something."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--tol-rel",
        type=float,
        default=None,
        metavar="REL",
        help="Relative tolerance (overrides CKFF_DEFAULT_TOL_REL).",
    )
    common.add_argument(
        "--tol-abs",
        type=float,
        default=None,
        metavar="ABS",
        help="Absolute tolerance floor (overrides CKFF_DEFAULT_TOL_ABS).",
    )
    common.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Random seed (default: CKFF_DEFAULT_SEED).",
    )
    common.add_argument(
        "--out",
        type=Path,
        default=None,
        metavar="PATH",
        help="Write the result document to PATH.",
    )
    common.add_argument(
        "--json",
        action="store_true",
        default=False,
        help="Print a machine-readable JSON report to stdout.",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    """Build and return the top-level argument parser."""
    parser = argparse.ArgumentParser(
        prog="kfusion-lab",
        description="Numerical laboratory for controlled K-fusion frames.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {__version__}",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        default=False,
        help="Enable verbose logging (DEBUG level). Default shows WARNING+.",
    )

    common = _common_parser()
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")

    # --- gen --------------------------------------------------------------
    gen_parser = subparsers.add_parser(
        "gen",
        parents=[common],
        help="Write a seeded random spec document.",
    )
    gen_parser.add_argument("--dim", type=int, default=4, help="Ambient dimension (default: 4).")
    gen_parser.add_argument(
        "--subspaces", type=int, default=4, metavar="M", help="Number of subspaces (default: 4)."
    )
    gen_parser.add_argument(
        "--max-subdim",
        type=int,
        default=None,
        metavar="D",
        help="Largest subspace dimension (default: --dim).",
    )
    gen_parser.add_argument(
        "--cond",
        type=float,
        default=4.0,
        help="Condition number of the controllers (default: 4).",
    )
    gen_parser.add_argument(
        "--k-rank", type=int, default=None, metavar="R", help="Rank of K (default: --dim)."
    )
    gen_parser.add_argument(
        "--no-positivity",
        action="store_true",
        default=False,
        help="Draw controllers independently of the subspaces (negative tests).",
    )

    # --- example ----------------------------------------------------------
    example_parser = subparsers.add_parser(
        "example",
        parents=[common],
        help="Write the truncated sequence-space example.",
    )
    example_parser.add_argument("--n", type=int, default=8, help="Dimension (default: 8).")
    example_parser.add_argument("--alpha", type=float, default=2.0, help="C = alpha I.")
    example_parser.add_argument("--beta", type=float, default=3.0, help="C' = beta I.")
    example_parser.add_argument(
        "--k",
        choices=["weighted", "identity"],
        default="weighted",
        help="K = diag(1/sqrt(i+1)) ('weighted', default) or the identity.",
    )

    # --- check ------------------------------------------------------------
    check_parser = subparsers.add_parser(
        "check",
        parents=[common],
        help="Sample the frame inequality for given (or optimal) bounds.",
    )
    check_parser.add_argument("spec", type=Path, help="Spec document (JSON).")
    check_parser.add_argument("--lower", type=float, default=None, help="Lower bound A.")
    check_parser.add_argument("--upper", type=float, default=None, help="Upper bound B.")
    check_parser.add_argument(
        "--trials",
        type=int,
        default=None,
        metavar="N",
        help="Unit vectors to sample (default: CKFF_VERIFY_TRIALS).",
    )

    # --- bounds -----------------------------------------------------------
    bounds_parser = subparsers.add_parser(
        "bounds",
        parents=[common],
        help="Optimal bounds, frame and Parseval status of a spec.",
    )
    bounds_parser.add_argument("spec", type=Path, help="Spec document (JSON).")

    # --- transform --------------------------------------------------------
    transform_parser = subparsers.add_parser(
        "transform",
        parents=[common],
        help="Transport a spec by an invertible (or unitary) operator.",
        description=(
            "Apply the invertible-U transport theorem (or, with --corollary,\n"
            "its unitary form) and compare the propagated bounds with the\n"
            "optimal bounds of the transported spec.  --out writes the new spec."
        ),
    )
    transform_parser.add_argument("spec", type=Path, help="Spec document (JSON).")
    transform_parser.add_argument(
        "--matrix",
        type=Path,
        required=True,
        metavar="PATH",
        help="JSON file holding U as rows of [re, im] pairs.",
    )
    transform_parser.add_argument(
        "--corollary",
        action="store_true",
        default=False,
        help="Use the unitary corollary (U must be unitary).",
    )

    # --- perturb ----------------------------------------------------------
    perturb_parser = subparsers.add_parser(
        "perturb",
        parents=[common],
        help="Check a perturbed family of subspaces against a radius.",
    )
    perturb_parser.add_argument("spec", type=Path, help="Spec document of the W-system.")
    perturb_parser.add_argument(
        "--v-spec",
        type=Path,
        required=True,
        metavar="PATH",
        help="Spec document whose subspaces form the V-family.",
    )
    perturb_parser.add_argument("--radius", type=float, required=True, help="Radius R.")
    perturb_parser.add_argument("--lower", type=float, default=None, help="Lower bound A.")
    perturb_parser.add_argument("--upper", type=float, default=None, help="Upper bound B.")

    # --- suite ------------------------------------------------------------
    suite_parser = subparsers.add_parser(
        "suite",
        parents=[common],
        help="Run the randomized theorem suite.",
    )
    suite_parser.add_argument(
        "--theorem",
        action="append",
        dest="theorems",
        metavar="NAME",
        default=[],
        help="Theorem (or alias) to check; repeatable.  See list-theorems.",
    )
    suite_parser.add_argument(
        "--all",
        action="store_true",
        default=False,
        help="Check every registered theorem.",
    )
    suite_parser.add_argument(
        "--instances",
        type=int,
        default=None,
        metavar="N",
        help="Instances per theorem (default: CKFF_SUITE_INSTANCES).",
    )
    suite_parser.add_argument(
        "--max-dim",
        type=int,
        default=None,
        metavar="N",
        help="Largest ambient dimension (default: CKFF_SUITE_MAX_DIM).",
    )
    suite_parser.add_argument(
        "--workers",
        type=int,
        default=None,
        metavar="N",
        help="Worker threads (default: CKFF_SUITE_WORKERS).",
    )

    # --- list-theorems ----------------------------------------------------
    subparsers.add_parser(
        "list-theorems",
        help="Print the theorem registry.",
    )

    return parser


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _tolerance(args: argparse.Namespace):
    from kfusion_lab.config import get_settings
    from kfusion_lab.models import Tolerance

    settings = get_settings()
    return Tolerance(
        rel=settings.default_tol_rel if args.tol_rel is None else args.tol_rel,
        abs=settings.default_tol_abs if args.tol_abs is None else args.tol_abs,
    )


def _seed(args: argparse.Namespace) -> int:
    from kfusion_lab.config import get_settings

    return get_settings().default_seed if args.seed is None else args.seed


def _pairs(vector) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in vector]


def _emit(args: argparse.Namespace, payload: dict) -> None:
    """Write *payload* to ``--out`` and / or stdout (``--json``)."""
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
    if args.json:
        print(text, end="")


def _bounds_payload(report) -> dict:
    return {
        "lower": report.lower,
        "upper": report.upper,
        "lower_optimal": report.lower_optimal,
        "is_frame": report.is_frame,
        "is_parseval": report.is_parseval,
        "synthesis_norm": report.synthesis_norm,
        "bessel_ok": report.bessel_ok,
        "lower_witness": _pairs(report.lower_witness),
        "upper_witness": _pairs(report.upper_witness),
        "tol": {"rel": report.tol_used.rel, "abs": report.tol_used.abs},
    }


def _propagated_payload(result) -> dict:
    return {
        "theorem": result.source.value,
        "label": result.label,
        "lower": result.lower,
        "upper": result.upper,
        "reference_lower": result.reference_lower,
        "reference_upper": result.reference_upper,
        "hypotheses": [
            {"name": h.name, "margin": h.margin, "passed": h.passed}
            for h in result.hypotheses
        ],
        "conclusion_passed": result.conclusion_passed,
        "passed": result.passed,
        "notes": list(result.notes),
    }


def _print_propagated(result) -> None:
    title = result.source.value + (f" [{result.label}]" if result.label else "")
    print(f"{title}: {'PASS' if result.passed else 'FAIL'}")
    print(f"  propagated  A = {result.lower:.10g}   B = {result.upper:.10g}")
    print(f"  optimal     A = {result.reference_lower:.10g}   B = {result.reference_upper:.10g}")
    for h in result.hypotheses:
        print(f"  {'ok  ' if h.passed else 'FAIL'} {h.name:<45} margin {h.margin:.3e}")
    for note in result.notes:
        print(f"  note: {note}")


# ---------------------------------------------------------------------------
# Command handlers
# ---------------------------------------------------------------------------


def cmd_gen(args: argparse.Namespace) -> int:
    """Generate a random spec and write it to ``--out`` (or stdout)."""
    from kfusion_lab.generators import gen_instance
    from kfusion_lab.serialization import dumps_spec

    seed = _seed(args)
    spec = gen_instance(
        dim=args.dim,
        n_subspaces=args.subspaces,
        max_subdim=args.dim if args.max_subdim is None else args.max_subdim,
        controller_condition_number=args.cond,
        k_rank=args.dim if args.k_rank is None else args.k_rank,
        seed=seed,
        positivity=not args.no_positivity,
    )
    text = dumps_spec(
        spec,
        {
            "generator": "gen_instance",
            "seed": str(seed),
            "positivity": str(not args.no_positivity).lower(),
        },
    )
    return _write_spec_text(args, text)


def cmd_example(args: argparse.Namespace) -> int:
    """Write the truncated sequence-space example."""
    from kfusion_lab.generators import build_sequence_example
    from kfusion_lab.serialization import dumps_spec

    spec = build_sequence_example(args.n, args.alpha, args.beta, args.k)
    text = dumps_spec(
        spec,
        {
            "generator": "build_sequence_example",
            "alpha": repr(args.alpha),
            "beta": repr(args.beta),
            "k": args.k,
        },
    )
    return _write_spec_text(args, text)


def _write_spec_text(args: argparse.Namespace, text: str) -> int:
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
    if args.out is None or args.json:
        print(text, end="")
    return 0


def cmd_check(args: argparse.Namespace) -> int:
    """Sample the frame inequality; exit 1 on any violation."""
    from kfusion_lab.config import get_settings
    from kfusion_lab.engine import classify, verify_definition
    from kfusion_lab.serialization import read_spec

    tol = _tolerance(args)
    spec = read_spec(args.spec)
    lower, upper = args.lower, args.upper
    if lower is None or upper is None:
        report = classify(spec, tol)
        lower = report.lower if lower is None else lower
        upper = report.upper if upper is None else upper
    trials = get_settings().verify_trials if args.trials is None else args.trials
    check = verify_definition(spec, lower, upper, trials, _seed(args), tol)

    _emit(
        args,
        {
            "passed": check.passed,
            "lower": check.lower,
            "upper": check.upper,
            "trials": check.trials,
            "violations": len(check.violations),
            "worst_lower_margin": check.worst_lower_margin,
            "worst_upper_margin": check.worst_upper_margin,
            "witness": _pairs(check.witness),
        },
    )
    if not args.json:
        print(f"{'PASS' if check.passed else 'FAIL'}: A = {lower:.10g}, B = {upper:.10g}")
        print(f"  {len(check.violations)} violation(s) in {trials} samples")
        print(f"  worst lower margin {check.worst_lower_margin:.3e}")
        print(f"  worst upper margin {check.worst_upper_margin:.3e}")
    return 0 if check.passed else 1


def cmd_bounds(args: argparse.Namespace) -> int:
    """Print the optimal bounds of a spec."""
    from kfusion_lab.engine import classify
    from kfusion_lab.serialization import read_spec

    report = classify(read_spec(args.spec), _tolerance(args))
    _emit(args, _bounds_payload(report))
    if not args.json:
        print(f"lower bound A = {report.lower:.10g}")
        print(f"upper bound B = {report.upper:.10g}")
        print(f"frame: {report.is_frame}   Parseval: {report.is_parseval}")
        if report.synthesis_norm is not None:
            print(
                f"synthesis norm = {report.synthesis_norm:.10g}"
                f"   (<= sqrt(B): {report.bessel_ok})"
            )
        else:
            print("synthesis map undefined: some block C'* pi_i C is not positive")
    return 0


def _read_matrix(path: Path):
    from pydantic import TypeAdapter

    from kfusion_lab.serialization import ComplexMatrix, pairs_to_matrix

    try:
        rows = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: malformed JSON: {exc}") from exc
    return pairs_to_matrix(TypeAdapter(ComplexMatrix).validate_python(rows), str(path))


def cmd_transform(args: argparse.Namespace) -> int:
    """Transport a spec by U and compare with the transported optimal bounds."""
    from kfusion_lab.serialization import dumps_spec, read_spec
    from kfusion_lab.transforms import unitary_transform, unitary_transform_corollary

    tol = _tolerance(args)
    spec = read_spec(args.spec)
    u = _read_matrix(args.matrix)
    apply = unitary_transform_corollary if args.corollary else unitary_transform
    new_spec, result = apply(spec, u, tol)

    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(
            dumps_spec(new_spec, {"transformed_from": str(args.spec)}), encoding="utf-8"
        )
    if args.json:
        print(json.dumps(_propagated_payload(result), indent=2, sort_keys=True))
    else:
        _print_propagated(result)
    return 0 if result.passed else 1


def cmd_perturb(args: argparse.Namespace) -> int:
    """Check the V-family of ``--v-spec`` against the W-system of SPEC."""
    from kfusion_lab.engine import classify
    from kfusion_lab.serialization import read_spec
    from kfusion_lab.transforms import perturb_check

    tol = _tolerance(args)
    spec_w = read_spec(args.spec)
    spec_v = read_spec(args.v_spec)
    lower, upper = args.lower, args.upper
    if lower is None or upper is None:
        report = classify(spec_w, tol)
        lower = report.lower if lower is None else lower
        upper = report.upper if upper is None else upper
    result = perturb_check(
        spec_w, spec_v.system.subspaces, args.radius, lower, upper, tol, seed=_seed(args)
    )
    _emit(args, _propagated_payload(result))
    if not args.json:
        _print_propagated(result)
    return 0 if result.passed else 1


def cmd_suite(args: argparse.Namespace) -> int:
    """Run the theorem suite; exit 0 iff every instance passes."""
    from kfusion_lab.config import get_settings
    from kfusion_lab.models import Theorem
    from kfusion_lab.serialization import dumps_reports
    from kfusion_lab.suite import SuiteConfig, run_suite, suite_exit_code

    settings = get_settings()
    theorems = [t.value for t in Theorem] if args.all else args.theorems
    config = SuiteConfig(
        theorems=tuple(theorems),
        instances=settings.suite_instances if args.instances is None else args.instances,
        seed=_seed(args),
        max_dim=settings.suite_max_dim if args.max_dim is None else args.max_dim,
        tol=_tolerance(args),
        workers=settings.suite_workers if args.workers is None else args.workers,
    )
    reports = run_suite(config)
    text = dumps_reports(reports)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
    if args.json:
        print(text, end="")
    else:
        _print_suite_summary(reports)
    return suite_exit_code(reports)


def _print_suite_summary(reports: list) -> None:
    if not reports:
        print("No theorems selected.")
        return
    totals: dict[str, list[int]] = {}
    for report in reports:
        passed, total = totals.setdefault(report.theorem, [0, 0])
        totals[report.theorem] = [passed + report.passed, total + 1]
    print(f"\n  {'Theorem':<30}  {'Passed':>8}")
    print("  " + "-" * 40)
    for theorem, (passed, total) in totals.items():
        print(f"  {theorem:<30}  {passed:>4}/{total:<4}")
    for report in reports:
        if not report.passed:
            reason = report.error or "conclusion or hypothesis failed"
            print(f"  FAIL {report.instance_id} (seed {report.seed}): {reason}")
    print()


def cmd_list_theorems(_args: argparse.Namespace) -> int:
    """Print every registered theorem and alias."""
    from kfusion_lab.suite import list_theorems

    for name in list_theorems():
        print(name)
    return 0


# ---------------------------------------------------------------------------
# Dispatcher
# ---------------------------------------------------------------------------

_HANDLERS = {
    "gen": cmd_gen,
    "example": cmd_example,
    "check": cmd_check,
    "bounds": cmd_bounds,
    "transform": cmd_transform,
    "perturb": cmd_perturb,
    "suite": cmd_suite,
    "list-theorems": cmd_list_theorems,
}


def main(argv: list[str] | None = None) -> None:
    """Parse *argv* and dispatch to the appropriate command handler."""
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s: %(name)s: %(message)s",
    )

    handler = _HANDLERS.get(args.command)
    if handler is None:
        parser.print_help()
        sys.exit(0)

    try:
        code = handler(args)
    except (InvalidConfig, ValidationError, OSError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        code = 2
    except FrameLabError as exc:
        print(f"Error: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = 1
    sys.exit(code)


if __name__ == "__main__":
    main()
