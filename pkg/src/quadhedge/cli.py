"""Command-line interface.

Exit status: 0 on success, 1 when an input fails validation or a check
fails, 2 on a usage error (bad flag, missing file).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from .bounds import contains, value_bounds, witness_measure
from .errors import QuadHedgeError
from .hedging import anchored_objective, coefficients_to_doc, compute_coefficients
from .lattice import (
    MarketLattice,
    PayoffSpec,
    dump_lattice,
    dump_payoff,
    load_lattice,
    load_payoff,
    parse_lattice,
    read_document,
    validate_lattice,
    validate_payoff,
)
from .measure import measure_report
from .optimize import (
    RNMeasureSpec,
    dump_rn_measure,
    load_rn_measure,
    optimize_risk_neutral,
    optimize_vo_naive,
    optimize_vo_time_consistent,
    rn_measure_to_doc,
    rn_policy_value,
    validate_rn_measure,
)
from .policy import DEFAULT_CAP, ExercisePolicy, dump_policy, load_policy, policy_to_doc
from .reference import all_gated_pass, ex1_lattice, ex1_rn_measure, reproduce_examples
from .simulation import SimulationConfig, run_hedge, summarize

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _read(path: str | None, what: str) -> bytes:
    if path is None:
        raise UsageError(f"--{what} is required for this command")
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {what} file {path!r}: {exc.strerror}") from None


def _inputs(args, need_policy: bool = False):
    lattice = load_lattice(_read(args.model, "model"))
    payoff = load_payoff(_read(args.payoff, "payoff"))
    report = validate_payoff(payoff, lattice)
    report.raise_if_invalid("payoff")
    policy = None
    if need_policy:
        policy = load_policy(_read(args.policy, "policy"), lattice)
    return lattice, payoff, policy


def _measure(args, lattice: MarketLattice) -> RNMeasureSpec:
    rn = load_rn_measure(_read(args.measure, "measure"))
    validate_rn_measure(lattice, rn).raise_if_invalid("risk-neutral measure")
    return rn


def _initial_capital(args, lattice, payoff, policy) -> float | None:
    if args.v0 is not None and args.anchor:
        raise UsageError("--v0 and --anchor are mutually exclusive")
    if args.v0 is not None:
        return args.v0
    if args.anchor == "rn":
        return rn_policy_value(lattice, payoff, policy, _measure(args, lattice))
    return None


def _emit(args, doc: Any, text: str) -> None:
    payload = json.dumps(doc, indent=2) if args.json else text
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)


def _fmt_policy(policy: ExercisePolicy) -> str:
    return "{" + ", ".join(str(k) for k in sorted(policy.exercise)) + "}" if policy.exercise else "never"


# -- subcommands --------------------------------------------------------------


def cmd_validate(args) -> int:
    path = args.path or args.model
    raw = _read(path, "model")
    lattice = parse_lattice(read_document(raw))
    problems = [str(v) for v in validate_lattice(lattice)]
    if not problems:
        if args.payoff:
            problems += [f"payoff: {v}" for v in validate_payoff(load_payoff(_read(args.payoff, "payoff")), lattice)]
        if args.measure:
            problems += [f"measure: {v}" for v in validate_rn_measure(lattice, load_rn_measure(_read(args.measure, "measure")))]
        if args.policy:
            load_policy(_read(args.policy, "policy"), lattice)
    _emit(args, {"ok": not problems, "violations": problems},
          "OK" if not problems else "\n".join(["INVALID"] + problems))
    return EXIT_OK if not problems else EXIT_INVALID


def cmd_hedge(args) -> int:
    lattice, payoff, policy = _inputs(args, need_policy=True)
    coeffs = compute_coefficients(lattice, payoff, policy)
    v0 = _initial_capital(args, lattice, payoff, policy)
    root = coeffs.root
    if args.json:
        doc = {
            "policy": policy_to_doc(coeffs.policy),
            "initial_capital": root.b,
            "objective": root.c if v0 is None else anchored_objective(coeffs, v0),
            "anchor": v0,
            "coefficients": json.loads(coefficients_to_doc(coeffs)),
        }
        _emit(args, doc, "")
        return EXIT_OK
    lines = [coefficients_to_doc(coeffs), f"optimal initial capital b0 = {root.b:.10g}",
             f"minimal expected squared error c0 = {root.c:.10g}"]
    if v0 is not None:
        lines.append(f"anchored at V0 = {v0:.10g}: expected squared error = {anchored_objective(coeffs, v0):.10g}")
    _emit(args, None, "\n".join(lines))
    return EXIT_OK


def cmd_measure(args) -> int:
    lattice, payoff, policy = _inputs(args, need_policy=True)
    report = measure_report(compute_coefficients(lattice, payoff, policy))
    lines = []
    for nid, ws in report["one_step_weights"].items():
        lines.append(f"node {nid}: " + ", ".join(f"{c}: {w:+.6f}" for c, w in ws.items()))
    if report["equivalent"] is None:
        lines.append("policy exercises at the root; no measure to check")
    else:
        lines.append(f"equivalent: {report['equivalent']}")
        for off in report["offending"]:
            lines.append(f"  non-positive weight {off['weight']:+.6f} on stopped outcome {off['prefix']}")
        for j, res in report["martingale_residuals"].items():
            lines.append(f"stopped martingale residual at horizon {j}: {res:.3e}")
    _emit(args, report, "\n".join(lines))
    return EXIT_OK


def cmd_optimize(args) -> int:
    lattice, payoff, _ = _inputs(args)
    if args.method == "vo":
        result = optimize_vo_naive(lattice, payoff, cap=args.cap, workers=args.workers)
    elif args.method == "tc":
        result = optimize_vo_time_consistent(lattice, payoff)
    else:
        result = optimize_risk_neutral(lattice, payoff, _measure(args, lattice))
    doc = {
        "policy": policy_to_doc(result.policy),
        "value": result.value,
        "diagnostics": result.diagnostics,
    }
    if result.per_node_values is not None:
        doc["per_node_values"] = {str(k): v for k, v in result.per_node_values.items()}
    text = f"method {args.method}: exercise at {_fmt_policy(result.policy)}, value {result.value:.10g}"
    _emit(args, doc, text)
    return EXIT_OK


def cmd_bounds(args) -> int:
    lattice, payoff, policy = _inputs(args, need_policy=True)
    iv = value_bounds(lattice, payoff, policy)
    members = {repr(x): contains(iv, x) for x in args.value or []}
    doc = {"lo": iv.lo, "hi": iv.hi, "open_lo": iv.open_lo, "open_hi": iv.open_hi, "membership": members}
    if args.json:
        for end in ("min", "max"):
            w = witness_measure(lattice, payoff, policy, end)
            doc[f"witness_{end}"] = {
                "boundary": w.boundary,
                **rn_measure_to_doc(RNMeasureSpec(w.probs)),
            }
    lines = [f"no-arbitrage values: {iv}"]
    lines += [f"  {x}: {'inside' if ok else 'outside'}" for x, ok in members.items()]
    _emit(args, doc, "\n".join(lines))
    return EXIT_OK


def cmd_simulate(args) -> int:
    lattice, payoff, policy = _inputs(args, need_policy=True)
    if args.paths < 1:
        raise UsageError("--paths must be >= 1")
    coeffs = compute_coefficients(lattice, payoff, policy)
    v0 = _initial_capital(args, lattice, payoff, policy)
    config = SimulationConfig(args.paths, args.seed, v0)
    stats, records = run_hedge(lattice, payoff, coeffs.policy, coeffs, config,
                               workers=args.workers, keep_paths=bool(args.csv))
    predicted = anchored_objective(coeffs, stats.initial_capital)
    summary = summarize(stats, predicted)
    if records is not None:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            records.write_csv(fh)
    doc = {"stats": vars(stats), "predicted": predicted, "z": summary.z, "passed": summary.passed}
    text = "\n".join([
        f"paths {stats.path_count}, seed {args.seed}, V0 = {stats.initial_capital:.10g}",
        f"mean error          {stats.mean_error:+.6e}  (se {stats.se_mean_error:.2e})",
        f"mean squared error  {stats.mean_squared_error:.6e}  (se {stats.se_mean_squared_error:.2e})",
        f"predicted           {predicted:.6e}  z = {summary.z:+.2f}  {'PASS' if summary.passed else 'FAIL'}",
        f"unhedged 2nd moment {stats.unhedged_second_moment:.6e}  (se {stats.se_unhedged:.2e})",
    ])
    _emit(args, doc, text)
    return EXIT_OK if summary.passed else EXIT_INVALID


def cmd_examples(args) -> int:
    if args.export:
        out = Path(args.export)
        out.mkdir(parents=True, exist_ok=True)
        lat = ex1_lattice()
        (out / "ex1.lattice").write_text(dump_lattice(lat) + "\n")
        (out / "call3.payoff").write_text(dump_payoff(PayoffSpec.call(3)) + "\n")
        (out / "call7.payoff").write_text(dump_payoff(PayoffSpec.call(7)) + "\n")
        (out / "rn.measure").write_text(dump_rn_measure(ex1_rn_measure(args.rn_mass)) + "\n")
        (out / "naive_vo.policy").write_text(dump_policy(ExercisePolicy.of([2])) + "\n")
        (out / "rn_opt.policy").write_text(dump_policy(ExercisePolicy.of([2, 3])) + "\n")
    rows = reproduce_examples(args.rn_mass)
    ok = all_gated_pass(rows)
    doc = {
        "passed": ok,
        "rows": [
            {"example": r.example, "quantity": r.quantity, "published": r.published, "computed": r.computed,
             "delta": r.delta, "tolerance": r.tolerance, "gated": r.gated, "passed": r.passed, "note": r.note}
            for r in rows
        ],
    }
    header = f"{'example':<10} {'quantity':<48} {'published':>18} {'computed':>18} {'|delta|':>9} {'tol':>7}  result"
    lines = [header, "-" * len(header)]
    for r in rows:
        fmt = lambda v: f"{v:.6f}" if isinstance(v, float) else str(v)
        delta = f"{r.delta:.1e}" if r.delta is not None else "-"
        tol = f"{r.tolerance:.0e}" if r.tolerance is not None else "exact"
        verdict = ("PASS" if r.passed else "FAIL") if r.gated else ("note" if not r.passed else "PASS")
        line = f"{r.example:<10} {r.quantity:<48} {fmt(r.published):>18} {fmt(r.computed):>18} {delta:>9} {tol:>7}  {verdict}"
        if r.note:
            line += f"  ({r.note})"
        lines.append(line)
    lines.append("all checks passed" if ok else "SOME CHECKS FAILED")
    _emit(args, doc, "\n".join(lines))
    return EXIT_OK if ok else EXIT_INVALID


# -- wiring -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", metavar="PATH", help="lattice file")
    common.add_argument("--payoff", metavar="PATH", help="payoff file")
    common.add_argument("--policy", metavar="PATH", help="policy file")
    common.add_argument("--measure", metavar="PATH", help="risk-neutral measure file")
    common.add_argument("--json", action="store_true", help="emit a machine-readable document")
    common.add_argument("--out", metavar="PATH", help="write the output document here")

    anchor = argparse.ArgumentParser(add_help=False)
    anchor.add_argument("--v0", type=float, help="fix the initial capital")
    anchor.add_argument("--anchor", choices=["rn"], help="anchor the initial capital to the RN value (needs --measure)")

    parser = argparse.ArgumentParser(
        prog="quadhedge",
        description="Quadratic hedging and exercise-policy optimization for American options on futures lattices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check model files")
    p.add_argument("path", nargs="?", help="lattice file (same as --model)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("hedge", parents=[common, anchor], help="dump hedging coefficients")
    p.set_defaults(func=cmd_hedge)

    p = sub.add_parser("measure", parents=[common], help="variance-optimal measure diagnostics")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("optimize", parents=[common], help="optimize the exercise policy")
    p.add_argument("--method", choices=["vo", "tc", "rn"], default="tc")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP, help="max canonical policies for --method vo")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("bounds", parents=[common], help="no-arbitrage value interval of a policy")
    p.add_argument("--value", type=float, action="append", help="value to test for membership (repeatable)")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("simulate", parents=[common, anchor], help="Monte Carlo check of the hedge")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--csv", metavar="PATH", help="write per-path records")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("examples", parents=[common], help="reproduce the two worked examples")
    p.add_argument("--rn-mass", type=float, default=1 / 42, help="mass on F=16 of the RN measure used")
    p.add_argument("--export", metavar="DIR", help="also write the example model files to DIR")
    p.set_defaults(func=cmd_examples)
    return parser


def run_command(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QuadHedgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
