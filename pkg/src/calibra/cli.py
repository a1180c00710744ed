"""Command-line front end.

Subcommands: ratio, bound, construct, fptas, simulate, audit.  Instances
are JSON files with a distribution spec and a CTR prior; schemes are JSON
lists of {"r": [...], "s": [...], "mass": ...} records; reports are CSV
with stable headers (floats at 17 significant digits) or JSON for the
construction report.  Exit codes: 0 ok, 2 validation failure, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .distributions import DistributionError, DomainError, from_spec
from .fptas import build_grid, fptas_solve, fptas_solve_reserve
from .quad import QuadratureError
from .ratio import ConvexityError, RatioAnalysis, optimal_ratio
from .revenue import CtrPrior, PriorError, expected_revenue_two
from .schemes import (
    SchemeError,
    calibration_residuals,
    construct_symmetric_detailed,
    scheme_from_records,
    scheme_to_records,
)
from .simplex import IterationLimitError
from .simulator import SimulationConfig, empirical_calibration, estimate_revenue

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3

_AUDIT_TOL = 1e-9


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message, file=sys.stderr)


def _load_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _load_instance(path: str):
    data = _load_json(path)
    if not isinstance(data, dict):
        raise DistributionError("instance file must be a JSON object")
    if "distribution" not in data or "ctr_prior" not in data:
        raise DistributionError("instance file needs 'distribution' and 'ctr_prior'")
    dist = from_spec(data["distribution"])
    prior = CtrPrior.from_records(data["ctr_prior"])
    declared_n = data.get("n")
    if declared_n is not None and int(declared_n) != prior.n:
        raise PriorError(f"declared n = {declared_n} but prior states have {prior.n} bidders")
    reserve = float(data.get("reserve", 0.0))
    return dist, prior, reserve


def _emit_csv(args, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(cell if isinstance(cell, str) else _fmt(cell) for cell in row))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(path, payload) -> None:
    text = json.dumps(payload, indent=2)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


# -- subcommands -------------------------------------------------------------


def cmd_ratio(args) -> int:
    dist, _prior, _ = _load_instance(args.instance)
    if args.l:
        ls = [float(v) for v in args.l]
    else:
        ls = np.linspace(0.0, 1.0, args.grid).tolist()
    rows = []
    for l in ls:
        x = optimal_ratio(l, dist)
        rev_x = expected_revenue_two((1.0, l), (1.0, x), dist) if x > 0 else 0.0
        rev_1 = expected_revenue_two((1.0, l), (1.0, 1.0), dist)
        rows.append((l, x, rev_x, rev_1))
    _emit_csv(args, ["l", "x_of_l", "revenue_at_x", "revenue_at_1"], rows)
    return EXIT_OK


_BOUND_HEADER = [
    "convexity",
    "K0",
    "l_at_K0_plus_1",
    "x_at_that_l",
    "S",
    "z_star",
    "approx",
    "z_convention",
]
_Z_CONVENTION = "sum-over-mirrored-states"


def cmd_bound(args) -> int:
    dist, _prior, _ = _load_instance(args.instance)
    analysis = RatioAnalysis(dist)
    try:
        rep = analysis.worst_case_bound()
    except ConvexityError:
        _emit_csv(args, _BOUND_HEADER, [(analysis.convexity(), "", "", "", "", "", "", _Z_CONVENTION)])
        return EXIT_OK
    if rep.k0 is None:
        row = (rep.convexity, "", "", "", "", rep.z_star, rep.approx, _Z_CONVENTION)
    else:
        row = (
            rep.convexity,
            str(rep.k0),
            rep.crossing,
            rep.ratio_at_crossing,
            rep.mass_sum,
            rep.z_star,
            rep.approx,
            _Z_CONVENTION,
        )
    _emit_csv(args, _BOUND_HEADER, [row])
    return EXIT_OK


def _report_payload(result):
    pairs = []
    for rep in result.pair_reports:
        pairs.append(
            {
                "l": rep.l,
                "h": rep.h,
                "x": rep.x,
                "K": rep.k,
                "sigma": list(rep.sigma),
                "p": list(rep.p),
                "z": rep.z,
                "S": rep.mass_sum if rep.mass_sum != float("inf") else None,
                "ratio_one_mass": rep.ratio_one_mass,
                "pair_mass": rep.pair_mass,
                "revenue": rep.revenue,
                "upper_bound": rep.upper_bound,
            }
        )
    loss = 0.0
    if result.upper_bound > 0:
        loss = (result.upper_bound - result.revenue) / result.upper_bound
    return {
        "revenue": result.revenue,
        "upper_bound": result.upper_bound,
        "relative_loss": loss,
        "pairs": pairs,
    }


def cmd_construct(args) -> int:
    dist, prior, _ = _load_instance(args.instance)
    result = construct_symmetric_detailed(prior, dist)
    with open(args.out_scheme, "w", encoding="utf-8") as fh:
        json.dump(scheme_to_records(result.scheme), fh, indent=2)
        fh.write("\n")
    _emit_json(args.out, _report_payload(result))
    _say(args, f"construct: revenue {result.revenue:.6f} of upper bound {result.upper_bound:.6f}")
    return EXIT_OK


def cmd_fptas(args) -> int:
    dist, prior, instance_reserve = _load_instance(args.instance)
    reserve = args.reserve if args.reserve is not None else instance_reserve
    started = time.perf_counter()
    if reserve and reserve > 0.0:
        scheme, objective = fptas_solve_reserve(prior, dist, args.epsilon, reserve)
    else:
        scheme, objective = fptas_solve(prior, dist, args.epsilon)
    solve_ms = (time.perf_counter() - started) * 1000.0
    if args.out_scheme:
        with open(args.out_scheme, "w", encoding="utf-8") as fh:
            json.dump(scheme_to_records(scheme), fh, indent=2)
            fh.write("\n")
    if args.report:
        grid = build_grid(prior, min(max(args.epsilon, 1e-12), 0.5))
        sizes = grid.sizes()
        variables = len(prior.states) * int(np.prod(sizes))
        rows = len(prior.states) + int(sum(sizes))
        header = ["epsilon", "variables", "rows", "objective", "max_calibration_residual", "solve_ms"]
        row = (args.epsilon, str(variables), str(rows), objective, scheme.max_residual(), solve_ms)
        out = args.out
        args.out = args.report
        _emit_csv(args, header, [row])
        args.out = out
    if not args.quiet:
        print(_fmt(objective))
    return EXIT_OK


def cmd_simulate(args) -> int:
    dist, prior, _ = _load_instance(args.instance)
    scheme = scheme_from_records(_load_json(args.scheme), prior=prior)
    scheme.validate(tol=1e-9)
    cfg = SimulationConfig(samples=args.samples, seed=args.seed, workers=args.workers)
    started = time.perf_counter()
    mean, stderr = estimate_revenue(prior, scheme, dist, cfg)
    seconds = time.perf_counter() - started
    _emit_csv(args, ["mean", "stderr", "samples", "seconds"], [(mean, stderr, str(args.samples), seconds)])
    if args.calibration:
        rows = empirical_calibration(prior, scheme, dist, cfg)
        out = args.out
        args.out = args.calibration
        _emit_csv(
            args,
            ["bidder", "signal", "empirical_mean", "count", "stderr"],
            [(str(b), s, m, str(c), se) for b, s, m, c, se in rows],
        )
        args.out = out
    return EXIT_OK


def cmd_audit(args) -> int:
    records = _load_json(args.scheme)
    prior = None
    if args.instance:
        _dist, prior, _ = _load_instance(args.instance)
    scheme = scheme_from_records(records, prior=prior)
    scheme.validate(tol=1e-9)
    residuals = calibration_residuals(scheme)
    rows = []
    failures = 0
    for bidder, signal, residual in residuals:
        ok = abs(residual) <= _AUDIT_TOL
        failures += 0 if ok else 1
        rows.append((str(bidder), signal, residual, "true" if ok else "false"))
    _emit_csv(args, ["bidder", "signal", "residual", "calibrated"], rows)
    if failures:
        _say(args, f"audit: {failures} uncalibrated (bidder, signal) rows")
        return EXIT_VALIDATION
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calibra",
        description="Calibrated CTR signaling for click-through auctions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--instance", help="instance JSON file")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--quiet", action="store_true", help="suppress progress messages")

    p = sub.add_parser("ratio", parents=[common], help="tabulate the optimal signal ratio curve")
    p.add_argument("--grid", type=int, default=33, help="uniform l-grid size")
    p.add_argument("--l", action="append", help="explicit l value (repeatable)")
    p.set_defaults(func=cmd_ratio)

    p = sub.add_parser("bound", parents=[common], help="worst-case bound of the pair construction")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("construct", parents=[common], help="build the geometric signaling scheme")
    p.add_argument("--out-scheme", required=True, help="scheme JSON output path")
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("fptas", parents=[common], help="solve the discretized signal-design LP")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--reserve", type=float, default=None)
    p.add_argument("--out-scheme", help="scheme JSON output path")
    p.add_argument("--report", help="CSV report path")
    p.set_defaults(func=cmd_fptas)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo revenue estimate")
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--scheme", required=True, help="scheme JSON file")
    p.add_argument("--calibration", help="write the per-signal calibration table to this CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("audit", parents=[common], help="calibration residual audit of a scheme file")
    p.add_argument("--scheme", required=True, help="scheme JSON file")
    p.set_defaults(func=cmd_audit)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    needs_instance = args.command != "audit"
    if needs_instance and not args.instance:
        print("error: --instance is required", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except json.JSONDecodeError as exc:
        print(f"error: JSON parse failure at line {exc.lineno} column {exc.colno}: {exc.msg}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DistributionError, PriorError, SchemeError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (QuadratureError, IterationLimitError, ConvexityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
