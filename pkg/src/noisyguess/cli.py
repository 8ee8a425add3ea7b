"""Command-line interface.

Exit codes: 0 success, 1 bad input, 2 infinite exponent or moment,
3 solver non-convergence, 4 failed verification.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .errors import (
    HorizonTooSmallError,
    InfiniteMomentError,
    NonConvergenceError,
    ResourceLimitError,
    UnreachableError,
)
from .exponent import (
    ConverseAssumptionWarning,
    SolverOptions,
    bsc_critical_q,
    bsc_critical_rho,
    exponent_with_side_info,
    solve_exponent,
    tilted_distribution,
)
from .samplers import IidStrategy, ListStrategy, UniversalStrategy
from .simplex import Channel, GuessingProblem
from .simulator import exact_moment, fixed_list_moment, simulate_moment
from .verify import run_checks

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFINITE = 2
EXIT_NONCONVERGENCE = 3
EXIT_VERIFY = 4

SCHEMA_VERSION = 1
LN2 = math.log(2.0)


class InputError(Exception):
    pass


def load_problem(path, rho: Optional[float] = None):
    """Parse a problem file into ``(GuessingProblem, side_info_joint or None)``."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read problem file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError("problem file must hold a JSON object")
    if data.get("version") != SCHEMA_VERSION:
        raise InputError(f"unsupported problem file version {data.get('version')!r}; expected {SCHEMA_VERSION}")
    missing = [k for k in ("source", "channel", "rho") if k not in data and not (k == "rho" and rho is not None)]
    if missing:
        raise InputError(f"problem file lacks fields {missing}")
    try:
        problem = GuessingProblem(data["source"], data["channel"], data["rho"] if rho is None else rho)
    except (ValueError, TypeError) as exc:
        raise InputError(str(exc)) from exc
    joint = data.get("side_info_joint")
    if joint is not None:
        j = np.asarray(joint, dtype=float)
        if j.ndim != 2 or j.shape[0] != problem.source.alphabet_size:
            raise InputError("side_info_joint must be a |Y| x |Z| matrix")
        if not np.allclose(j.sum(axis=1), problem.source.probs, atol=1e-9):
            raise InputError("side_info_joint rows must sum to the source law")
    return problem, joint


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _write(text: str, output: Optional[str]):
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(output, "w", newline="\n") as fh:
            fh.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _opts(args) -> SolverOptions:
    return SolverOptions() if args.tolerance is None else SolverOptions(tolerance=args.tolerance)


def _unit(args):
    return ("bits", 1.0 / LN2) if args.bits else ("nats", 1.0)


def cmd_exponent(args) -> int:
    problem, joint = load_problem(args.problem, args.rho)
    unit, scale = _unit(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConverseAssumptionWarning)
        res = solve_exponent(problem, _opts(args))
    report = {
        "version": SCHEMA_VERSION,
        "command": "exponent",
        "units": unit,
        "rho": problem.rho,
        "exponent": res.value * scale,
        "noiseless_exponent": res.noiseless * scale,
        "penalty": res.penalty * scale,
        "flat": res.flat,
        "tilted_in_hull": res.tilted_in_hull,
        "v_star": res.v_star.probs.tolist(),
        "q_induced": res.q_induced.probs.tolist(),
        "solver": {"iterations": res.iterations, "gap": res.gap, "tolerance": _opts(args).tolerance},
        "warnings": [str(w.message) for w in caught],
    }
    if joint is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConverseAssumptionWarning)
            report["exponent_with_side_info"] = scale * exponent_with_side_info(joint, problem.channel, problem.rho, _opts(args))
    _write(_json(report), args.output)
    return EXIT_OK


def _sweep(values, make_problem, opts):
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConverseAssumptionWarning)
        for v in values:
            res = solve_exponent(make_problem(v), opts)
            rows.append((v, res.value, res.flat))
    return rows


def _grid_with_marker(lo: float, hi: float, steps: int, marker: float) -> List[float]:
    if steps < 2:
        raise InputError("steps must be at least 2")
    grid = np.linspace(lo, hi, steps).tolist()
    if lo <= marker <= hi and all(abs(marker - g) > 1e-12 for g in grid):
        grid.append(marker)
    return sorted(grid)


def _csv(header: str, rows, scale: float) -> str:
    lines = [header]
    lines += [f"{_fmt(v)},{_fmt(e * scale)},{'true' if flat else 'false'}" for v, e, flat in rows]
    return "\n".join(lines) + "\n"


def cmd_figure_q(args) -> int:
    if not 0.0 < args.p < 1.0:
        raise InputError("p must lie in (0, 1)")
    if not 0.0 <= args.q_min <= args.q_max <= 0.5:
        raise InputError("need 0 <= q-min <= q-max <= 0.5")
    if args.rho < 0:
        raise InputError("rho must be non-negative")
    source = (1.0 - args.p, args.p)
    # the BSC hull is [q, 1-q] in each coordinate, so flatness ends where q
    # reaches the smaller tilted probability (bsc_critical_q at rho = 1)
    marker = bsc_critical_q(args.p) if args.rho == 1.0 else float(tilted_distribution(source, args.rho).probs.min())
    qs = _grid_with_marker(args.q_min, args.q_max, args.steps, marker)
    rows = _sweep(qs, lambda q: GuessingProblem(source, Channel.bsc(q), args.rho), _opts(args))
    unit, scale = _unit(args)
    _write(_csv(f"q,exponent_{unit},flat", rows, scale), args.output)
    return EXIT_OK


def cmd_figure_rho(args) -> int:
    if not 0.0 < args.p < 1.0:
        raise InputError("p must lie in (0, 1)")
    if not 0.0 < args.q <= 0.5:
        raise InputError("q must lie in (0, 0.5]")
    if not 0.0 <= args.rho_min <= args.rho_max:
        raise InputError("need 0 <= rho-min <= rho-max")
    rhos = _grid_with_marker(args.rho_min, args.rho_max, args.steps, bsc_critical_rho(args.p, args.q))
    source = (1.0 - args.p, args.p)
    channel = Channel.bsc(args.q)
    rows = _sweep(rhos, lambda r: GuessingProblem(source, channel, r), _opts(args))
    unit, scale = _unit(args)
    _write(_csv(f"rho,exponent_{unit},flat", rows, scale), args.output)
    return EXIT_OK


def _parse_vector(text: str) -> List[float]:
    try:
        return [float(t) for t in text.split(",")]
    except ValueError as exc:
        raise InputError(f"cannot parse vector {text!r}") from exc


def _load_list(path) -> ListStrategy:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read list file {path}: {exc}") from exc
    guesses = data.get("guesses") if isinstance(data, dict) else data
    if not isinstance(guesses, list) or not guesses:
        raise InputError("list file must hold a non-empty list of guesses")
    return ListStrategy(guesses)


def cmd_simulate(args) -> int:
    problem, _ = load_problem(args.problem, args.rho)
    if args.n < 1:
        raise InputError("n must be positive")
    if args.strategy == "iid":
        if args.v is not None:
            strategy = IidStrategy(_parse_vector(args.v))
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConverseAssumptionWarning)
                strategy = IidStrategy(solve_exponent(problem, _opts(args)).v_star)
        described = {"kind": "iid", "v": strategy.v.probs.tolist()}
    elif args.strategy == "universal":
        strategy = UniversalStrategy.for_block(args.n, problem.channel.n_inputs)
        described = {"kind": "universal"}
    else:
        if args.list_file is None:
            raise InputError("--strategy list needs --list-file")
        strategy = _load_list(args.list_file)
        described = {"kind": "list", "length": len(strategy.guesses)}

    eps = 1e-10 if args.tolerance is None else args.tolerance
    if args.mode == "exact":
        if isinstance(strategy, ListStrategy):
            report = fixed_list_moment(problem, strategy, args.n, eps=eps)
        else:
            report = exact_moment(problem, strategy, args.n, eps)
    else:
        report = simulate_moment(problem, strategy, args.n, args.trials, args.seed, workers=args.workers)
    out = {"version": SCHEMA_VERSION, "command": "simulate", "strategy": described, **report.to_dict()}
    if args.bits:
        out["log_value_per_n"] = report.log_value_per_n / LN2
    out["units"] = _unit(args)[0]
    out["seed"] = args.seed
    _write(_json(out), args.output)
    return EXIT_OK


def cmd_verify(args) -> int:
    problem = load_problem(args.problem)[0] if args.problem else None
    results = run_checks(args.level, args.seed, _opts(args), problem)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  residual={r.residual:.3e}  tolerance={r.tolerance:.1e}  ({r.seconds:.2f}s)")
    failures = [r.to_dict() for r in results if not r.passed]
    summary = {"version": SCHEMA_VERSION, "level": args.level, "passed": not failures,
               "checks": [r.to_dict() for r in results], "failures": failures}
    if args.output:
        _write(_json(summary), args.output)
    if failures:
        print(json.dumps({"failures": failures}), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--tolerance", type=float, default=None, help="solver tolerance / series truncation")
    p.add_argument("--output", default=None, help="output path (default: stdout)")
    p.add_argument("--bits", action="store_true", help="report exponents in bits instead of nats")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisyguess", description="Guessing exponents through noisy channels.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exponent", help="optimal exponent of a problem file")
    p.add_argument("problem")
    p.add_argument("--rho", type=float, default=None, help="override the file's rho")
    _common(p)
    p.set_defaults(func=cmd_exponent)

    p = sub.add_parser("figure-q", help="exponent vs BSC crossover probability (CSV)")
    p.add_argument("--p", type=float, default=0.25)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--q-min", type=float, default=0.0)
    p.add_argument("--q-max", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=101)
    _common(p)
    p.set_defaults(func=cmd_figure_q)

    p = sub.add_parser("figure-rho", help="exponent vs moment order (CSV)")
    p.add_argument("--p", type=float, default=0.25)
    p.add_argument("--q", type=float, default=0.35)
    p.add_argument("--rho-min", type=float, default=0.0)
    p.add_argument("--rho-max", type=float, default=3.0)
    p.add_argument("--steps", type=int, default=101)
    _common(p)
    p.set_defaults(func=cmd_figure_rho)

    p = sub.add_parser("simulate", help="guessing moment of a strategy (JSON)")
    p.add_argument("problem")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--mode", choices=("exact", "mc"), default="exact")
    p.add_argument("--strategy", choices=("iid", "universal", "list"), default="iid")
    p.add_argument("--v", default=None, help="comma-separated input law for --strategy iid (default: optimal)")
    p.add_argument("--list-file", default=None, help='JSON file {"guesses": [[...], ...]}')
    p.add_argument("--workers", type=int, default=1, help="threads for Monte Carlo; does not change results")
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the consistency checks")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.add_argument("--problem", default=None, help="also check this problem file")
    _common(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ValueError, TypeError, ResourceLimitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (UnreachableError, InfiniteMomentError) as exc:
        print(f"infinite: {exc}", file=sys.stderr)
        return EXIT_INFINITE
    except (NonConvergenceError, HorizonTooSmallError) as exc:
        print(f"did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
