"""Command-line entry point: ``infoepi <command> ...``.

Exit codes: 0 success, 1 a reproduction check failed, 2 configuration
error, 3 integrator failure, 4 bifurcation bracket failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .entry_exit import attach_predictions, measure_entry_exit
from .errors import BracketError, ConfigError, DegeneracyError, IntegrationError, ParameterError
from .fast import classify_fast, critical_value, find_transcritical, sample_fast_table
from .integrate import EventSpec, WatchKind, integrate_full
from .scenario import dumps_json, load, load_params, run, write_atomic, write_outputs
from .slow import BranchId, full_equilibria

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_INTEGRATOR, EXIT_BRACKET = 0, 1, 2, 3, 4

log = logging.getLogger("infoepi")


def _emit(text: str, out_path: str | None = None) -> None:
    if out_path:
        write_atomic(out_path, text)
    else:
        sys.stdout.write(text)


def _range(text: str):
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"range must look like lo:hi, got {text!r}") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError(f"range needs lo < hi, got {text!r}")
    return lo, hi


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"I must lie in [0, 1], got {value}")
    return value


def cmd_simulate(args) -> int:
    cfg = load(args.config)
    result = run(cfg)
    stem = cfg.name or os.path.splitext(os.path.basename(args.config))[0]
    paths = write_outputs(result, args.out_dir, stem)
    for kind, path in sorted(paths.items()):
        print(f"{kind}: {path}")
    summary = result.summary()
    near = summary.get("nearest_equilibrium")
    if near:
        label = near.get("label") or f"{near['branch']} {near['kind']}"
        print(f"nearest equilibrium: {label} (distance {near['distance']:.3g})")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    from .reproduce import reproduce

    report = reproduce(args.figure, args.out_dir)
    for check in report.checks:
        print(check.line())
    print(f"{report.figure}: {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_equilibria(args) -> int:
    params = load_params(args.params)
    out = {
        "I": args.at_I,
        "fast": [e.to_dict() for e in classify_fast(params, args.at_I)],
        "full": [e.to_dict() for e in full_equilibria(params)],
    }
    _emit(dumps_json(out), args.out)
    return EXIT_OK


def cmd_bifurcation(args) -> int:
    params = load_params(args.params)
    lo, hi = args.range
    report = find_transcritical(params, args.vary, (lo, hi), args.at_I)
    grid = np.linspace(lo, hi, args.samples)
    out = {
        "I": args.at_I,
        "parameter": args.vary,
        "range": [lo, hi],
        "closed_form_critical_value": critical_value(params, args.vary, args.at_I),
        "sotomayor": report.to_dict(),
        "table": sample_fast_table(params, args.vary, grid, args.at_I),
    }
    _emit(dumps_json(out), args.out)
    return EXIT_OK


def cmd_entry_exit(args) -> int:
    cfg = load(args.config)
    if cfg.mode != "full":
        raise ConfigError("entry-exit needs a full-mode scenario", None, args.config)
    branch = BranchId.parse(args.branch)
    delta = args.delta
    warnings = []
    if delta > math.sqrt(2):
        msg = f"delta={delta} exceeds the simplex diameter sqrt(2); the whole run counts as one episode"
        warnings.append(msg)
        print(f"warning: {msg}", file=sys.stderr)
    watch = [EventSpec(WatchKind.BRANCH, branch, delta)]
    traj = integrate_full(cfg.params, cfg.initial, cfg.t_end, cfg.integrator, watch)
    records = measure_entry_exit(traj, cfg.params, branch, delta, cfg.integrator)
    attach_predictions(records, cfg.params, cfg.integrator)
    out = {"branch": branch.value, "delta": delta, "warnings": warnings, "records": [r.to_dict() for r in records]}
    _emit(dumps_json(out), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="infoepi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario file and write CSV/JSON outputs")
    p.add_argument("--config", required=True, help="scenario JSON file")
    p.add_argument("--out-dir", default=".", help="directory for output files (default: .)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reproduce", help="run a built-in figure preset and check it")
    p.add_argument("figure", choices=["fig3", "fig4", "fig5", "fig6", "fig7", "fig8"])
    p.add_argument("--out-dir", default=None, help="also write outputs here")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("equilibria", help="list fast and full-system equilibria as JSON")
    p.add_argument("--params", required=True, help="JSON with the nine parameters (or a scenario file)")
    p.add_argument("--at-I", type=_fraction, default=0.0, dest="at_I",
                   help="infection level for the fast equilibria (default: 0)")
    p.add_argument("--out", default=None, help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_equilibria)

    p = sub.add_parser("bifurcation", help="locate a transcritical bifurcation of the MSFE")
    p.add_argument("--params", required=True)
    p.add_argument("--vary", required=True, choices=["b1", "b2"])
    p.add_argument("--range", required=True, type=_range, help="lo:hi")
    p.add_argument("--at-I", type=_fraction, default=0.0, dest="at_I")
    p.add_argument("--samples", type=int, default=11, help="rows in the feasibility table (default: 11)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bifurcation)

    p = sub.add_parser("entry-exit", help="measure and predict entry-exit episodes on one branch")
    p.add_argument("--config", required=True)
    p.add_argument("--branch", required=True, type=str.upper, choices=["C01", "C02"])
    p.add_argument("--delta", type=float, default=1e-2)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_entry_exit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"integrator failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRATOR
    except (BracketError, DegeneracyError) as exc:
        print(f"bifurcation failure: {exc}", file=sys.stderr)
        return EXIT_BRACKET


if __name__ == "__main__":
    sys.exit(main())
