"""Command line entry point: ``apfv <subcommand> [--config PATH] [--seed N] [--out DIR]``.

Exit status: 0 success, 1 configuration error, 2 numerical failure,
3 invariant violation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from apfv.errors import ConfigurationError
from apfv.harness import EXIT_CONFIG, SCHEMAS, load_config, run_experiment

CSV_SCHEMAS = {
    "models-check": "models_check.csv: model, condition, passed, residual, tolerance",
    "effective": "effective.csv: u*, M*, closed*, relative_error "
                 "(q = 2 models: u0, du_dx, coefficient, residual)",
    "run-hll": "hll.csv: x, U*",
    "run-ap": "ap.csv: x, U*, u*; ap_entropy.csv: time, entropy",
    "run-parabolic": "parabolic.csv: x, u*",
    "compare-asymptotic": "compare_asymptotic.csv: epsilon, l1_distance, relative",
    "run-spacetime": "spacetime_slices.csv: slice, t, theta_center, u; "
                     "spacetime_diagnostics.csv: slice, contraction, dissipation_total, "
                     "max_entropy_residual",
    "convergence": "convergence.csv: cells, dx, l1_error, observed_order",
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--seed", type=int, help="override [run] seed")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")

    parser = argparse.ArgumentParser(prog="apfv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SCHEMAS:
        sub.add_parser(name, parents=[common], help=CSV_SCHEMAS[name],
                       description=f"Writes {CSV_SCHEMAS[name]} and {name}.json")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text() if args.config is not None else ""
    except OSError as exc:
        print(f"apfv: cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.subcommand, text, seed=args.seed)
    except ConfigurationError as exc:
        print(f"apfv: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    result = run_experiment(cfg, args.out)
    if result.status:
        print(f"apfv: {result.message}", file=sys.stderr)
    else:
        for name in result.outputs:
            print(args.out / name)
    return result.status


if __name__ == "__main__":
    sys.exit(main())
