"""Command-line front end: ``consensus-lab <subcommand> [options]``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 output error.
"""

from __future__ import annotations

import argparse
import sys

from .errors import LabError
from .experiments import (
    PRESETS,
    Experiment,
    load_config,
    make_config,
    preset,
    run,
    validate,
)

_OPTIONS = [
    # flag, config key, help
    ("--family", "family", "path | grid | dense_periodic | fractional"),
    ("--n", "n_list", "comma-separated sizes (grid: side length)"),
    ("--r", "r", "dense periodic radius in [0, 1/2]"),
    ("--alpha", "alpha", "fractional exponent in (0, 1)"),
    ("--c-alpha", "c_alpha", "fractional weight constant"),
    ("--T", "T", "time horizon"),
    ("--dt", "dt", "time step"),
    ("--seed", "seed", "seed for random initial data"),
    ("--output-dir", "output_dir", "directory for CSV/SVG outputs"),
    ("--profile", "profile", "initial profile: sin | linear | cos | constant"),
    ("--influence", "influence", "constant:v | rational:beta | indicator:radius"),
    ("--x0", "x0", "initial data: profile | random | sign"),
    ("--time-policy", "time_policy", "control horizon: fixed | scaled"),
    ("--time-scale", "time_scale", "c in T = c N^2 for the scaled policy"),
    ("--m-ref", "m_ref", "reference resolution for graph-limit runs"),
    ("--n-ref", "n_ref", "reference size for mean-field runs"),
    ("--test-polys", "test_polys", "test polynomial degrees, e.g. 1,2,3"),
    ("--label", "label", "prefix for output file names"),
]


def _add_common(p):
    p.add_argument("--config", help="key = value configuration file")
    for flag, key, text in _OPTIONS:
        p.add_argument(flag, dest=key, help=text)
    p.add_argument("--scaled", dest="scaled", action="store_const", const="true",
                   help="use the PDE scaling N^2 L or N^(2 alpha) L")
    p.add_argument("--no-plot", dest="plot", action="store_const", const="false")


def build_parser():
    parser = argparse.ArgumentParser(prog="consensus-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for exp in Experiment:
        _add_common(sub.add_parser(exp.value, help=f"run the {exp.value} experiment"))
    p = sub.add_parser("preset", help="reproduce a figure: " + ", ".join(PRESETS))
    p.add_argument("name", help="preset name")
    p.add_argument("--output-dir", dest="output_dir", default=None)
    p = sub.add_parser("validate", help="list precondition violations of a configuration")
    p.add_argument("experiment", help="experiment name")
    _add_common(p)
    return parser


def _config_from(args, experiment):
    overrides = {key: getattr(args, key) for _, key, _ in _OPTIONS}
    overrides["scaled"] = args.scaled
    overrides["plot"] = args.plot
    overrides["experiment"] = experiment
    if args.config:
        return load_config(args.config, **overrides)
    return make_config(**{k: v for k, v in overrides.items() if v is not None})


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "preset":
            manifest = preset(args.name, args.output_dir or f"out_{args.name}")
        elif args.command == "validate":
            problems = validate(_config_from(args, args.experiment))
            for line in problems:
                print(line)
            return 2 if problems else 0
        else:
            manifest = run(_config_from(args, args.command))
    except LabError as exc:
        print(f"consensus-lab: error: {exc}", file=sys.stderr)
        return exc.exit_code
    for item in manifest.outputs:
        print(item["path"])
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
