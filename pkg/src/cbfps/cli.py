"""Batch command-line front end.

Subcommands: fpca, balance, fit, diagnostics, simulate, validate. Options can
also come from a flat key=value config file (--config); explicit flags win.
Exit codes: 0 success, 1 usage error, 2 data/schema error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .exceptions import ConvergenceError, DataError
from .io import validate_inputs
from .pipeline import METHODS, ExperimentConfig, run_pipeline

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SOLVER = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_common(parser):
    parser.add_argument("--config", help="flat key=value config file; flags win")
    parser.add_argument("--out", dest="out_dir", help="output directory (default: out)")
    parser.add_argument("--seed", type=int, help="master seed (default: 0)")
    parser.add_argument(
        "--no-figures", dest="figures", action="store_false", default=None,
        help="skip figure rendering",
    )


def _add_data_inputs(parser, need_data=True):
    parser.add_argument("--curves", dest="curves_path", help="curves CSV")
    if need_data:
        parser.add_argument("--data", dest="data_path", help="covariates/outcome CSV")
        parser.add_argument("--outcome-col", help="outcome column name (default: y)")
        parser.add_argument("--group-col", help="binary group column name")


def _add_balance_options(parser):
    parser.add_argument(
        "--method", action="append", dest="methods", choices=METHODS,
        help="estimator; repeatable (default: all three)",
    )
    parser.add_argument(
        "--pve-l", dest="pve_l", help="comma list of PVE thresholds for the balancing rank"
    )
    parser.add_argument("--rho", type=float, help="EL regularization (default: 0.1/n)")
    parser.add_argument(
        "--hvec-literal", action="store_true", default=None,
        help="use the n*theta*gamma0 cross-moment form",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cbfps", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fpca = sub.add_parser("fpca", help="eigenvalues and PVE of a curves file")
    _add_common(p_fpca)
    _add_data_inputs(p_fpca, need_data=False)

    p_balance = sub.add_parser("balance", help="estimate balancing weights")
    _add_common(p_balance)
    _add_data_inputs(p_balance)
    _add_balance_options(p_balance)
    p_balance.add_argument(
        "--design", dest="design_path",
        help="standardized design CSV (astar_*/cstar_* columns) instead of --curves/--data",
    )

    p_fit = sub.add_parser("fit", help="fit the weighted outcome model")
    _add_common(p_fit)
    _add_data_inputs(p_fit)
    _add_balance_options(p_fit)
    p_fit.add_argument("--weights", dest="weights_path", help="precomputed weights CSV")
    p_fit.add_argument(
        "--pve-lstar", dest="pve_lstar", help="comma list of PVE thresholds for the outcome basis"
    )
    p_fit.add_argument("--avi-share", type=float, help="basis selection by AVI share")
    p_fit.add_argument(
        "--avi-initial-pve", type=float, help="PVE for the initial AVI set (default: 0.99)"
    )
    p_fit.add_argument("--bootstrap", dest="bootstrap_b", type=int, help="bootstrap replicates")
    p_fit.add_argument("--level", dest="bootstrap_level", type=float, help="band level (default: 0.99)")
    p_fit.add_argument(
        "--bootstrap-frozen-weights", action="store_true", default=None,
        help="resample fixed weights instead of re-estimating them",
    )

    p_diag = sub.add_parser("diagnostics", help="balance diagnostics for a dataset")
    _add_common(p_diag)
    _add_data_inputs(p_diag)
    _add_balance_options(p_diag)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo study")
    _add_common(p_sim)
    _add_balance_options(p_sim)
    p_sim.add_argument("--setting", type=int, choices=(1, 2, 3, 4), help="scenario (default: 1)")
    p_sim.add_argument("--runs", type=int, help="number of runs (default: 200)")
    p_sim.add_argument("--n", type=int, help="subjects per run (default: 200)")
    p_sim.add_argument("--grid-size", type=int, help="grid points (default: 128)")
    p_sim.add_argument(
        "--pve-lstar", dest="pve_lstar", help="comma list of PVE thresholds for the outcome basis"
    )
    p_sim.add_argument(
        "--sd-parameterization", action="store_true", default=None,
        help="read normal dispersion values as standard deviations",
    )
    p_sim.add_argument("--save-runs", action="store_true", default=None,
                       help="write each run's dataset under out/runs/")
    p_sim.add_argument("--workers", type=int, help="parallel run workers (default: 1)")

    p_val = sub.add_parser("validate", help="schema-check input files")
    _add_common(p_val)
    _add_data_inputs(p_val)

    return parser


def _parse_pve_list(text):
    try:
        values = tuple(float(v) for v in str(text).split(",") if v != "")
    except ValueError:
        raise DataError(f"cannot parse PVE list {text!r}")
    if not values:
        raise DataError(f"empty PVE list {text!r}")
    return values


_BOOL_KEYS = {
    "figures", "hvec_literal", "sd_parameterization", "save_runs",
    "bootstrap_frozen_weights",
}
_INT_KEYS = {"setting", "runs", "n", "grid_size", "seed", "bootstrap_b", "workers"}
_FLOAT_KEYS = {"rho", "avi_share", "avi_initial_pve", "bootstrap_level"}
_LIST_KEYS = {"pve_l", "pve_lstar", "methods"}


def read_config_file(path) -> dict:
    """Parse a flat key=value file; '#' starts a comment."""
    values = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{line_no}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key in _BOOL_KEYS:
            values[key] = value.lower() in ("1", "true", "yes", "on")
        elif key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        elif key == "methods":
            values[key] = tuple(v.strip() for v in value.split(",") if v.strip())
        elif key in _LIST_KEYS:
            values[key] = _parse_pve_list(value)
        else:
            values[key] = value
    return values


def _merge_config(args: argparse.Namespace) -> ExperimentConfig:
    merged = {}
    if getattr(args, "config", None):
        merged.update(read_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        if key in ("pve_l", "pve_lstar") and isinstance(value, str):
            value = _parse_pve_list(value)
        if key == "methods":
            value = tuple(value)
        merged[key] = value
    merged["mode"] = args.command
    field_names = {f.name for f in ExperimentConfig.__dataclass_fields__.values()}
    unknown = set(merged) - field_names
    if unknown:
        raise DataError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**merged)


def _run_validate(config: ExperimentConfig) -> int:
    report = validate_inputs(
        curves_path=config.curves_path,
        data_path=config.data_path,
        outcome_col=config.outcome_col,
        group_col=config.group_col,
    )
    if report.ok:
        print("ok: no schema violations")
        return EXIT_OK
    for violation in report.violations:
        print(
            f"{violation.file}: row {violation.row}, column {violation.column}: "
            f"{violation.message}",
            file=sys.stderr,
        )
    return EXIT_DATA


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _merge_config(args)
        if args.command == "validate":
            return _run_validate(config)
        result = run_pipeline(config)
    except DataError as exc:
        print(f"cbfps: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConvergenceError as exc:
        print(f"cbfps: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"cbfps: i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(f"wrote {result['out_dir']} (manifest: {result['manifest']})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
