"""Experiment orchestration: batch runs, reports, figures and manifests.

Every entry point takes an ExperimentConfig, writes CSV reports (and figures
unless disabled) under the output directory, and finishes with a manifest
that lists every produced file together with the resolved configuration, so
a run can be reproduced from the manifest alone. Failures of one
experimental cell are recorded and never abort the remaining cells.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .balance_np import ElProblem, estimate_weights_np, to_balance_weights
from .balance_param import BalanceWeights, estimate_weights_param
from .exceptions import CbfpsError, ConvergenceError, DataError
from .fdata import FunctionalSample
from .fpca import FpcaModel, StandardizedDesign, decompose, select_rank, standardize
from .metrics import (
    balance_correlations,
    balance_f_statistics,
    ise,
    summarize_runs,
)
from .outcome import avi_select, bootstrap_bands, fit_interaction, fit_truncated
from .simgen import SimConfig, generate
from . import io as io_mod

__all__ = ["ExperimentConfig", "run_pipeline", "estimate_weights", "run_simulation_study"]

METHODS = ("unweighted", "parametric", "nonparametric")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration of one pipeline invocation."""

    mode: str
    out_dir: str = "out"
    curves_path: str = None
    data_path: str = None
    design_path: str = None
    weights_path: str = None
    outcome_col: str = "y"
    group_col: str = None
    setting: int = 1
    runs: int = 200
    n: int = 200
    grid_size: int = 128
    save_runs: bool = False
    seed: int = 0
    pve_l: tuple = (0.95,)
    pve_lstar: tuple = (0.95,)
    methods: tuple = METHODS
    rho: float = None
    hvec_literal: bool = False
    sd_parameterization: bool = False
    avi_share: float = None
    avi_initial_pve: float = 0.99
    bootstrap_b: int = 0
    bootstrap_level: float = 0.99
    bootstrap_frozen_weights: bool = False
    workers: int = 1
    figures: bool = True

    def __post_init__(self):
        for value in tuple(self.pve_l) + tuple(self.pve_lstar):
            if not 0.0 < value <= 1.0:
                raise DataError(f"PVE threshold {value} outside (0, 1]")
        if not self.methods:
            raise DataError("at least one method is required")
        for method in self.methods:
            if method not in METHODS:
                raise DataError(f"unknown method {method!r}")
        object.__setattr__(self, "pve_l", tuple(self.pve_l))
        object.__setattr__(self, "pve_lstar", tuple(self.pve_lstar))
        object.__setattr__(self, "methods", tuple(self.methods))


def estimate_weights(
    design: StandardizedDesign,
    method: str,
    rho: float = None,
    hvec_literal: bool = False,
) -> BalanceWeights:
    """Uniform facade over the three weighting methods."""
    if method == "unweighted":
        return BalanceWeights(
            weights=np.ones(design.n_subjects), method="unweighted", diagnostics={}
        )
    if method == "parametric":
        return estimate_weights_param(design)
    if method == "nonparametric":
        problem = ElProblem(design, rho=rho, hvec_literal=hvec_literal)
        return to_balance_weights(estimate_weights_np(problem))
    raise DataError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# Simulation study
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RunRecord:
    run: int
    method: str
    pve_l: float  # None for the unweighted estimator
    pve_lstar: float
    ise: float
    curve: np.ndarray


@dataclass(frozen=True)
class FStatRecord:
    run: int
    method: str
    pve_l: float
    fpc: int
    f_statistic: float


@dataclass(frozen=True)
class FailureRecord:
    run: int
    method: str
    pve_l: float
    stage: str
    message: str


@dataclass
class SimulationStudy:
    truth: np.ndarray
    grid: object
    run_records: list
    f_records: list
    failures: list


def _simulate_one_run(config: ExperimentConfig, run_index: int):
    sim_config = SimConfig(
        setting=config.setting,
        n=config.n,
        grid_size=config.grid_size,
        seed=config.seed,
        runs=config.runs,
        sd_parameterization=config.sd_parameterization,
    )
    data = generate(sim_config, run_index)
    model = decompose(data.sample)
    ranks = {
        pve: select_rank(model, pve)
        for pve in sorted(set(config.pve_l) | set(config.pve_lstar))
    }

    run_records, f_records, failures = [], [], []
    weights_by_cell = {}
    if "unweighted" in config.methods:
        weights_by_cell[("unweighted", None)] = np.ones(config.n)
    for method in config.methods:
        if method == "unweighted":
            continue
        for pve_l in config.pve_l:
            try:
                design = standardize(model, ranks[pve_l], data.covariates)
                result = estimate_weights(
                    design, method, rho=config.rho, hvec_literal=config.hvec_literal
                )
                weights_by_cell[(method, pve_l)] = result.weights
            except CbfpsError as exc:
                failures.append(
                    FailureRecord(run_index, method, pve_l, "balance", str(exc))
                )

    for (method, pve_l), weights in weights_by_cell.items():
        for pve_lstar in config.pve_lstar:
            rank = ranks[pve_lstar]
            try:
                estimate = fit_truncated(
                    data.outcome, model.scores[:, :rank], weights, model
                )
                run_records.append(
                    RunRecord(
                        run=run_index,
                        method=method,
                        pve_l=pve_l,
                        pve_lstar=pve_lstar,
                        ise=ise(estimate.curve, data.truth, model.grid),
                        curve=estimate.curve,
                    )
                )
            except CbfpsError as exc:
                failures.append(
                    FailureRecord(run_index, method, pve_l, f"fit@{pve_lstar}", str(exc))
                )

    for pve_l in config.pve_l:
        rank = ranks[pve_l]
        for (method, cell_pve), weights in weights_by_cell.items():
            if cell_pve is not None and cell_pve != pve_l:
                continue
            for k in range(rank):
                try:
                    f_value = _fstat(model.scores[:, k], data.covariates, weights)
                except CbfpsError as exc:
                    failures.append(
                        FailureRecord(run_index, method, pve_l, f"fstat@{k + 1}", str(exc))
                    )
                    continue
                f_records.append(FStatRecord(run_index, method, pve_l, k + 1, f_value))

    return run_records, f_records, failures, data.truth, model.grid


def _fstat(score, covariates, weights):
    from .metrics import weighted_f_statistic

    return weighted_f_statistic(score, covariates, weights)


def run_simulation_study(config: ExperimentConfig) -> SimulationStudy:
    """Run all Monte Carlo replicates; results are ordered by run index."""
    indices = list(range(config.runs))
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outputs = list(pool.map(_simulate_one_run, [config] * len(indices), indices))
    else:
        outputs = [_simulate_one_run(config, i) for i in indices]

    study = SimulationStudy(
        truth=outputs[0][3], grid=outputs[0][4], run_records=[], f_records=[], failures=[]
    )
    for run_records, f_records, failures, _, _ in outputs:
        study.run_records.extend(run_records)
        study.f_records.extend(f_records)
        study.failures.extend(failures)
    return study


def accuracy_rows(study: SimulationStudy):
    """Aggregate per-cell accuracy: (method, pve_l, pve_lstar, runs, mise, aise, isb)."""
    cells = {}
    for record in study.run_records:
        cells.setdefault((record.method, record.pve_l, record.pve_lstar), []).append(record)
    rows = []
    for (method, pve_l, pve_lstar), records in sorted(
        cells.items(), key=lambda item: (_method_rank(item[0][0]), item[0][1] or 0.0, item[0][2])
    ):
        report = summarize_runs(
            np.array([r.ise for r in records]),
            np.vstack([r.curve for r in records]),
            study.truth,
            study.grid,
        )
        rows.append(
            (method, pve_l, pve_lstar, len(records), report.mise, report.aise, report.isb)
        )
    return rows


def _method_rank(method: str) -> int:
    return METHODS.index(method)


def summary_table(rows, config: ExperimentConfig) -> str:
    """Human-readable summary mirroring the simulation tables' layout."""
    lstars = sorted({row[2] for row in rows})
    by_cell = {(r[0], r[1], r[2]): r for r in rows}
    lines = [
        f"Setting {config.setting}: {config.runs} runs, n={config.n}, seed={config.seed}",
        "",
    ]
    header = f"{'':24s}" + "".join(
        f"| PVE_L*={lstar:<4g} {'MISE':>8s} {'AISE':>8s} {'ISB':>8s} " for lstar in lstars
    )
    lines.append(header)
    lines.append("-" * len(header))

    def row_line(label, method, pve_l):
        parts = [f"{label:24s}"]
        for lstar in lstars:
            cell = by_cell.get((method, pve_l, lstar))
            if cell is None:
                parts.append(f"| {'':11s} {'--':>8s} {'--':>8s} {'--':>8s} ")
            else:
                runs_note = f"(runs={cell[3]})" if cell[3] != config.runs else ""
                parts.append(
                    f"| {runs_note:11s} {cell[4]:8.4f} {cell[5]:8.4f} {cell[6]:8.4f} "
                )
        return "".join(parts)

    if any(r[0] == "unweighted" for r in rows):
        lines.append(row_line("Unweighted", "unweighted", None))
    for pve_l in sorted({r[1] for r in rows if r[1] is not None}):
        for method, label in (("parametric", "Para"), ("nonparametric", "Np")):
            if any(r[0] == method and r[1] == pve_l for r in rows):
                lines.append(row_line(f"PVE_L={pve_l:g} {label}", method, pve_l))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------


class _OutputSink:
    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.outputs = []

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out_dir / name

    def write_manifest(self, config: ExperimentConfig) -> Path:
        manifest = {
            "config": {
                key: (list(value) if isinstance(value, tuple) else value)
                for key, value in dataclasses.asdict(config).items()
            },
            "outputs": sorted(self.outputs),
            "versions": _versions(),
        }
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path


def _versions() -> dict:
    import matplotlib
    import scipy

    return {
        "cbfps": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
        "python": sys.version.split()[0],
    }


def _pct(value) -> str:
    return ("%g" % (100 * value)).replace(".", "p")


def _cell_tag(method, pve_l, pve_lstar=None) -> str:
    tag = method if pve_l is None else f"{method}_pl{_pct(pve_l)}"
    if pve_lstar is not None:
        tag += f"_ls{_pct(pve_lstar)}"
    return tag


def _write_weights_outputs(sink, tag, result: BalanceWeights):
    io_mod.write_weights(sink.path(f"weights_{tag}.csv"), result.weights)
    rows = [("weight_sum", float(result.weights.sum()))]
    for key, value in sorted(result.diagnostics.items()):
        array = np.asarray(value)
        if array.ndim == 0:
            rows.append((key, array.item()))
        else:
            rows.append((key, " ".join(repr(float(v)) for v in array.ravel())))
    io_mod.write_table(sink.path(f"diagnostics_{tag}.csv"), ["key", "value"], rows)


# --------------------------------------------------------------------------
# Pipeline modes
# --------------------------------------------------------------------------


def run_simulation(config: ExperimentConfig) -> dict:
    study = run_simulation_study(config)
    sink = _OutputSink(config.out_dir)

    rows = accuracy_rows(study)
    io_mod.write_table(
        sink.path("accuracy.csv"),
        ["method", "pve_l", "pve_lstar", "runs_used", "mise", "aise", "isb"],
        [
            (method, "" if pve_l is None else pve_l, pve_lstar, used, mise, aise, isb)
            for method, pve_l, pve_lstar, used, mise, aise, isb in rows
        ],
    )
    io_mod.write_table(
        sink.path("f_statistics.csv"),
        ["run", "method", "pve_l", "fpc", "f_statistic"],
        [
            (r.run, r.method, r.pve_l, r.fpc, r.f_statistic)
            for r in study.f_records
        ],
    )
    if study.failures:
        io_mod.write_table(
            sink.path("failures.csv"),
            ["run", "method", "pve_l", "stage", "message"],
            [(f.run, f.method, f.pve_l, f.stage, f.message) for f in study.failures],
        )
    sink.path("summary.txt").write_text(summary_table(rows, config))

    if config.save_runs:
        runs_dir = sink.out_dir / "runs"
        runs_dir.mkdir(exist_ok=True)
        sim_config = SimConfig(
            setting=config.setting,
            n=config.n,
            grid_size=config.grid_size,
            seed=config.seed,
            runs=config.runs,
            sd_parameterization=config.sd_parameterization,
        )
        for run_index in range(config.runs):
            data = generate(sim_config, run_index)
            io_mod.write_curves(sink.path(f"runs/run_{run_index:03d}_curves.csv"), data.sample)
            io_mod.write_table(
                sink.path(f"runs/run_{run_index:03d}_data.csv"),
                ["y", "c1", "c2", "c3"],
                np.column_stack([data.outcome, data.covariates]),
            )

    if config.figures:
        from . import plots

        for pve_l in config.pve_l:
            records = [
                (r.fpc, r.method, r.f_statistic)
                for r in study.f_records
                if r.pve_l == pve_l
            ]
            if records:
                plots.f_statistic_boxplots(
                    records,
                    sink.path(f"f_statistics_pl{_pct(pve_l)}.png"),
                    title=f"Setting {config.setting}, PVE_L={pve_l:g}",
                )

    manifest_path = sink.write_manifest(config)
    return {"manifest": str(manifest_path), "out_dir": str(sink.out_dir)}


def _load_inputs(config: ExperimentConfig):
    if config.curves_path is None or config.data_path is None:
        raise DataError("this mode needs --curves and --data")
    sample = io_mod.read_curves(config.curves_path)
    y, covariates, names, group = io_mod.load_dataset(
        config.data_path, config.outcome_col, config.group_col
    )
    if y.size != sample.n_subjects:
        raise DataError(
            f"curves file has {sample.n_subjects} subjects but data file has {y.size}"
        )
    return sample, y, covariates, names, group


def run_fpca(config: ExperimentConfig) -> dict:
    if config.curves_path is None:
        raise DataError("fpca needs --curves")
    sample = io_mod.read_curves(config.curves_path)
    model = decompose(sample)
    sink = _OutputSink(config.out_dir)
    io_mod.write_table(
        sink.path("eigenvalues.csv"),
        ["component", "eigenvalue", "cumulative_pve"],
        [
            (k + 1, model.eigenvalues[k], model.pve[k])
            for k in range(model.n_components)
        ],
    )
    if config.figures:
        from . import plots

        top = min(model.n_components, 4)
        plots.eigenfunction_figure(
            model.grid.points,
            model.eigenfunctions[:top],
            model.pve[:top],
            sink.path("eigenfunctions.png"),
        )
    manifest_path = sink.write_manifest(config)
    return {"manifest": str(manifest_path), "out_dir": str(sink.out_dir)}


def _design_from_csv(path) -> StandardizedDesign:
    header, values = io_mod.read_table(path)
    a_cols = sorted(
        (name for name in header if name.startswith("astar_")),
        key=lambda name: int(name.split("_")[1]),
    )
    c_cols = sorted(
        (name for name in header if name.startswith("cstar_")),
        key=lambda name: int(name.split("_")[1]),
    )
    if not a_cols or not c_cols:
        raise DataError(f"{path}: need astar_* and cstar_* columns")
    a_star = values[:, [header.index(c) for c in a_cols]]
    c_star = values[:, [header.index(c) for c in c_cols]]
    return StandardizedDesign(
        a_star=a_star, c_star=c_star, gamma_c_half_inv=np.eye(c_star.shape[1])
    )


def run_balance(config: ExperimentConfig) -> dict:
    methods = [m for m in config.methods if m != "unweighted"]
    if not methods:
        raise DataError("balance needs --method parametric or nonparametric")
    sink = _OutputSink(config.out_dir)

    if config.design_path is not None:
        designs = {None: _design_from_csv(config.design_path)}
    else:
        sample, _, covariates, _, _ = _load_inputs_allow_no_outcome(config)
        model = decompose(sample)
        designs = {
            pve_l: standardize(model, select_rank(model, pve_l), covariates)
            for pve_l in config.pve_l
        }

    last_error = None
    produced = 0
    for pve_l, design in designs.items():
        for method in methods:
            tag = _cell_tag(method, pve_l)
            try:
                result = estimate_weights(
                    design, method, rho=config.rho, hvec_literal=config.hvec_literal
                )
            except CbfpsError as exc:
                last_error = exc
                io_mod.write_table(
                    sink.path(f"diagnostics_{tag}.csv"),
                    ["key", "value"],
                    [("error", str(exc))],
                )
                continue
            _write_weights_outputs(sink, tag, result)
            produced += 1
    manifest_path = sink.write_manifest(config)
    if produced == 0 and last_error is not None:
        raise last_error
    return {"manifest": str(manifest_path), "out_dir": str(sink.out_dir)}


def _load_inputs_allow_no_outcome(config):
    """Like _load_inputs but lets the data file lack an outcome column."""
    if config.curves_path is None or config.data_path is None:
        raise DataError("this mode needs --curves and --data")
    sample = io_mod.read_curves(config.curves_path)
    header, values = io_mod.read_table(config.data_path)
    if config.outcome_col in header:
        return (
            sample,
            *_reorder_dataset(header, values, config.outcome_col, config.group_col),
        )
    drop = {config.group_col} if config.group_col else set()
    keep = [j for j, name in enumerate(header) if name not in drop]
    group = (
        values[:, header.index(config.group_col)] if config.group_col in header else None
    )
    return sample, None, values[:, keep], [header[j] for j in keep], group


def _reorder_dataset(header, values, outcome_col, group_col):
    y = values[:, header.index(outcome_col)]
    drop = {outcome_col}
    group = None
    if group_col is not None:
        group = values[:, header.index(group_col)]
        drop.add(group_col)
    keep = [j for j, name in enumerate(header) if name not in drop]
    return y, values[:, keep], [header[j] for j in keep], group


def run_diagnostics(config: ExperimentConfig) -> dict:
    sample, y, covariates, names, _ = _load_inputs_allow_no_outcome(config)
    model = decompose(sample)
    sink = _OutputSink(config.out_dir)

    f_rows, corr_rows = [], []
    for pve_l in config.pve_l:
        rank = select_rank(model, pve_l)
        design = standardize(model, rank, covariates)
        weights_by_method = {}
        for method in config.methods:
            try:
                weights_by_method[method] = estimate_weights(
                    design, method, rho=config.rho, hvec_literal=config.hvec_literal
                ).weights
            except CbfpsError as exc:
                f_rows.append((None, method, pve_l, None, f"error: {exc}"))
        scores = model.scores[:, :rank]
        for record in balance_f_statistics(scores, covariates, weights_by_method):
            f_rows.append((record.fpc, record.method, pve_l, record.f_statistic, ""))
        for record in balance_correlations(scores, covariates, weights_by_method, names):
            corr_rows.append(
                (record.fpc, record.covariate, record.method, pve_l, record.abs_correlation)
            )

    io_mod.write_table(
        sink.path("f_statistics.csv"),
        ["fpc", "method", "pve_l", "f_statistic", "note"],
        [(r[0] or "", r[1], r[2], "" if r[3] is None else r[3], r[4]) for r in f_rows],
    )
    io_mod.write_table(
        sink.path("correlations.csv"),
        ["fpc", "covariate", "method", "pve_l", "abs_correlation"],
        corr_rows,
    )
    if config.figures and corr_rows:
        from . import plots

        for pve_l in config.pve_l:
            records = [
                (fpc, cov, method, value)
                for fpc, cov, method, row_pve, value in corr_rows
                if row_pve == pve_l
            ]
            plots.correlation_bars(
                records,
                sink.path(f"correlations_pl{_pct(pve_l)}.png"),
                title=f"PVE_L={pve_l:g}",
            )
    manifest_path = sink.write_manifest(config)
    return {"manifest": str(manifest_path), "out_dir": str(sink.out_dir)}


def run_fit(config: ExperimentConfig) -> dict:
    sample, y, covariates, names, group = _load_inputs(config)
    model = decompose(sample)
    sink = _OutputSink(config.out_dir)
    failures = []
    produced = 0
    last_error = None

    preset_weights = None
    if config.weights_path is not None:
        preset_weights = io_mod.read_weights(config.weights_path)
        if preset_weights.size != sample.n_subjects:
            raise DataError("weights file length does not match the curve count")

    for method in config.methods:
        for pve_l in config.pve_l if method != "unweighted" else (None,):
            for pve_lstar in config.pve_lstar:
                tag = _cell_tag(method, pve_l, pve_lstar)
                try:
                    produced += _fit_cell(
                        config, sink, model, sample, y, covariates, names, group,
                        method, pve_l, pve_lstar, preset_weights,
                    )
                except CbfpsError as exc:
                    last_error = exc
                    failures.append((method, pve_l, pve_lstar, str(exc)))

    if failures:
        io_mod.write_table(
            sink.path("failures.csv"),
            ["method", "pve_l", "pve_lstar", "message"],
            [
                (m, "" if pl is None else pl, pls, msg)
                for m, pl, pls, msg in failures
            ],
        )
    manifest_path = sink.write_manifest(config)
    if produced == 0 and last_error is not None:
        raise last_error
    return {"manifest": str(manifest_path), "out_dir": str(sink.out_dir)}


def _select_basis(config, y, model, pve_lstar):
    if config.avi_share is not None:
        return avi_select(y, model, config.avi_initial_pve, config.avi_share)
    return tuple(range(select_rank(model, pve_lstar)))


def _fit_cell(
    config, sink, model, sample, y, covariates, names, group,
    method, pve_l, pve_lstar, preset_weights,
) -> int:
    n = sample.n_subjects

    def weights_for(curves_sample, covariate_matrix, fpca_model):
        if method == "unweighted":
            return np.ones(fpca_model.n_subjects)
        design = standardize(
            fpca_model, select_rank(fpca_model, pve_l), covariate_matrix
        )
        return estimate_weights(
            design, method, rho=config.rho, hvec_literal=config.hvec_literal
        ).weights

    if preset_weights is not None and method != "unweighted":
        weights = preset_weights
        weights_result = BalanceWeights(weights, method, {"source": "file"})
    else:
        weights = weights_for(sample, covariates, model)
        weights_result = BalanceWeights(weights, method, {})
    tag = _cell_tag(method, pve_l, pve_lstar)
    if method != "unweighted":
        _write_weights_outputs(sink, tag, weights_result)

    basis_ids = _select_basis(config, y, model, pve_lstar)
    scores = model.scores[:, list(basis_ids)]

    if group is None:
        estimate = fit_truncated(y, scores, weights, model, basis_ids)
        curves = {"effect": estimate.curve}
        table = None
    else:
        baseline, difference, table = fit_interaction(
            y, scores, group, weights, model, basis_ids
        )
        curves = {
            "group0": baseline.curve,
            "group1": baseline.curve + difference.curve,
            "difference": difference.curve,
        }

    bands = {name: (None, None) for name in curves}
    if config.bootstrap_b > 0:
        stacked = _bootstrap_curves(
            config, sample, y, covariates, group, weights, method, pve_l, pve_lstar
        )
        m = len(model.grid)
        for j, name in enumerate(curves):
            bands[name] = (
                stacked.lower[j * m:(j + 1) * m],
                stacked.upper[j * m:(j + 1) * m],
            )

    for name, curve in curves.items():
        lower, upper = bands[name]
        nan = np.full(len(model.grid), np.nan)
        io_mod.write_table(
            sink.path(f"effect_{tag}_{name}.csv" if group is not None else f"effect_{tag}.csv"),
            ["grid", "estimate", "lower", "upper"],
            np.column_stack(
                [
                    model.grid.points,
                    curve,
                    lower if lower is not None else nan,
                    upper if upper is not None else nan,
                ]
            ),
        )
        if config.figures:
            from . import plots

            figure_name = (
                f"effect_{tag}_{name}.png" if group is not None else f"effect_{tag}.png"
            )
            plots.effect_band_figure(
                model.grid.points, curve, lower, upper, sink.path(figure_name),
                title=f"{method} ({name})" if group is not None else method,
            )

    if table is not None:
        rows = [
            (table.names[j], table.estimates[j], table.standard_errors[j],
             table.t_values[j], table.p_values[j])
            for j in range(len(table.names))
        ]
        rows.append(("F-statistic", table.f_statistic, "", "", table.f_pvalue))
        io_mod.write_table(
            sink.path(f"coefficients_{tag}.csv"),
            ["term", "estimate", "std_error", "t_value", "p_value"],
            rows,
        )
    return 1


def _bootstrap_curves(
    config, sample, y, covariates, group, full_weights, method, pve_l, pve_lstar
):
    """Bootstrap the full per-cell procedure; returns stacked bands."""
    m = len(sample.grid)

    def refit(indices):
        sub_sample = FunctionalSample(sample.grid, sample.values[indices])
        sub_y = y[indices]
        sub_cov = covariates[indices]
        sub_model = decompose(sub_sample)
        if config.bootstrap_frozen_weights or method == "unweighted":
            weights = (
                full_weights[indices] if method != "unweighted" else np.ones(indices.size)
            )
        else:
            design = standardize(
                sub_model, select_rank(sub_model, pve_l), sub_cov
            )
            weights = estimate_weights(
                design, method, rho=config.rho, hvec_literal=config.hvec_literal
            ).weights
        basis_ids = _select_basis(config, sub_y, sub_model, pve_lstar)
        sub_scores = sub_model.scores[:, list(basis_ids)]
        if group is None:
            estimate = fit_truncated(sub_y, sub_scores, weights, sub_model, basis_ids)
            return estimate.curve
        baseline, difference, _ = fit_interaction(
            sub_y, sub_scores, group[indices], weights, sub_model, basis_ids
        )
        return np.concatenate(
            [baseline.curve, baseline.curve + difference.curve, difference.curve]
        )

    return bootstrap_bands(
        refit,
        sample.n_subjects,
        config.bootstrap_b,
        config.bootstrap_level,
        seed=config.seed,
    )


def run_pipeline(config: ExperimentConfig) -> dict:
    """Dispatch one pipeline invocation by mode."""
    runners = {
        "simulate": run_simulation,
        "fit": run_fit,
        "fpca": run_fpca,
        "balance": run_balance,
        "diagnostics": run_diagnostics,
    }
    if config.mode not in runners:
        raise DataError(f"unknown mode {config.mode!r}")
    return runners[config.mode](config)
