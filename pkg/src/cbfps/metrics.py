"""Balance diagnostics and effect-estimation accuracy metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError, SingularMatrixError
from .fdata import Grid

__all__ = [
    "BalanceRecord",
    "CorrelationRecord",
    "AccuracyReport",
    "weighted_f_statistic",
    "weighted_abs_correlation",
    "ise",
    "summarize_runs",
]

# Relative floor below which a weighted sum of squares counts as zero.
_ZERO_SS = 1e-12


@dataclass(frozen=True)
class BalanceRecord:
    """Overall regression F of one FPC score on the covariates."""

    fpc: int
    method: str
    f_statistic: float


@dataclass(frozen=True)
class CorrelationRecord:
    """Absolute weighted correlation between one FPC score and one covariate."""

    fpc: int
    covariate: str
    method: str
    abs_correlation: float


@dataclass(frozen=True)
class AccuracyReport:
    """Per-run integrated squared errors and their summaries."""

    ise_values: np.ndarray
    aise: float
    mise: float
    isb: float


def weighted_f_statistic(
    response: np.ndarray, covariates: np.ndarray, weights: np.ndarray
) -> float:
    """Overall F statistic of the WLS regression of response on covariates.

    Degrees of freedom use the raw sample size, so unit weights reproduce the
    classical F exactly. An exact linear fit returns math.inf; a constant
    response returns 0.
    """
    response = np.asarray(response, dtype=float)
    covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
    if covariates.shape[0] != response.size:
        covariates = covariates.T
    weights = np.asarray(weights, dtype=float)
    n, p = covariates.shape
    if n <= p + 1:
        raise DataError("need n > p + 1 observations")
    if np.any(weights <= 0):
        raise DataError("weights must be strictly positive")

    design = np.column_stack([np.ones(n), covariates])
    wd = design * weights[:, None]
    gram = design.T @ wd
    eigvals = np.linalg.eigvalsh((gram + gram.T) / 2.0)
    if eigvals[0] <= 0 or eigvals[-1] / eigvals[0] > 1e12:
        raise SingularMatrixError("covariate design is rank deficient")
    coeffs = np.linalg.solve(gram, wd.T @ response)
    resid = response - design @ coeffs

    mean_w = np.average(response, weights=weights)
    tss = float(np.sum(weights * (response - mean_w) ** 2))
    sse = float(np.sum(weights * resid**2))
    scale = max(tss, float(np.sum(weights * response**2)))
    if tss <= _ZERO_SS * max(scale, 1e-300):
        return 0.0
    if sse <= _ZERO_SS * tss:
        return math.inf
    return ((tss - sse) / p) / (sse / (n - p - 1))


def weighted_abs_correlation(
    a: np.ndarray, c: np.ndarray, weights: np.ndarray
) -> float:
    """Absolute Pearson correlation under normalized weights."""
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    a_center = a - np.sum(w * a)
    c_center = c - np.sum(w * c)
    var_a = float(np.sum(w * a_center**2))
    var_c = float(np.sum(w * c_center**2))
    if var_a <= 0 or var_c <= 0:
        raise DataError("weighted correlation needs nondegenerate variances")
    cov = float(np.sum(w * a_center * c_center))
    return min(abs(cov) / math.sqrt(var_a * var_c), 1.0)


def ise(estimate: np.ndarray, truth: np.ndarray, grid: Grid) -> float:
    """Integrated squared error of an effect-curve estimate."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != (len(grid),) or truth.shape != (len(grid),):
        raise DataError("curves must live on the given grid")
    diff = estimate - truth
    return float(np.sum(grid.quad_weights * diff * diff))


def summarize_runs(
    ise_values: np.ndarray,
    estimate_curves: np.ndarray,
    truth: np.ndarray,
    grid: Grid,
) -> AccuracyReport:
    """Summarize a collection of replicate estimates.

    AISE and MISE are the mean and median per-run ISE (median uses the
    midpoint convention for even counts); ISB is the ISE of the run-averaged
    curve.
    """
    ise_values = np.asarray(ise_values, dtype=float)
    curves = np.atleast_2d(np.asarray(estimate_curves, dtype=float))
    if ise_values.size < 2 or curves.shape[0] != ise_values.size:
        raise DataError("need at least two runs with matching curves")
    return AccuracyReport(
        ise_values=ise_values,
        aise=float(ise_values.mean()),
        mise=float(np.median(ise_values)),
        isb=ise(curves.mean(axis=0), truth, grid),
    )


def balance_f_statistics(
    scores: np.ndarray, covariates: np.ndarray, weights_by_method: dict
) -> list[BalanceRecord]:
    """F statistics of every FPC score on the covariates, per weighting method."""
    records = []
    for k in range(scores.shape[1]):
        for method, weights in weights_by_method.items():
            records.append(
                BalanceRecord(
                    fpc=k + 1,
                    method=method,
                    f_statistic=weighted_f_statistic(scores[:, k], covariates, weights),
                )
            )
    return records


def balance_correlations(
    scores: np.ndarray,
    covariates: np.ndarray,
    weights_by_method: dict,
    covariate_names=None,
) -> list[CorrelationRecord]:
    """Absolute weighted correlations of every FPC score with every covariate."""
    covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
    if covariate_names is None:
        covariate_names = [f"c{j + 1}" for j in range(covariates.shape[1])]
    records = []
    for k in range(scores.shape[1]):
        for j, name in enumerate(covariate_names):
            for method, weights in weights_by_method.items():
                records.append(
                    CorrelationRecord(
                        fpc=k + 1,
                        covariate=name,
                        method=method,
                        abs_correlation=weighted_abs_correlation(
                            scores[:, k], covariates[:, j], weights
                        ),
                    )
                )
    return records
