"""Weighted scalar-on-function outcome fitting by basis truncation.

The effect curve is expanded in a finite orthonormal basis (by default the
treatment's own eigenfunctions) and its coefficients solve a weighted least
squares problem against the outcome centered at its unweighted sample mean.
Also provides association-variation ranking for basis selection, a
group-interaction model, and case-resampling bootstrap bands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .exceptions import BootstrapError, DataError, SingularMatrixError
from .fdata import Grid, inner_product
from .fpca import FpcaModel

__all__ = [
    "EffectEstimate",
    "AviRanking",
    "CoefficientTable",
    "BootstrapBands",
    "fit_truncated",
    "integrated_effect",
    "avi_rank",
    "avi_select",
    "fit_interaction",
    "bootstrap_bands",
]

CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class EffectEstimate:
    """Estimated effect curve with its basis expansion."""

    basis_coeffs: np.ndarray
    intercept: float
    curve: np.ndarray
    basis_ids: tuple
    weighted: bool


@dataclass(frozen=True)
class AviRanking:
    """Association-variation index of each candidate component.

    `order` sorts components by decreasing index value (stable, so ties keep
    the original component order); `cumulative_share` follows that order.
    """

    component_ids: tuple
    variances: np.ndarray
    slopes: np.ndarray
    index_values: np.ndarray
    order: np.ndarray
    cumulative_share: np.ndarray


@dataclass(frozen=True)
class CoefficientTable:
    """Per-coefficient WLS estimates with naive standard errors.

    The F statistic tests all non-intercept coefficients jointly; both it and
    the per-coefficient p-values ignore the uncertainty of estimated weights.
    """

    names: tuple
    estimates: np.ndarray
    standard_errors: np.ndarray
    t_values: np.ndarray
    p_values: np.ndarray
    f_statistic: float
    f_pvalue: float
    df_residual: int


def _solve_wls(design: np.ndarray, response: np.ndarray, weights: np.ndarray):
    """Solve the weighted normal equations, guarding against collinearity."""
    wd = design * weights[:, None]
    gram = design.T @ wd
    eigvals = np.linalg.eigvalsh((gram + gram.T) / 2.0)
    if eigvals[0] <= 0 or eigvals[-1] / eigvals[0] > CONDITION_LIMIT:
        raise SingularMatrixError(
            "weighted normal equations are rank deficient "
            f"(eigenvalue range {eigvals[0]:.3e} to {eigvals[-1]:.3e})"
        )
    coeffs = np.linalg.solve(gram, wd.T @ response)
    return coeffs, gram


def fit_truncated(
    outcome: np.ndarray,
    scores: np.ndarray,
    weights: np.ndarray,
    model: FpcaModel,
    basis_ids=None,
) -> EffectEstimate:
    """Weighted truncation fit of the effect curve.

    `scores` holds the basis projections of each subject's curve; the
    intercept is pinned at the unweighted outcome mean rather than fitted.
    `basis_ids` names the eigenfunctions behind the score columns (defaults
    to the leading ones).
    """
    outcome = np.asarray(outcome, dtype=float)
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    weights = np.asarray(weights, dtype=float)
    n, n_basis = scores.shape
    if outcome.shape != (n,) or weights.shape != (n,):
        raise DataError("outcome, scores and weights must agree on n")
    if np.any(weights <= 0):
        raise DataError("weights must be strictly positive")
    if n_basis >= n:
        raise DataError("need more subjects than basis functions")
    if basis_ids is None:
        basis_ids = tuple(range(n_basis))
    basis_ids = tuple(int(k) for k in basis_ids)
    if len(basis_ids) != n_basis:
        raise DataError("basis_ids must match the score column count")

    intercept = float(outcome.mean())
    coeffs, _ = _solve_wls(scores, outcome - intercept, weights)
    curve = coeffs @ model.eigenfunctions[list(basis_ids)]
    return EffectEstimate(
        basis_coeffs=coeffs,
        intercept=intercept,
        curve=curve,
        basis_ids=basis_ids,
        weighted=bool(np.ptp(weights) > 0),
    )


def integrated_effect(estimate: EffectEstimate, x: np.ndarray, grid: Grid) -> float:
    """Predicted mean outcome at curve `x`: intercept plus <effect, x>."""
    return estimate.intercept + inner_product(estimate.curve, x, grid)


def avi_rank(outcome: np.ndarray, model: FpcaModel, initial_pve: float) -> AviRanking:
    """Rank the PVE-selected components by variance times squared slope."""
    from .fpca import select_rank

    outcome = np.asarray(outcome, dtype=float)
    initial = select_rank(model, initial_pve)
    scores = model.scores[:, :initial]
    variances = scores.var(axis=0)
    centered_y = outcome - outcome.mean()
    slopes = (scores * centered_y[:, None]).mean(axis=0) / variances
    index_values = variances * slopes**2

    order = np.argsort(-index_values, kind="stable")
    total = index_values.sum()
    if total > 0:
        cumulative = np.cumsum(index_values[order]) / total
    else:
        cumulative = np.ones_like(index_values)
    return AviRanking(
        component_ids=tuple(range(initial)),
        variances=variances,
        slopes=slopes,
        index_values=index_values,
        order=order,
        cumulative_share=cumulative,
    )


def avi_select(
    outcome: np.ndarray, model: FpcaModel, initial_pve: float, avi_share: float
) -> tuple:
    """Smallest component set whose cumulative index share reaches `avi_share`.

    Returns basis ids in their original (eigenvalue) order. A zero total
    index (constant outcome) keeps the full initial set.
    """
    if not 0.0 < avi_share <= 1.0:
        raise DataError("avi_share must lie in (0, 1]")
    ranking = avi_rank(outcome, model, initial_pve)
    if ranking.index_values.sum() <= 0:
        return ranking.component_ids
    cutoff = int(np.searchsorted(ranking.cumulative_share, avi_share) + 1)
    cutoff = min(cutoff, len(ranking.component_ids))
    return tuple(sorted(int(k) for k in ranking.order[:cutoff]))


def fit_interaction(
    outcome: np.ndarray,
    scores: np.ndarray,
    group: np.ndarray,
    weights: np.ndarray,
    model: FpcaModel = None,
    basis_ids=None,
) -> tuple[EffectEstimate, EffectEstimate, CoefficientTable]:
    """WLS fit of outcome on scores, a binary group and their interaction.

    Returns the group-0 effect (score coefficients), the group difference
    (interaction coefficients) and the full coefficient table. When the group
    is single-valued the interaction columns are dropped and the difference
    estimate is zero.
    """
    outcome = np.asarray(outcome, dtype=float)
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    group = np.asarray(group, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n, n_basis = scores.shape
    if not set(np.unique(group)) <= {0.0, 1.0}:
        raise DataError("group must be binary 0/1")
    if basis_ids is None:
        basis_ids = tuple(range(n_basis))
    basis_ids = tuple(int(k) for k in basis_ids)

    two_groups = np.unique(group).size == 2
    columns = [np.ones(n), scores]
    names = ["intercept"] + [f"fpc{k + 1}" for k in basis_ids]
    if two_groups:
        columns += [group[:, None], scores * group[:, None]]
        names += ["group"] + [f"fpc{k + 1}:group" for k in basis_ids]
    design = np.column_stack(columns)

    coeffs, gram = _solve_wls(design, outcome, weights)
    fitted = design @ coeffs
    resid = outcome - fitted
    df_resid = n - design.shape[1]
    if df_resid <= 0:
        raise DataError("no residual degrees of freedom")
    sigma2 = float(np.sum(weights * resid**2)) / df_resid
    cov = sigma2 * np.linalg.inv(gram)
    ses = np.sqrt(np.diag(cov))
    t_values = coeffs / ses
    p_values = 2.0 * stats.t.sf(np.abs(t_values), df_resid)

    mean_w = np.average(outcome, weights=weights)
    tss = float(np.sum(weights * (outcome - mean_w) ** 2))
    sse = float(np.sum(weights * resid**2))
    df_model = design.shape[1] - 1
    if sse <= 1e-12 * max(tss, 1e-300):
        f_stat, f_pval = np.inf, 0.0
    else:
        f_stat = ((tss - sse) / df_model) / (sse / df_resid)
        f_pval = float(stats.f.sf(f_stat, df_model, df_resid))

    table = CoefficientTable(
        names=tuple(names),
        estimates=coeffs,
        standard_errors=ses,
        t_values=t_values,
        p_values=p_values,
        f_statistic=float(f_stat),
        f_pvalue=f_pval,
        df_residual=df_resid,
    )

    if model is not None:
        basis = model.eigenfunctions[list(basis_ids)]
    else:
        basis = None

    def make_estimate(coeff_slice, intercept):
        curve = coeff_slice @ basis if basis is not None else np.zeros(0)
        return EffectEstimate(
            basis_coeffs=coeff_slice,
            intercept=float(intercept),
            curve=curve,
            basis_ids=basis_ids,
            weighted=bool(np.ptp(weights) > 0),
        )

    baseline = make_estimate(coeffs[1:1 + n_basis], coeffs[0])
    if two_groups:
        difference = make_estimate(coeffs[2 + n_basis:], coeffs[1 + n_basis])
    else:
        difference = make_estimate(np.zeros(n_basis), 0.0)
    return baseline, difference, table


@dataclass(frozen=True)
class BootstrapBands:
    """Pointwise percentile bands from case-resampling replicates."""

    lower: np.ndarray
    upper: np.ndarray
    replicates_used: int
    replicates_failed: int


def bootstrap_bands(
    fit_fn,
    n_subjects: int,
    num_replicates: int,
    level: float,
    seed: int = 0,
    max_failure_fraction: float = 0.2,
) -> BootstrapBands:
    """Percentile bootstrap bands for a curve-valued estimator.

    `fit_fn` receives an index array (subjects resampled with replacement)
    and returns the re-estimated curve; replicates where it raises a solver
    error are dropped and counted. Each replicate draws from its own child
    stream of `seed`, so results do not depend on evaluation order.
    """
    if num_replicates < 100:
        raise DataError("bootstrap needs at least 100 replicates")
    if not 0.0 < level < 1.0:
        raise DataError("level must lie in (0, 1)")
    children = np.random.SeedSequence(seed).spawn(num_replicates)
    curves = []
    failed = 0
    for child in children:
        rng = np.random.default_rng(child)
        indices = rng.integers(0, n_subjects, size=n_subjects)
        try:
            curves.append(np.asarray(fit_fn(indices), dtype=float))
        except (np.linalg.LinAlgError, ArithmeticError, ValueError, RuntimeError):
            failed += 1
    if failed > max_failure_fraction * num_replicates:
        raise BootstrapError(
            f"{failed} of {num_replicates} bootstrap replicates failed"
        )
    stacked = np.vstack(curves)
    alpha = 1.0 - level
    lower = np.percentile(stacked, 100.0 * alpha / 2.0, axis=0)
    upper = np.percentile(stacked, 100.0 * (1.0 - alpha / 2.0), axis=0)
    return BootstrapBands(
        lower=lower,
        upper=upper,
        replicates_used=len(curves),
        replicates_failed=failed,
    )
