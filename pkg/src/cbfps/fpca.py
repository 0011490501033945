"""Functional principal component analysis on a quadrature grid.

The sample covariance operator is discretized as W^(1/2) S W^(1/2) with S the
pointwise sample covariance matrix and W the diagonal quadrature weights, so
eigenfunctions are exactly orthonormal in the grid inner product. All second
moments use the 1/n convention, matching the population formulas they
estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DataError, InsufficientDataError, SingularMatrixError
from .fdata import FunctionalSample, Grid, center

__all__ = ["FpcaModel", "StandardizedDesign", "decompose", "select_rank", "standardize"]

EIGENVALUE_FLOOR = 1e-10  # relative to the leading eigenvalue
COVARIATE_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class FpcaModel:
    """Eigendecomposition of a functional sample.

    Attributes:
        grid: shared sampling grid.
        mean: pointwise sample mean curve.
        eigenfunctions: K x m matrix, rows orthonormal under the grid
            quadrature inner product.
        eigenvalues: positive, nonincreasing, length K.
        scores: n x K matrix of centered-curve projections.
        pve: cumulative proportion of variance explained, last entry 1.
    """

    grid: Grid
    mean: np.ndarray
    eigenfunctions: np.ndarray
    eigenvalues: np.ndarray
    scores: np.ndarray
    pve: np.ndarray

    @property
    def n_components(self) -> int:
        return self.eigenvalues.size

    @property
    def n_subjects(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True)
class StandardizedDesign:
    """Whitened score and covariate matrices for weight estimation.

    a_star columns have unit second moment; c_star columns are centered with
    identity second-moment matrix. Second moments use the 1/n convention.
    """

    a_star: np.ndarray
    c_star: np.ndarray
    gamma_c_half_inv: np.ndarray

    @property
    def n_subjects(self) -> int:
        return self.a_star.shape[0]

    @property
    def n_scores(self) -> int:
        return self.a_star.shape[1]

    @property
    def n_covariates(self) -> int:
        return self.c_star.shape[1]


def decompose(sample: FunctionalSample, eigenvalue_floor: float = EIGENVALUE_FLOOR) -> FpcaModel:
    """Eigendecompose the sample covariance operator of `sample`.

    Centering is applied internally. Components whose eigenvalue falls below
    `eigenvalue_floor` times the leading one are dropped as numerical rank.
    Each eigenfunction is oriented so its largest-magnitude entry is positive,
    which makes repeated runs bitwise reproducible.
    """
    if sample.n_subjects < 2:
        raise InsufficientDataError("FPCA needs at least two curves")
    centered, mean = center(sample)
    n = sample.n_subjects
    weights = sample.grid.quad_weights
    sqrt_w = np.sqrt(weights)

    cov = centered.values.T @ centered.values / n
    sym = cov * sqrt_w[:, None] * sqrt_w[None, :]
    sym = (sym + sym.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(sym)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]

    floor = eigenvalue_floor * max(eigvals[0], 0.0)
    keep = eigvals > floor
    eigvals = eigvals[keep]
    eigvecs = eigvecs[:, keep]

    # Back-transform to eigenfunctions of the operator and fix signs.
    phi = (eigvecs / sqrt_w[:, None]).T
    for k in range(phi.shape[0]):
        anchor = np.argmax(np.abs(phi[k]))
        if phi[k, anchor] < 0:
            phi[k] = -phi[k]

    scores = centered.values @ (phi * weights[None, :]).T
    total = eigvals.sum()
    pve = np.cumsum(eigvals) / total if total > 0 else np.empty(0)
    return FpcaModel(
        grid=sample.grid,
        mean=mean,
        eigenfunctions=phi,
        eigenvalues=eigvals,
        scores=scores,
        pve=pve,
    )


def select_rank(model: FpcaModel, pve_threshold: float) -> int:
    """Smallest number of leading components whose cumulative PVE reaches the threshold."""
    if not 0.0 < pve_threshold <= 1.0:
        raise DataError("PVE threshold must lie in (0, 1]")
    if model.n_components == 0:
        raise DataError("model retains no components")
    # pve[-1] can round to just below 1, so cap at the full rank.
    rank = int(np.searchsorted(model.pve, pve_threshold) + 1)
    return min(rank, model.n_components)


def standardize(model: FpcaModel, rank: int, covariates: np.ndarray) -> StandardizedDesign:
    """Whiten the leading `rank` scores and the covariates.

    Scores are scaled by eigenvalue^(-1/2). Covariates are centered first,
    then multiplied by the inverse symmetric square root of their sample
    second-moment matrix.
    """
    if not 1 <= rank <= model.n_components:
        raise DataError(f"rank must be in [1, {model.n_components}], got {rank}")
    covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
    if covariates.ndim != 2 or covariates.shape[0] != model.n_subjects:
        raise DataError(
            f"covariates must be an n x p matrix with n={model.n_subjects}"
        )
    if not np.all(np.isfinite(covariates)):
        raise DataError("covariates must be finite")

    a_star = model.scores[:, :rank] / np.sqrt(model.eigenvalues[:rank])

    n = covariates.shape[0]
    centered = covariates - covariates.mean(axis=0)
    gamma = centered.T @ centered / n
    gamma = (gamma + gamma.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(gamma)
    if eigvals[-1] <= 0 or eigvals[0] <= eigvals[-1] / COVARIATE_CONDITION_LIMIT:
        raise SingularMatrixError(
            "covariate second-moment matrix is numerically singular "
            f"(offending eigenvalue {eigvals[0]:.3e}, largest {eigvals[-1]:.3e})"
        )
    half_inv = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T
    c_star = centered @ half_inv
    return StandardizedDesign(a_star=a_star, c_star=c_star, gamma_c_half_inv=half_inv)
