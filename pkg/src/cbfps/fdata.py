"""Discretely sampled functional data on a shared grid over [0, 1].

Curves are stored as rows of a matrix evaluated on one common grid; all
integrals are trapezoidal quadrature sums with the grid's weights. Types are
treated as immutable after construction and all operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError, InsufficientDataError

__all__ = [
    "Grid",
    "FunctionalSample",
    "trapezoid_weights",
    "inner_product",
    "center",
]


def trapezoid_weights(points: np.ndarray) -> np.ndarray:
    """Trapezoidal quadrature weights for a strictly increasing grid."""
    gaps = np.diff(points)
    weights = np.zeros_like(points)
    weights[:-1] += gaps / 2.0
    weights[1:] += gaps / 2.0
    return weights


@dataclass(frozen=True)
class Grid:
    """Common sampling grid with quadrature weights.

    Points must be strictly increasing and lie in [0, 1]; weights default to
    the trapezoidal rule and must sum to the grid span.
    """

    points: np.ndarray
    quad_weights: np.ndarray = field(default=None)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 1 or points.size < 2:
            raise DataError("grid needs at least two points in a 1-d array")
        if not np.all(np.isfinite(points)):
            raise DataError("grid points must be finite")
        if np.any(np.diff(points) <= 0):
            raise DataError("grid points must be strictly increasing")
        if points[0] < 0.0 or points[-1] > 1.0:
            raise DataError("grid must lie within [0, 1]")
        object.__setattr__(self, "points", points)

        if self.quad_weights is None:
            weights = trapezoid_weights(points)
        else:
            weights = np.asarray(self.quad_weights, dtype=float)
            if weights.shape != points.shape:
                raise DataError("quadrature weights must match grid length")
            if np.any(weights < 0):
                raise DataError("quadrature weights must be nonnegative")
            span = points[-1] - points[0]
            if abs(weights.sum() - span) > 1e-10 * max(1.0, span):
                raise DataError(
                    f"quadrature weights sum to {weights.sum():.12g}, "
                    f"expected grid span {span:.12g}"
                )
        object.__setattr__(self, "quad_weights", weights)

    @classmethod
    def uniform(cls, num_points: int) -> "Grid":
        """Uniform grid of `num_points` points spanning [0, 1]."""
        return cls(np.linspace(0.0, 1.0, num_points))

    def __len__(self) -> int:
        return self.points.size

    def matches(self, other: "Grid") -> bool:
        """True when two grids share identical points and weights."""
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.quad_weights, other.quad_weights
        )


@dataclass(frozen=True)
class FunctionalSample:
    """n curves evaluated on a shared grid (one row per subject)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[1] != len(self.grid):
            raise DataError(
                f"curve length {values.shape[1]} does not match grid "
                f"length {len(self.grid)}"
            )
        if not np.all(np.isfinite(values)):
            raise DataError("curve values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def n_subjects(self) -> int:
        return self.values.shape[0]


def inner_product(f: np.ndarray, g: np.ndarray, grid: Grid) -> float:
    """Quadrature L2 inner product of two curves sampled on `grid`."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != (len(grid),) or g.shape != (len(grid),):
        raise DataError(
            f"inner_product needs vectors of length {len(grid)}, "
            f"got {f.shape} and {g.shape}"
        )
    return float(np.sum(grid.quad_weights * f * g))


def center(sample: FunctionalSample) -> tuple[FunctionalSample, np.ndarray]:
    """Subtract the pointwise sample mean curve.

    Returns the centered sample and the mean curve so originals can be
    reconstructed.
    """
    if sample.n_subjects < 2:
        raise InsufficientDataError("centering needs at least two curves")
    mean = sample.values.mean(axis=0)
    centered = FunctionalSample(sample.grid, sample.values - mean)
    return centered, mean
