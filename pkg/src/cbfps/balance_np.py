"""Nonparametric balancing weights via regularized empirical likelihood.

Weights maximize the empirical likelihood subject to four balance
constraints; the cross-moment constraint is relaxed to a scalar multiple
theta of the unweighted cross moment, with an l2 penalty on theta. The dual
is solved by a double loop: for each theta on a grid, an inner concave
maximization over the multiplier gamma yields the weights closest to uniform
at that balance level; the outer loop picks theta by grid search (plus one
golden-section refinement pass) on the penalized profile objective, ties
broken toward the smaller |theta|.

The profile objective is sum(log w_i(theta)) - theta^2 penalty, i.e. minus
the inner dual value minus the penalty. Since sum(log w) <= 0 with equality
only at uniform weights (attained at theta = 1, where the relaxed constraint
holds unweighted), a large rho drives theta toward 1 (liberal imbalance) and
a small rho toward 0 (tight balance).

The per-observation moment vector uses theta * gamma0 in its cross-moment
block, the form under which all four constraints hold exactly at an inner
stationary point; `hvec_literal=True` switches to n * theta * gamma0 instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .balance_param import BalanceWeights, balance_blocks
from .exceptions import (
    ConvergenceError,
    DataError,
    InfeasibleProblemError,
    InfeasibleThetaError,
)
from .fpca import StandardizedDesign

__all__ = ["ElProblem", "ElSolution", "moment_vector", "inner_solve", "estimate_weights_np"]

DEFAULT_RHO_SCALE = 0.1  # default rho is 0.1 / n
THETA_GRID_SIZE = 201
INNER_TOLERANCE = 1e-8
INNER_MAX_ITER = 300
FEASIBILITY_MARGIN = 1e-10
GAMMA_DIVERGENCE_LIMIT = 1e6
OBJECTIVE_DIVERGENCE_FACTOR = 30.0  # unbounded when sum(log slack) > 30 n
GOLDEN_RATIO = (np.sqrt(5.0) - 1.0) / 2.0


def default_theta_grid() -> np.ndarray:
    return np.linspace(-1.0, 1.0, THETA_GRID_SIZE)


@dataclass(frozen=True)
class ElProblem:
    """Inputs of the regularized empirical-likelihood program."""

    design: StandardizedDesign
    rho: float = None
    theta_grid: np.ndarray = field(default=None)
    hvec_literal: bool = False
    gamma0: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.design.n_subjects
        rho = DEFAULT_RHO_SCALE / n if self.rho is None else float(self.rho)
        if rho <= 0:
            raise DataError("rho must be positive")
        object.__setattr__(self, "rho", rho)

        grid = default_theta_grid() if self.theta_grid is None else np.asarray(
            self.theta_grid, dtype=float
        )
        if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
            raise DataError("theta grid must be strictly increasing")
        if grid[0] < -1.0 or grid[-1] > 1.0:
            raise DataError("theta grid must lie within [-1, 1]")
        if not (np.any(grid == 0.0) and grid[0] == -1.0 and grid[-1] == 1.0):
            raise DataError("theta grid must contain 0 and both endpoints -1 and 1")
        object.__setattr__(self, "theta_grid", grid)

        gamma0 = self.design.a_star.T @ self.design.c_star / n
        object.__setattr__(self, "gamma0", gamma0)
        cross = (self.design.a_star[:, :, None] * self.design.c_star[:, None, :]).reshape(n, -1)
        base = np.hstack([self.design.a_star, self.design.c_star, cross])
        object.__setattr__(self, "_base_moments", base)

    @property
    def n_moments(self) -> int:
        d = self.design
        return d.n_scores + d.n_covariates + d.n_scores * d.n_covariates

    def moment_matrix(self, theta: float) -> np.ndarray:
        """n x (L + p + Lp) matrix with rows h_i(theta)."""
        d = self.design
        scale = d.n_subjects if self.hvec_literal else 1.0
        moments = self._base_moments.copy()
        moments[:, d.n_scores + d.n_covariates:] -= scale * theta * self.gamma0.ravel()
        return moments


def moment_vector(
    a_star_i: np.ndarray,
    c_star_i: np.ndarray,
    theta: float,
    gamma0: np.ndarray,
    literal_scale: float = 1.0,
) -> np.ndarray:
    """Stacked moment vector of one subject: scores, covariates, relaxed cross moment."""
    a = np.asarray(a_star_i, dtype=float).ravel()
    c = np.asarray(c_star_i, dtype=float).ravel()
    cross = np.outer(a, c) - literal_scale * theta * np.asarray(gamma0, dtype=float)
    return np.concatenate([a, c, cross.ravel()])


@dataclass(frozen=True)
class ElSolution:
    """Dual solution with weights and constraint diagnostics."""

    gamma_hat: np.ndarray
    theta_hat: float
    weights: np.ndarray
    inner_objective: float
    constraint_residuals: dict
    infeasible_thetas: np.ndarray
    rescaled: bool = False


def _solve_gamma(moments: np.ndarray, tol: float, max_iter: int, method: str):
    """Maximize sum(log(1 - moments @ gamma)) over the feasible region.

    Returns (gamma, objective). The objective is strictly concave where
    finite and blows down at the feasibility boundary, so damped Newton with
    a feasibility-preserving backtracking line search converges globally;
    `method="bfgs"` uses a BFGS inverse-Hessian approximation instead, as a
    slower but independent route to the same stationary point.
    """
    n, dim = moments.shape
    moments_t = np.ascontiguousarray(moments.T)
    gamma = np.zeros(dim)
    slack = np.ones(n)
    inv_slack = np.ones(n)
    neg_obj = 0.0  # we minimize -sum(log(slack))
    hess_inv = np.eye(dim) if method == "bfgs" else None
    grad = moments_t @ inv_slack
    tol_sq = tol * tol
    divergence_floor = -OBJECTIVE_DIVERGENCE_FACTOR * n

    for _ in range(max_iter):
        grad_sq = float(grad @ grad)
        if grad_sq <= tol_sq:
            return gamma, -neg_obj
        if method == "newton":
            scaled = moments * inv_slack[:, None]
            hess = scaled.T @ scaled
            try:
                direction = -cho_solve(
                    cho_factor(hess, lower=True, check_finite=False),
                    grad,
                    check_finite=False,
                )
            except (LinAlgError, ValueError):
                direction = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        else:
            direction = -(hess_inv @ grad)

        slope = float(grad @ direction)
        if slope >= 0:
            # Not a descent direction (degenerate curvature); fall back to
            # steepest descent.
            direction = -grad
            slope = -grad_sq

        step_moments = moments @ direction
        alpha = 1.0
        accepted = False
        for _ in range(80):
            slack_new = slack - alpha * step_moments
            if slack_new.min() > FEASIBILITY_MARGIN:
                neg_obj_new = -float(np.log(slack_new).sum())
                if neg_obj_new <= neg_obj + 1e-4 * alpha * slope:
                    accepted = True
                    break
            alpha /= 2.0
        if not accepted:
            raise InfeasibleThetaError(
                "inner line search cannot maintain feasibility",
                residual=float(np.sqrt(grad_sq)),
            )

        gamma_new = gamma + alpha * direction
        slack = slack_new
        inv_slack = 1.0 / slack
        grad_new = moments_t @ inv_slack
        if method == "bfgs":
            s = gamma_new - gamma
            y = grad_new - grad
            sy = float(s @ y)
            if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
                hy = hess_inv @ y
                hess_inv += (
                    np.outer(s, s) * (sy + y @ hy) / sy**2
                    - (np.outer(hy, s) + np.outer(s, hy)) / sy
                )
        gamma, grad, neg_obj = gamma_new, grad_new, neg_obj_new
        if neg_obj < divergence_floor or float(gamma @ gamma) > GAMMA_DIVERGENCE_LIMIT**2:
            raise InfeasibleThetaError(
                "dual iterates diverged; the balance constraints appear infeasible",
                residual=float(np.linalg.norm(grad)),
            )

    raise ConvergenceError(
        "inner solver did not reach gradient tolerance",
        residual=float(np.linalg.norm(grad)),
    )


def inner_solve(
    problem: ElProblem,
    theta: float,
    tol: float = INNER_TOLERANCE,
    max_iter: int = INNER_MAX_ITER,
    method: str = "newton",
) -> tuple[np.ndarray, float]:
    """Solve the inner dual maximization at a fixed theta."""
    if not -1.0 <= theta <= 1.0:
        raise DataError("theta must lie in [-1, 1]")
    if method not in ("newton", "bfgs"):
        raise DataError(f"unknown inner method {method!r}")
    return _solve_gamma(problem.moment_matrix(theta), tol, max_iter, method)


def estimate_weights_np(
    problem: ElProblem,
    tol: float = INNER_TOLERANCE,
    max_iter: int = INNER_MAX_ITER,
    method: str = "newton",
) -> ElSolution:
    """Run the double loop and return weights 1 / (1 - gamma' h_i(theta)).

    The outer loop maximizes the penalized profile objective over the theta
    grid; infeasible grid points are skipped and recorded. A single
    golden-section pass between the neighbors of the best grid point refines
    theta; the refined value is adopted only if it strictly improves the
    profile objective.
    """
    grid = problem.theta_grid
    penalty_scale = float(np.sum(problem.gamma0**2)) / (2.0 * problem.rho)

    best = None  # (profile, theta, gamma, objective)
    infeasible = []
    for theta in grid:
        try:
            gamma, objective = inner_solve(problem, theta, tol, max_iter, method)
        except ConvergenceError:
            infeasible.append(theta)
            continue
        profile = -objective - penalty_scale * theta**2
        if (
            best is None
            or profile > best[0]
            or (profile == best[0] and abs(theta) < abs(best[1]))
        ):
            best = (profile, theta, gamma, objective)
    if best is None:
        raise InfeasibleProblemError(
            "no feasible theta on the grid; consider a larger rho "
            f"(default is {DEFAULT_RHO_SCALE}/n)"
        )

    best_index = int(np.argmin(np.abs(grid - best[1])))
    lo = grid[max(best_index - 1, 0)]
    hi = grid[min(best_index + 1, grid.size - 1)]
    best = _golden_refine(problem, lo, hi, best, penalty_scale, tol, max_iter, method)

    profile, theta_hat, gamma_hat, objective = best
    slack = 1.0 - problem.moment_matrix(theta_hat) @ gamma_hat
    weights = 1.0 / slack
    n = problem.design.n_subjects
    rescaled = False
    if abs(weights.sum() - n) > 1e-8:
        weights = weights * (n / weights.sum())
        rescaled = True

    residuals = balance_blocks(problem.design, weights)
    scale = n if problem.hvec_literal else 1.0
    residuals["cross_moment_residual"] = (
        residuals.pop("cross_moment") - scale * theta_hat * problem.gamma0
    )
    return ElSolution(
        gamma_hat=gamma_hat,
        theta_hat=float(theta_hat),
        weights=weights,
        inner_objective=float(objective),
        constraint_residuals=residuals,
        infeasible_thetas=np.asarray(infeasible, dtype=float),
        rescaled=rescaled,
    )


def _golden_refine(problem, lo, hi, best, penalty_scale, tol, max_iter, method):
    """One golden-section pass; keeps the incumbent unless strictly beaten."""

    def evaluate(theta):
        try:
            gamma, objective = inner_solve(problem, theta, tol, max_iter, method)
        except ConvergenceError:
            return None
        return (-objective - penalty_scale * theta**2, theta, gamma, objective)

    a, b = float(lo), float(hi)
    x1 = b - GOLDEN_RATIO * (b - a)
    x2 = a + GOLDEN_RATIO * (b - a)
    e1, e2 = evaluate(x1), evaluate(x2)
    for _ in range(40):
        if b - a < 1e-6:
            break
        f1 = e1[0] if e1 is not None else -np.inf
        f2 = e2[0] if e2 is not None else -np.inf
        if f1 >= f2:
            b, x2, e2 = x2, x1, e1
            x1 = b - GOLDEN_RATIO * (b - a)
            e1 = evaluate(x1)
        else:
            a, x1, e1 = x1, x2, e2
            x2 = a + GOLDEN_RATIO * (b - a)
            e2 = evaluate(x2)
    for candidate in (e1, e2):
        if candidate is not None and candidate[0] > best[0]:
            best = candidate
    return best


def to_balance_weights(solution: ElSolution) -> BalanceWeights:
    """Repackage an ElSolution in the common weights container."""
    diagnostics = dict(solution.constraint_residuals)
    diagnostics.update(
        theta_hat=solution.theta_hat,
        gamma_hat=solution.gamma_hat,
        inner_objective=solution.inner_objective,
        infeasible_thetas=solution.infeasible_thetas,
        rescaled=solution.rescaled,
    )
    return BalanceWeights(
        weights=solution.weights, method="nonparametric", diagnostics=diagnostics
    )
