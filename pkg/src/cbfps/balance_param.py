"""Parametric balancing-weight estimation under joint normality.

The weight for subject i is the ratio of the standard-normal marginal density
of the whitened scores to a conditional normal density with mean beta' c and
covariance sigma. (beta, sigma) solve a just-identified moment system: the
residual second moment equals sigma, and the weighted score-covariate cross
moment vanishes. The system is solved by Levenberg-damped Newton with a
finite-difference Jacobian, started at the ordinary least squares fit (which
satisfies the first moment block exactly). Finite samples need not admit an
exact root; the returned fit is then the stationary point of the squared
residual reached from that start, flagged `converged=False`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .exceptions import ConvergenceError, DataError, SingularMatrixError
from .fpca import StandardizedDesign

__all__ = ["ParamFit", "BalanceWeights", "weight_formula", "solve_mom", "estimate_weights_param"]

MOM_TOLERANCE = 1e-8  # RMS of the stacked moment residuals
MOM_MAX_ITER = 200


@dataclass(frozen=True)
class ParamFit:
    """Solution of the parametric moment system.

    `converged` is True when an exact root was found (residual RMS at or
    below the solver tolerance). Finite samples need not admit an exact
    root; the fit is then the stationary point of the squared-residual
    objective reached from the OLS start, with its RMS reported honestly.
    """

    beta: np.ndarray
    sigma: np.ndarray
    moment_residual_norm: float
    iterations: int
    converged: bool = True
    pd_projected: bool = False


@dataclass(frozen=True)
class BalanceWeights:
    """Estimated balancing weights with solver diagnostics.

    `diagnostics` always carries the four balance blocks (weight-sum residual,
    weighted score and covariate means, weighted cross moment) and
    method-specific solver output.
    """

    weights: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)


def _cholesky_pd(sigma: np.ndarray):
    """Cholesky factor of a symmetric matrix, or None when not PD."""
    try:
        return cho_factor(sigma, lower=True)
    except (LinAlgError, ValueError):
        return None


def weight_formula(
    a_star_i: np.ndarray, c_star_i: np.ndarray, beta: np.ndarray, sigma: np.ndarray
) -> float:
    """Balancing weight of one subject: marginal over conditional normal density."""
    a = np.asarray(a_star_i, dtype=float).ravel()
    c = np.asarray(c_star_i, dtype=float).ravel()
    beta = np.asarray(beta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    chol = _cholesky_pd(sigma)
    if chol is None:
        raise SingularMatrixError("sigma must be symmetric positive definite")
    resid = a - beta.T @ c
    quad = float(resid @ cho_solve(chol, resid))
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
    return float(np.exp(0.5 * logdet + 0.5 * quad - 0.5 * a @ a))


def _log_weights(a_star, c_star, beta, sigma, chol):
    resid = a_star - c_star @ beta
    quad = np.einsum("ij,ji->i", resid, cho_solve(chol, resid.T))
    logdet = 2.0 * np.sum(np.log(np.diag(chol[0])))
    return 0.5 * logdet + 0.5 * quad - 0.5 * np.einsum("ij,ij->i", a_star, a_star)


def _pack(beta: np.ndarray, sigma: np.ndarray, tril) -> np.ndarray:
    return np.concatenate([beta.ravel(), sigma[tril]])


def _unpack(x: np.ndarray, n_scores: int, n_cov: int, tril):
    beta = x[: n_cov * n_scores].reshape(n_cov, n_scores)
    sigma = np.zeros((n_scores, n_scores))
    sigma[tril] = x[n_cov * n_scores:]
    sigma = sigma + np.tril(sigma, -1).T
    return beta, sigma


def _project_pd(sigma: np.ndarray) -> np.ndarray:
    """Clip eigenvalues so the matrix becomes positive definite."""
    eigvals, eigvecs = np.linalg.eigh((sigma + sigma.T) / 2.0)
    floor = 1e-10 * max(np.abs(eigvals).max(), 1.0)
    eigvals = np.maximum(eigvals, floor)
    return (eigvecs * eigvals) @ eigvecs.T


def solve_mom(
    design: StandardizedDesign,
    tol: float = MOM_TOLERANCE,
    max_iter: int = MOM_MAX_ITER,
) -> ParamFit:
    """Solve the stacked moment system for (beta, sigma).

    The stacked residual concatenates the lower triangle of the residual
    second-moment equation with the weighted cross-moment block, giving
    exactly as many equations as unknowns. Newton steps are damped with a
    Levenberg multiplier so the iteration descends the squared residual from
    the OLS start; an exact root (RMS at or below `tol`) is reported as
    converged, and a first-order stationary point without a root is returned
    with `converged=False` and its residual.
    """
    a_star, c_star = design.a_star, design.c_star
    n, n_scores, n_cov = design.n_subjects, design.n_scores, design.n_covariates
    if n <= n_scores + n_cov:
        raise DataError(f"need n > L + p, got n={n}, L={n_scores}, p={n_cov}")
    tril = np.tril_indices(n_scores)

    def residual(beta, sigma, chol):
        resid = a_star - c_star @ beta
        second_moment = resid.T @ resid / n
        block_sigma = (second_moment - sigma)[tril]
        w = np.exp(np.clip(_log_weights(a_star, c_star, beta, sigma, chol), -700.0, 700.0))
        cross = a_star.T @ (w[:, None] * c_star) / n
        return np.concatenate([block_sigma, cross.ravel()])

    beta = np.linalg.lstsq(c_star, a_star, rcond=None)[0]
    ols_resid = a_star - c_star @ beta
    sigma = ols_resid.T @ ols_resid / n
    chol = _cholesky_pd(sigma)
    if chol is None:
        raise SingularMatrixError("OLS residual covariance is not positive definite")

    x = _pack(beta, sigma, tril)
    f = residual(beta, sigma, chol)
    fnorm = float(np.linalg.norm(f))
    n_eq = f.size
    best_rms = fnorm / np.sqrt(n_eq)
    pd_projected = False
    lam = 1e-4
    stalled = 0

    for iteration in range(max_iter):
        rms = fnorm / np.sqrt(n_eq)
        best_rms = min(best_rms, rms)
        if rms <= tol:
            return ParamFit(beta, sigma, rms, iteration, True, pd_projected)

        jac = _fd_jacobian(residual, x, f, n_scores, n_cov, tril)
        gram = jac.T @ jac
        grad = jac.T @ f
        if np.linalg.norm(grad) <= 1e-12 * max(1.0, fnorm):
            return ParamFit(beta, sigma, rms, iteration, False, pd_projected)
        scale = np.maximum(np.diag(gram), 1e-12)

        accepted = False
        for _ in range(60):
            try:
                step = np.linalg.solve(gram + lam * np.diag(scale), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + step
            beta_new, sigma_new = _unpack(x_new, n_scores, n_cov, tril)
            chol_new = _cholesky_pd(sigma_new)
            if chol_new is None and lam > 1e8:
                sigma_new = _project_pd(sigma_new)
                chol_new = _cholesky_pd(sigma_new)
                if chol_new is not None:
                    pd_projected = True
                    x_new = _pack(beta_new, sigma_new, tril)
            if chol_new is None:
                lam *= 10.0
                continue
            f_new = residual(beta_new, sigma_new, chol_new)
            fnorm_new = float(np.linalg.norm(f_new))
            if np.isfinite(fnorm_new) and fnorm_new < fnorm:
                if fnorm - fnorm_new <= 1e-14 * fnorm:
                    stalled += 1
                else:
                    stalled = 0
                x, f, fnorm = x_new, f_new, fnorm_new
                beta, sigma, chol = beta_new, sigma_new, chol_new
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
            if lam > 1e14:
                break
        rms = fnorm / np.sqrt(n_eq)
        if not accepted or stalled >= 3:
            if rms <= tol:
                return ParamFit(beta, sigma, rms, iteration + 1, True, pd_projected)
            # No descent direction left: a stationary point of the squared
            # residual without an exact root.
            return ParamFit(beta, sigma, rms, iteration + 1, False, pd_projected)

    rms = fnorm / np.sqrt(n_eq)
    if rms <= tol:
        return ParamFit(beta, sigma, rms, max_iter, True, pd_projected)
    raise ConvergenceError(
        f"moment solver did not converge in {max_iter} iterations",
        residual=min(best_rms, rms),
    )


def _fd_jacobian(residual, x, f0, n_scores, n_cov, tril):
    """Forward-difference Jacobian of the stacked residual."""
    jac = np.empty((f0.size, x.size))
    sqrt_eps = np.sqrt(np.finfo(float).eps)
    for k in range(x.size):
        step = sqrt_eps * max(1.0, abs(x[k]))
        x_pert = x.copy()
        x_pert[k] += step
        beta_p, sigma_p = _unpack(x_pert, n_scores, n_cov, tril)
        chol_p = _cholesky_pd(sigma_p)
        if chol_p is None:
            x_pert[k] = x[k] - step
            beta_p, sigma_p = _unpack(x_pert, n_scores, n_cov, tril)
            chol_p = _cholesky_pd(sigma_p)
            if chol_p is None:
                jac[:, k] = 0.0
                continue
            jac[:, k] = (f0 - residual(beta_p, sigma_p, chol_p)) / step
            continue
        jac[:, k] = (residual(beta_p, sigma_p, chol_p) - f0) / step
    return jac


def balance_blocks(design: StandardizedDesign, weights: np.ndarray) -> dict:
    """The four balance diagnostics shared by both weighting methods."""
    n = design.n_subjects
    w = np.asarray(weights, dtype=float)
    return {
        "weight_sum_residual": float(w.sum() - n),
        "score_moment": design.a_star.T @ w / n,
        "covariate_moment": design.c_star.T @ w / n,
        "cross_moment": design.a_star.T @ (w[:, None] * design.c_star) / n,
    }


def estimate_weights_param(design: StandardizedDesign, **solver_kwargs) -> BalanceWeights:
    """Fit the moment system and evaluate the weight formula per subject."""
    fit = solve_mom(design, **solver_kwargs)
    chol = _cholesky_pd(fit.sigma)
    weights = np.exp(_log_weights(design.a_star, design.c_star, fit.beta, fit.sigma, chol))
    if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
        raise ConvergenceError(
            "parametric weights are not finite and positive",
            residual=fit.moment_residual_norm,
        )
    diagnostics = balance_blocks(design, weights)
    diagnostics.update(
        beta=fit.beta,
        sigma=fit.sigma,
        moment_residual_norm=fit.moment_residual_norm,
        iterations=fit.iterations,
        converged=fit.converged,
        pd_projected=fit.pd_projected,
    )
    return BalanceWeights(weights=weights, method="parametric", diagnostics=diagnostics)
