import numpy as np
import pytest
from scipy import optimize

from cbfps import DataError, InfeasibleProblemError
from cbfps.balance_np import (
    ElProblem,
    estimate_weights_np,
    inner_solve,
    moment_vector,
)
from cbfps.fpca import StandardizedDesign


def make_design(a_star, c_star):
    a_star = np.atleast_2d(np.asarray(a_star, dtype=float))
    c_star = np.atleast_2d(np.asarray(c_star, dtype=float))
    return StandardizedDesign(
        a_star=a_star, c_star=c_star, gamma_c_half_inv=np.eye(c_star.shape[1])
    )


def correlated_design(n, seed, strength=0.6):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(n)
    a = strength * c + rng.standard_normal(n)
    a = (a - a.mean()) / a.std()
    c = (c - c.mean()) / c.std()
    return make_design(a[:, None], c[:, None])


class TestMomentVector:
    def test_theta_zero_is_plain_stack(self):
        a = np.array([1.0, -2.0])
        c = np.array([3.0])
        gamma0 = np.array([[0.4], [-0.2]])
        h = moment_vector(a, c, 0.0, gamma0)
        assert h == pytest.approx([1.0, -2.0, 3.0, 3.0, -6.0])

    def test_zero_subject_at_theta_one(self):
        gamma0 = np.array([[0.4], [-0.2]])
        h = moment_vector(np.zeros(2), np.zeros(1), 1.0, gamma0)
        assert h == pytest.approx([0.0, 0.0, 0.0, -0.4, 0.2])

    def test_hand_arithmetic_scalar(self):
        # L=1, p=1, a=2, c=3, gamma0=0.5, theta=0.4 -> (2, 3, 6 - 0.2)
        h = moment_vector(np.array([2.0]), np.array([3.0]), 0.4, np.array([[0.5]]))
        assert h == pytest.approx([2.0, 3.0, 5.8])

    def test_literal_scale(self):
        h = moment_vector(
            np.array([2.0]), np.array([3.0]), 0.4, np.array([[0.5]]), literal_scale=10.0
        )
        assert h == pytest.approx([2.0, 3.0, 6.0 - 2.0])


class TestInnerSolve:
    def test_degenerate_moments_return_zero(self):
        design = make_design(np.zeros((6, 1)), np.zeros((6, 1)))
        problem = ElProblem(design, rho=0.1)
        gamma, objective = inner_solve(problem, 0.3)
        assert gamma == pytest.approx(np.zeros(3), abs=0.0)
        assert objective == 0.0

    def test_antisymmetric_fixture_stationary_at_zero(self):
        # Integer-valued (a, c), (-a, -c) pairs with n a power of two: all
        # sums cancel without rounding, so at theta = 1 the moment vectors
        # sum to zero exactly and gamma = 0 satisfies the first-order
        # condition sum h_i / (1 - gamma'h_i) = 0.
        base = np.array([[1, 2], [2, 1], [3, 2], [1, 3], [2, 3], [4, 1], [3, 1], [2, 4]], dtype=float)
        a = np.concatenate([base[:, 0], -base[:, 0]])[:, None]
        c = np.concatenate([base[:, 1], -base[:, 1]])[:, None]
        design = make_design(a, c)
        problem = ElProblem(design, rho=0.1)
        moments = problem.moment_matrix(1.0)
        assert moments.sum(axis=0) == pytest.approx(np.zeros(3), abs=0.0)
        gamma, _ = inner_solve(problem, 1.0)
        assert np.linalg.norm(gamma) <= 1e-8

    def test_gradient_norm_below_tolerance(self):
        problem = ElProblem(correlated_design(60, seed=1))
        gamma, _ = inner_solve(problem, 0.2)
        moments = problem.moment_matrix(0.2)
        slack = 1.0 - moments @ gamma
        gradient = moments.T @ (1.0 / slack)
        assert np.linalg.norm(gradient) <= 1e-8
        assert slack.min() > 0

    def test_newton_and_bfgs_agree(self):
        problem = ElProblem(correlated_design(80, seed=2))
        g_newton, obj_newton = inner_solve(problem, 0.15)
        g_bfgs, obj_bfgs = inner_solve(problem, 0.15, method="bfgs", max_iter=5000)
        assert g_bfgs == pytest.approx(g_newton, abs=1e-7)
        assert obj_bfgs == pytest.approx(obj_newton, abs=1e-10)

    def test_primal_dual_consistency_slsqp(self):
        # Independent oracle: solve the weight-space program at the dual's
        # theta with a generic constrained optimizer and compare weights.
        n = 20
        design = correlated_design(n, seed=3, strength=0.5)
        problem = ElProblem(design)
        solution = estimate_weights_np(problem)
        theta = solution.theta_hat
        a = design.a_star[:, 0]
        c = design.c_star[:, 0]
        target = theta * float(problem.gamma0[0, 0])

        result = optimize.minimize(
            lambda w: -np.sum(np.log(w)),
            np.ones(n),
            jac=lambda w: -1.0 / w,
            method="SLSQP",
            bounds=[(1e-9, None)] * n,
            constraints=[
                {"type": "eq", "fun": lambda w: np.sum(w) - n},
                {"type": "eq", "fun": lambda w: np.sum(w * a)},
                {"type": "eq", "fun": lambda w: np.sum(w * c)},
                {"type": "eq", "fun": lambda w: np.sum(w * a * c) / n - target},
            ],
            options={"maxiter": 500, "ftol": 1e-14},
        )
        assert result.success, result.message
        assert solution.weights == pytest.approx(result.x, abs=1e-5)

    def test_invalid_theta_rejected(self):
        problem = ElProblem(correlated_design(30, seed=4))
        with pytest.raises(DataError):
            inner_solve(problem, 1.5)


class TestEstimateWeights:
    def test_balanced_fixture_gives_unit_weights(self):
        # Integer quadruples (a,c), (-a,c), (a,-c), (-a,-c) cancel every sum
        # exactly: gamma0 = 0 and zero sample means. The penalized profile
        # is then flat in theta, ties resolve to theta = 0, weights are 1.
        pairs = [(1, 1), (2, 1), (3, 2), (1, 3), (2, 2)]
        rows = []
        for av, cv in pairs:
            rows += [(av, cv), (-av, cv), (av, -cv), (-av, -cv)]
        values = np.array(rows, dtype=float)
        design = make_design(values[:, :1], values[:, 1:])
        problem = ElProblem(design)
        assert problem.gamma0 == pytest.approx(np.zeros((1, 1)), abs=0.0)
        solution = estimate_weights_np(problem)
        assert solution.theta_hat == 0.0
        assert solution.weights == pytest.approx(np.ones(20), abs=1e-8)

    def test_constraint_blocks_satisfied(self):
        n = 120
        design = correlated_design(n, seed=6)
        solution = estimate_weights_np(ElProblem(design))
        residuals = solution.constraint_residuals
        assert abs(residuals["weight_sum_residual"]) <= 1e-6
        assert np.linalg.norm(residuals["score_moment"]) <= 1e-6
        assert np.linalg.norm(residuals["covariate_moment"]) <= 1e-6
        assert np.linalg.norm(residuals["cross_moment_residual"]) <= 1e-6
        assert np.all(solution.weights > 0)

    def test_theta_one_reproduces_unweighted_cross_moment(self):
        # At theta = 1 the relaxed constraint is met by unit weights: no
        # imbalance reduction at the boundary.
        design = correlated_design(50, seed=7)
        problem = ElProblem(design)
        gamma, _ = inner_solve(problem, 1.0)
        weights = 1.0 / (1.0 - problem.moment_matrix(1.0) @ gamma)
        cross = design.a_star.T @ (weights[:, None] * design.c_star) / 50
        assert cross == pytest.approx(problem.gamma0, abs=1e-8)
        assert weights == pytest.approx(np.ones(50), abs=1e-8)

    def test_rho_monotonicity(self):
        design = correlated_design(100, seed=8)
        tight = estimate_weights_np(ElProblem(design, rho=1e-12))
        loose = estimate_weights_np(ElProblem(design, rho=1e6))
        assert abs(tight.theta_hat) <= abs(loose.theta_hat)
        # Huge rho removes the penalty: theta heads to the unpenalized
        # optimum at 1; tiny rho forces theta to 0.
        assert loose.theta_hat == pytest.approx(1.0, abs=1e-6)
        assert tight.theta_hat == pytest.approx(0.0, abs=1e-6)

    def test_scalar_case_matches_direct_implementation(self):
        # Independent scalar implementation of the same double loop: inner
        # stationarity solved by a generic root finder, outer by the same
        # grid plus golden refinement, all in plain scalar code.
        n = 50
        design = correlated_design(n, seed=9, strength=0.4)
        a = design.a_star[:, 0]
        c = design.c_star[:, 0]
        gamma0 = float(np.mean(a * c))
        rho = 0.1 / n
        penalty = gamma0**2 / (2 * rho)

        def h_matrix(theta):
            return np.column_stack([a, c, a * c - theta * gamma0])

        def inner(theta):
            h = h_matrix(theta)

            def stationarity(gamma):
                slack = 1.0 - h @ gamma
                if slack.min() <= 0:
                    return np.full(3, 1e6)
                return h.T @ (1.0 / slack)

            for scale in (0.0, 0.01, 0.05):
                start = np.full(3, scale)
                sol, info, ok, _ = optimize.fsolve(stationarity, start, full_output=True)
                slack = 1.0 - h @ sol
                if ok == 1 and slack.min() > 0:
                    return sol, float(np.sum(np.log(slack)))
            return None

        def profile(theta):
            res = inner(theta)
            if res is None:
                return None
            return -res[1] - penalty * theta**2

        grid = np.linspace(-1, 1, 201)
        values = [(profile(t), t) for t in grid]
        values = [(v, t) for v, t in values if v is not None]
        best_value, best_theta = max(values, key=lambda vt: (vt[0], -abs(vt[1])))
        j = int(np.argmin(np.abs(grid - best_theta)))
        lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, 200)]
        ratio = (np.sqrt(5) - 1) / 2
        x1, x2 = hi - ratio * (hi - lo), lo + ratio * (hi - lo)
        f1, f2 = profile(x1), profile(x2)
        for _ in range(40):
            if hi - lo < 1e-6:
                break
            if (f1 if f1 is not None else -np.inf) >= (f2 if f2 is not None else -np.inf):
                hi, x2, f2 = x2, x1, f1
                x1 = hi - ratio * (hi - lo)
                f1 = profile(x1)
            else:
                lo, x1, f1 = x1, x2, f2
                x2 = lo + ratio * (hi - lo)
                f2 = profile(x2)
        for candidate, value in ((x1, f1), (x2, f2)):
            if value is not None and value > best_value:
                best_value, best_theta = value, candidate
        gamma_ref, _ = inner(best_theta)
        weights_ref = 1.0 / (1.0 - h_matrix(best_theta) @ gamma_ref)
        weights_ref *= n / weights_ref.sum()

        solution = estimate_weights_np(ElProblem(design))
        assert solution.theta_hat == pytest.approx(best_theta, abs=1e-5)
        assert solution.weights == pytest.approx(weights_ref, abs=1e-6)

    def test_literal_moment_variant(self):
        design = correlated_design(60, seed=10)
        solution = estimate_weights_np(ElProblem(design, hvec_literal=True))
        n = 60
        cross = design.a_star.T @ (solution.weights[:, None] * design.c_star) / n
        # Stationarity under the literal form pins the cross moment to
        # n * theta * gamma0 instead.
        target = n * solution.theta_hat * np.asarray(
            ElProblem(design, hvec_literal=True).gamma0
        )
        assert cross == pytest.approx(target, abs=1e-6)

    def test_all_grid_points_infeasible(self):
        # A subject whose score dwarfs the rest makes the scores impossible
        # to re-center with positive weights summing to n... use a design
        # where every score is strictly positive so sum(w a) = 0 cannot hold.
        a = np.linspace(1.0, 2.0, 12)[:, None]
        c = np.linspace(-0.5, 0.5, 12)[:, None]
        design = make_design(a, c)
        with pytest.raises(InfeasibleProblemError, match="rho"):
            estimate_weights_np(ElProblem(design))

    def test_grid_must_contain_zero_and_endpoints(self):
        design = correlated_design(30, seed=11)
        with pytest.raises(DataError):
            ElProblem(design, theta_grid=np.linspace(-0.5, 1.0, 11))
