import numpy as np
import pytest

from cbfps import (
    BootstrapError,
    ConvergenceError,
    DataError,
    Grid,
    avi_rank,
    avi_select,
    bootstrap_bands,
    fit_interaction,
    fit_truncated,
    integrated_effect,
    inner_product,
    ise,
)
from cbfps.fpca import FpcaModel
from cbfps.simgen import SCORE_SDS, SimConfig, analytic_eigenfunctions, generate
from cbfps.fdata import FunctionalSample
from cbfps import decompose


def population_model(grid, n_components=6, n_subjects=10, scores=None):
    """FpcaModel built from the analytic basis instead of an eigendecomposition."""
    basis = analytic_eigenfunctions(grid)[:n_components]
    eigenvalues = (SCORE_SDS[:n_components]) ** 2
    if scores is None:
        scores = np.zeros((n_subjects, n_components))
    pve = np.cumsum(eigenvalues) / eigenvalues.sum()
    return FpcaModel(
        grid=grid,
        mean=np.zeros(len(grid)),
        eigenfunctions=basis,
        eigenvalues=eigenvalues,
        scores=scores,
        pve=pve,
    )


def quadrature_scores(sample, basis):
    return sample.values @ (basis * sample.grid.quad_weights[None, :]).T


EFFECT = np.array([2.0, 1.0, 0.5, 0.5])


class TestFitTruncated:
    def test_noiseless_recovery_of_effect_coefficients(self, grid128):
        # Noiseless outcome, population basis: ordinary least squares must
        # recover (2, 1, 0.5, 0.5) up to quadrature error.
        rng = np.random.default_rng(21)
        n = 300
        true_scores = rng.standard_normal((n, 6)) * SCORE_SDS
        basis = analytic_eigenfunctions(grid128)
        sample = FunctionalSample(grid128, true_scores @ basis)
        y = 1.0 + true_scores[:, :4] @ EFFECT
        scores = quadrature_scores(sample, basis[:4])
        scores -= scores.mean(axis=0)  # scores of the centered curves
        model = population_model(grid128, n_components=4, scores=scores)
        estimate = fit_truncated(y, scores, np.ones(n), model)
        assert estimate.basis_coeffs == pytest.approx(EFFECT, abs=1e-6)
        assert estimate.intercept == pytest.approx(y.mean())

    def test_constant_outcome_gives_zero_curve(self, grid128):
        rng = np.random.default_rng(22)
        scores = rng.standard_normal((40, 3))
        scores -= scores.mean(axis=0)
        model = population_model(grid128, n_components=3, scores=scores)
        estimate = fit_truncated(np.full(40, 7.5), scores, np.ones(40), model)
        assert estimate.basis_coeffs == pytest.approx(np.zeros(3), abs=1e-12)
        assert estimate.intercept == pytest.approx(7.5)
        assert estimate.curve == pytest.approx(np.zeros(128), abs=1e-12)

    def test_duplicated_subject_with_split_weight(self, grid128):
        rng = np.random.default_rng(23)
        n = 30
        scores = rng.standard_normal((n, 3))
        y = rng.standard_normal(n)
        weights = np.abs(rng.standard_normal(n)) + 0.5
        model = population_model(grid128, n_components=3, scores=scores)
        base = fit_truncated(y, scores, weights, model)

        scores_dup = np.vstack([scores, scores[:1]])
        y_dup = np.concatenate([y, y[:1]])
        weights_dup = weights.copy()
        weights_dup[0] /= 2.0
        weights_dup = np.concatenate([weights_dup, [weights_dup[0]]])
        # The duplicated row shifts the unweighted outcome mean, so compare
        # against a fit with the same pinned intercept.
        dup = fit_truncated(y_dup - y_dup.mean() + y.mean(), scores_dup, weights_dup, model)
        assert dup.basis_coeffs == pytest.approx(base.basis_coeffs, abs=1e-10)

    def test_normal_equations_residual(self, grid128):
        rng = np.random.default_rng(24)
        n = 80
        scores = rng.standard_normal((n, 4))
        y = rng.standard_normal(n) * 3.0
        weights = np.abs(rng.standard_normal(n)) + 0.2
        model = population_model(grid128, n_components=4, scores=scores)
        estimate = fit_truncated(y, scores, weights, model)
        resid = y - y.mean() - scores @ estimate.basis_coeffs
        for j in range(4):
            assert float(np.sum(weights * resid * scores[:, j])) == pytest.approx(0.0, abs=1e-8)

    def test_curve_coefficient_duality(self, grid128):
        rng = np.random.default_rng(25)
        scores = rng.standard_normal((50, 4))
        y = scores @ np.array([1.0, -2.0, 0.3, 0.0]) + rng.standard_normal(50)
        model = population_model(grid128, n_components=6, scores=np.zeros((50, 6)))
        estimate = fit_truncated(y, scores, np.ones(50), model, basis_ids=(0, 1, 2, 3))
        for j, k in enumerate(estimate.basis_ids):
            value = inner_product(estimate.curve, model.eigenfunctions[k], grid128)
            assert value == pytest.approx(estimate.basis_coeffs[j], abs=1e-8)
        for k in (4, 5):
            value = inner_product(estimate.curve, model.eigenfunctions[k], grid128)
            assert value == pytest.approx(0.0, abs=1e-8)

    def test_weight_rescaling_invariance(self, grid128):
        rng = np.random.default_rng(26)
        scores = rng.standard_normal((35, 3))
        y = rng.standard_normal(35)
        weights = np.abs(rng.standard_normal(35)) + 0.1
        model = population_model(grid128, n_components=3, scores=scores)
        one = fit_truncated(y, scores, weights, model)
        scaled = fit_truncated(y, scores, weights * 17.3, model)
        assert scaled.basis_coeffs == pytest.approx(one.basis_coeffs, abs=1e-10)
        assert scaled.curve == pytest.approx(one.curve, abs=1e-10)

    def test_nonpositive_weights_rejected(self, grid128):
        model = population_model(grid128, n_components=2, scores=np.zeros((10, 2)))
        with pytest.raises(DataError, match="positive"):
            fit_truncated(np.zeros(10), np.ones((10, 2)), np.zeros(10), model)


class TestIntegratedEffect:
    def test_zero_curve_returns_intercept(self, grid128):
        scores = np.zeros((10, 2))
        model = population_model(grid128, n_components=2, scores=scores)
        estimate = fit_truncated(np.full(10, 3.0), scores + np.eye(10, 2), np.ones(10), model)
        assert integrated_effect(estimate, np.zeros(128), grid128) == pytest.approx(
            estimate.intercept
        )

    def test_orthonormal_basis_projection(self, grid128):
        rng = np.random.default_rng(27)
        n = 60
        basis = analytic_eigenfunctions(grid128)
        scores = rng.standard_normal((n, 1)) * 2.0
        y = 5.0 + 2.0 * scores[:, 0]
        model = population_model(grid128, n_components=6, scores=np.zeros((n, 6)))
        estimate = fit_truncated(y, scores, np.ones(n), model, basis_ids=(0,))
        # mu_hat = 2 phi_1: effect of x = phi_1 adds 2, orthogonal x adds 0.
        assert integrated_effect(estimate, basis[0], grid128) == pytest.approx(
            estimate.intercept + 2.0, abs=1e-3
        )
        assert integrated_effect(estimate, basis[4], grid128) == pytest.approx(
            estimate.intercept, abs=1e-3
        )


class TestAvi:
    def test_setting1_population_index_values(self):
        # Population algebra gives V = (100, 12, 2, 1): slopes
        # (2.5, 1, 0.5, 0.5) against eigenvalues (16, 12, 8, 4).
        data = generate(SimConfig(setting=1, n=20000, seed=31), 0)
        model = decompose(data.sample)
        ranking = avi_rank(data.outcome, model, initial_pve=0.95)
        assert len(ranking.component_ids) == 4
        expected = np.array([100.0, 12.0, 2.0, 1.0])
        assert np.all(np.abs(ranking.index_values / expected - 1.0) < 0.05)
        assert list(ranking.order) == [0, 1, 2, 3]

    def test_share_rule_matches_population_cutoff(self):
        data = generate(SimConfig(setting=1, n=20000, seed=31), 0)
        model = decompose(data.sample)
        # Shares of (100, 12, 2, 1): two components reach ~0.974, three
        # ~0.991, so a 0.99 share keeps the top three.
        ids = avi_select(data.outcome, model, initial_pve=0.95, avi_share=0.99)
        assert ids == (0, 1, 2)

    def test_full_share_keeps_initial_set(self):
        data = generate(SimConfig(setting=1, n=500, seed=32), 0)
        model = decompose(data.sample)
        ids = avi_select(data.outcome, model, initial_pve=0.95, avi_share=1.0)
        assert ids == tuple(range(len(avi_rank(data.outcome, model, 0.95).component_ids)))

    def test_pure_noise_outcome_still_selects(self):
        rng = np.random.default_rng(33)
        data = generate(SimConfig(setting=1, n=2000, seed=34), 0)
        model = decompose(data.sample)
        noise = rng.standard_normal(2000)
        ranking = avi_rank(noise, model, initial_pve=0.95)
        assert np.all(ranking.index_values < 0.5)
        ids = avi_select(noise, model, initial_pve=0.95, avi_share=0.5)
        assert 1 <= len(ids) <= len(ranking.component_ids)


class TestFitInteraction:
    def test_single_group_reduces_to_truncated_fit(self, grid128):
        rng = np.random.default_rng(41)
        n = 50
        scores = rng.standard_normal((n, 3))
        scores -= scores.mean(axis=0)
        y = scores @ np.array([1.0, 0.5, -0.25]) + rng.standard_normal(n)
        model = population_model(grid128, n_components=3, scores=scores)
        baseline, difference, _ = fit_interaction(
            y, scores, np.zeros(n), np.ones(n), model
        )
        plain = fit_truncated(y, scores, np.ones(n), model)
        assert baseline.basis_coeffs == pytest.approx(plain.basis_coeffs, abs=1e-12)
        assert baseline.intercept == pytest.approx(plain.intercept, abs=1e-12)
        assert difference.basis_coeffs == pytest.approx(np.zeros(3), abs=0.0)

    def test_two_group_exact_recovery(self, grid128):
        rng = np.random.default_rng(42)
        n = 80
        scores = rng.standard_normal((n, 2))
        group = (np.arange(n) % 2).astype(float)
        coeff0 = np.array([1.5, -0.5])
        coeff_diff = np.array([0.75, 2.0])
        y = 3.0 + scores @ coeff0 + group * (-4.0) + (scores * group[:, None]) @ coeff_diff
        model = population_model(grid128, n_components=2, scores=scores)
        baseline, difference, table = fit_interaction(y, scores, group, np.ones(n), model)
        assert baseline.basis_coeffs == pytest.approx(coeff0, abs=1e-8)
        assert baseline.intercept == pytest.approx(3.0, abs=1e-8)
        assert difference.basis_coeffs == pytest.approx(coeff_diff, abs=1e-8)
        assert difference.intercept == pytest.approx(-4.0, abs=1e-8)
        assert table.f_statistic == np.inf

    def test_table_structure_and_naive_tests(self, grid128):
        rng = np.random.default_rng(43)
        n = 120
        scores = rng.standard_normal((n, 3))
        group = (rng.random(n) < 0.4).astype(float)
        weights = np.abs(rng.standard_normal(n)) + 0.3
        y = 2.0 + scores @ np.array([0.5, 0.0, 0.1]) - group + rng.standard_normal(n)
        _, _, table = fit_interaction(y, scores, group, weights, model=None)
        assert table.names == (
            "intercept", "fpc1", "fpc2", "fpc3", "group",
            "fpc1:group", "fpc2:group", "fpc3:group",
        )
        assert table.estimates.shape == (8,)
        assert np.all(table.standard_errors > 0)
        assert np.all((table.p_values >= 0) & (table.p_values <= 1))
        assert table.df_residual == n - 8
        assert np.isfinite(table.f_statistic) and table.f_statistic > 0
        assert 0 <= table.f_pvalue <= 1


class TestBootstrapBands:
    def test_noiseless_bands_collapse(self, grid128):
        # Deterministic estimator: every replicate reproduces the same
        # curve, so the band width vanishes.
        rng = np.random.default_rng(51)
        n = 150
        true_scores = rng.standard_normal((n, 4)) * SCORE_SDS[:4]
        basis = analytic_eigenfunctions(grid128)[:4]
        sample = FunctionalSample(grid128, true_scores @ basis)
        y = 1.0 + true_scores @ EFFECT

        def refit(indices):
            sub = FunctionalSample(grid128, sample.values[indices])
            sub_model = decompose(sub)
            rank = min(4, sub_model.n_components)
            est = fit_truncated(
                y[indices], sub_model.scores[:, :rank], np.ones(n), sub_model
            )
            return est.curve

        bands = bootstrap_bands(refit, n, 500, 0.99, seed=7)
        assert bands.replicates_failed == 0
        assert float(np.max(bands.upper - bands.lower)) < 1e-4

    def test_bitwise_reproducible(self, grid128):
        rng = np.random.default_rng(52)
        n = 60
        scores = rng.standard_normal((n, 3))
        y = scores @ np.array([1.0, 0.2, -0.4]) + rng.standard_normal(n)
        model = population_model(grid128, n_components=3, scores=scores)

        def refit(indices):
            centered = scores[indices] - scores[indices].mean(axis=0)
            est = fit_truncated(y[indices], centered, np.ones(n), model)
            return est.curve

        first = bootstrap_bands(refit, n, 100, 0.95, seed=99)
        second = bootstrap_bands(refit, n, 100, 0.95, seed=99)
        assert np.array_equal(first.lower, second.lower)
        assert np.array_equal(first.upper, second.upper)

    def test_pointwise_coverage_at_99(self, grid128):
        # Unconfounded noisy fixture: 99% percentile bands on the population
        # basis should cover the true curve at nearly every grid point.
        basis = analytic_eigenfunctions(grid128)[:4]
        truth = EFFECT @ basis
        outer = np.random.default_rng(53)
        n, runs, reps = 200, 50, 500
        covered = np.zeros((runs, 128))
        for r in range(runs):
            true_scores = outer.standard_normal((n, 4)) * SCORE_SDS[:4]
            y = 1.0 + true_scores @ EFFECT + outer.normal(0.0, 5.0, n)
            centered = true_scores - true_scores.mean(axis=0)

            def refit(indices):
                sub = centered[indices] - centered[indices].mean(axis=0)
                coeffs = np.linalg.lstsq(sub, y[indices] - y[indices].mean(), rcond=None)[0]
                return coeffs @ basis

            bands = bootstrap_bands(refit, n, reps, 0.99, seed=1000 + r)
            covered[r] = (bands.lower <= truth) & (truth <= bands.upper)
        per_point = covered.mean(axis=0)
        assert per_point.mean() >= 0.95
        assert per_point.min() >= 0.90

    def test_failure_accounting(self):
        def flaky(indices):
            if indices[0] % 4 == 0:
                raise ConvergenceError("synthetic failure")
            return np.zeros(8)

        bands = bootstrap_bands(flaky, 100, 200, 0.95, seed=3)
        assert bands.replicates_failed > 0
        assert bands.replicates_used + bands.replicates_failed == 200

        def broken(indices):
            if indices[0] % 2 == 0:
                raise ConvergenceError("synthetic failure")
            return np.zeros(8)

        with pytest.raises(BootstrapError):
            bootstrap_bands(broken, 100, 200, 0.95, seed=3)

    def test_replicate_floor(self):
        with pytest.raises(DataError, match="100"):
            bootstrap_bands(lambda idx: np.zeros(4), 10, 50, 0.95)
