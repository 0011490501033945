import numpy as np
import pytest

from cbfps import FunctionalSample, Grid
from cbfps.simgen import analytic_eigenfunctions


@pytest.fixture
def grid128():
    return Grid.uniform(128)


@pytest.fixture
def fourier_basis(grid128):
    """The six analytic eigenfunctions on the 128-point grid."""
    return analytic_eigenfunctions(grid128)


def make_rank4_sample(n, grid, seed=0, score_sds=(4.0, 2 * np.sqrt(3.0), 2 * np.sqrt(2.0), 2.0)):
    """Curves spanned by the first four analytic eigenfunctions only."""
    rng = np.random.default_rng(seed)
    scores = rng.standard_normal((n, 4)) * np.asarray(score_sds)
    basis = analytic_eigenfunctions(grid)[:4]
    return FunctionalSample(grid, scores @ basis), scores
