import numpy as np
import pytest

from gpsobol.gp import (
    FitConfig,
    Hyperparameters,
    KernelKind,
    KernelSpec,
    TrainingSet,
    condition,
    fit,
    predict,
    project_mean,
    sample_realizations,
)
from gpsobol.space import ParameterSpace


@pytest.fixture(scope="module")
def gp():
    rng = np.random.default_rng(3)
    X = rng.random((10, 2))
    theta = Hyperparameters([1.3, 1.0], [0.3, 0.5], 1e-4)
    return condition(TrainingSet.from_raw(X, np.sin(5 * X[:, 0]) * X[:, 1]),
                     KernelSpec(KernelKind.MATERN52, 2), theta)


class TestRealizations:
    def test_zero_covariance_gives_mean(self, gp):
        X = gp.train.X[:3]
        zero = condition(gp.train, gp.spec, Hyperparameters([1.3, 1.0], [0.3, 0.5], 0.0))
        draws = sample_realizations(zero, X, 5, seed=1)
        p = predict(zero, X)
        assert np.max(np.abs(draws - p.mean)) < 1e-4

    def test_moments(self, gp):
        X = np.random.default_rng(0).random((5, 2))
        n = 20000
        draws = sample_realizations(gp, X, n, seed=7)
        p = predict(gp, X)
        sd = np.sqrt(np.diag(p.cov))
        assert np.all(np.abs(draws.mean(axis=0) - p.mean) <= 3 * sd / np.sqrt(n))
        emp = np.cov(draws, rowvar=False)
        # standard error of a sample covariance entry: sqrt((S_ii S_jj + S_ij^2) / n)
        se = np.sqrt((np.outer(sd**2, sd**2) + p.cov**2) / n)
        assert np.all(np.abs(emp - p.cov) <= 3 * se)

    def test_thread_count_independent(self, gp):
        X = np.random.default_rng(1).random((50, 2))
        a = sample_realizations(gp, X, 30, seed=4, block_size=8, workers=1)
        b = sample_realizations(gp, X, 30, seed=4, block_size=8, workers=3)
        assert a.tobytes() == b.tobytes()

    def test_seed_changes_draws(self, gp):
        X = np.random.default_rng(1).random((4, 2))
        assert not np.array_equal(sample_realizations(gp, X, 3, seed=1),
                                  sample_realizations(gp, X, 3, seed=2))

    def test_shape_and_info(self, gp):
        info = {}
        out = sample_realizations(gp, np.random.default_rng(2).random((9, 2)), 4, seed=0,
                                  block_size=4, info=info)
        assert out.shape == (4, 9) and info["blocks"] == 3


def fitted(fn, d, n=40):
    rng = np.random.default_rng(5)
    X = rng.random((n, d))
    return fit(TrainingSet.from_raw(X, fn(X)), KernelSpec(KernelKind.SQUARED_EXPONENTIAL, d),
               FitConfig(restarts=3))


class TestProjection:
    def test_constant_function(self):
        c = 2.5
        rng = np.random.default_rng(0)
        X = rng.random((15, 2))
        theta = Hyperparameters([1.0, 1.0], [0.5, 0.5], 1e-8)
        # tiny perturbation so the standardised outputs are defined
        gp = condition(TrainingSet.from_raw(X, c + 1e-9 * rng.normal(size=15)),
                       KernelSpec(KernelKind.SQUARED_EXPONENTIAL, 2), theta)
        bins = project_mean(gp, 0, grid=10, probe=2000)
        assert all(abs(b.mean - c) < 1e-3 for b in bins)

    def test_linear_in_first_input(self):
        gp = fitted(lambda X: X[:, 0], 2)
        b1 = project_mean(gp, 0, grid=10, probe=4000)
        means = np.array([b.mean for b in b1])
        assert np.all(np.diff(means) > 0)
        b2 = project_mean(gp, 1, grid=10, probe=4000)
        means2 = np.array([b.mean for b in b2])
        band = min(b.hi95 - b.lo95 for b in b2)
        assert np.ptp(means2) < band

    def test_centres_span_physical_range(self):
        gp = fitted(lambda X: X[:, 0] + X[:, 1], 2, n=20)
        space = ParameterSpace.from_bounds([(3.2e-5, 128e-5), (0.0, 5.2e-4)])
        bins = project_mean(gp, 0, grid=20, probe=500, space=space)
        half = (128e-5 - 3.2e-5) / 40
        assert abs(bins[0].center - 3.2e-5) <= half * (1 + 1e-9)
        assert abs(bins[-1].center - 128e-5) <= half * (1 + 1e-9)

    def test_empty_bins_flagged(self):
        gp = fitted(lambda X: X[:, 0], 1, n=10)
        bins = project_mean(gp, 0, grid=50, probe=10)
        empty = [b for b in bins if b.empty]
        assert empty and all(np.isnan(b.mean) for b in empty)
        assert sum(b.count for b in bins) == 10

    def test_bad_dimension(self):
        gp = fitted(lambda X: X[:, 0], 1, n=10)
        with pytest.raises(IndexError):
            project_mean(gp, 1)
