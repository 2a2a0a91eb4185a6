import numpy as np
import pytest
from scipy import stats

from nonadiab.sampling import sample_fixed_momentum, sample_wigner


class TestWigner:
    def test_deterministic_given_seed(self):
        a = sample_wigner(-8.0, 25.0, 0.8, 500, seed=99)
        b = sample_wigner(-8.0, 25.0, 0.8, 500, seed=99)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.momenta, b.momenta)
        c = sample_wigner(-8.0, 25.0, 0.8, 500, seed=100)
        assert not np.array_equal(a.positions, c.positions)

    def test_per_index_streams_independent_of_ensemble_size(self):
        # trajectory I's draw is keyed by (seed, I), not by how many are drawn
        small = sample_wigner(-8.0, 25.0, 0.8, 50, seed=7)
        large = sample_wigner(-8.0, 25.0, 0.8, 200, seed=7)
        assert np.array_equal(small.positions, large.positions[:50])
        assert np.array_equal(small.momenta, large.momenta[:50])

    def test_sample_moments(self):
        n = 100_000
        sigma = 2.0
        ic = sample_wigner(-15.0, 10.0, sigma, n, seed=1)
        pos_se = (sigma / np.sqrt(2)) / np.sqrt(n)
        mom_se = (1.0 / (sigma * np.sqrt(2))) / np.sqrt(n)
        assert abs(ic.positions.mean() + 15.0) < 3 * pos_se
        assert abs(ic.momenta.mean() - 10.0) < 3 * mom_se
        # widths follow the density convention exp[-(R-Rc)^2/sigma^2]
        assert ic.positions.std() == pytest.approx(sigma / np.sqrt(2), rel=0.02)
        assert ic.momenta.std() == pytest.approx(1.0 / (sigma * np.sqrt(2)), rel=0.02)

    def test_position_momentum_uncorrelated(self):
        n = 100_000
        ic = sample_wigner(0.0, 5.0, 1.0, n, seed=3)
        corr = np.corrcoef(ic.positions, ic.momenta)[0, 1]
        assert abs(corr) < 3.0 / np.sqrt(n)

    def test_weights_uniform(self):
        ic = sample_wigner(0.0, 5.0, 1.0, 40, seed=0)
        assert np.allclose(ic.weights, 1.0 / 40)
        assert ic.weights.sum() == pytest.approx(1.0)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            sample_wigner(0.0, 5.0, -1.0, 10, seed=0)
        with pytest.raises(ValueError):
            sample_wigner(0.0, 5.0, 1.0, 0, seed=0)


class TestFixedMomentum:
    def test_all_momenta_equal(self):
        ic = sample_fixed_momentum(-15.0, 30.0, 100.0 / 30.0, 1000, seed=5)
        assert np.all(ic.momenta == 30.0)

    def test_positions_match_target_gaussian(self):
        n = 100_000
        sigma = 100.0 / 30.0
        ic = sample_fixed_momentum(-15.0, 30.0, sigma, n, seed=11)
        result = stats.kstest(ic.positions, "norm", args=(-15.0, sigma / np.sqrt(2)))
        assert result.pvalue > 1e-3

    def test_positions_same_stream_as_wigner(self):
        a = sample_wigner(0.0, 5.0, 1.0, 100, seed=13)
        b = sample_fixed_momentum(0.0, 5.0, 1.0, 100, seed=13)
        assert np.array_equal(a.positions, b.positions)
