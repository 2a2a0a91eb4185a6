import numpy as np
import pytest

from nonadiab.observables import (
    ChannelResult,
    classify_channels,
    decoherence_indicator,
    density_histogram,
    ensemble_populations,
    k0_scan,
    surface_populations,
)
from nonadiab.sampling import sample_wigner


class TestPopulations:
    def test_pure_ensemble(self):
        weights = np.tile([1.0, 0.0], (30, 1))
        np.testing.assert_allclose(ensemble_populations(weights), [1.0, 0.0])

    def test_surface_counts(self):
        active = np.array([1] * 25 + [2] * 25)
        np.testing.assert_allclose(surface_populations(active), [0.5, 0.5])

    def test_matches_density_sampling_within_monte_carlo_error(self):
        # swarm drawn from the initial density carries the exact populations
        n = 10_000
        ic = sample_wigner(-8.0, 25.0, 0.8, n, seed=1)
        weights = np.zeros((n, 2))
        weights[:, 0] = 1.0
        pops = ensemble_populations(weights)
        assert abs(pops[0] - 1.0) < 2.0 / np.sqrt(n)


class TestDecoherenceIndicator:
    def test_pure_states_give_zero(self):
        c = np.zeros((10, 2), dtype=complex)
        c[:5, 0] = 1.0
        c[5:, 1] = 1j
        assert decoherence_indicator(c) == 0.0

    def test_maximal_coherence(self):
        c = np.full((10, 2), np.sqrt(0.5), dtype=complex)
        assert decoherence_indicator(c) == pytest.approx(0.25, abs=1e-15)


class TestHistogram:
    def test_mass_conservation_any_binning(self):
        rng = np.random.default_rng(0)
        pos = rng.normal(0, 2, 500)
        w1 = rng.uniform(0, 1, 500)
        weights = np.stack([w1, 1 - w1], axis=1)
        for width in (0.05, 0.2, 1.3):
            centers, total, d1, d2 = density_histogram(pos, weights, bin_width=width)
            assert np.sum(total) * width == pytest.approx(1.0, rel=1e-12)
            np.testing.assert_allclose(total, d1 + d2)

    def test_uniform_weights_reduce_to_position_histogram(self):
        rng = np.random.default_rng(1)
        pos = rng.normal(0, 1, 2000)
        weights = np.full((2000, 2), 0.5)
        centers, total, d1, d2 = density_histogram(pos, weights, bin_width=0.2)
        counts, edges = np.histogram(pos, bins=len(centers), range=(centers[0] - 0.1, centers[-1] + 0.1))
        np.testing.assert_allclose(total, counts / (2000 * 0.2), rtol=1e-12)
        np.testing.assert_allclose(d1, d2)

    def test_estimator_consistency_with_initial_density(self):
        # histogram over a large swarm converges to the sampled Gaussian
        n = 10_000
        sigma = 2.0
        ic = sample_wigner(0.0, 5.0, sigma, n, seed=2)
        weights = np.stack([np.ones(n), np.zeros(n)], axis=1)
        centers, total, d1, _ = density_histogram(ic.positions, weights, bin_width=0.2)
        target = np.exp(-centers**2 / sigma**2) / (sigma * np.sqrt(np.pi))
        assert np.mean(np.abs(total - target)) < 5.0 / np.sqrt(n)
        np.testing.assert_allclose(d1, total)

    def test_invalid_bin_width(self):
        with pytest.raises(ValueError):
            density_histogram(np.zeros(3), np.ones((3, 2)), bin_width=0.0)


class TestChannels:
    def test_all_transmitted_lower_surface(self):
        pos = np.full(20, 12.0)
        weights = np.tile([1.0, 0.0], (20, 1))
        ch = classify_channels(pos, weights)
        assert (ch.t1, ch.t2, ch.r1, ch.r2) == (1.0, 0.0, 0.0, 0.0)
        assert not ch.unsettled

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(5)
        pos = rng.normal(0, 6, 200)
        w1 = rng.uniform(0, 1, 200)
        ch = classify_channels(pos, np.stack([w1, 1 - w1], axis=1))
        assert ch.total() == pytest.approx(1.0, abs=1e-12)

    def test_unsettled_near_split(self):
        pos = np.array([-5.0, 0.4, 7.0])
        weights = np.tile([0.5, 0.5], (3, 1))
        assert classify_channels(pos, weights, margin=1.0).unsettled
        assert not classify_channels(pos, weights, margin=0.1).unsettled

    def test_one_hot_weights_count_surfaces(self):
        pos = np.array([5.0, 5.0, -5.0, 5.0])
        active = np.array([1, 2, 1, 1])
        weights = np.zeros((4, 2))
        weights[np.arange(4), active - 1] = 1.0
        ch = classify_channels(pos, weights)
        assert ch.t1 == pytest.approx(0.5)
        assert ch.t2 == pytest.approx(0.25)
        assert ch.r1 == pytest.approx(0.25)


class TestScan:
    def test_failed_point_marks_row_and_continues(self):
        def run_point(k0):
            if k0 == 20.0:
                raise RuntimeError("blew up")
            return {"exact": ChannelResult(1.0, 0.0, 0.0, 0.0)}

        rows = k0_scan(run_point, [10.0, 20.0, 30.0])
        assert [row["k0"] for row in rows] == [10.0, 20.0, 30.0]
        assert rows[0]["error"] is None
        assert "blew up" in rows[1]["error"]
        assert rows[2]["channels"]["exact"].t1 == 1.0

    def test_threaded_scan_preserves_order(self):
        rows = k0_scan(
            lambda k0: {"exact": ChannelResult(k0 / 100.0, 0, 0, 0)},
            [5.0, 10.0, 15.0, 20.0],
            threads=4,
        )
        assert [row["k0"] for row in rows] == [5.0, 10.0, 15.0, 20.0]
        assert [row["channels"]["exact"].t1 for row in rows] == [0.05, 0.10, 0.15, 0.20]
