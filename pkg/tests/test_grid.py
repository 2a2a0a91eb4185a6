import numpy as np
import pytest

from nonadiab.grid import (
    GridWavefunction,
    SplitOperatorPropagator,
    UniformGrid,
    channel_probabilities,
    edge_probability,
    gauge_invariant_tdpes,
    gaussian_packet,
    observables,
)
from nonadiab.models import make_model


def free_gaussian_density(R, t, center, k0, sigma, mass):
    """Analytic |psi|^2 of a freely spreading Gaussian (density ~ exp[-x^2/sigma^2])."""
    a = sigma**2
    mod = np.hypot(a, t / mass)
    xc = center + k0 * t / mass
    return (np.pi * a) ** -0.5 * (a / mod) * np.exp(-((R - xc) ** 2) * a / mod**2)


@pytest.fixture(scope="module")
def model_a_run():
    """Model (a), k0=25 reference propagation reused across convergence tests."""
    model = make_model("single_avoided")
    sigma = 20.0 / 25.0
    results = {}
    for label, n, dt in (("base", 4096, 0.1), ("half_dt", 4096, 0.05), ("fine", 8192, 0.1)):
        grid = UniformGrid(-30.0, 30.0, n)
        prop = SplitOperatorPropagator(model, grid, dt)
        psi = gaussian_packet(grid, center=-8.0, momentum=25.0, sigma=sigma, state=1)
        e0, n0 = prop.total_energy(psi), psi.norm()
        norm_drift = energy_drift = 0.0
        steps = int(round(1200.0 / dt))
        chunk = 200
        for _ in range(steps // chunk):
            psi = prop.step(psi, chunk)
            norm_drift = max(norm_drift, abs(psi.norm() - n0))
            energy_drift = max(energy_drift, abs(prop.total_energy(psi) - e0) / abs(e0))
        results[label] = {
            "psi": psi,
            "populations": observables(psi).populations,
            "norm_drift": norm_drift,
            "energy_drift": energy_drift,
            "prop": prop,
        }
    return results


class TestInitialization:
    def test_norm_after_init(self):
        grid = UniformGrid(-30.0, 30.0, 4096)
        psi = gaussian_packet(grid, center=-8.0, momentum=25.0, sigma=0.8)
        assert abs(psi.norm() - 1.0) < 1e-12

    def test_tail_at_edge_rejected(self):
        grid = UniformGrid(-10.0, 10.0, 256)
        with pytest.raises(ValueError, match="tail"):
            gaussian_packet(grid, center=-8.0, momentum=10.0, sigma=2.0)

    def test_grid_size_power_of_two(self):
        with pytest.raises(ValueError, match="power of two"):
            UniformGrid(-30.0, 30.0, 4000)

    def test_invalid_sigma(self):
        grid = UniformGrid(-30.0, 30.0, 256)
        with pytest.raises(ValueError):
            gaussian_packet(grid, center=0.0, momentum=1.0, sigma=-1.0)


class TestPropagation:
    def test_free_packet_matches_analytic_spreading(self):
        # H12 = 0 and flat surfaces: constant potential, exactly free motion
        model = make_model("extended_coupling", b=0.0)
        grid = UniformGrid(-30.0, 30.0, 2048)
        prop = SplitOperatorPropagator(model, grid, 0.1)
        psi = gaussian_packet(grid, center=0.0, momentum=5.0, sigma=1.0, state=1)
        psi = prop.step(psi, 10000)
        expected = free_gaussian_density(
            grid.positions, 1000.0, 0.0, 5.0, 1.0, model.mass
        )
        assert np.max(np.abs(psi.density() - expected)) < 1e-6

    def test_norm_conservation_long_run(self, model_a_run):
        assert model_a_run["base"]["norm_drift"] < 1e-10
        assert model_a_run["half_dt"]["norm_drift"] < 1e-10

    def test_energy_conservation(self, model_a_run):
        assert model_a_run["base"]["energy_drift"] < 1e-8

    def test_time_step_self_convergence(self, model_a_run):
        delta = np.abs(
            model_a_run["base"]["populations"] - model_a_run["half_dt"]["populations"]
        )
        assert delta.max() < 1e-6

    def test_grid_refinement_convergence(self, model_a_run):
        delta = np.abs(
            model_a_run["base"]["populations"] - model_a_run["fine"]["populations"]
        )
        assert delta.max() < 1e-7

    def test_representation_round_trip(self):
        model = make_model("single_avoided")
        grid = UniformGrid(-30.0, 30.0, 1024)
        prop = SplitOperatorPropagator(model, grid, 0.1)
        rng = np.random.default_rng(7)
        amps = rng.standard_normal((2, grid.n)) + 1j * rng.standard_normal((2, grid.n))
        back = prop.to_adiabatic(prop.to_diabatic(amps))
        assert np.max(np.abs(back - amps)) < 1e-13


class TestObservables:
    def test_single_surface_packet(self):
        grid = UniformGrid(-30.0, 30.0, 1024)
        psi = gaussian_packet(grid, center=-8.0, momentum=10.0, sigma=1.0, state=1)
        obs = observables(psi)
        np.testing.assert_allclose(obs.populations, [1.0, 0.0], atol=1e-12)
        assert obs.coherence == 0.0
        np.testing.assert_allclose(obs.density, obs.state_densities.sum(axis=0))

    def test_equal_superposition_coherence(self):
        grid = UniformGrid(-30.0, 30.0, 1024)
        base = gaussian_packet(grid, center=0.0, momentum=3.0, sigma=1.5).amps[0]
        psi = GridWavefunction(grid, np.stack([base, base]) / np.sqrt(2.0))
        obs = observables(psi)
        # the density floor clips ~1e-8 of tail mass from the integrand
        assert obs.coherence == pytest.approx(0.25, abs=1e-7)
        np.testing.assert_allclose(obs.populations, [0.5, 0.5], atol=1e-12)

    def test_population_sum(self, model_a_run):
        pops = model_a_run["base"]["populations"]
        assert abs(pops.sum() - 1.0) < 1e-9

    def test_swarm_estimator_matches_grid_coherence(self, model_a_run):
        # Monte-Carlo check: trajectory-average coherence over a delta-swarm
        # drawn from |chi|^2 converges to the grid integral
        psi = model_a_run["base"]["psi"]
        grid = psi.grid
        dens = psi.density()
        cdf = np.cumsum(dens) * grid.dr
        cdf /= cdf[-1]
        rng = np.random.default_rng(42)
        samples = np.interp(rng.random(200_000), cdf, grid.positions)
        idx = np.clip(
            np.round((samples - grid.r_min) / grid.dr).astype(int), 0, grid.n - 1
        )
        rho = np.maximum(dens[idx], 1e-300)
        c1sq = np.abs(psi.amps[0, idx]) ** 2 / rho
        c2sq = np.abs(psi.amps[1, idx]) ** 2 / rho
        swarm = np.mean(c1sq * c2sq)
        grid_value = observables(psi).coherence
        assert abs(swarm - grid_value) < 5e-3


class TestTdpes:
    def test_single_surface_reduces_to_lower_bopes(self):
        # packet kept clear of the coupling region, where the curvature term
        # d12^2/(2M) would otherwise contribute at the 1e-3 level
        model = make_model("single_avoided")
        grid = UniformGrid(-30.0, 30.0, 2048)
        prop = SplitOperatorPropagator(model, grid, 0.1)
        psi = gaussian_packet(grid, center=-15.0, momentum=10.0, sigma=1.5, state=1)
        values, mask = gauge_invariant_tdpes(prop, psi)
        lower = prop.surfaces.energies[:, 0]
        assert mask.any()
        assert np.nanmax(np.abs(values[mask] - lower[mask])) < 1e-4
        assert np.all(np.isnan(values[~mask]))

    def test_gauge_invariance_under_common_phase(self, model_a_run):
        psi = model_a_run["base"]["psi"]
        prop = model_a_run["base"]["prop"]
        values, mask = gauge_invariant_tdpes(prop, psi)
        theta = 0.2 * np.sin(0.3 * psi.grid.positions) + 0.05 * psi.grid.positions
        twisted = GridWavefunction(psi.grid, psi.amps * np.exp(1j * theta), psi.time)
        twisted_values, twisted_mask = gauge_invariant_tdpes(prop, twisted)
        assert np.array_equal(mask, twisted_mask)
        assert np.nanmax(np.abs(values[mask] - twisted_values[mask])) < 1e-10


class TestChannels:
    def test_fully_transmitted_single_surface(self):
        grid = UniformGrid(-30.0, 30.0, 1024)
        psi = gaussian_packet(grid, center=15.0, momentum=10.0, sigma=1.0, state=1)
        ch = channel_probabilities(psi, r_split=0.0)
        assert ch.t1 == pytest.approx(1.0, abs=1e-9)
        assert ch.t2 == pytest.approx(0.0, abs=1e-12)
        assert ch.r1 == pytest.approx(0.0, abs=1e-12)
        assert ch.r2 == pytest.approx(0.0, abs=1e-12)
        assert not ch.unsettled

    def test_channels_sum_to_one(self, model_a_run):
        ch = channel_probabilities(model_a_run["base"]["psi"])
        assert ch.t1 + ch.t2 + ch.r1 + ch.r2 == pytest.approx(1.0, abs=1e-9)

    def test_unsettled_flag(self):
        grid = UniformGrid(-30.0, 30.0, 1024)
        psi = gaussian_packet(grid, center=0.0, momentum=10.0, sigma=1.0, state=1)
        assert channel_probabilities(psi, r_split=0.0).unsettled

    def test_edge_probability(self):
        grid = UniformGrid(-30.0, 30.0, 1024)
        psi = gaussian_packet(grid, center=0.0, momentum=10.0, sigma=1.0, state=1)
        assert edge_probability(psi, width=2.0) < 1e-12
        assert edge_probability(psi, width=31.0) == pytest.approx(1.0, abs=1e-12)
