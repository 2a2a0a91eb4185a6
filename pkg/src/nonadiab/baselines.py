"""Independent-trajectory baselines sharing the ensemble integrator.

Ehrenfest is the coupled-trajectory code path with the quantum momentum
disabled (re-exported here).  Surface hopping propagates coefficients
coherently, moves nuclei on one adiabatic surface and hops stochastically
with fewest-switches probabilities.  The lowest-order mixed quantum-
classical method drives the nuclei with the rate of change of the
electronic vector potential, differenced along each trajectory.
"""

from __future__ import annotations

import numpy as np

from .ctmqc import TrajectoryEngine, EhrenfestEngine, ehrenfest_force
from .errors import NumericalAbort
from .models import DiabaticModel
from .sampling import HOP_STREAM, InitialConditions, substream

__all__ = [
    "EhrenfestEngine",
    "SurfaceHoppingEngine",
    "MqcEngine",
    "vector_potential",
]

RHO_FLOOR = 1e-12  # active-state population below which hop probabilities are zero
UNIFORM_CHUNK = 512


def vector_potential(surfaces, coefficients, force_integrals) -> np.ndarray:
    """Electronic vector potential from local trajectory quantities."""
    rho = np.abs(coefficients) ** 2
    rho12 = coefficients[..., 0].conj() * coefficients[..., 1]
    return np.sum(rho * np.asarray(force_integrals), axis=-1) + 2.0 * surfaces.nacv * rho12.imag


class SurfaceHoppingEngine(TrajectoryEngine):
    """Fewest-switches trajectory surface hopping.

    Hop probability out of the active surface a into l is
    max(0, 2 dt (P/M) d_al Re(rho_al) / rho_aa), the positive part of the
    coherent population flux leaving a; on an accepted hop the momentum is
    rescaled along the velocity to conserve kinetic plus active-surface
    energy, and hops without enough kinetic energy are frustrated (surface
    and momentum unchanged).  Each trajectory consumes its own
    counter-based uniform stream, one draw per step.
    """

    method = "tsh"

    def __init__(self, model: DiabaticModel, initial: InitialConditions, dt: float = 0.5, **kwargs):
        kwargs["use_quantum_momentum"] = False
        super().__init__(model, initial, dt, **kwargs)
        self.active = np.full(self.n_traj, initial.initial_state, dtype=int)
        self.hop_log: list[tuple[int, int, int, int, bool]] = []
        self._hop_rngs = [substream(initial.seed, i, HOP_STREAM) for i in range(self.n_traj)]
        # one uniform per trajectory per step, pre-drawn in memory-bounded blocks
        self._chunk = max(8, min(UNIFORM_CHUNK, (1 << 22) // max(1, self.n_traj)))
        self._uniforms = np.empty((self.n_traj, 0))
        self._uniform_pos = 0

    def _next_uniforms(self) -> np.ndarray:
        if self._uniform_pos >= self._uniforms.shape[1]:
            self._uniforms = np.stack([rng.random(self._chunk) for rng in self._hop_rngs])
            self._uniform_pos = 0
        column = self._uniforms[:, self._uniform_pos]
        self._uniform_pos += 1
        return column

    def _active_index(self):
        return np.arange(self.n_traj), self.active - 1

    def _begin_force(self, qmom):
        rows, cols = self._active_index()
        return -self.surfaces.gradients[rows, cols]

    def _end_force(self, qmom, surfaces, coefficients, force_integrals):
        rows, cols = self._active_index()
        return -surfaces.gradients[rows, cols]

    def _post_step(self):
        rows, cols = self._active_index()
        other = 3 - self.active  # the only other state in a two-state model
        rho_active = np.abs(self.coefficients[rows, cols]) ** 2
        rho12 = self.coefficients[:, 0].conj() * self.coefficients[:, 1]
        # coherent flux out of the active state into the other one
        velocity = self.momenta / self.model.mass
        flux = 2.0 * velocity * self.surfaces.nacv * rho12.real
        flux = np.where(self.active == 2, -flux, flux)
        safe = np.where(rho_active > RHO_FLOOR, rho_active, 1.0)
        prob = np.where(rho_active > RHO_FLOOR, np.maximum(0.0, self.dt * flux / safe), 0.0)
        if np.any(prob > 1.0):
            raise NumericalAbort(
                "hop probability exceeded 1; time step too large",
                trajectory=int(np.argmax(prob > 1.0)),
                step=self.step_count,
            )
        attempt = self._next_uniforms() < prob
        if not attempt.any():
            return
        idx = np.flatnonzero(attempt)
        eps = self.surfaces.energies
        gap = eps[idx, self.active[idx] - 1] - eps[idx, other[idx] - 1]
        new_sq = self.momenta[idx] ** 2 + 2.0 * self.model.mass * gap
        accepted = new_sq >= 0.0
        for where, ok in zip(idx, accepted):
            self.hop_log.append(
                (int(where), self.step_count, int(self.active[where]), int(other[where]), bool(ok))
            )
        ok_idx = idx[accepted]
        self.momenta[ok_idx] = np.sign(self.momenta[ok_idx]) * np.sqrt(new_sq[accepted])
        self.active[ok_idx] = other[ok_idx]

    @property
    def state_weights(self) -> np.ndarray:
        weights = np.zeros((self.n_traj, 2))
        weights[np.arange(self.n_traj), self.active - 1] = 1.0
        return weights

    def active_surface_energy(self) -> np.ndarray:
        rows, cols = self._active_index()
        return self.surfaces.energies[rows, cols] + self.momenta**2 / (2.0 * self.model.mass)


class MqcEngine(TrajectoryEngine):
    """Independent-trajectory method with the vector-potential-rate force.

    Coefficients evolve with the mean-field terms only; the classical force
    is the one-step backward difference of the vector potential along the
    trajectory.  The very first step has no history and uses the Ehrenfest
    force.
    """

    method = "mqc"

    def __init__(self, model: DiabaticModel, initial: InitialConditions, dt: float = 0.5, **kwargs):
        kwargs["use_quantum_momentum"] = False
        super().__init__(model, initial, dt, **kwargs)
        self._vecpot_prev = vector_potential(
            self.surfaces, self.coefficients, self.force_integrals
        )
        self._pending_force = ehrenfest_force(self.surfaces, self.coefficients)

    def _begin_force(self, qmom):
        return self._pending_force

    def _end_force(self, qmom, surfaces, coefficients, force_integrals):
        vecpot = vector_potential(surfaces, coefficients, force_integrals)
        force = (vecpot - self._vecpot_prev) / self.dt
        self._vecpot_prev = vecpot
        self._pending_force = force
        return force
