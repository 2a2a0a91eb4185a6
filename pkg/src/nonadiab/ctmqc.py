"""Coupled-trajectory mixed quantum-classical engine.

Trajectories carry complex expansion coefficients on the two adiabatic
states plus the time-integrated adiabatic force of each state.  Once per
global step the ensemble is gathered: state-projected Gaussian moments give
a linear model of the quantum momentum, whose intercept is fixed so that
the decoherence terms exchange no net population when the non-adiabatic
couplings vanish.  Nuclei integrate with velocity Verlet, coefficients with
substepped fourth-order Runge-Kutta; the gathered quantities stay frozen
within a step.

With the quantum momentum disabled the same code path is exactly the
Ehrenfest mean-field method.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalAbort
from .models import DiabaticModel, SurfaceData, adiabatic_table
from .sampling import InitialConditions

__all__ = [
    "POPULATION_FLOOR",
    "WEIGHT_FLOOR",
    "VARIANCE_FLOOR",
    "GaussianMoments",
    "QuantumMomentumFrame",
    "accumulate_force_integral",
    "state_gaussian_moments",
    "quantum_momentum",
    "ehrenfest_force",
    "decoherence_force",
    "ctmqc_force",
    "electronic_rhs",
    "gauge_residual",
    "pairwise_quantum_momentum",
    "multilevel_decoherence",
    "TrajectoryEngine",
    "CoupledTrajectoryEngine",
    "EhrenfestEngine",
]

POPULATION_FLOOR = 1e-8  # ensemble population below which a state is inactive
WEIGHT_FLOOR = 1e-10  # intercept denominator floor
CANCELLATION_FLOOR = 1e-2  # min |sum w| / sum |w| for a well-defined crossover
VARIANCE_FLOOR = 1e-8  # bohr^2; collapsed Gaussians carry no width information
REGION_MARGIN = 1.0  # Gaussian widths added around the inter-center interval


def accumulate_force_integral(force_integrals, grad_start, grad_end, dt):
    """Trapezoidal update of the per-state time-integrated adiabatic force."""
    return force_integrals - 0.5 * dt * (np.asarray(grad_start) + np.asarray(grad_end))


@dataclass
class GaussianMoments:
    """Population-weighted mean and width of each state-projected density."""

    means: np.ndarray  # (2,)
    variances: np.ndarray  # (2,) in the exp[-x^2/sigma^2] convention
    active: np.ndarray  # (2,) bool: ensemble population above the floor


def state_gaussian_moments(
    positions, state_weights, population_floor: float = POPULATION_FLOOR
) -> GaussianMoments:
    """Moments of the state-projected trajectory distributions.

    The variance carries the factor-two convention of the Gaussian model
    exp[-(R - mean)^2 / sigma^2]: two equal-weight points at +-1 give
    sigma^2 = 2.  Inactive states keep zero moments.
    """
    positions = np.asarray(positions, dtype=float)
    state_weights = np.asarray(state_weights, dtype=float)
    n_states = state_weights.shape[1]
    means = np.zeros(n_states)
    variances = np.zeros(n_states)
    active = state_weights.mean(axis=0) >= population_floor
    for l in range(n_states):
        if not active[l]:
            continue
        w = state_weights[:, l] / state_weights[:, l].sum()
        means[l] = np.sum(w * positions)
        variances[l] = 2.0 * np.sum(w * (positions - means[l]) ** 2)
    return GaussianMoments(means=means, variances=variances, active=active)


@dataclass
class QuantumMomentumFrame:
    """Per-trajectory quantum momentum plus the gathered quantities behind it."""

    values: np.ndarray  # (n_traj,)
    moments: GaussianMoments
    intercept: float | None = None
    active: bool = False


def quantum_momentum(
    positions,
    coefficients,
    force_integrals,
    *,
    population_floor: float = POPULATION_FLOOR,
    weight_floor: float = WEIGHT_FLOOR,
    variance_floor: float = VARIANCE_FLOOR,
    region_margin: float = REGION_MARGIN,
) -> QuantumMomentumFrame:
    """Linear quantum-momentum model over the trajectory ensemble.

    Slope per trajectory: alpha = sum_l |C_l|^2 / sigma_l^2, dropping any
    state whose Gaussian has collapsed below the variance floor.  The
    intercept is the alpha- and weight-averaged position with weights
    rho_11 rho_22 (f_1 - f_2); both the intercept sums and the returned
    values are restricted to trajectories within the interval spanned by
    the two Gaussian centers, extended by ``region_margin`` Gaussian widths
    per lobe.  The margin keeps the construction live while the lobes still
    overlap (before the densities split, the bare inter-center interval is
    empty and the splitting could never seed itself); far outside the
    interval the linear model is untrustworthy and the value is zero.
    Gating the intercept sums over the same set keeps the ensemble-summed
    population flux of the decoherence terms identically zero when the
    couplings vanish.  Degenerate cases degrade to zero everywhere: an
    unpopulated state, collapsed widths, a weight sum that vanishes or
    cancels below CANCELLATION_FLOOR of its magnitude (no coherent
    crossover direction), or a fitted crossover point outside the gate
    interval (the linear model has left its validity domain).
    """
    positions = np.asarray(positions, dtype=float)
    rho = np.abs(np.asarray(coefficients)) ** 2
    f = np.asarray(force_integrals, dtype=float)
    zeros = np.zeros(len(positions))
    moments = state_gaussian_moments(positions, rho, population_floor)
    if not moments.active.all():
        return QuantumMomentumFrame(values=zeros, moments=moments)

    usable = moments.variances >= variance_floor
    if not usable.any():
        return QuantumMomentumFrame(values=zeros, moments=moments)
    inv_var = np.where(usable, 1.0 / np.where(usable, moments.variances, 1.0), 0.0)
    alpha = rho @ inv_var  # (n_traj,)

    widths = np.sqrt(np.where(usable, moments.variances, 0.0))
    lo = np.min(moments.means - region_margin * widths)
    hi = np.max(moments.means + region_margin * widths)
    inside = (positions >= lo) & (positions <= hi)
    weights = rho[:, 0] * rho[:, 1] * (f[:, 0] - f[:, 1])
    gated = np.where(inside, alpha * weights, 0.0)
    denom = gated.sum()
    if abs(denom) < max(weight_floor, CANCELLATION_FLOOR * np.abs(gated).sum()):
        return QuantumMomentumFrame(values=zeros, moments=moments)
    intercept = float(np.sum(gated * positions) / denom)
    if not lo <= intercept <= hi:
        return QuantumMomentumFrame(values=zeros, moments=moments)
    values = np.where(inside, alpha * (positions - intercept), 0.0)
    return QuantumMomentumFrame(values=values, moments=moments, intercept=intercept, active=True)


def ehrenfest_force(surfaces: SurfaceData, coefficients) -> np.ndarray:
    """Mean-field force: population-weighted gradients plus the coupling term."""
    rho = np.abs(coefficients) ** 2
    force = -np.sum(rho * surfaces.gradients, axis=-1)
    gap = surfaces.energies[..., 1] - surfaces.energies[..., 0]
    re12 = (coefficients[..., 0].conj() * coefficients[..., 1]).real
    return force - 2.0 * gap * surfaces.nacv * re12


def decoherence_force(coefficients, force_integrals, qmom, mass: float) -> np.ndarray:
    """Quantum-momentum correction to the classical force."""
    rho = np.abs(coefficients) ** 2
    f = np.asarray(force_integrals)
    fbar = np.sum(rho * f, axis=-1, keepdims=True)
    return -(2.0 * qmom / mass) * np.sum(rho * f * (fbar - f), axis=-1)


def ctmqc_force(surfaces: SurfaceData, coefficients, force_integrals, qmom, mass: float):
    """Total classical force: Ehrenfest part plus the decoherence correction."""
    return ehrenfest_force(surfaces, coefficients) + decoherence_force(
        coefficients, force_integrals, qmom, mass
    )


def electronic_rhs(coefficients, energies, nacv, velocity, force_integrals, qmom, mass: float):
    """Time derivative of the expansion coefficients (hbar = 1).

    First two terms are the adiabatic phase and the coupling-driven
    population exchange shared with mean-field methods; the third is the
    quantum-momentum decoherence term.
    """
    c1 = coefficients[..., 0]
    c2 = coefficients[..., 1]
    rho = np.abs(coefficients) ** 2
    f = np.asarray(force_integrals)
    fbar = np.sum(rho * f, axis=-1)
    vd = velocity * nacv
    rate = qmom / mass
    dc1 = -1j * energies[..., 0] * c1 - vd * c2 - rate * (fbar - f[..., 0]) * c1
    dc2 = -1j * energies[..., 1] * c2 + vd * c1 - rate * (fbar - f[..., 1]) * c2
    return np.stack([dc1, dc2], axis=-1)


def gauge_residual(surfaces: SurfaceData, coefficients, force_integrals, momenta, qmom, mass):
    """Numerical-accuracy check of the phase-fixing condition.

    Evaluates the approximate potential (mean surface energy plus the
    electronic time-derivative term, with the coefficient derivative taken
    from the equation of motion and the basis drift along the trajectory)
    minus the vector-potential term, then adds that term back.  Analytically
    zero; the float value measures cancellation error of the separately
    computed pieces.
    """
    coefficients = np.asarray(coefficients)
    rho = np.abs(coefficients) ** 2
    f = np.asarray(force_integrals)
    velocity = momenta / mass
    dC = electronic_rhs(
        coefficients, surfaces.energies, surfaces.nacv, velocity, f, qmom, mass
    )
    mean_energy = np.sum(rho * surfaces.energies, axis=-1)
    rho12 = coefficients[..., 0].conj() * coefficients[..., 1]
    phi_dot = np.sum(coefficients.conj() * dC, axis=-1) + velocity * surfaces.nacv * (
        rho12 - rho12.conj()
    )
    vector_potential = np.sum(rho * f, axis=-1) + 2.0 * surfaces.nacv * rho12.imag
    eps_apx = mean_energy + (-1j * phi_dot).real - velocity * vector_potential
    return eps_apx + velocity * vector_potential


def pairwise_quantum_momentum(
    positions,
    coefficients,
    force_integrals,
    *,
    population_floor: float = POPULATION_FLOOR,
    weight_floor: float = WEIGHT_FLOOR,
    variance_floor: float = VARIANCE_FLOOR,
    region_margin: float = REGION_MARGIN,
):
    """Pairwise quantum momenta for an N-state ensemble.

    Returns (qmom_pairs, moments) with qmom_pairs of shape (n_traj, S, S),
    symmetric in the state pair; inactive pairs are zero.  For each active
    pair the construction mirrors the two-state case restricted to the
    pair-projected density, with the crossover point weighted by
    (rho_ll + rho_kk) rho_ll rho_kk (f_k - f_l), and is exact on the same
    zero-net-transfer identity per pair.
    """
    positions = np.asarray(positions, dtype=float)
    rho = np.abs(np.asarray(coefficients)) ** 2
    f = np.asarray(force_integrals, dtype=float)
    n_traj, n_states = rho.shape
    moments = state_gaussian_moments(positions, rho, population_floor)
    qmom_pairs = np.zeros((n_traj, n_states, n_states))
    usable = moments.active & (moments.variances >= variance_floor)
    inv_var = np.where(usable, 1.0 / np.where(usable, moments.variances, 1.0), 0.0)
    widths = np.sqrt(np.where(usable, moments.variances, 0.0))
    for l in range(n_states):
        for k in range(l + 1, n_states):
            if not (moments.active[l] and moments.active[k]):
                continue
            pair_pop = rho[:, l] + rho[:, k]
            safe = np.where(pair_pop > 0, pair_pop, 1.0)
            alpha = (rho[:, l] * inv_var[l] + rho[:, k] * inv_var[k]) / safe
            if not (usable[l] or usable[k]):
                continue
            lo = min(
                moments.means[l] - region_margin * widths[l],
                moments.means[k] - region_margin * widths[k],
            )
            hi = max(
                moments.means[l] + region_margin * widths[l],
                moments.means[k] + region_margin * widths[k],
            )
            inside = (positions >= lo) & (positions <= hi)
            weights = pair_pop * rho[:, l] * rho[:, k] * (f[:, k] - f[:, l])
            gated = np.where(inside, alpha * weights, 0.0)
            denom = gated.sum()
            if abs(denom) < max(weight_floor, CANCELLATION_FLOOR * np.abs(gated).sum()):
                continue
            intercept = np.sum(gated * positions) / denom
            if not lo <= intercept <= hi:
                continue
            values = np.where(inside, alpha * (positions - intercept), 0.0)
            qmom_pairs[:, l, k] = values
            qmom_pairs[:, k, l] = values
    return qmom_pairs, moments


def multilevel_decoherence(
    positions,
    coefficients,
    force_integrals,
    mass: float,
    *,
    population_floor: float = POPULATION_FLOOR,
    weight_floor: float = WEIGHT_FLOOR,
    variance_floor: float = VARIANCE_FLOOR,
):
    """Decoherence rates and force for an N-state ensemble.

    Returns (rates, force): dC_l/dt gains -rates[:, l] * C_l and the
    classical force gains ``force``.  Pair contributions carry the
    1/(n_active - 1) prefactor, counted over states above the population
    floor so that embedding a two-state problem in a larger container
    leaves the dynamics unchanged.
    """
    rho = np.abs(np.asarray(coefficients)) ** 2
    f = np.asarray(force_integrals, dtype=float)
    n_traj, n_states = rho.shape
    qmom_pairs, moments = pairwise_quantum_momentum(
        positions,
        coefficients,
        force_integrals,
        population_floor=population_floor,
        weight_floor=weight_floor,
        variance_floor=variance_floor,
    )
    rates = np.zeros((n_traj, n_states))
    n_active = int(moments.active.sum())
    if n_active < 2:
        return rates, np.zeros(n_traj)
    prefactor = 1.0 / (n_active - 1)
    for l in range(n_states):
        for k in range(n_states):
            if k == l:
                continue
            rates[:, l] += (
                prefactor
                * (qmom_pairs[:, l, k] / mass)
                * (rho[:, l] + rho[:, k])
                * rho[:, k]
                * (f[:, k] - f[:, l])
            )
    force = -2.0 * np.sum(rho * f * rates, axis=-1)
    return rates, force


@dataclass
class EngineDiagnostics:
    """Worst-case integration diagnostics accumulated over a run."""

    norm_drift_max: float = 0.0
    gauge_residual_max: float = 0.0
    norm_drift_last: float = 0.0
    gauge_residual_last: float = 0.0


class TrajectoryEngine:
    """Velocity-Verlet / substepped-RK4 integrator over a trajectory ensemble.

    Base class implements the coupled-trajectory method; the quantum
    momentum can be disabled, which reduces the identical code path to
    Ehrenfest dynamics.
    """

    method = "ctmqc"

    def __init__(
        self,
        model: DiabaticModel,
        initial: InitialConditions,
        dt: float = 0.5,
        *,
        use_quantum_momentum: bool = True,
        substeps: int = 10,
        threads: int = 1,
    ):
        if dt <= 0:
            raise ValueError("dt must be positive")
        if substeps < 1:
            raise ValueError("substeps must be >= 1")
        self.model = model
        self.dt = dt
        self.substeps = substeps
        self.use_quantum_momentum = use_quantum_momentum
        self.threads = max(1, int(threads))
        self._pool = ThreadPoolExecutor(max_workers=self.threads) if self.threads > 1 else None

        self.n_traj = initial.n_traj
        self.positions = np.array(initial.positions, dtype=float)
        self.momenta = np.array(initial.momenta, dtype=float)
        self.coefficients = np.zeros((self.n_traj, 2), dtype=complex)
        self.coefficients[:, initial.initial_state - 1] = 1.0
        self.force_integrals = np.zeros((self.n_traj, 2))
        self.surfaces = self._electronic_structure(self.positions, None)
        self.time = 0.0
        self.step_count = 0
        self.diagnostics = EngineDiagnostics()
        self.last_qmom = np.zeros(self.n_traj)

    # -- electronic structure ------------------------------------------------
    def _electronic_structure(self, positions, prev_evec1):
        if self._pool is None or self.n_traj < 2 * self.threads:
            return adiabatic_table(self.model, positions, prev_evec1=prev_evec1)
        chunks = np.array_split(np.arange(self.n_traj), self.threads)

        def work(idx):
            prev = None if prev_evec1 is None else prev_evec1[idx]
            return adiabatic_table(self.model, positions[idx], prev_evec1=prev)

        parts = list(self._pool.map(work, chunks))
        return SurfaceData(
            positions=np.asarray(positions),
            energies=np.concatenate([p.energies for p in parts]),
            gradients=np.concatenate([p.gradients for p in parts]),
            nacv=np.concatenate([p.nacv for p in parts]),
            evec1=np.concatenate([p.evec1 for p in parts]),
        )

    # -- per-step hooks ------------------------------------------------------
    def _gather(self) -> np.ndarray:
        if not self.use_quantum_momentum:
            return np.zeros(self.n_traj)
        frame = quantum_momentum(self.positions, self.coefficients, self.force_integrals)
        return frame.values

    def _begin_force(self, qmom) -> np.ndarray:
        return ctmqc_force(
            self.surfaces, self.coefficients, self.force_integrals, qmom, self.model.mass
        )

    def _end_force(self, qmom, surfaces, coefficients, force_integrals) -> np.ndarray:
        return ctmqc_force(surfaces, coefficients, force_integrals, qmom, self.model.mass)

    # -- integration ---------------------------------------------------------
    def _propagate_coefficients(self, start, end, velocity, qmom):
        """Substepped RK4 across one nuclear step with linear interpolation.

        ``start``/``end`` are (energies, nacv, force_integrals) tuples at the
        step endpoints; the quantum momentum and velocity stay frozen.
        """
        eps0, nacv0, f0 = start
        eps1, nacv1, f1 = end
        mass = self.model.mass

        def rhs(theta, C):
            eps = eps0 + theta * (eps1 - eps0)
            nacv = nacv0 + theta * (nacv1 - nacv0)
            f = f0 + theta * (f1 - f0)
            return electronic_rhs(C, eps, nacv, velocity, f, qmom, mass)

        C = self.coefficients
        h = self.dt / self.substeps
        for s in range(self.substeps):
            ta = s / self.substeps
            tm = (s + 0.5) / self.substeps
            tb = (s + 1.0) / self.substeps
            k1 = rhs(ta, C)
            k2 = rhs(tm, C + 0.5 * h * k1)
            k3 = rhs(tm, C + 0.5 * h * k2)
            k4 = rhs(tb, C + h * k3)
            C = C + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return C

    def step(self, n_steps: int = 1):
        mass = self.model.mass
        for _ in range(n_steps):
            qmom = self._gather()
            force = self._begin_force(qmom)
            half_momenta = self.momenta + 0.5 * self.dt * force
            new_positions = self.positions + self.dt * half_momenta / mass
            new_surfaces = self._electronic_structure(new_positions, self.surfaces.evec1)
            new_f = accumulate_force_integral(
                self.force_integrals, self.surfaces.gradients, new_surfaces.gradients, self.dt
            )
            new_coefficients = self._propagate_coefficients(
                (self.surfaces.energies, self.surfaces.nacv, self.force_integrals),
                (new_surfaces.energies, new_surfaces.nacv, new_f),
                half_momenta / mass,
                qmom,
            )
            force_end = self._end_force(qmom, new_surfaces, new_coefficients, new_f)
            new_momenta = half_momenta + 0.5 * self.dt * force_end

            self.positions = new_positions
            self.momenta = new_momenta
            self.coefficients = new_coefficients
            self.force_integrals = new_f
            self.surfaces = new_surfaces
            self.last_qmom = qmom
            self.time += self.dt
            self.step_count += 1
            self._post_step()
            self._check_finite()
            self._update_diagnostics(qmom)
        return self

    def _post_step(self):
        """Hook for subclasses (hop decisions etc.)."""

    def _check_finite(self):
        bad = ~(
            np.isfinite(self.positions)
            & np.isfinite(self.momenta)
            & np.all(np.isfinite(self.coefficients.view(float).reshape(self.n_traj, -1)), axis=1)
        )
        if bad.any():
            idx = int(np.argmax(bad))
            raise NumericalAbort(
                "non-finite trajectory state", trajectory=idx, step=self.step_count
            )

    def _update_diagnostics(self, qmom):
        norm_err = float(np.max(np.abs(np.sum(np.abs(self.coefficients) ** 2, axis=1) - 1.0)))
        resid = gauge_residual(
            self.surfaces,
            self.coefficients,
            self.force_integrals,
            self.momenta,
            qmom,
            self.model.mass,
        )
        resid_max = float(np.max(np.abs(resid)))
        d = self.diagnostics
        d.norm_drift_last = norm_err
        d.gauge_residual_last = resid_max
        d.norm_drift_max = max(d.norm_drift_max, norm_err)
        d.gauge_residual_max = max(d.gauge_residual_max, resid_max)

    # -- observables ---------------------------------------------------------
    @property
    def state_weights(self) -> np.ndarray:
        return np.abs(self.coefficients) ** 2

    def populations(self) -> np.ndarray:
        return self.state_weights.mean(axis=0)

    def coherence(self) -> float:
        # always from the coefficients, also for surface hopping where the
        # population observable is the surface count instead
        rho = np.abs(self.coefficients) ** 2
        return float(np.mean(rho[:, 0] * rho[:, 1]))

    def mean_field_energy(self) -> np.ndarray:
        """Per-trajectory classical energy sum: populations-weighted surface + kinetic."""
        potential = np.sum(self.state_weights * self.surfaces.energies, axis=-1)
        return potential + self.momenta**2 / (2.0 * self.model.mass)

    def surface_mean_energy(self) -> np.ndarray:
        """Per-trajectory population-weighted surface energy (potential reconstruction)."""
        return np.sum(self.state_weights * self.surfaces.energies, axis=-1)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=False)
            self._pool = None


class CoupledTrajectoryEngine(TrajectoryEngine):
    method = "ctmqc"

    def __init__(self, model, initial, dt=0.5, **kwargs):
        kwargs.setdefault("use_quantum_momentum", True)
        super().__init__(model, initial, dt, **kwargs)


class EhrenfestEngine(TrajectoryEngine):
    method = "ehrenfest"

    def __init__(self, model, initial, dt=0.5, **kwargs):
        kwargs["use_quantum_momentum"] = False
        super().__init__(model, initial, dt, **kwargs)
