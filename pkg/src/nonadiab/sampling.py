"""Initial-condition generation for trajectory ensembles.

Phase-space points come from the Wigner transform of the initial Gaussian
packet, or from the fixed-momentum variant used in momentum scans.  Draws
use a counter-based generator keyed by (seed, trajectory index), so each
trajectory's sample is independent of worker count and sampling order.

With the density convention |chi|^2 ~ exp[-(R-Rc)^2/sigma^2], the Wigner
function of the packet factorizes into Gaussians with position standard
deviation sigma/sqrt(2) and momentum standard deviation 1/(sigma*sqrt(2))
(hbar = 1); their product saturates the uncertainty bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["InitialConditions", "sample_wigner", "sample_fixed_momentum"]

# stream tags keep independent draws (positions/momenta vs. hop decisions)
# from ever sharing a counter stream
POSITION_STREAM = 0
HOP_STREAM = 1


def substream(seed: int, index: int, stream: int = POSITION_STREAM) -> np.random.Generator:
    """Deterministic per-trajectory generator, independent of worker layout."""
    key = (np.uint64(seed), (np.uint64(stream) << np.uint64(56)) + np.uint64(index))
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class InitialConditions:
    """Sampled phase-space points plus the initially occupied surface."""

    positions: np.ndarray
    momenta: np.ndarray
    initial_state: int
    seed: int

    def __post_init__(self):
        if len(self.positions) != len(self.momenta):
            raise ValueError("positions and momenta must have equal length")

    @property
    def n_traj(self) -> int:
        return len(self.positions)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n_traj, 1.0 / self.n_traj)


def _draw_pairs(n_traj: int, seed: int) -> np.ndarray:
    z = np.empty((n_traj, 2))
    for index in range(n_traj):
        z[index] = substream(seed, index).standard_normal(2)
    return z


def sample_wigner(
    center: float,
    momentum: float,
    sigma: float,
    n_traj: int,
    seed: int,
    initial_state: int = 1,
) -> InitialConditions:
    """Positions and momenta from the packet's Wigner distribution."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    z = _draw_pairs(n_traj, seed)
    positions = center + (sigma / np.sqrt(2.0)) * z[:, 0]
    momenta = momentum + z[:, 1] / (sigma * np.sqrt(2.0))
    return InitialConditions(positions, momenta, initial_state, seed)


def sample_fixed_momentum(
    center: float,
    momentum: float,
    sigma: float,
    n_traj: int,
    seed: int,
    initial_state: int = 1,
) -> InitialConditions:
    """Gaussian positions; every trajectory carries exactly ``momentum``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    z = _draw_pairs(n_traj, seed)
    positions = center + (sigma / np.sqrt(2.0)) * z[:, 0]
    momenta = np.full(n_traj, float(momentum))
    return InitialConditions(positions, momenta, initial_state, seed)
