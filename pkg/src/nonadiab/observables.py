"""Ensemble estimators: populations, coherence, histograms, channels, scans."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "ChannelResult",
    "ObservableSeries",
    "ensemble_populations",
    "surface_populations",
    "decoherence_indicator",
    "density_histogram",
    "classify_channels",
    "k0_scan",
]

DEFAULT_BIN_WIDTH = 0.2
DEFAULT_SPLIT = 0.0


@dataclass
class ChannelResult:
    """Transmission/reflection probabilities per adiabatic state."""

    t1: float
    t2: float
    r1: float
    r2: float
    unsettled: bool = False

    def total(self) -> float:
        return self.t1 + self.t2 + self.r1 + self.r2

    def as_dict(self) -> dict:
        return {
            "T1": self.t1,
            "T2": self.t2,
            "R1": self.r1,
            "R2": self.r2,
            "unsettled": self.unsettled,
        }


@dataclass
class ObservableSeries:
    """Per-run time series with the metadata needed to compare runs."""

    times: np.ndarray
    populations: np.ndarray  # (len(times), 2)
    coherence: np.ndarray
    method: str
    model: str
    metadata: dict = field(default_factory=dict)


def ensemble_populations(state_weights: np.ndarray) -> np.ndarray:
    """Ensemble-averaged state populations from per-trajectory weights (N, 2)."""
    state_weights = np.asarray(state_weights)
    return state_weights.mean(axis=0)


def surface_populations(active: np.ndarray, n_states: int = 2) -> np.ndarray:
    """Populations as running-surface counts (surface-hopping convention)."""
    active = np.asarray(active)
    return np.bincount(active - 1, minlength=n_states) / active.size


def decoherence_indicator(coefficients: np.ndarray) -> float:
    """Trajectory average of |C1|^2 |C2|^2; 0.25 is maximal coherence."""
    mods = np.abs(np.asarray(coefficients)) ** 2
    return float(np.mean(mods[:, 0] * mods[:, 1]))


def density_histogram(
    positions: np.ndarray,
    state_weights: np.ndarray,
    bin_width: float = DEFAULT_BIN_WIDTH,
    support: tuple[float, float] | None = None,
):
    """Histogram reconstruction of the nuclear and state-projected densities.

    Each trajectory contributes its state weights to its bin; bin mass is
    normalized by trajectory count and bin width so the densities integrate
    to the state populations (and to 1 in total).

    Returns (centers, total_density, state_density_1, state_density_2).
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    positions = np.asarray(positions, dtype=float)
    state_weights = np.asarray(state_weights, dtype=float)
    if support is None:
        lo, hi = positions.min() - bin_width, positions.max() + bin_width
    else:
        lo, hi = support
    n_bins = max(1, int(np.ceil((hi - lo) / bin_width)))
    edges = lo + bin_width * np.arange(n_bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    n_traj = len(positions)
    dens1, _ = np.histogram(positions, bins=edges, weights=state_weights[:, 0])
    dens2, _ = np.histogram(positions, bins=edges, weights=state_weights[:, 1])
    dens1 /= n_traj * bin_width
    dens2 /= n_traj * bin_width
    return centers, dens1 + dens2, dens1, dens2


def classify_channels(
    positions: np.ndarray,
    state_weights: np.ndarray,
    r_split: float = DEFAULT_SPLIT,
    margin: float = 1.0,
) -> ChannelResult:
    """Transmission/reflection mass about ``r_split`` from trajectory weights.

    Works for coefficient methods (fractional weights) and surface hopping
    (one-hot weights per the active surface) alike.  A trajectory within
    ``margin`` of the dividing point marks the result unsettled.
    """
    positions = np.asarray(positions, dtype=float)
    state_weights = np.asarray(state_weights, dtype=float)
    n_traj = len(positions)
    right = positions > r_split
    t1, t2 = state_weights[right].sum(axis=0) / n_traj
    r1, r2 = state_weights[~right].sum(axis=0) / n_traj
    unsettled = bool(np.any(np.abs(positions - r_split) <= margin))
    return ChannelResult(t1=float(t1), t2=float(t2), r1=float(r1), r2=float(r2), unsettled=unsettled)


def k0_scan(
    run_point: Callable[[float], Mapping[str, ChannelResult]],
    k0_values: Sequence[float],
    threads: int = 1,
) -> list[dict]:
    """Run independent scan points and tabulate channel results per method.

    ``run_point`` maps one k0 to {method: ChannelResult}.  A failed point is
    recorded with its error message and the scan continues.  Rows come back
    in k0 order regardless of scheduling.
    """

    def one(k0: float) -> dict:
        try:
            by_method = run_point(k0)
        except Exception as exc:  # noqa: BLE001 - scan rows record their failure
            return {"k0": k0, "error": f"{type(exc).__name__}: {exc}", "channels": {}}
        return {"k0": k0, "error": None, "channels": dict(by_method)}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, k0_values))
    else:
        rows = [one(k0) for k0 in k0_values]
    return rows
