"""Four 1D two-state diabatic model Hamiltonians and their adiabatization.

Each model provides closed-form diabatic matrix elements H11, H12, H22 and
their R-derivatives.  Adiabatic energies, gradients and the non-adiabatic
coupling come from the analytic 2x2 eigendecomposition plus Hellmann-Feynman
relations; no finite differences anywhere in the production path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

__all__ = [
    "MODEL_KINDS",
    "MODEL_DEFAULTS",
    "DegeneracyError",
    "DiabaticModel",
    "AdiabaticPoint",
    "SurfaceData",
    "make_model",
    "diabatic_elements",
    "diabatic_gradients",
    "diabatic_hamiltonian",
    "adiabatize",
    "adiabatic_point",
    "adiabatic_table",
]

MODEL_KINDS = ("single_avoided", "dual_avoided", "extended_coupling", "double_arch")

MODEL_DEFAULTS: Mapping[str, Mapping[str, float]] = MappingProxyType(
    {
        "single_avoided": MappingProxyType({"a": 0.01, "b": 1.6, "c": 0.005, "d": 1.0}),
        "dual_avoided": MappingProxyType(
            {"a": 0.1, "b": 0.28, "c": 0.015, "d": 0.06, "e0": 0.05}
        ),
        "extended_coupling": MappingProxyType({"a": 6.0e-4, "b": 0.1, "c": 0.9}),
        "double_arch": MappingProxyType({"a": 6.0e-4, "b": 0.1, "c": 0.9, "d": 4.0}),
    }
)

DEFAULT_MASS = 2000.0
GAP_FLOOR = 1.0e-12


class DegeneracyError(RuntimeError):
    """Adiabatic gap fell below the configured floor; coupling is undefined."""


@dataclass(frozen=True)
class DiabaticModel:
    """One of the four parameterized 2x2 diabatic Hamiltonians."""

    kind: str
    params: Mapping[str, float]
    mass: float = DEFAULT_MASS

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.mass <= 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        missing = set(MODEL_DEFAULTS[self.kind]) - set(self.params)
        if missing:
            raise ValueError(f"model {self.kind!r} missing parameters {sorted(missing)}")


def make_model(kind: str, mass: float = DEFAULT_MASS, **overrides: float) -> DiabaticModel:
    """Build a model with SI-standard default parameters, optionally overridden."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    params = dict(MODEL_DEFAULTS[kind])
    unknown = set(overrides) - set(params)
    if unknown:
        raise ValueError(f"model {kind!r} does not take parameters {sorted(unknown)}")
    params.update(overrides)
    return DiabaticModel(kind=kind, params=params, mass=mass)


def diabatic_elements(model: DiabaticModel, R):
    """Return (H11, H12, H22) at position(s) R. Vectorized over R."""
    R = np.asarray(R, dtype=float)
    p = model.params
    if model.kind == "single_avoided":
        a, b, c, d = p["a"], p["b"], p["c"], p["d"]
        h11 = np.where(R > 0, a * (1.0 - np.exp(-b * R)), -a * (1.0 - np.exp(b * R)))
        h22 = -h11
        h12 = c * np.exp(-d * R * R)
    elif model.kind == "dual_avoided":
        a, b, c, d, e0 = p["a"], p["b"], p["c"], p["d"], p["e0"]
        h11 = np.zeros_like(R)
        h22 = -a * np.exp(-b * R * R) + e0
        h12 = c * np.exp(-d * R * R)
    elif model.kind == "extended_coupling":
        a, b, c = p["a"], p["b"], p["c"]
        h11 = np.full_like(R, a)
        h22 = np.full_like(R, -a)
        h12 = np.where(R < 0, b * np.exp(c * R), b * (2.0 - np.exp(-c * R)))
    else:  # double_arch
        a, b, c, d = p["a"], p["b"], p["c"], p["d"]
        h11 = np.full_like(R, a)
        h22 = np.full_like(R, -a)
        left = b * (np.exp(c * (R + d)) - np.exp(c * (R - d)))
        mid = 2.0 * b - b * (np.exp(c * (R - d)) + np.exp(-c * (R + d)))
        right = b * (np.exp(-c * (R - d)) - np.exp(-c * (R + d)))
        h12 = np.where(R < -d, left, np.where(R > d, right, mid))
    return h11, h12, h22


def diabatic_gradients(model: DiabaticModel, R):
    """Return (dH11/dR, dH12/dR, dH22/dR) at position(s) R. Vectorized over R."""
    R = np.asarray(R, dtype=float)
    p = model.params
    if model.kind == "single_avoided":
        a, b, c, d = p["a"], p["b"], p["c"], p["d"]
        g11 = np.where(R > 0, a * b * np.exp(-b * R), a * b * np.exp(b * R))
        g22 = -g11
        g12 = -2.0 * d * c * R * np.exp(-d * R * R)
    elif model.kind == "dual_avoided":
        a, b, c, d, _ = p["a"], p["b"], p["c"], p["d"], p["e0"]
        g11 = np.zeros_like(R)
        g22 = 2.0 * a * b * R * np.exp(-b * R * R)
        g12 = -2.0 * d * c * R * np.exp(-d * R * R)
    elif model.kind == "extended_coupling":
        b, c = p["b"], p["c"]
        g11 = np.zeros_like(R)
        g22 = np.zeros_like(R)
        g12 = np.where(R < 0, b * c * np.exp(c * R), b * c * np.exp(-c * R))
    else:  # double_arch
        b, c, d = p["b"], p["c"], p["d"]
        g11 = np.zeros_like(R)
        g22 = np.zeros_like(R)
        left = b * c * (np.exp(c * (R + d)) - np.exp(c * (R - d)))
        mid = -b * c * np.exp(c * (R - d)) + b * c * np.exp(-c * (R + d))
        right = -b * c * (np.exp(-c * (R - d)) - np.exp(-c * (R + d)))
        g12 = np.where(R < -d, left, np.where(R > d, right, mid))
    return g11, g12, g22


def diabatic_hamiltonian(model: DiabaticModel, R: float) -> np.ndarray:
    """The 2x2 real symmetric diabatic Hamiltonian at a single position."""
    h11, h12, h22 = diabatic_elements(model, float(R))
    return np.array([[h11, h12], [h12, h22]], dtype=float)


def _eigensystem(h11, h12, h22):
    """Closed-form eigendecomposition of a symmetric 2x2 (vectorized).

    Returns (energies[..., 2] ascending, v1[..., 2]) where v1 is the lower
    eigenvector in the canonical per-point gauge: first component >= 0,
    tie broken by second component >= 0.  The upper eigenvector is always
    the 90-degree rotation (-v1y, v1x).
    """
    h11 = np.asarray(h11, dtype=float)
    h12 = np.asarray(h12, dtype=float)
    h22 = np.asarray(h22, dtype=float)
    mean = 0.5 * (h11 + h22)
    delta = 0.5 * (h11 - h22)
    omega = np.hypot(delta, h12)
    energies = np.stack([mean - omega, mean + omega], axis=-1)

    # Branch choice keeps the formula away from its 0/0 limit on either side.
    vx = np.where(delta <= 0, omega - delta, -h12)
    vy = np.where(delta <= 0, -h12, delta + omega)
    norm = np.hypot(vx, vy)
    degenerate = norm == 0.0
    vx = np.where(degenerate, 1.0, vx)
    vy = np.where(degenerate, 0.0, vy)
    norm = np.where(degenerate, 1.0, norm)
    vx, vy = vx / norm, vy / norm
    flip = (vx < 0) | ((vx == 0) & (vy < 0))
    sign = np.where(flip, -1.0, 1.0)
    v1 = np.stack([vx * sign, vy * sign], axis=-1)
    return energies, v1


def adiabatize(H: np.ndarray, prev_sign: int | None = None):
    """Diagonalize one symmetric 2x2 Hamiltonian.

    Returns (energies ascending, eigenvectors as columns, sign).  ``prev_sign``
    carries the gauge chosen at the previous evaluation; without history the
    canonical per-point gauge (first component of the lower vector >= 0) is
    used and sign is +1.
    """
    H = np.asarray(H, dtype=float)
    energies, v1 = _eigensystem(H[0, 0], H[0, 1], H[1, 1])
    sign = 1 if prev_sign is None else int(prev_sign)
    v1 = sign * v1
    v2 = np.array([-v1[1], v1[0]])
    vectors = np.stack([v1, v2], axis=-1)
    return energies, vectors, sign


@dataclass
class AdiabaticPoint:
    """Adiabatic data at one nuclear position.

    ``energies`` ascending (state 1 is the lower surface), ``gradients`` via
    Hellmann-Feynman, ``nacv`` the coupling <1|d/dR|2>, and ``evec_sign`` the
    gauge of the lower eigenvector relative to the canonical per-point choice
    (continuity state for subsequent evaluations).
    """

    position: float
    energies: np.ndarray
    gradients: np.ndarray
    nacv: float
    evec_sign: int = 1
    evec1: np.ndarray = field(default=None, repr=False)


def _hellmann_feynman(model, R, energies, v1, gap_floor):
    """Gradients and NACV from analytic dH/dR sandwiched between eigenvectors."""
    g11, g12, g22 = diabatic_gradients(model, R)
    v1x, v1y = v1[..., 0], v1[..., 1]
    v2x, v2y = -v1y, v1x
    grad1 = g11 * v1x * v1x + 2.0 * g12 * v1x * v1y + g22 * v1y * v1y
    grad2 = g11 * v2x * v2x + 2.0 * g12 * v2x * v2y + g22 * v2y * v2y
    cross = g11 * v1x * v2x + g12 * (v1x * v2y + v1y * v2x) + g22 * v1y * v2y
    gap = energies[..., 1] - energies[..., 0]
    if np.any(gap < gap_floor):
        where = np.asarray(R)[np.asarray(gap) < gap_floor]
        raise DegeneracyError(
            f"adiabatic gap below {gap_floor:g} hartree at R={np.atleast_1d(where)[0]:.6g}"
        )
    gradients = np.stack([grad1, grad2], axis=-1)
    return gradients, cross / gap


def adiabatic_point(
    model: DiabaticModel,
    R: float,
    prev: AdiabaticPoint | None = None,
    gap_floor: float = GAP_FLOOR,
) -> AdiabaticPoint:
    """Full adiabatic evaluation at one position with sign continuity.

    With ``prev`` supplied, the lower eigenvector keeps maximal overlap with
    the previous one; cold start uses the canonical per-point gauge.
    """
    energies, v1 = _eigensystem(*diabatic_elements(model, float(R)))
    sign = 1
    if prev is not None:
        prev_vec = prev.evec1
        if prev_vec is None:
            _, prev_hat = _eigensystem(*diabatic_elements(model, float(prev.position)))
            prev_vec = prev.evec_sign * prev_hat
        if float(np.dot(prev_vec, v1)) < 0.0:
            sign = -1
    v1 = sign * v1
    gradients, nacv = _hellmann_feynman(model, float(R), energies, v1, gap_floor)
    return AdiabaticPoint(
        position=float(R),
        energies=energies,
        gradients=gradients,
        nacv=float(nacv),
        evec_sign=sign,
        evec1=v1,
    )


@dataclass
class SurfaceData:
    """Vectorized adiabatic data over an array of positions."""

    positions: np.ndarray
    energies: np.ndarray  # (..., 2) ascending
    gradients: np.ndarray  # (..., 2)
    nacv: np.ndarray  # (...,)
    evec1: np.ndarray  # (..., 2) lower eigenvector, gauge-resolved


def adiabatic_table(
    model: DiabaticModel,
    R,
    *,
    sweep_continuity: bool = False,
    prev_evec1: np.ndarray | None = None,
    gap_floor: float = GAP_FLOOR,
) -> SurfaceData:
    """Adiabatic surfaces, gradients and NACV over an array of positions.

    ``sweep_continuity=True`` resolves the eigenvector gauge sequentially
    along the array (for grids and parameter sweeps); ``prev_evec1`` resolves
    it element-wise against a previous evaluation (for trajectory ensembles).
    """
    R = np.asarray(R, dtype=float)
    energies, v1 = _eigensystem(*diabatic_elements(model, R))
    if sweep_continuity and R.ndim == 1 and R.size > 1:
        dots = np.sum(v1[1:] * v1[:-1], axis=-1)
        steps = np.where(dots < 0, -1.0, 1.0)
        signs = np.concatenate([[1.0], np.cumprod(steps)])
        v1 = v1 * signs[:, None]
    elif prev_evec1 is not None:
        dots = np.sum(v1 * prev_evec1, axis=-1)
        v1 = v1 * np.where(dots < 0, -1.0, 1.0)[..., None]
    gradients, nacv = _hellmann_feynman(model, R, energies, v1, gap_floor)
    return SurfaceData(positions=R, energies=energies, gradients=gradients, nacv=nacv, evec1=v1)
