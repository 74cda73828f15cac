"""Exact springy double pendulum: parameters, energies, and Hamilton's equations.

Two point masses hang from a fixed pivot in 3-D, connected pivot -> mass 1 ->
mass 2 by ideal springs, moving under uniform gravity.  This module is the
ground truth for everything else: the learned models are judged against
trajectories integrated from the analytic vector field defined here.

The analytic force expressions are hand-derived and tested against finite
differences of the energy, so ground truth never depends on the autodiff
stack used for learning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class CoincidentPointError(ValueError):
    """Raised when a spring endpoint pair coincides and the force direction is undefined."""


def _vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class SystemParams:
    """Masses, spring constants, rest lengths, pivot position and gravity.

    Units: kg, N/m, m, m/s^2.  Masses and spring constants must be strictly
    positive; rest lengths nonnegative.
    """

    m1: float = 1.0
    m2: float = 1.0
    k1: float = 10.0
    k2: float = 10.0
    l1: float = 1.0
    l2: float = 1.0
    qo: np.ndarray = None  # type: ignore[assignment]
    g: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        for name in ("m1", "m2", "k1", "k2"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")
        for name in ("l1", "l2"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        qo = _vec3(self.qo if self.qo is not None else (0.0, 0.0, 0.0))
        g = _vec3(self.g if self.g is not None else (0.0, 0.0, -9.8))
        qo.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "qo", qo)
        object.__setattr__(self, "g", g)

    def to_dict(self) -> dict:
        return {
            "m1": self.m1, "m2": self.m2,
            "k1": self.k1, "k2": self.k2,
            "l1": self.l1, "l2": self.l2,
            "qo": list(self.qo), "g": list(self.g),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SystemParams":
        return cls(**d)


@dataclass(frozen=True)
class PhaseState:
    """One system state: positions q1, q2 (m) and momenta p1, p2 (kg m/s)."""

    q1: np.ndarray
    q2: np.ndarray
    p1: np.ndarray
    p2: np.ndarray

    def __post_init__(self):
        for name in ("q1", "q2", "p1", "p2"):
            v = _vec3(getattr(self, name))
            v.flags.writeable = False
            object.__setattr__(self, name, v)

    def to_flat(self) -> np.ndarray:
        """Flatten to the 12-vector (q1, q2, p1, p2)."""
        return np.concatenate([self.q1, self.q2, self.p1, self.p2])

    @classmethod
    def from_flat(cls, z: np.ndarray) -> "PhaseState":
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (12,):
            raise ValueError(f"expected a 12-vector, got shape {z.shape}")
        return cls(q1=z[0:3], q2=z[3:6], p1=z[6:9], p2=z[9:12])

    def allfinite(self) -> bool:
        return bool(np.isfinite(self.to_flat()).all())


def hamiltonian_flat(params: SystemParams, z: np.ndarray) -> np.ndarray:
    """Total energy T + U for flat states of shape (..., 12)."""
    z = np.asarray(z, dtype=np.float64)
    q1, q2 = z[..., 0:3], z[..., 3:6]
    p1, p2 = z[..., 6:9], z[..., 9:12]
    t = (p1 * p1).sum(axis=-1) / (2.0 * params.m1) + (p2 * p2).sum(axis=-1) / (2.0 * params.m2)
    d1 = q1 - params.qo
    d2 = q2 - q1
    r1 = np.sqrt((d1 * d1).sum(axis=-1))
    r2 = np.sqrt((d2 * d2).sum(axis=-1))
    u = 0.5 * params.k1 * (r1 - params.l1) ** 2 + 0.5 * params.k2 * (r2 - params.l2) ** 2
    u = u - params.m1 * ((q1 - params.qo) * params.g).sum(axis=-1)
    u = u - params.m2 * ((q2 - params.qo) * params.g).sum(axis=-1)
    return t + u


def hamiltonian(params: SystemParams, state: PhaseState) -> float:
    """Total energy of one state (Joules)."""
    return float(hamiltonian_flat(params, state.to_flat()))


def dynamics_flat(params: SystemParams, z: np.ndarray) -> np.ndarray:
    """Hamilton's equations dz/dt for flat states of shape (..., 12).

    dq_i/dt = p_i / m_i and dp_i/dt = -dU/dq_i with the analytic spring and
    gravity forces.  Raises CoincidentPointError if either spring has zero
    length, where the force direction is undefined.
    """
    z = np.asarray(z, dtype=np.float64)
    q1, q2 = z[..., 0:3], z[..., 3:6]
    p1, p2 = z[..., 6:9], z[..., 9:12]
    d1 = q1 - params.qo
    d2 = q2 - q1
    r1 = np.sqrt((d1 * d1).sum(axis=-1, keepdims=True))
    r2 = np.sqrt((d2 * d2).sum(axis=-1, keepdims=True))
    if np.any(r1 == 0.0) or np.any(r2 == 0.0):
        raise CoincidentPointError("spring endpoints coincide; force direction undefined")
    f1 = params.k1 * (r1 - params.l1) * (d1 / r1)  # tension of spring pivot->1 acting on mass 1
    f2 = params.k2 * (r2 - params.l2) * (d2 / r2)  # tension of spring 1->2 acting on mass 2
    dp1 = -f1 + f2 + params.m1 * params.g
    dp2 = -f2 + params.m2 * params.g
    out = np.empty_like(z)
    out[..., 0:3] = p1 / params.m1
    out[..., 3:6] = p2 / params.m2
    out[..., 6:9] = dp1
    out[..., 9:12] = dp2
    return out


def true_dynamics(params: SystemParams, state: PhaseState) -> PhaseState:
    """Time derivative of one state, returned in the same layout."""
    return PhaseState.from_flat(dynamics_flat(params, state.to_flat()))


def equilibrium_state(params: SystemParams) -> PhaseState:
    """Static equilibrium: both masses at rest, springs stretched to balance gravity.

    For g = 0 the springs sit at their rest lengths along the fixed direction
    (0, 0, -1).
    """
    gnorm = float(np.linalg.norm(params.g))
    if gnorm > 0.0:
        ghat = params.g / gnorm
    else:
        ghat = np.array([0.0, 0.0, -1.0])
    q1 = params.qo + ghat * (params.l1 + (params.m1 + params.m2) * gnorm / params.k1)
    q2 = q1 + ghat * (params.l2 + params.m2 * gnorm / params.k2)
    zero = np.zeros(3)
    return PhaseState(q1=q1, q2=q2, p1=zero, p2=zero)
