"""Fixed-step classical RK4 integration.

One solver serves three paths: ground-truth data generation, the short
training rollouts that gradients flow through, and long evaluation rollouts.
The step code is generic over the state type: anything supporting `+` and
multiplication by a float works, so the same function integrates plain numpy
arrays and recorded autodiff variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence


@dataclass(frozen=True)
class IntegratorConfig:
    """Solver settings.

    `step` is the target substep for ground-truth integration (the actual
    substep never exceeds it); `substeps_per_label` is the fixed substep count
    used when rolling out a learned model between labels.
    """

    method: str = "RK4"
    step: float = 1e-3
    substeps_per_label: int = 10

    def __post_init__(self):
        if self.method != "RK4":
            raise ValueError(f"unknown integration method {self.method!r}")
        if not self.step > 0.0:
            raise ValueError("step must be positive")
        if self.substeps_per_label < 1:
            raise ValueError("substeps_per_label must be >= 1")


def rk4_step(f: Callable, z, t: float, h: float):
    """One classical fourth-order Runge-Kutta update from (z, t) with step h."""
    k1 = f(z, t)
    k2 = f(z + (0.5 * h) * k1, t + 0.5 * h)
    k3 = f(z + (0.5 * h) * k2, t + 0.5 * h)
    k4 = f(z + h * k3, t + h)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rollout(f: Callable, z0, times: Sequence[float], substeps: int = 1) -> list:
    """Integrate f from z0 through the requested times.

    times[0] is the time of z0 and the first output is z0 itself; each later
    state is reached from the previous one by `substeps` equal RK4 substeps.
    """
    times = [float(t) for t in times]
    for a, b in zip(times, times[1:]):
        if not b > a:
            raise ValueError("times must be strictly increasing")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    out = [z0]
    z = z0
    for t_prev, t_next in zip(times, times[1:]):
        h = (t_next - t_prev) / substeps
        for i in range(substeps):
            z = rk4_step(f, z, t_prev + i * h, h)
        out.append(z)
    return out


def substeps_for(spacing: float, max_step: float) -> int:
    """Smallest substep count so the actual substep does not exceed max_step."""
    if not spacing > 0.0 or not max_step > 0.0:
        raise ValueError("spacing and max_step must be positive")
    n = math.ceil(spacing / max_step - 1e-12)
    return max(n, 1)
