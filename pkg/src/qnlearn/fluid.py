"""Mean-field fluid dynamics of a closed queuing network.

One ODE per station approximates the average queue length: station k
drains at rate mu_k * min(x_k, s_k) and receives the drained flow of the
other stations weighted by the routing matrix.  The forward model used
throughout the package is the explicit Euler discretization of that ODE;
the training module differentiates through this exact recurrence, so no
higher-order integrator is offered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import QnModel, require_valid
from .trace import GridSpec, Trace


@dataclass(frozen=True, eq=False)
class FluidState:
    """A queue-length vector together with the concurrency caps that
    apply to it; ``u`` is the effective number of busy servers."""

    x: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=np.float64)))
        object.__setattr__(self, "s", np.atleast_1d(np.asarray(self.s, dtype=np.float64)))
        if self.x.shape != self.s.shape:
            raise ValueError(f"x has shape {self.x.shape}, s has shape {self.s.shape}")

    @property
    def u(self) -> np.ndarray:
        return np.minimum(self.x, self.s)


def fluid_rhs(m: QnModel, x) -> np.ndarray:
    """Instantaneous drift of the queue-length vector at state ``x``.

    The result sums to zero: the network is closed, inflow equals
    outflow in aggregate.
    """
    require_valid(m)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (m.M,):
        raise ValueError(f"state has length {x.shape[0]}, expected {m.M}")
    if np.any(x < 0):
        raise ValueError("queue lengths must be non-negative")
    w = m.mu * np.minimum(x, m.s)
    return w @ m.P - w


def forward_trajectory(m: QnModel, x0, grid: GridSpec) -> Trace:
    """Euler-integrate the fluid ODE from ``x0`` over ``grid``.

    Step h is x_h = x_{h-1} + dt * rhs(x_{h-1}).  Values are not clamped:
    with a too-large dt*mu the scheme can momentarily undershoot zero, and
    leaving that visible keeps the recurrence identical to the one the
    trainer differentiates.  Choose dt with dt*max(mu) well below 1.
    """
    require_valid(m)
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    if x0.shape != (m.M,):
        raise ValueError(f"x0 has length {x0.shape[0]}, expected {m.M}")
    if np.any(x0 < 0):
        raise ValueError("x0 must be non-negative")
    traj = _kernels.euler_forward(
        np.ascontiguousarray(m.P),
        np.ascontiguousarray(m.mu),
        m.s.astype(np.float64),
        x0,
        float(grid.dt),
        int(grid.H),
    )
    return Trace(dt=grid.dt, samples=traj)
