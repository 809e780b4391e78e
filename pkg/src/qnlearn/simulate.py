"""Exact stochastic simulation of the network's Markov chain.

States are integer queue-length vectors; the only transitions move one
client from station i to station j, at rate P[i,j] * mu_i * min(x_i, s_i).
`simulate_ssa` runs the Gillespie algorithm (exponential holding times by
inverse transform, categorical event choice), `ensemble_average` averages
many independent replications on a uniform grid to estimate the mean
dynamics that the fluid model approximates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import QnModel, require_valid
from .trace import Trace


@dataclass(frozen=True)
class JumpEvent:
    """One client finishing at ``from_station`` and joining ``to_station``.

    Station indices are 0-based.
    """

    from_station: int
    to_station: int


@dataclass(frozen=True)
class EnsembleConfig:
    """Replication count, horizon and grid for ensemble averaging.

    The produced trace has H = round(T/dt) + 1 points, so its realized
    horizon is (H-1)*dt.  Replication r draws its seed from the child
    sequence SeedSequence(master_seed).spawn(...)[r], which keeps runs
    reproducible and replications independent.
    """

    replications: int
    T: float
    dt: float
    master_seed: int = 0

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")
        if self.dt <= 0 or self.T <= 0:
            raise ValueError(f"T and dt must be positive, got T={self.T}, dt={self.dt}")

    @property
    def H(self) -> int:
        H = int(round(self.T / self.dt)) + 1
        if H < 2:
            raise ValueError(f"horizon {self.T} spans fewer than 2 grid points at dt={self.dt}")
        return H


@dataclass(frozen=True, eq=False)
class SsaPath:
    """Piecewise-constant sample path: ``states[k]`` holds from ``times[k]``
    (inclusive) until the next event."""

    times: np.ndarray
    states: np.ndarray
    T: float

    def state_at(self, t: float) -> np.ndarray:
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.states[idx]


def _check_initial_state(m: QnModel, x0) -> np.ndarray:
    x0 = np.atleast_1d(np.asarray(x0))
    if x0.shape != (m.M,):
        raise ValueError(f"x0 has length {x0.shape[0]}, expected {m.M}")
    if x0.dtype.kind == "f":
        if not np.all(x0 == np.floor(x0)):
            raise ValueError("x0 must contain integers")
        x0 = x0.astype(np.int64)
    else:
        x0 = x0.astype(np.int64)
    if np.any(x0 < 0):
        raise ValueError("x0 must be non-negative")
    return x0


def transition_rates(m: QnModel, x) -> list[tuple[JumpEvent, float]]:
    """Enabled jumps and their rates at state ``x``; zero-rate pairs are
    omitted."""
    require_valid(m)
    x = _check_initial_state(m, x)
    out = []
    for i in range(m.M):
        w = m.mu[i] * min(int(x[i]), int(m.s[i]))
        if w <= 0:
            continue
        for j in range(m.M):
            if i == j:
                continue
            rate = w * m.P[i, j]
            if rate > 0:
                out.append((JumpEvent(i, j), float(rate)))
    return out


def simulate_ssa(m: QnModel, x0, T: float, seed) -> SsaPath:
    """Gillespie simulation up to time ``T``, deterministic given ``seed``.

    ``seed`` may be an int, a SeedSequence, or a Generator.  If the total
    rate hits zero the state freezes until T.  The path conserves the
    population exactly at every event.
    """
    require_valid(m)
    x0 = _check_initial_state(m, x0)
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    times, states = _kernels.ssa_path(
        np.ascontiguousarray(m.P), np.ascontiguousarray(m.mu), m.s.astype(np.int64), x0, float(T), rng
    )
    return SsaPath(times=times, states=states, T=float(T))


def sample_path_on_grid(path: SsaPath, dt: float, H: int) -> np.ndarray:
    """Read a path at grid times h*dt, h = 0..H-1.

    The state at a grid time is the one immediately before or at it: an
    event landing exactly on a grid point is included.
    """
    idx = np.searchsorted(path.times, np.arange(H) * dt, side="right") - 1
    return path.states[idx].astype(np.float64)


def replication_seeds(master_seed: int, replications: int) -> list[np.random.SeedSequence]:
    """Per-replication child seeds derived from one master seed."""
    return np.random.SeedSequence(master_seed).spawn(replications)


def ensemble_average(m: QnModel, x0, cfg: EnsembleConfig) -> Trace:
    """Average ``cfg.replications`` independent paths on the uniform grid.

    Replications are accumulated in index order, so the result is
    bit-stable for a fixed master seed and replication count.
    """
    require_valid(m)
    x0 = _check_initial_state(m, x0)
    H = cfg.H
    P = np.ascontiguousarray(m.P)
    mu = np.ascontiguousarray(m.mu)
    s = m.s.astype(np.int64)
    acc = np.zeros((H, m.M))
    for child in replication_seeds(cfg.master_seed, cfg.replications):
        rng = np.random.default_rng(child)
        acc += _kernels.ssa_sample_grid(P, mu, s, x0, float(cfg.dt), H, rng)
    return Trace(dt=cfg.dt, samples=acc / cfg.replications)
