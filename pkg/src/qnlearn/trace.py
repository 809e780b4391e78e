"""Queue-length traces on a uniform time grid, and collections of them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Uniform sampling grid: step ``dt`` and ``H`` points spanning (H-1)*dt."""

    dt: float
    H: int

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.H < 2:
            raise ValueError(f"H must be at least 2, got {self.H}")

    @property
    def T(self) -> float:
        return (self.H - 1) * self.dt


@dataclass(frozen=True, eq=False)
class Trace:
    """H queue-length vectors sampled every ``dt`` time units.

    Row h holds the (possibly ensemble-averaged, hence fractional) queue
    lengths at time h*dt.  In a closed network every row sums to the
    population N; measured rows satisfy that only within a tolerance,
    so the check lives in :meth:`validate` rather than the constructor.
    Fluid predictions are stored unclamped and may carry small negative
    transients, which :meth:`validate` would flag.
    """

    dt: float
    samples: np.ndarray

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        arr = np.array(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.H < 2:
            raise ValueError(f"a trace needs at least 2 grid points, got {self.H}")

    @property
    def H(self) -> int:
        return self.samples.shape[0]

    @property
    def M(self) -> int:
        return self.samples.shape[1]

    @property
    def N(self) -> float:
        return float(self.samples[0].sum())

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.H) * self.dt

    def grid(self) -> GridSpec:
        return GridSpec(dt=self.dt, H=self.H)

    def validate(self, conservation_tol: float = 1e-6) -> list[str]:
        """Check non-negativity and per-row population conservation.

        ``conservation_tol`` is absolute; ingestion of measured data
        passes a looser, N-scaled value.
        """
        violations: list[str] = []
        N = self.N
        if N <= 0:
            violations.append(f"population is {N:.12g}, must be positive")
        row_sums = self.samples.sum(axis=1)
        bad = np.flatnonzero(np.abs(row_sums - N) > conservation_tol)
        for h in bad:
            violations.append(f"row {h} sums to {row_sums[h]:.12g}, expected {N:.12g}")
        neg_rows = np.flatnonzero((self.samples < 0).any(axis=1))
        for h in neg_rows:
            violations.append(f"row {h} has negative entries")
        return violations


@dataclass(frozen=True, eq=False)
class Dataset:
    """Traces sharing one grid and station set, plus the known concurrency
    levels of the system that produced them."""

    traces: tuple[Trace, ...]
    s: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(self.traces))
        if self.s is not None:
            s = np.atleast_1d(np.asarray(self.s)).astype(np.int64)
            s.flags.writeable = False
            object.__setattr__(self, "s", s)
        if not self.traces:
            raise ValueError("dataset has no traces")
        first = self.traces[0]
        for idx, tr in enumerate(self.traces):
            if tr.M != first.M:
                raise ValueError(f"trace {idx} has {tr.M} stations, expected {first.M}")
            if tr.H != first.H:
                raise ValueError(f"trace {idx} has {tr.H} grid points, expected {first.H}")
            if tr.dt != first.dt:
                raise ValueError(f"trace {idx} has dt={tr.dt}, expected {first.dt}")
        if self.s is not None and self.s.shape != (first.M,):
            raise ValueError(f"s has length {self.s.shape[0]}, expected {first.M}")

    @property
    def M(self) -> int:
        return self.traces[0].M

    @property
    def H(self) -> int:
        return self.traces[0].H

    @property
    def dt(self) -> float:
        return self.traces[0].dt

    def __len__(self) -> int:
        return len(self.traces)
