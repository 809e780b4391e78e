"""What-if evaluation of learned models, bottleneck identification, and
error statistics for benchmark reporting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .fluid import forward_trajectory
from .model import QnModel, require_valid, validate_model
from .trace import GridSpec, Trace
from .training import trace_error


@dataclass(frozen=True, eq=False)
class Scenario:
    """A base model exercised under optional unseen conditions.

    Overrides: new concurrency levels ``s``, a new routing matrix ``P``,
    and/or a population scale factor applied to ``x0``.
    """

    base_model: QnModel
    x0: np.ndarray
    s: np.ndarray | None = None
    P: np.ndarray | None = None
    population_scale: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=np.float64)))
        if self.population_scale is not None and self.population_scale < 1:
            raise ValueError(f"population scale must be >= 1, got {self.population_scale}")

    def resolved_model(self) -> QnModel:
        m = self.base_model
        new = QnModel(
            s=m.s if self.s is None else self.s,
            mu=m.mu,
            P=m.P if self.P is None else self.P,
        )
        violations = validate_model(new)
        if violations:
            raise ValueError("scenario overrides invalid: " + "; ".join(violations))
        return new

    def resolved_x0(self) -> np.ndarray:
        k = 1.0 if self.population_scale is None else self.population_scale
        return self.x0 * k


@dataclass(frozen=True, eq=False)
class ErrorSummary:
    """Box-plot statistics of a batch of error values.

    Quartiles use linear interpolation; whiskers reach the most extreme
    points within 1.5 IQR of the box, everything beyond is an outlier.
    """

    values: np.ndarray
    median: float
    p25: float
    p75: float
    whisker_low: float
    whisker_high: float
    outliers: np.ndarray


def whatif(scenario: Scenario, grid: GridSpec) -> Trace:
    """Predicted trajectory of the scenario's model under its overrides."""
    m = scenario.resolved_model()
    x0 = scenario.resolved_x0()
    if x0.shape != (m.M,):
        raise ValueError(f"x0 has length {x0.shape[0]}, expected {m.M}")
    return forward_trajectory(m, x0, grid)


def steady_state(m: QnModel, x0, dt: float | None = None, tol: float = 1e-6) -> np.ndarray:
    """Run the fluid model until two successive grid points differ by
    less than ``tol`` in L1, doubling the horizon as needed.

    The initial horizon combines the slowest service time with the worst
    queue-drain time N/(mu_i * s_i); raises if the trajectory has not
    settled after ~4000x that horizon (an oscillating fluid orbit).
    """
    require_valid(m)
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    if np.any(m.mu <= 0):
        raise ValueError("steady-state analysis needs strictly positive service rates")
    N = float(x0.sum())
    if dt is None:
        dt = 0.2 / float(m.mu.max())
    T = 10.0 * (float((1.0 / m.mu).max()) + float((N / (m.mu * m.s)).max()))
    P = np.ascontiguousarray(m.P)
    mu = np.ascontiguousarray(m.mu)
    s_float = m.s.astype(np.float64)
    chunk = 1 << 16
    for _ in range(12):
        steps = max(int(np.ceil(T / dt)), 1)
        x = x0
        x_prev = x0
        while steps > 0:  # bounded memory: integrate in chunks, keep the tail
            n = min(steps, chunk)
            # kernel call, not forward_trajectory: a chunk may restart from
            # a transiently negative Euler iterate
            traj = _kernels.euler_forward(P, mu, s_float, x, float(dt), n + 1)
            x_prev = traj[-2]
            x = traj[-1]
            steps -= n
        if np.abs(x - x_prev).sum() < tol:
            return x
        T *= 2.0
    raise RuntimeError(f"fluid trajectory did not settle within horizon {T:.6g}")


def bottleneck_from_state(x: np.ndarray, s: np.ndarray) -> int:
    """Station with the highest queue-length-to-servers ratio, lowest
    index on ties."""
    return int(np.argmax(np.asarray(x, dtype=np.float64) / np.asarray(s, dtype=np.float64)))


def find_bottleneck(m: QnModel, x0, grid: GridSpec | None = None) -> int:
    """Bottleneck station (0-based) at the steady state reached from
    ``x0``.

    With an explicit ``grid`` the final grid point is used as the
    steady-state estimate; otherwise the horizon is grown automatically
    until the trajectory settles.
    """
    if grid is None:
        final = steady_state(m, x0)
    else:
        final = forward_trajectory(m, x0, grid).samples[-1]
    return bottleneck_from_state(final, m.s)


def shift_bottleneck(
    m: QnModel, x0, increment: int = 20, max_steps: int = 200
) -> tuple[np.ndarray, int, int]:
    """Add servers to the bottleneck in fixed increments until the
    bottleneck moves elsewhere.

    Returns (new concurrency levels, original bottleneck, new bottleneck).
    """
    if increment < 1:
        raise ValueError("increment must be >= 1")
    original = find_bottleneck(m, x0)
    s = m.s.copy()
    for _ in range(max_steps):
        s[original] += increment
        current = find_bottleneck(QnModel(s=s, mu=m.mu, P=m.P), x0)
        if current != original:
            return s, original, current
    raise RuntimeError(f"bottleneck did not move after {max_steps} increments of {increment}")


def prediction_error(predicted: Trace, ground_truth: Trace) -> float:
    """Max-over-time misplaced-client fraction between two traces, in
    percent; symmetric in its arguments.  Same error as the training
    loss, exposed on two arbitrary traces."""
    if predicted.M != ground_truth.M:
        raise ValueError(f"station counts differ: {predicted.M} vs {ground_truth.M}")
    if predicted.H != ground_truth.H or predicted.dt != ground_truth.dt:
        raise ValueError(
            f"grids differ: (dt={predicted.dt}, H={predicted.H}) vs "
            f"(dt={ground_truth.dt}, H={ground_truth.H})"
        )
    n_a, n_b = predicted.N, ground_truth.N
    N = 0.5 * (n_a + n_b)  # symmetric even under sub-tolerance drift
    if N <= 0:
        raise ValueError("traces must carry a positive population")
    if abs(n_a - n_b) > 1e-6 * N:
        raise ValueError(f"populations differ: {n_a:.12g} vs {n_b:.12g}")
    return trace_error(predicted.samples, ground_truth.samples, N)


def summarize_errors(values) -> ErrorSummary:
    """Box-plot statistics (median, quartiles, whiskers, outliers) of a
    non-empty batch of error values."""
    values = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if values.size == 0:
        raise ValueError("no values to summarize")
    p25, median, p75 = (float(np.percentile(values, q)) for q in (25, 50, 75))
    iqr = p75 - p25
    lo_fence = p25 - 1.5 * iqr
    hi_fence = p75 + 1.5 * iqr
    inside = values[(values >= lo_fence) & (values <= hi_fence)]
    outliers = values[(values < lo_fence) | (values > hi_fence)]
    return ErrorSummary(
        values=values,
        median=median,
        p25=p25,
        p75=p75,
        whisker_low=float(inside.min()),
        whisker_high=float(inside.max()),
        outliers=outliers,
    )
