"""Closed queuing-network models: types, validation, random generation,
and the self-loop elimination transform.

A network is described by per-station concurrency levels ``s``, service
rates ``mu``, and a row-stochastic routing matrix ``P``.  Canonical models
have an empty diagonal (no self loops): any network with self loops has a
loop-free counterpart with identical fluid dynamics, obtained by
:func:`selfloop_transform`, so the loop-free form is the representative
this package works with.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: absolute tolerance for "row sums to one" checks
ROW_SUM_TOL = 1e-9


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a)
    out.flags.writeable = False
    return out


def _as_station_counts(s) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(s))
    if arr.dtype.kind == "f" and arr.size and np.all(arr == np.floor(arr)):
        arr = arr.astype(np.int64)
    elif arr.dtype.kind in "iu":
        arr = arr.astype(np.int64)
    return arr


@dataclass(frozen=True, eq=False)
class QnModel:
    """A closed queuing network: concurrency levels, service rates, routing.

    Construction only coerces array types; use :func:`validate_model` to
    check the invariants (row-stochastic zero-diagonal ``P``, ``mu >= 0``,
    ``s >= 1``).  Instances are immutable and safe to share across tasks.
    """

    s: np.ndarray
    mu: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "s", _freeze(_as_station_counts(self.s)))
        object.__setattr__(self, "mu", _freeze(np.atleast_1d(np.asarray(self.mu, dtype=np.float64))))
        object.__setattr__(self, "P", _freeze(np.atleast_2d(np.asarray(self.P, dtype=np.float64))))

    @property
    def M(self) -> int:
        return self.P.shape[0]


@dataclass(frozen=True)
class SelfLoopSpec:
    """Target self-loop probabilities, one per station, each in [0, 1)."""

    pi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pi", _freeze(np.atleast_1d(np.asarray(self.pi, dtype=np.float64))))


@dataclass(frozen=True)
class RandomQnConfig:
    """Sampling ranges for random benchmark networks.

    ``rate_range`` is a closed real interval, ``server_range`` a closed
    integer interval; both endpoints are included.
    """

    M: int
    rate_range: tuple[float, float] = (4.0, 30.0)
    server_range: tuple[int, int] = (15, 30)
    seed: int = 0

    def __post_init__(self):
        if self.rate_range[0] <= 0 or self.rate_range[1] < self.rate_range[0]:
            raise ValueError(f"rate_range must be a positive interval, got {self.rate_range}")
        if self.server_range[0] < 1 or self.server_range[1] < self.server_range[0]:
            raise ValueError(f"server_range lower bound must be >= 1, got {self.server_range}")


def validate_model(m: QnModel) -> list[str]:
    """Check all model invariants; return one message per violation.

    An empty list means the model is valid.  Stations are named 1-based
    in the messages.
    """
    violations: list[str] = []
    P = m.P
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        violations.append(f"P is not square: shape {P.shape}")
        return violations
    M = P.shape[0]
    if m.mu.shape != (M,):
        violations.append(f"mu has length {m.mu.shape[0]}, expected {M}")
    if m.s.shape != (M,):
        violations.append(f"s has length {m.s.shape[0]}, expected {M}")

    if not np.all(np.isfinite(P)):
        violations.append("P has non-finite entries")
    else:
        for i in range(M):
            row = P[i]
            neg = np.flatnonzero(row < 0)
            for j in neg:
                violations.append(f"P[{i + 1}][{j + 1}] negative ({row[j]:.12g})")
            rs = float(row.sum())
            if abs(rs - 1.0) > ROW_SUM_TOL:
                violations.append(f"P row {i + 1} sums to {rs:.12g}")
            if P[i, i] != 0.0:
                violations.append(f"P[{i + 1}][{i + 1}] nonzero (self loop)")

    if m.mu.shape == (M,):
        if not np.all(np.isfinite(m.mu)):
            violations.append("mu has non-finite entries")
        for i in np.flatnonzero(m.mu < 0):
            violations.append(f"mu[{i + 1}] negative ({m.mu[i]:.12g})")

    if m.s.shape == (M,):
        if m.s.dtype.kind not in "iu":
            violations.append("s has non-integer entries")
        else:
            for i in np.flatnonzero(m.s < 1):
                violations.append(f"s[{i + 1}] less than 1 ({m.s[i]})")
    return violations


def require_valid(m: QnModel) -> None:
    """Raise ValueError listing all violations if the model is invalid."""
    violations = validate_model(m)
    if violations:
        raise ValueError("invalid model: " + "; ".join(violations))


def random_model(cfg: RandomQnConfig) -> QnModel:
    """Draw a random fully-connected network, deterministic in ``cfg.seed``.

    Rates are uniform on ``rate_range``, concurrency levels uniform on the
    integer ``server_range``.  Each routing row takes M-1 uniform (0, 1]
    off-diagonal weights, a zero diagonal, and is normalized to sum 1.
    """
    if cfg.M < 2:
        raise ValueError("a closed network without self loops needs at least 2 stations")
    rng = np.random.default_rng(cfg.seed)
    mu = rng.uniform(cfg.rate_range[0], cfg.rate_range[1], cfg.M)
    s = rng.integers(cfg.server_range[0], cfg.server_range[1] + 1, cfg.M)
    P = np.zeros((cfg.M, cfg.M))
    for i in range(cfg.M):
        weights = 1.0 - rng.random(cfg.M - 1)  # uniform on (0, 1]
        P[i, :i] = weights[:i]
        P[i, i + 1 :] = weights[i:]
        P[i] /= P[i].sum()
    return QnModel(s=s, mu=mu, P=P)


def selfloop_transform(P, mu, spec: SelfLoopSpec) -> tuple[np.ndarray, np.ndarray]:
    """Rewrite a network so its routing diagonal equals ``spec.pi``.

    The input may have any self-loop probabilities (including 1).  For
    each station k the row is rescaled so that the diagonal becomes
    pi[k] while every product P[k,i]*mu[k] (i != k) and the net
    drain (P[k,k]-1)*mu[k] are preserved, which leaves the fluid
    dynamics unchanged.  A station with P[k,k] = 1 never emits
    clients, so its rate collapses to 0 and the row is spread
    uniformly off the diagonal.

    Returns the rewritten ``(P_hat, mu_hat)``.
    """
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    pi = spec.pi
    M = P.shape[0]
    if M < 2:
        raise ValueError("need at least 2 stations")
    if P.shape != (M, M) or mu.shape != (M,) or pi.shape != (M,):
        raise ValueError(f"dimension mismatch: P {P.shape}, mu {mu.shape}, pi {pi.shape}")
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > ROW_SUM_TOL):
        raise ValueError("input routing matrix is not row-stochastic")
    if np.any(mu < 0):
        raise ValueError("mu must be non-negative")
    if np.any(pi < 0) or np.any(pi >= 1):
        raise ValueError("pi entries must lie in [0, 1)")

    P_hat = np.empty_like(P)
    mu_hat = np.empty_like(mu)
    for k in range(M):
        pkk = P[k, k]
        if pkk < 1.0:
            P_hat[k] = P[k] * ((1.0 - pi[k]) / (1.0 - pkk))
            mu_hat[k] = mu[k] * ((pkk - 1.0) / (pi[k] - 1.0))
        else:
            P_hat[k] = (1.0 - pi[k]) / (M - 1)
            mu_hat[k] = 0.0
        P_hat[k, k] = pi[k]
    return P_hat, mu_hat
