"""Fit routing probabilities and service rates to measured traces.

The forward model is the Euler recurrence of :mod:`qnlearn.fluid`,
unrolled over the trace grid; training differentiates the max-relative
error through that recurrence in reverse mode (backpropagation through
time) and takes Adam steps on unconstrained weights.  Feasibility is
maintained by construction: the routing matrix is the row-normalization
of non-negative weights with a hard zero diagonal, rates are clamped to
[0, inf) after every update, so every iterate materializes to a valid
model.

Fixed subgradient conventions (the loss is piecewise smooth):
the time step attaining the max is the lowest index on ties, sign(0) = 0
in the L1 term, and d min(x, s)/dx = 1 at the tie x = s.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import QnModel, require_valid
from .trace import Dataset, Trace


@dataclass(frozen=True, eq=False)
class RawParams:
    """Unconstrained weights: non-negative routing weights with zero
    diagonal (``w_P``) and non-negative rate weights (``w_mu``)."""

    w_P: np.ndarray
    w_mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w_P", np.asarray(self.w_P, dtype=np.float64))
        object.__setattr__(self, "w_mu", np.asarray(self.w_mu, dtype=np.float64))

    @property
    def M(self) -> int:
        return self.w_mu.shape[0]


@dataclass(frozen=True, eq=False)
class Gradients:
    w_P: np.ndarray
    w_mu: np.ndarray


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    patience_iters: int = 50
    min_improvement_pct: float = 0.01
    max_iters: int = 10_000
    init_seed: int = 0
    train_fraction: float = 0.5

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
        if self.patience_iters < 1:
            raise ValueError("patience_iters must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


@dataclass(eq=False)
class AdamState:
    """First/second moment estimates and the step counter."""

    m_P: np.ndarray
    v_P: np.ndarray
    m_mu: np.ndarray
    v_mu: np.ndarray
    step: int = 0

    @classmethod
    def fresh(cls, M: int) -> "AdamState":
        return cls(
            m_P=np.zeros((M, M)),
            v_P=np.zeros((M, M)),
            m_mu=np.zeros(M),
            v_mu=np.zeros(M),
        )


@dataclass(frozen=True, eq=False)
class TrainReport:
    """Outcome of a training run.

    ``loss_history`` rows are (iteration, mean training error, validation
    error); row 0 describes the initialized parameters before any update.
    ``final_validation_err_pct`` is the error of the returned snapshot,
    which is the best validation iterate, not the last one.
    """

    learned_model: QnModel
    loss_history: tuple[tuple[int, float, float], ...]
    stop_reason: str
    iterations: int
    final_validation_err_pct: float


def materialize(raw: RawParams, s) -> QnModel:
    """Turn raw weights into a feasible model: rows of ``w_P`` normalized
    to probabilities, rates taken as-is."""
    w_P = raw.w_P
    M = raw.M
    if w_P.shape != (M, M):
        raise ValueError(f"w_P has shape {w_P.shape}, expected {(M, M)}")
    if np.any(w_P < 0) or np.any(raw.w_mu < 0):
        raise ValueError("raw weights must be non-negative")
    if np.any(np.diag(w_P) != 0):
        raise ValueError("w_P diagonal must be zero")
    row_sums = w_P.sum(axis=1)
    for i in np.flatnonzero(row_sums <= 0):
        raise ValueError(f"degenerate routing row {i + 1}: all weights zero")
    return QnModel(s=s, mu=raw.w_mu, P=w_P / row_sums[:, None])


def _check_pair(m: QnModel, trace: Trace) -> None:
    require_valid(m)
    if trace.M != m.M:
        raise ValueError(f"trace has {trace.M} stations, model has {m.M}")
    if trace.N <= 0:
        raise ValueError("trace population must be positive")


def trace_error(predicted: np.ndarray, measured: np.ndarray, N: float) -> float:
    """Max-over-time L1 gap, normalized by 2N, in percent.

    Counts the worst fraction of misplaced clients: each misplaced client
    is missing from one queue and extra in another, hence the factor 2.
    The comparison starts at step 1 (step 0 is the shared initial state).
    """
    gaps = np.abs(measured[1:] - predicted[1:]).sum(axis=1)
    return float(gaps.max()) / (2.0 * N) * 100.0


def loss(m: QnModel, trace: Trace) -> float:
    """Prediction error of the model against one trace, starting the
    forward pass from the trace's own initial row."""
    _check_pair(m, trace)
    traj = _kernels.euler_forward(
        np.ascontiguousarray(m.P),
        np.ascontiguousarray(m.mu),
        m.s.astype(np.float64),
        trace.samples[0].copy(),
        float(trace.dt),
        trace.H,
    )
    return trace_error(traj, trace.samples, trace.N)


def _param_gradients(P, mu, s_float, trace: Trace) -> tuple[float, np.ndarray, np.ndarray]:
    """Error and its gradients w.r.t. the materialized (P, mu)."""
    samples = np.ascontiguousarray(trace.samples)
    traj = _kernels.euler_forward(P, mu, s_float, samples[0].copy(), float(trace.dt), trace.H)
    return _kernels.euler_backward(P, mu, s_float, samples, traj, float(trace.dt))


def _chain_row_normalization(w_P: np.ndarray, grad_P: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. P back to the unnormalized row weights.

    With P[i] = w[i] / S_i the quotient rule gives
    d/dw[i,j] = (grad_P[i,j] - sum_l grad_P[i,l] * P[i,l]) / S_i.
    """
    row_sums = w_P.sum(axis=1, keepdims=True)
    P = w_P / row_sums
    g = (grad_P - (grad_P * P).sum(axis=1, keepdims=True)) / row_sums
    np.fill_diagonal(g, 0.0)
    return g


def raw_gradients(raw: RawParams, s, trace: Trace) -> tuple[float, Gradients]:
    """Error and its gradients w.r.t. the raw weights."""
    m = materialize(raw, s)
    _check_pair(m, trace)
    err, gP, gmu = _param_gradients(
        np.ascontiguousarray(m.P), np.ascontiguousarray(m.mu), m.s.astype(np.float64), trace
    )
    return err, Gradients(w_P=_chain_row_normalization(raw.w_P, gP), w_mu=gmu)


def backward(m: QnModel, trace: Trace) -> Gradients:
    """Gradients of :func:`loss` w.r.t. raw weights, taken at the
    preimage w_P = P, w_mu = mu (rows already sum to one)."""
    _check_pair(m, trace)
    _, grads = raw_gradients(RawParams(w_P=m.P.copy(), w_mu=m.mu.copy()), m.s, trace)
    return grads


def adam_step(
    raw: RawParams, grads: Gradients, state: AdamState, cfg: TrainConfig
) -> tuple[RawParams, AdamState]:
    """One bias-corrected Adam update followed by the feasibility
    projection: clamp to [0, inf), zero the routing diagonal, and reseed
    any all-zero routing row uniformly at 1/(M-1)."""
    t = state.step + 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2

    m_P = b1 * state.m_P + (1 - b1) * grads.w_P
    v_P = b2 * state.v_P + (1 - b2) * grads.w_P**2
    m_mu = b1 * state.m_mu + (1 - b1) * grads.w_mu
    v_mu = b2 * state.v_mu + (1 - b2) * grads.w_mu**2

    c1 = 1 - b1**t
    c2 = 1 - b2**t
    w_P = raw.w_P - cfg.learning_rate * (m_P / c1) / (np.sqrt(v_P / c2) + cfg.adam_epsilon)
    w_mu = raw.w_mu - cfg.learning_rate * (m_mu / c1) / (np.sqrt(v_mu / c2) + cfg.adam_epsilon)

    np.clip(w_P, 0.0, None, out=w_P)
    np.clip(w_mu, 0.0, None, out=w_mu)
    M = raw.M
    np.fill_diagonal(w_P, 0.0)
    dead = np.flatnonzero(w_P.sum(axis=1) <= 0)
    for i in dead:
        w_P[i] = 1.0 / (M - 1)
        w_P[i, i] = 0.0

    return RawParams(w_P=w_P, w_mu=w_mu), AdamState(m_P=m_P, v_P=v_P, m_mu=m_mu, v_mu=v_mu, step=t)


def split_dataset(n_traces: int, train_fraction: float, seed_seq) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic shuffle-split into training and validation indices."""
    perm = np.random.default_rng(seed_seq).permutation(n_traces)
    n_train = int(round(train_fraction * n_traces))
    n_train = min(max(n_train, 1), n_traces - 1)
    return perm[:n_train], perm[n_train:]


def initial_params(M: int, seed_seq) -> RawParams:
    """Near-uniform routing prior with randomized tie-breaking; rates
    start inside an order of magnitude of typical service speeds."""
    rng = np.random.default_rng(seed_seq)
    w_P = rng.uniform(0.5, 1.5, (M, M))
    np.fill_diagonal(w_P, 0.0)
    w_mu = rng.uniform(1.0, 10.0, M)
    return RawParams(w_P=w_P, w_mu=w_mu)


def train(dataset: Dataset, s, cfg: TrainConfig = TrainConfig()) -> TrainReport:
    """Full-batch Adam with validation-based early stopping.

    Traces are shuffle-split once; every iteration accumulates the error
    gradients over all training traces (fixed order, so runs are
    bit-reproducible), applies one Adam step, then scores the mean error
    on the validation traces.  Training stops when the validation error
    has not improved by at least ``min_improvement_pct`` percentage
    points within the last ``patience_iters`` iterations, or at
    ``max_iters``.  The returned model is the snapshot with the best
    validation error seen.
    """
    if len(dataset) < 2:
        raise ValueError("need at least 2 traces to split into training and validation")
    s = np.atleast_1d(np.asarray(s)).astype(np.int64)
    if s.shape != (dataset.M,):
        raise ValueError(f"s has length {s.shape[0]}, expected {dataset.M}")

    split_seq, init_seq = np.random.SeedSequence(cfg.init_seed).spawn(2)
    train_idx, val_idx = split_dataset(len(dataset), cfg.train_fraction, split_seq)
    train_traces = [dataset.traces[i] for i in train_idx]
    val_traces = [dataset.traces[i] for i in val_idx]

    raw = initial_params(dataset.M, init_seq)
    state = AdamState.fresh(dataset.M)
    s_float = s.astype(np.float64)

    def batch_pass(params: RawParams) -> tuple[float, Gradients]:
        m = materialize(params, s)
        P = np.ascontiguousarray(m.P)
        mu = np.ascontiguousarray(m.mu)
        err_sum = 0.0
        gP_sum = np.zeros((dataset.M, dataset.M))
        gmu_sum = np.zeros(dataset.M)
        for tr in train_traces:
            err, gP, gmu = _param_gradients(P, mu, s_float, tr)
            err_sum += err
            gP_sum += gP
            gmu_sum += gmu
        grads = Gradients(w_P=_chain_row_normalization(params.w_P, gP_sum), w_mu=gmu_sum)
        return err_sum / len(train_traces), grads

    def validation_error(params: RawParams) -> float:
        m = materialize(params, s)
        return sum(loss(m, tr) for tr in val_traces) / len(val_traces)

    train_loss, grads = batch_pass(raw)
    val_err = validation_error(raw)
    history: list[tuple[int, float, float]] = [(0, train_loss, val_err)]

    best_raw, best_val = raw, val_err
    patience_ref = val_err
    wait = 0
    iterations = 0
    stop_reason = "max_iters"

    for it in range(1, cfg.max_iters + 1):
        raw, state = adam_step(raw, grads, state, cfg)
        iterations = it
        val_err = validation_error(raw)

        if val_err < best_val:
            best_raw, best_val = raw, val_err
        if val_err < patience_ref - cfg.min_improvement_pct:
            patience_ref = val_err
            wait = 0
        else:
            wait += 1

        train_loss, grads = batch_pass(raw)
        history.append((it, train_loss, val_err))

        if wait >= cfg.patience_iters:
            stop_reason = "patience"
            break

    return TrainReport(
        learned_model=materialize(best_raw, s),
        loss_history=tuple(history),
        stop_reason=stop_reason,
        iterations=iterations,
        final_validation_err_pct=best_val,
    )
