import numpy as np
import pytest

from qnlearn import Dataset, GridSpec, QnModel, forward_trajectory


@pytest.fixture
def lb_model():
    """Three-station load balancer: requests fan out from the reference
    station to two compute stations and return."""
    return QnModel(
        s=(1000, 30, 25),
        mu=(1.0, 11.0, 11.0),
        P=[[0, 0.5, 0.5], [1, 0, 0], [1, 0, 0]],
    )


@pytest.fixture
def alternating_model():
    """Two stations, one server each, the single client ping-pongs."""
    return QnModel(s=(1, 1), mu=(1.0, 1.0), P=[[0, 1], [1, 0]])


def random_stochastic_with_diagonal(rng, M):
    """Row-stochastic matrix with strictly positive diagonal entries."""
    W = rng.uniform(0.2, 1.0, (M, M))
    return W / W.sum(axis=1, keepdims=True)


def fluid_dataset(truth, n_traces, seed, dt=0.02, H=200, max_pop=12):
    """Noise-free dataset: exact fluid trajectories from random initial
    populations of the given model."""
    rng = np.random.default_rng(seed)
    traces = []
    for _ in range(n_traces):
        x0 = rng.integers(0, max_pop, truth.M).astype(float)
        while x0.sum() == 0:
            x0 = rng.integers(0, max_pop, truth.M).astype(float)
        traces.append(forward_trajectory(truth, x0, GridSpec(dt=dt, H=H)))
    return Dataset(traces=tuple(traces), s=truth.s)
