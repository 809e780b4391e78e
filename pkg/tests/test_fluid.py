import numpy as np
import pytest

from qnlearn import (
    FluidState,
    GridSpec,
    QnModel,
    RandomQnConfig,
    SelfLoopSpec,
    fluid_rhs,
    forward_trajectory,
    random_model,
    selfloop_transform,
)
from qnlearn._kernels import euler_forward

from conftest import random_stochastic_with_diagonal


def test_fluid_state_utilization():
    state = FluidState(x=(26.0, 86.0, 0.0), s=(1000, 30, 25))
    assert np.array_equal(state.u, (26.0, 30.0, 0.0))
    assert np.all(state.u <= state.s)
    with pytest.raises(ValueError):
        FluidState(x=(1.0, 2.0), s=(1, 2, 3))


def hand_rhs(P, mu, s, x):
    """Independent per-station drift: inflow from every other station
    minus own drain, straight from the transition structure."""
    M = len(x)
    out = []
    for k in range(M):
        inflow = sum(P[i][k] * mu[i] * min(x[i], s[i]) for i in range(M) if i != k)
        out.append(inflow - mu[k] * min(x[k], s[k]))
    return out


class TestFluidRhs:
    def test_load_balancer_example(self, lb_model):
        rhs = fluid_rhs(lb_model, (26, 86, 0))
        assert np.allclose(rhs, (304.0, -317.0, 13.0), atol=1e-12)
        assert abs(rhs.sum()) < 1e-12

    def test_empty_network_is_still(self, lb_model):
        assert np.array_equal(fluid_rhs(lb_model, (0, 0, 0)), np.zeros(3))

    def test_sums_to_zero_on_random_states(self):
        rng = np.random.default_rng(5)
        for seed in range(20):
            m = random_model(RandomQnConfig(M=2 + seed % 5, seed=seed))
            x = rng.uniform(0, 50, m.M)
            rhs = fluid_rhs(m, x)
            assert abs(rhs.sum()) < 1e-12 * max(np.abs(rhs).max(), 1.0)
            assert np.allclose(rhs, hand_rhs(m.P, m.mu, m.s, x), rtol=1e-12, atol=1e-12)

    def test_dimension_mismatch(self, lb_model):
        with pytest.raises(ValueError):
            fluid_rhs(lb_model, (1, 2))

    def test_negative_state_rejected(self, lb_model):
        with pytest.raises(ValueError):
            fluid_rhs(lb_model, (-1, 2, 3))


class TestForwardTrajectory:
    def test_one_step_example(self, lb_model):
        trace = forward_trajectory(lb_model, (26.0, 86.0, 0.0), GridSpec(dt=0.01, H=2))
        assert np.allclose(trace.samples[1], (29.04, 82.83, 0.13), atol=1e-12)
        # independent single-step oracle
        expected = np.array((26.0, 86.0, 0.0)) + 0.01 * np.array(
            hand_rhs(lb_model.P, lb_model.mu, lb_model.s, (26.0, 86.0, 0.0))
        )
        assert np.allclose(trace.samples[1], expected, rtol=1e-14, atol=1e-14)

    def test_two_point_grid_is_single_euler_step(self, lb_model):
        x0 = np.array([3.0, 7.0, 1.0])
        trace = forward_trajectory(lb_model, x0, GridSpec(dt=0.005, H=2))
        assert np.array_equal(trace.samples[0], x0)
        expected = x0 + 0.005 * fluid_rhs(lb_model, x0)
        assert np.allclose(trace.samples[1], expected, rtol=1e-14, atol=1e-14)

    def test_equilibrium_is_fixed_point(self):
        m = QnModel(s=(10, 10), mu=(1.0, 1.0), P=[[0, 1], [1, 0]])
        x0 = np.array([5.0, 5.0])
        assert np.array_equal(fluid_rhs(m, x0), np.zeros(2))
        trace = forward_trajectory(m, x0, GridSpec(dt=0.1, H=50))
        assert np.array_equal(trace.samples, np.tile(x0, (50, 1)))

    def test_conservation(self):
        rng = np.random.default_rng(17)
        for seed in range(10):
            m = random_model(RandomQnConfig(M=2 + seed % 4, seed=seed))
            x0 = rng.uniform(0, 40, m.M)
            trace = forward_trajectory(m, x0, GridSpec(dt=0.005, H=2000))
            sums = trace.samples.sum(axis=1)
            assert np.max(np.abs(sums - x0.sum())) < 1e-9

    def test_step_halving_first_order(self):
        # underloaded instances keep min() inactive: smooth linear regime
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            m = random_model(
                RandomQnConfig(M=4, rate_range=(0.5, 2.0), server_range=(50, 60), seed=seed)
            )
            x0 = rng.uniform(0, 10, 4)
            T = 2.0

            def run(dt):
                return forward_trajectory(m, x0, GridSpec(dt=dt, H=int(round(T / dt)) + 1)).samples

            coarse, mid, fine = run(0.02), run(0.01), run(0.005)
            gap1 = np.abs(coarse - mid[::2]).sum(axis=1).max()
            gap2 = np.abs(mid - fine[::2]).sum(axis=1).max()
            assert gap1 / gap2 >= 1.8

    def test_bad_grid_rejected(self, lb_model):
        with pytest.raises(ValueError):
            GridSpec(dt=0.0, H=10)
        with pytest.raises(ValueError):
            GridSpec(dt=0.01, H=1)

    def test_x0_mismatch_rejected(self, lb_model):
        with pytest.raises(ValueError):
            forward_trajectory(lb_model, (1.0, 2.0), GridSpec(dt=0.01, H=5))


class TestSelfLoopDynamicsEquivalence:
    """The transform must leave the fluid trajectory untouched; the
    generalized recurrence (nonzero routing diagonal) lives only in the
    kernel, so it is exercised directly."""

    def test_trajectories_coincide(self):
        rng = np.random.default_rng(31)
        for trial in range(25):
            M = int(rng.integers(2, 6))
            P = random_stochastic_with_diagonal(rng, M)
            mu = rng.uniform(0.5, 5.0, M)
            pi = rng.uniform(0, 0.95, M)
            P_hat, mu_hat = selfloop_transform(P, mu, SelfLoopSpec(pi=pi))
            s = rng.integers(1, 10, M).astype(np.float64)
            x0 = rng.uniform(0, 20, M)
            original = euler_forward(P, mu, s, x0, 0.01, 200)
            transformed = euler_forward(P_hat, mu_hat, s, x0, 0.01, 200)
            assert np.max(np.abs(original - transformed)) < 1e-10

    def test_absorbing_row_trajectory(self):
        # P[0,0] = 1: station 0 holds its clients; the transformed model
        # must reproduce that with a zero rate
        P = np.array([[1.0, 0.0], [1.0, 0.0]])
        mu = np.array([2.0, 3.0])
        P_hat, mu_hat = selfloop_transform(P, mu, SelfLoopSpec(pi=[0.0, 0.0]))
        s = np.array([1.0, 1.0])
        x0 = np.array([2.0, 3.0])
        original = euler_forward(P, mu, s, x0, 0.01, 100)
        transformed = euler_forward(P_hat, mu_hat, s, x0, 0.01, 100)
        assert np.max(np.abs(original - transformed)) < 1e-10
