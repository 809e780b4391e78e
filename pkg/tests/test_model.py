import numpy as np
import pytest

from qnlearn import (
    QnModel,
    RandomQnConfig,
    SelfLoopSpec,
    random_model,
    selfloop_transform,
    validate_model,
)

from conftest import random_stochastic_with_diagonal


class TestValidateModel:
    def test_load_balancer_is_valid(self, lb_model):
        assert validate_model(lb_model) == []

    def test_deficient_row_sum_is_named(self):
        m = QnModel(s=(1, 1, 1), mu=(1, 1, 1), P=[[0, 0.5, 0.4], [1, 0, 0], [1, 0, 0]])
        violations = validate_model(m)
        assert any("row 1 sums to 0.9" in v for v in violations)
        assert len(violations) == 1

    def test_negative_rate_is_named(self):
        m = QnModel(s=(1, 1, 1), mu=(-1, 2, 3), P=[[0, 0.5, 0.5], [1, 0, 0], [1, 0, 0]])
        violations = validate_model(m)
        assert any("mu[1] negative" in v for v in violations)

    def test_self_loop_flagged(self):
        m = QnModel(s=(1, 1), mu=(1, 1), P=[[0.5, 0.5], [1, 0]])
        assert any("self loop" in v for v in validate_model(m))

    def test_zero_servers_flagged(self):
        m = QnModel(s=(0, 1), mu=(1, 1), P=[[0, 1], [1, 0]])
        assert any("s[1]" in v for v in validate_model(m))

    def test_one_violation_per_failed_invariant(self):
        m = QnModel(s=(1, 0), mu=(-1, 1), P=[[0, 0.5], [1, 0]])
        violations = validate_model(m)
        assert len(violations) == 3  # row sum, mu sign, s bound

    def test_dimension_mismatch_reported(self):
        m = QnModel(s=(1, 1, 1), mu=(1, 1, 1), P=[[0, 1], [1, 0]])
        violations = validate_model(m)
        assert any("mu has length 3" in v for v in violations)
        assert any("s has length 3" in v for v in violations)


class TestRandomModel:
    def test_ranges_and_feasibility(self):
        cfg = RandomQnConfig(M=5, rate_range=(4.0, 30.0), server_range=(15, 30), seed=7)
        m = random_model(cfg)
        assert validate_model(m) == []
        assert np.all((m.mu >= 4.0) & (m.mu <= 30.0))
        assert np.all((m.s >= 15) & (m.s <= 30))
        assert np.all(np.diag(m.P) == 0)
        assert np.allclose(m.P.sum(axis=1), 1.0, atol=1e-12)

    def test_deterministic_in_seed(self):
        cfg = RandomQnConfig(M=5, rate_range=(4.0, 30.0), server_range=(15, 30), seed=7)
        a, b = random_model(cfg), random_model(cfg)
        assert np.array_equal(a.mu, b.mu)
        assert np.array_equal(a.s, b.s)
        assert np.array_equal(a.P, b.P)

    def test_different_seed_differs(self):
        a = random_model(RandomQnConfig(M=3, seed=1))
        b = random_model(RandomQnConfig(M=3, seed=2))
        assert not np.array_equal(a.P, b.P)

    def test_single_station_rejected(self):
        with pytest.raises(ValueError):
            random_model(RandomQnConfig(M=1, seed=0))

    def test_always_valid_across_seeds(self):
        for seed in range(30):
            m = random_model(RandomQnConfig(M=2 + seed % 6, seed=seed))
            assert validate_model(m) == []

    def test_bad_ranges_rejected(self):
        with pytest.raises(ValueError):
            RandomQnConfig(M=3, rate_range=(0.0, 1.0))
        with pytest.raises(ValueError):
            RandomQnConfig(M=3, server_range=(0, 5))


class TestSelfLoopTransform:
    def test_identity_when_no_loops_and_zero_target(self, lb_model):
        P_hat, mu_hat = selfloop_transform(lb_model.P, lb_model.mu, SelfLoopSpec(pi=np.zeros(3)))
        assert np.array_equal(P_hat, lb_model.P)
        assert np.array_equal(mu_hat, lb_model.mu)

    def test_two_station_example(self):
        # eliminating the 0.5 self loop halves the row mass onto the other
        # station and compensates by scaling the rate
        P_hat, mu_hat = selfloop_transform(
            [[0.5, 0.5], [1, 0]], [2.0, 3.0], SelfLoopSpec(pi=[0.0, 0.0])
        )
        assert np.allclose(P_hat, [[0, 1], [1, 0]], atol=1e-15)
        assert np.allclose(mu_hat, [1.0, 3.0], atol=1e-15)
        # the flow products that drive the dynamics are preserved
        P = np.array([[0.5, 0.5], [1, 0]])
        mu = np.array([2.0, 3.0])
        assert P_hat[0, 1] * mu_hat[0] == pytest.approx(P[0, 1] * mu[0])
        assert (P_hat[0, 0] - 1) * mu_hat[0] == pytest.approx((P[0, 0] - 1) * mu[0])

    def test_absorbing_row(self):
        # a station routing only to itself never emits: rate collapses to 0
        # and the row spreads uniformly
        P_hat, mu_hat = selfloop_transform(
            [[1.0, 0.0], [1.0, 0.0]], [2.0, 3.0], SelfLoopSpec(pi=[0.5, 0.0])
        )
        assert np.allclose(P_hat[0], [0.5, 0.5], atol=1e-15)
        assert mu_hat[0] == 0.0

    def test_guarantees_on_random_inputs(self):
        rng = np.random.default_rng(99)
        for _ in range(50):
            M = int(rng.integers(2, 7))
            P = random_stochastic_with_diagonal(rng, M)
            mu = rng.uniform(0, 5, M)
            pi = rng.uniform(0, 1, M) * 0.999
            P_hat, mu_hat = selfloop_transform(P, mu, SelfLoopSpec(pi=pi))
            assert np.array_equal(np.diag(P_hat), pi)
            assert np.max(np.abs(P_hat.sum(axis=1) - 1)) < 1e-12
            assert np.all(P_hat >= 0)
            assert np.all(mu_hat >= 0)

    def test_rejects_non_stochastic(self):
        with pytest.raises(ValueError, match="stochastic"):
            selfloop_transform([[0.5, 0.4], [1, 0]], [1, 1], SelfLoopSpec(pi=[0, 0]))

    def test_rejects_pi_of_one(self):
        with pytest.raises(ValueError):
            selfloop_transform([[0, 1], [1, 0]], [1, 1], SelfLoopSpec(pi=[1.0, 0.0]))

    def test_rejects_negative_mu(self):
        with pytest.raises(ValueError):
            selfloop_transform([[0, 1], [1, 0]], [-1, 1], SelfLoopSpec(pi=[0, 0]))


def test_model_arrays_are_immutable(lb_model):
    with pytest.raises(ValueError):
        lb_model.P[0, 1] = 0.9
    with pytest.raises(ValueError):
        lb_model.mu[0] = 5.0
