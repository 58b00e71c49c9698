import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedunlearn.bandit import (AvailabilityModel, BanditState, SelectionConfig, SelectionTrace, bitmask,
                               clairvoyant_value, composite_reward, observe_rewards, select_workers,
                               simulate_selection, ucb_estimate, ucb_estimates)
from fedunlearn.errors import ConfigError, InputDomainError


def state_with(mu, counts, k=0):
    s = BanditState(len(mu))
    s.counts = np.asarray(counts, dtype=float)
    s.reward_sums = np.asarray(mu) * s.counts
    s.k = k
    return s


class TestUcb:
    def test_unseen_device(self):
        assert ucb_estimate(BanditState(3), 1, 5) == 1.0

    def test_log_one_has_no_bonus(self):
        assert ucb_estimate(state_with([0.5], [2]), 0, 1) == pytest.approx(0.5)

    def test_clamped(self):
        assert ucb_estimate(state_with([0.9], [3]), 0, math.e ** 2) == 1.0

    def test_vectorized_agrees(self):
        s = state_with([0.1, 0.4, 0.8, 0.0], [5, 1, 30, 0])
        for k in (1, 7, 200):
            est = ucb_estimates(s, k)
            assert [ucb_estimate(s, i, k) for i in range(4)] == pytest.approx(est.tolist())

    @given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1000)), min_size=1, max_size=10),
           st.integers(0, 10**6))
    def test_in_unit_interval(self, pairs, k):
        s = state_with([p[0] for p in pairs], [p[1] for p in pairs])
        est = ucb_estimates(s, k)
        assert np.all((0 <= est) & (est <= 1))


class TestSelect:
    def test_uniform_tie_break(self):
        cfg = SelectionConfig(10, 3, beta=0.0)
        assert select_workers(BanditState(10), range(10), cfg, 0) == [0, 1, 2]

    def test_small_available_set(self):
        cfg = SelectionConfig(10, 5)
        assert select_workers(BanditState(10), {4, 7}, cfg, 3) == [4, 7]

    def test_argmax(self):
        cfg = SelectionConfig(3, 1, beta=0.0)
        s = state_with([0.9, 0.2, 0.5], [10**6] * 3)
        assert select_workers(s, [0, 1, 2], cfg, 10) == [0]

    def test_empty(self):
        assert select_workers(BanditState(3), [], SelectionConfig(3, 2), 0) == []

    def test_out_of_range(self):
        with pytest.raises(InputDomainError):
            select_workers(BanditState(3), [5], SelectionConfig(3, 2), 0)

    @given(st.integers(1, 12), st.data())
    @settings(max_examples=60)
    def test_legality_and_scale_invariance(self, n, data):
        m = data.draw(st.integers(1, n))
        mu = data.draw(st.lists(st.floats(0, 1), min_size=n, max_size=n))
        counts = data.draw(st.lists(st.integers(0, 50), min_size=n, max_size=n))
        g = np.asarray(data.draw(st.lists(st.floats(0.1, 5), min_size=n, max_size=n)))
        avail = data.draw(st.sets(st.integers(0, n - 1)))
        k = data.draw(st.integers(0, 100))
        s = state_with(mu, counts)
        sel = select_workers(s, avail, SelectionConfig(n, m, g=g, beta=0.0), k)
        assert len(sel) <= m and set(sel) <= avail
        assert sel == select_workers(s, avail, SelectionConfig(n, m, g=3.0 * g, beta=0.0), k)


class TestObserve:
    def test_empty_selection(self):
        cfg = SelectionConfig(3, 1, r=[0.1, 0.2, 0.0])
        s, q = observe_rewards(BanditState(3), [], {}, cfg)
        assert q == 0 and s.counts.sum() == 0
        assert s.queues.tolist() == pytest.approx([0.1, 0.2, 0.0])

    def test_weighted_sum(self):
        cfg = SelectionConfig(3, 1, g=[1, 1, 2])
        _, q = observe_rewards(BanditState(3), [2], {2: 0.5}, cfg)
        assert q == pytest.approx(1.0)

    def test_zero_fractions_keep_queues_empty(self):
        cfg = SelectionConfig(4, 2)
        res = simulate_selection(cfg, [0.2, 0.4, 0.6, 0.8], 300)
        assert not res["state"].queues.any()

    def test_bad_reward(self):
        with pytest.raises(InputDomainError):
            observe_rewards(BanditState(2), [0], {0: 1.5}, SelectionConfig(2, 1))

    def test_mismatched_rewards(self):
        with pytest.raises(InputDomainError):
            observe_rewards(BanditState(2), [0], {1: 0.5}, SelectionConfig(2, 1))


class TestCompositeReward:
    def test_best(self):
        assert composite_reward(0, 0, 1000, normalizers=(10, 10, 10)) == pytest.approx(1.0)

    def test_worst(self):
        assert composite_reward(10, 10, 0, normalizers=(10, 10, 10)) == pytest.approx(0.0)

    def test_half(self):
        assert composite_reward(5, 5, 5, normalizers=(10, 10, 10)) == pytest.approx(0.5)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            composite_reward(1, 1, 1, weights=(0.5, 0.5, 0.5))


class TestConfig:
    def test_infeasible_fractions(self):
        with pytest.raises(ConfigError):
            SelectionConfig(3, 1, r=[0.5, 0.5, 0.5])

    def test_m_bounds(self):
        with pytest.raises(ConfigError):
            SelectionConfig(3, 4)

    def test_nonpositive_weight(self):
        with pytest.raises(ConfigError):
            SelectionConfig(2, 1, g=[1.0, 0.0])


def test_invariants_over_run():
    cfg = SelectionConfig(6, 2, r=[0.1] * 6, beta=0.05)
    avail = AvailabilityModel(np.full(6, 0.7), np.random.default_rng(1))
    rng = np.random.default_rng(2)
    s = BanditState(6)
    prev = s.counts.copy()
    for k in range(500):
        sel = select_workers(s, avail.draw(), cfg, k)
        s, _ = observe_rewards(s, sel, {i: float(rng.random()) for i in sel}, cfg)
        assert np.all(s.counts >= prev) and np.all(s.queues >= 0)
        assert np.all((0 <= s.mu_hat) & (s.mu_hat <= 1))
        prev = s.counts.copy()


def test_fairness_long_run():
    n = 10
    cfg = SelectionConfig(n, 2, r=[0.1] * n, beta=0.05, seed=4)
    means = np.linspace(0.1, 0.9, n)
    res = simulate_selection(cfg, means, 20_000)
    assert min(res["fractions"]) >= 0.1 - 0.05


def test_determinism():
    cfg = SelectionConfig(5, 2, seed=9)
    a, b = SelectionTrace(5), SelectionTrace(5)
    simulate_selection(cfg, [0.1, 0.3, 0.5, 0.7, 0.9], 200, trace=a)
    simulate_selection(cfg, [0.1, 0.3, 0.5, 0.7, 0.9], 200, trace=b)
    assert a.rows == b.rows


def test_helpers():
    assert bitmask([0, 3], 5) == "10010"
    assert clairvoyant_value([0.2, 0.9, 0.5], np.ones(3), [0, 2], 1) == pytest.approx(0.5)
