"""Environment dynamics: laws, determinism, and empirical conformance."""

from __future__ import annotations

import numpy as np
import pytest

from mdpcheck.envs import (
    EnvSpec,
    expected_significance,
    make_env,
    rollout_episode,
)
from mdpcheck.errors import ConfigurationError, UsageError


def test_make_env_validates_spec():
    for bad in (0, 8, -1):
        with pytest.raises(ConfigurationError):
            make_env(EnvSpec(bad))
    with pytest.raises(ConfigurationError):
        make_env(EnvSpec(1, d=0))
    with pytest.raises(ConfigurationError):
        make_env(EnvSpec(1, T=0))
    with pytest.raises(ConfigurationError):
        make_env(EnvSpec(1, seed=-1))


def test_step_protocol_errors():
    env = make_env(EnvSpec(1, T=2, seed=3))
    with pytest.raises(UsageError):
        env.step(0)
    env.reset()
    with pytest.raises(UsageError):
        env.step(2)
    env.step(0)
    env.step(1)
    with pytest.raises(UsageError):
        env.step(0)
    env.reset()  # recovers
    env.step(0)


def test_initial_state_all_zero_and_counters_monotone():
    for env_id in range(1, 8):
        env = make_env(EnvSpec(env_id, seed=11))
        state = env.reset().features
        assert np.array_equal(state, np.zeros(10))
        rng = np.random.default_rng(5)
        prev = state
        for _ in range(10):
            nxt, reward, _ = env.step(int(rng.integers(0, 2)))
            delta = nxt - prev
            assert np.all((delta == 0) | (delta == 1))
            assert reward in (0.0, 1.0)
            prev = nxt


def test_episode_length_is_T():
    episode = rollout_episode(make_env(EnvSpec(1)), policy_seed=0)
    assert len(episode) == 10
    episode = rollout_episode(make_env(EnvSpec(4, T=3)), policy_seed=0)
    assert len(episode) == 3


def test_rollout_deterministic_given_seeds():
    a = rollout_episode(make_env(EnvSpec(5, seed=42)), policy_seed=7)
    b = rollout_episode(make_env(EnvSpec(5, seed=42)), policy_seed=7)
    assert len(a) == len(b)
    for ta, tb in zip(a.transitions, b.transitions):
        assert np.array_equal(ta.state, tb.state)
        assert ta.action == tb.action
        assert ta.reward == tb.reward
        assert np.array_equal(ta.next_state, tb.next_state)


def test_random_policy_action_frequency():
    # fraction of action=1 over 100000 rollout steps stays within 0.5 +/- 0.01
    count = ones = 0
    for e in range(10_000):
        episode = rollout_episode(make_env(EnvSpec(1, seed=e)), policy_seed=e)
        for tr in episode.transitions:
            ones += tr.action
            count += 1
    assert count == 100_000
    assert abs(ones / count - 0.5) < 0.01


def test_action_zero_freezes_gated_envs():
    for env_id in (3, 5, 7):
        env = make_env(EnvSpec(env_id, seed=9))
        env.reset()
        for _ in range(10):
            nxt, _, _ = env.step(0)
        assert np.array_equal(nxt, np.zeros(10))


def test_env2_action_one_pays_exactly_one():
    env = make_env(EnvSpec(2, seed=1))
    env.reset()
    for _ in range(10):
        _, reward, _ = env.step(1)
        assert reward == 1.0


def test_env5_threshold_reads_pre_transition_state():
    # under constant a=1 feature 0 increments with probability 1, so the
    # pre-step value of f0 is exactly t and the reward flips at t=5
    env = make_env(EnvSpec(5, seed=2))
    state = env.reset().features
    for t in range(10):
        assert state[0] == t
        state, reward, _ = env.step(1)
        assert reward == (1.0 if t > 4 else 0.0)


def test_hidden_coin_constant_within_episode():
    seen = set()
    for seed in range(20):
        env = make_env(EnvSpec(6, seed=seed))
        h = env.reset().hidden_h
        assert h in (0, 1)
        seen.add(h)
    assert seen == {0, 1}
    # envs without a coin expose None
    assert make_env(EnvSpec(1, seed=0)).reset().hidden_h is None


def test_expected_significance_table():
    with pytest.raises(ConfigurationError):
        expected_significance(0)
    every = frozenset(range(10))
    p1 = expected_significance(1)
    assert (p1.outcome, p1.reward_features, p1.action_features) == (
        "NoRewardSignal", frozenset(), frozenset())
    p3 = expected_significance(3)
    assert p3.outcome == "NoRewardSignal" and p3.action_features == every
    p4 = expected_significance(4)
    assert p4.outcome == "NoActionControl" and p4.reward_features == {0}
    p5 = expected_significance(5)
    assert p5.outcome == "PotentiallySuitable"
    assert p5.action_features == every and p5.actionable_features == {0}
    p6 = expected_significance(6)
    assert p6.outcome == "NoActionControl"
    assert p6.reward_features is None and p6.reward_nonempty
    p7 = expected_significance(7)
    assert p7.outcome == "PotentiallySuitable"
    assert p7.reward_features == every and p7.actionable_features == every


# ----------------------------------------------------------------------
# empirical conformance: increment and reward frequencies per environment
# (each cell over >= 100000 steps, tolerance +/- 0.02)


def _roll_counts(env_id: int, num_episodes: int):
    """Tallies of increments and rewards, keyed by the cell that drives them."""
    d, T = 10, 10
    inc = {}    # cell key -> (count vector per feature, n steps)
    rew = {}    # cell key -> (reward sum, n steps)
    policy = np.random.default_rng(1000 + env_id)
    env = make_env(EnvSpec(env_id, seed=2000 + env_id))
    for _ in range(num_episodes):
        h = env.reset().hidden_h
        state = np.zeros(d)
        for _ in range(T):
            a = int(policy.integers(0, 2))
            nxt, reward, _ = env.step(a)
            if env_id in (1, 2, 4):
                key = ()
            elif env_id in (3, 5):
                key = (a,)
            elif env_id == 6:
                key = (h,)
            else:
                key = (h, a)
            cnt, n = inc.setdefault(key, (np.zeros(d), 0))
            inc[key] = (cnt + (nxt - state), n + 1)
            if env_id in (1, 3):
                rkey = ()
            elif env_id == 2:
                rkey = (a,)
            elif env_id in (4, 5):
                rkey = (int(state[0] > 4),)
            else:
                rkey = (h,)
            total, n = rew.setdefault(rkey, (0.0, 0))
            rew[rkey] = (total + reward, n + 1)
            state = nxt
    return inc, rew


def _expected_increment_probs(env_id: int, key) -> np.ndarray:
    i = np.arange(10, dtype=np.float64)
    base = 1.0 - i / 10
    if env_id in (1, 2, 4):
        return base
    if env_id in (3, 5):
        return base if key[0] == 1 else np.zeros(10)
    if env_id == 6:
        return base if key[0] == 1 else i / 10
    h, a = key
    if a == 0:
        return np.zeros(10)
    return base if h == 1 else i / 10


def _expected_reward_mean(env_id: int, key) -> float:
    if env_id in (1, 3):
        return 0.5
    if env_id == 2:
        return 1.0 if key[0] == 1 else 0.5
    if env_id in (4, 5):
        return float(key[0])
    return 0.8 if key[0] == 1 else 0.2


@pytest.mark.parametrize("env_id", range(1, 8))
def test_env_conformance(env_id):
    inc, rew = _roll_counts(env_id, num_episodes=10_000)
    assert sum(n for _, n in inc.values()) == 100_000
    for key, (cnt, n) in inc.items():
        observed = cnt / n
        expected = _expected_increment_probs(env_id, key)
        assert np.all(np.abs(observed - expected) < 0.02), (
            f"env {env_id} increments {key}: {observed} vs {expected}")
    for key, (total, n) in rew.items():
        expected = _expected_reward_mean(env_id, key)
        if expected in (0.0, 1.0) and env_id in (2, 4, 5):
            assert total / n == expected  # deterministic cells are exact
        else:
            assert abs(total / n - expected) < 0.02, (
                f"env {env_id} reward {key}: {total / n} vs {expected}")
