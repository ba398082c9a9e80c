"""Synthetic counter environments used to probe the validation pipeline.

Seven small MDP families over ``d`` integer state features ("adding one"
counters), binary actions and binary rewards.  Episodes run a fixed ``T``
steps starting from the all-zero state.  At every step each feature ``i``
independently gains +1 with a probability that depends on the environment,
the action, and (for environments 6 and 7) a hidden per-episode coin ``h``
that the agent never observes:

====  ==========================================  ==========================
env   P(feature i increments)                     reward law
====  ==========================================  ==========================
1     1 - i/d                                     Bernoulli(0.5)
2     1 - i/d                                     1 if a=1 else Bernoulli(0.5)
3     1 - i/d if a=1 else 0                       Bernoulli(0.5)
4     1 - i/d                                     1 if f0 > 4 else 0
5     1 - i/d if a=1 else 0                       1 if f0 > 4 else 0
6     1 - i/d if h=1 else i/d                     Bernoulli(0.8 if h=1 else 0.2)
7     0 if a=0 else (1 - i/d if h=1 else i/d)     Bernoulli(0.8 if h=1 else 0.2)
====  ==========================================  ==========================

Threshold rewards (environments 4 and 5) read feature 0 of the state the
action was taken in, before the transition is applied.

Determinism: an environment handle owns a single PCG64 stream created from
``EnvSpec.seed``.  ``reset`` consumes one uniform for ``h`` (environments 6
and 7 only).  Each ``step`` consumes one uniform for the reward when the
reward law is stochastic for that (state, action), then exactly ``d``
uniforms for the increment coins.  The k-th episode after ``make_env`` is
therefore reproducible given the spec seed and the actions taken.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UsageError
from .seeding import check_seed

REWARD_THRESHOLD = 4  # threshold rewards fire when feature 0 exceeds this

_OUTCOME_NAMES = ("NoRewardSignal", "NoActionControl", "PotentiallySuitable")


@dataclass(frozen=True)
class EnvSpec:
    """Identity of one synthetic environment instance."""

    env_id: int
    d: int = 10
    T: int = 10
    seed: int = 0


@dataclass(frozen=True)
class EnvState:
    """Observable features plus bookkeeping; ``hidden_h`` is None outside envs 6/7."""

    features: np.ndarray
    t: int
    hidden_h: int | None = None


@dataclass(frozen=True, eq=False)
class Transition:
    """One (s, a, r, s') tuple with its position in the episode."""

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    episode_id: int
    t: int


@dataclass(frozen=True)
class Episode:
    episode_id: int
    transitions: list[Transition]

    def __len__(self) -> int:
        return len(self.transitions)


@dataclass(frozen=True)
class ExpectedPattern:
    """Analytically expected verdict and feature sets for one environment.

    ``reward_features`` is the exact set of features expected to carry reward
    signal, or None when only non-emptiness is pinned (environment 6, where
    every feature reflects the hidden coin to a varying degree).
    ``action_features`` is the set expected to test action-sensitive after
    baseline subtraction.  ``outcome`` is one of the verdict outcome names.
    """

    env_id: int
    outcome: str
    reward_features: frozenset[int] | None
    reward_nonempty: bool
    action_features: frozenset[int]

    @property
    def actionable_features(self) -> frozenset[int] | None:
        """Expected reward ∩ action set; None when reward set is unpinned."""
        if not self.action_features:
            return frozenset()
        if self.reward_features is None:
            return None
        return self.reward_features & self.action_features


class EnvHandle:
    """A stateful environment created by ``make_env``; not thread-safe."""

    def __init__(self, spec: EnvSpec):
        self.spec = spec
        self._rng = np.random.default_rng(spec.seed)
        self._features = np.zeros(spec.d, dtype=np.float64)
        self._h: int | None = None
        self._t = 0
        self._started = False

    # ------------------------------------------------------------------
    # core dynamics

    def reset(self) -> EnvState:
        """Start a new episode; draws the hidden coin in envs 6 and 7."""
        self._features[:] = 0.0
        self._t = 0
        self._started = True
        if self.spec.env_id in (6, 7):
            self._h = int(self._rng.random() < 0.5)
        else:
            self._h = None
        return EnvState(self._features.copy(), 0, self._h)

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        """Apply ``action``; returns (next_state, reward, done).

        Raises UsageError before the first reset, after the episode ended,
        or for an action outside {0, 1}.
        """
        if not self._started:
            raise UsageError("step() called before reset()")
        if self._t >= self.spec.T:
            raise UsageError(f"episode is over after {self.spec.T} steps; call reset()")
        if action not in (0, 1):
            raise UsageError(f"action must be 0 or 1, got {action!r}")

        reward = self._draw_reward(action)
        probs = self._increment_probs(action)
        incs = self._rng.random(self.spec.d) < probs
        self._features[incs] += 1.0
        self._t += 1
        return self._features.copy(), reward, self._t >= self.spec.T

    def _draw_reward(self, action: int) -> float:
        env_id = self.spec.env_id
        if env_id in (1, 3):
            return float(self._rng.random() < 0.5)
        if env_id == 2:
            if action == 1:
                return 1.0
            return float(self._rng.random() < 0.5)
        if env_id in (4, 5):
            return 1.0 if self._features[0] > REWARD_THRESHOLD else 0.0
        # envs 6, 7: reward reflects the hidden coin only
        p = 0.8 if self._h == 1 else 0.2
        return float(self._rng.random() < p)

    def _increment_probs(self, action: int) -> np.ndarray:
        d = self.spec.d
        env_id = self.spec.env_id
        i = np.arange(d, dtype=np.float64)
        base = 1.0 - i / d
        if env_id in (1, 2, 4):
            return base
        if env_id in (3, 5):
            return base if action == 1 else np.zeros(d)
        if env_id == 6:
            return base if self._h == 1 else i / d
        # env 7: gated on the action, flavoured by the hidden coin
        if action == 0:
            return np.zeros(d)
        return base if self._h == 1 else i / d


def make_env(spec: EnvSpec) -> EnvHandle:
    """Validate ``spec`` and return a fresh handle positioned before reset."""
    if spec.env_id not in range(1, 8):
        raise ConfigurationError(f"env_id must be in 1..7, got {spec.env_id}")
    if spec.d < 1:
        raise ConfigurationError(f"d must be >= 1, got {spec.d}")
    if spec.T < 1:
        raise ConfigurationError(f"T must be >= 1, got {spec.T}")
    check_seed(spec.seed, "env seed")
    return EnvHandle(spec)


def rollout_episode(env: EnvHandle, policy_seed: int, episode_id: int = 0) -> Episode:
    """Roll one episode under the uniform random policy.

    The policy stream is separate from the environment stream: all ``T``
    actions are drawn up front from ``default_rng(policy_seed)``.  Returns
    exactly ``T`` transitions.
    """
    check_seed(policy_seed, "policy seed")
    T = env.spec.T
    actions = np.random.default_rng(policy_seed).integers(0, 2, size=T)
    state = env.reset().features
    transitions: list[Transition] = []
    for t in range(T):
        a = int(actions[t])
        next_state, reward, _ = env.step(a)
        transitions.append(Transition(state, a, reward, next_state, episode_id, t))
        state = next_state
    return Episode(episode_id, transitions)


def expected_significance(env_id: int, d: int = 10) -> ExpectedPattern:
    """Oracle for what a sound analysis should report on each environment.

    Environments 1-3 have pure-noise rewards, so no feature should carry
    reward signal regardless of transition structure.  Environments 4 and 5
    reward a threshold on feature 0 alone; 5 additionally makes transitions
    action-gated, so every feature is action-sensitive.  Environment 6 pays
    by the hidden coin: features predict reward (they reflect ``h``) but no
    action controls them.  Environment 7 is 6 with action gating, which makes
    every feature both reward-relevant and controllable.
    """
    if env_id not in range(1, 8):
        raise ConfigurationError(f"env_id must be in 1..7, got {env_id}")
    none: frozenset[int] = frozenset()
    every = frozenset(range(d))
    f0 = frozenset({0})
    table: dict[int, ExpectedPattern] = {
        1: ExpectedPattern(1, "NoRewardSignal", none, False, none),
        2: ExpectedPattern(2, "NoRewardSignal", none, False, none),
        3: ExpectedPattern(3, "NoRewardSignal", none, False, every),
        4: ExpectedPattern(4, "NoActionControl", f0, True, none),
        5: ExpectedPattern(5, "PotentiallySuitable", f0, True, every),
        6: ExpectedPattern(6, "NoActionControl", None, True, none),
        7: ExpectedPattern(7, "PotentiallySuitable", every, True, every),
    }
    return table[env_id]
