"""Ensemble statistics: fixtures, significance rule, verdict decision table."""

from __future__ import annotations

import numpy as np
import pytest

from mdpcheck.analysis import (
    ACTION_SENSITIVITY,
    ORIGINAL,
    OFFSET_ACTION_SENSITIVITY,
    REWARD_CONTRIBUTION,
    SHUFFLED_BASELINE,
    Ensemble,
    Outcome,
    SignificanceReport,
    StatPopulation,
    action_sensitivity,
    decide_verdict,
    offset_sensitivity,
    percentile_significance,
    population_to_csv,
    population_to_dict,
    reward_contribution,
    train_ensemble,
)
from mdpcheck.data import Dataset, collect
from mdpcheck.envs import EnvSpec, make_env
from mdpcheck.errors import AnalysisError, ConfigurationError
from mdpcheck.model import ModelConfig, init_params, train
from mdpcheck.seeding import derive_seed


def _dataset_from_rows(states, actions, rewards, next_states=None):
    states = np.asarray(states, dtype=np.float64)
    n, d = states.shape
    if next_states is None:
        next_states = states
    return Dataset(
        states,
        np.asarray(actions, dtype=np.int64),
        np.asarray(rewards, dtype=np.float64),
        np.asarray(next_states, dtype=np.float64),
        np.zeros(n, dtype=np.int64),
        np.arange(n, dtype=np.int64),
        {},
    )


def _headless_params(d, K, seed=0, reward_activation="linear"):
    """Trunkless model: every head reads the (state, one-hot action) input."""
    cfg = ModelConfig(d=d, K=K, hidden_sizes=(), input_dropout_rate=0.0,
                      reward_activation=reward_activation, seed=seed, dtype="float64")
    params = init_params(cfg)
    for arr in params.arrays.values():
        arr[:] = 0.0
    return params


def _single_model_ensemble(params):
    return Ensemble(models=[params], kind=ORIGINAL, seeds=[params.config.seed])


# ----------------------------------------------------------------------
# reward contribution fixtures


def test_linear_reward_head_fixture():
    # r_hat = 3*f0 on states f0 in {0, 2} with rewards {0, 6}: MAE 0 before,
    # mean replacement pins f0 = 1 so predictions become {3, 3} and MAE 3
    params = _headless_params(d=2, K=1)
    params.arrays["reward_w"][0, 0] = 3.0
    ds = _dataset_from_rows([[0.0, 5.0], [2.0, 5.0]], [0, 0], [0.0, 6.0])
    pop = reward_contribution(_single_model_ensemble(params), ds, batch_size=2)
    assert pop.kind == REWARD_CONTRIBUTION
    assert pop.values.shape == (2, 1)
    assert pop.values[0, 0] == pytest.approx(3.0, abs=1e-12)
    # feature 1 is constant within the batch: replacement is the identity
    assert pop.values[1, 0] == 0.0


def test_unused_feature_contributes_exactly_zero():
    # sigmoid head: the exact-zero property must not depend on head linearity
    params = _headless_params(d=3, K=1, seed=4, reward_activation="sigmoid")
    rng = np.random.default_rng(1)
    params.arrays["reward_w"][:, 0] = [0.5, 0.0, -0.7, 0.2, 0.1]  # feature 1 unread
    states = rng.uniform(0, 3, size=(6, 3))
    ds = _dataset_from_rows(states, rng.integers(0, 2, size=6), rng.random(6))
    pop = reward_contribution(_single_model_ensemble(params), ds, batch_size=3)
    assert np.all(pop.values[1] == 0.0)
    assert np.any(pop.values[0] != 0.0)


def test_reward_contribution_requires_original_kind():
    params = _headless_params(d=2, K=1)
    ens = Ensemble(models=[params], kind=SHUFFLED_BASELINE, seeds=[0])
    ds = _dataset_from_rows([[0.0, 1.0]], [0], [0.0])
    with pytest.raises(AnalysisError, match="original"):
        reward_contribution(ens, ds, batch_size=1)


def test_population_column_indexing():
    # column j*num_batches + b belongs to (model j, batch b)
    p0 = _headless_params(d=2, K=1, seed=0)
    p0.arrays["reward_w"][0, 0] = 3.0
    p1 = _headless_params(d=2, K=1, seed=1)  # all-zero head: contributes 0
    ens = Ensemble(models=[p0, p1], kind=ORIGINAL, seeds=[0, 1])
    ds = _dataset_from_rows(
        [[0.0, 5.0], [2.0, 5.0], [0.0, 5.0], [4.0, 5.0]], [0, 0, 0, 0], [0.0, 6.0, 0.0, 12.0]
    )
    pop = reward_contribution(ens, ds, batch_size=2)
    assert pop.values.shape == (2, 4)
    assert pop.num_models == 2 and pop.num_batches == 2
    assert pop.values[0, 0] == pytest.approx(3.0, abs=1e-12)   # model 0, batch 0
    assert pop.values[0, 1] == pytest.approx(6.0, abs=1e-12)   # model 0, batch 1
    assert np.all(pop.values[:, 2:] == 0.0)                     # model 1 ignores all


# ----------------------------------------------------------------------
# action sensitivity fixtures


def test_single_example_shuffle_is_identity():
    params = _headless_params(d=2, K=2, seed=3)
    rng = np.random.default_rng(2)
    for arr in params.arrays.values():
        arr += rng.normal(size=arr.shape)
    ds = _dataset_from_rows([[1.0, 2.0]], [1], [0.5])
    pop = action_sensitivity(_single_model_ensemble(params), ds, batch_size=1, shuffle_seed=9)
    assert pop.kind == ACTION_SENSITIVITY
    assert np.all(pop.values == 0.0)


def test_affinity_weighted_fixture():
    # alpha(s,a=0) = (0.6, 0.4), alpha(s,a=1) = (0.2, 0.8); per-component mean
    # shifts on the only feature are (1.0, 2.0); each example contributes
    # 0.4*1.0 + 0.6*2.0 = 1.6, and the swapped 2-row batch holds two of them
    params = _headless_params(d=1, K=2)
    params.arrays["alpha_w"][1, :] = np.log([0.6, 0.4])  # one-hot slot, a=0
    params.arrays["alpha_w"][2, :] = np.log([0.2, 0.8])  # one-hot slot, a=1
    params.arrays["mu_w"][2, :] = [1.0, 2.0]             # mu moves only under a=1
    ds = _dataset_from_rows([[0.0], [0.0]], [0, 1], [0.0, 0.0])
    # shuffle_seed 0 swaps the two rows of batch 0, so a-bar = (1, 0)
    assert list(np.random.default_rng(derive_seed(0, 0)).permutation(2)) == [1, 0]
    pop = action_sensitivity(_single_model_ensemble(params), ds, batch_size=2, shuffle_seed=0)
    assert pop.values.shape == (1, 1)
    assert pop.values[0, 0] == pytest.approx(2 * 1.6, rel=1e-12)


def test_k1_reduces_to_elementwise_mean_shift():
    from mdpcheck.model import forward_batch

    params = _headless_params(d=3, K=1, seed=5)
    rng = np.random.default_rng(3)
    for arr in params.arrays.values():
        arr += rng.normal(size=arr.shape)
    states = rng.uniform(0, 2, size=(4, 3))
    actions = np.array([0, 1, 1, 0])
    ds = _dataset_from_rows(states, actions, np.zeros(4))
    pop = action_sensitivity(_single_model_ensemble(params), ds, batch_size=4, shuffle_seed=7)
    from mdpcheck.data import MiniBatch, shuffle_actions_within_batch

    mb = MiniBatch(states, actions, np.zeros(4), states)
    shuffled = shuffle_actions_within_batch(mb, derive_seed(7, 0)).actions
    mu_a = forward_batch(params, states, actions).mu[:, 0, :]
    mu_s = forward_batch(params, states, shuffled).mu[:, 0, :]
    want = np.sum(np.abs(mu_a - mu_s), axis=0)
    assert np.allclose(pop.values[:, 0], want, rtol=1e-12)


def test_action_sensitivity_nonnegative():
    ds = collect(make_env(EnvSpec(3, seed=2)), 2, 20, seed=5)
    cfg = ModelConfig(d=10, K=3, hidden_sizes=(8,), train_batches=10, batch_size=20, seed=1)
    ens = train_ensemble(ds, cfg, N=2, base_seed=3, shuffle_actions=False)
    pop = action_sensitivity(ens, ds, batch_size=20, shuffle_seed=11)
    assert np.all(pop.values >= 0.0)


# ----------------------------------------------------------------------
# offset


def _pop(values, kind=ACTION_SENSITIVITY, num_models=1):
    values = np.asarray(values, dtype=np.float64)
    return StatPopulation(values, kind, num_models, values.shape[1] // num_models)


def test_offset_zero_baseline_is_identity():
    actual = _pop([[1.0, 2.0], [0.5, 0.25]])
    baseline = _pop([[0.0, 0.0], [0.0, 0.0]])
    off = offset_sensitivity(actual, baseline)
    assert off.kind == OFFSET_ACTION_SENSITIVITY
    assert np.array_equal(off.values, actual.values)


def test_offset_equal_populations_never_significant():
    actual = _pop([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    off = offset_sensitivity(actual, _pop(actual.values.copy()))
    assert np.all(off.values == 0.0)
    for X in (10.0, 50.0, 75.0, 90.0):
        report = percentile_significance(off, X)
        assert not report.significant.any()


def test_offset_rejects_mismatches():
    with pytest.raises(AnalysisError):
        offset_sensitivity(_pop([[1.0, 2.0]]), _pop([[1.0, 2.0, 3.0]]))
    with pytest.raises(AnalysisError):
        offset_sensitivity(
            _pop([[1.0, 2.0]], kind=REWARD_CONTRIBUTION), _pop([[1.0, 2.0]])
        )


# ----------------------------------------------------------------------
# percentile significance


def test_percentile_rule_on_worked_population():
    # X=75 asks for the value that 75% of samples equal or exceed; for
    # [-1, 1, 2, 3] that level is 0.5, which is positive, hence significant
    pop = _pop([[-1.0, 1.0, 2.0, 3.0]], kind=REWARD_CONTRIBUTION)
    report = percentile_significance(pop, 75.0)
    assert report.percentile_values[0] == pytest.approx(0.5)
    assert report.significant[0]
    assert report.significant_features() == {0}


def test_all_zero_population_is_insignificant():
    pop = _pop([[0.0, 0.0, 0.0, 0.0]])
    report = percentile_significance(pop, 75.0)
    assert report.percentile_values[0] == 0.0
    assert not report.significant[0]  # strict inequality


def test_per_feature_percentile_dispatch():
    values = [[-1.0, 1.0, 2.0, 3.0], [-1.0, 1.0, 2.0, 3.0]]
    pop = _pop(values)
    # feature 0 demands 90% of samples above the level; its level drops to
    # the 10th percentile, -0.4, and the feature drops out
    report = percentile_significance(pop, [90.0, 75.0])
    assert report.percentile_values == pytest.approx([-0.4, 0.5])
    assert list(report.significant) == [False, True]
    assert list(report.X) == [90.0, 75.0]


def test_percentile_monotone_in_X():
    rng = np.random.default_rng(8)
    pop = _pop(rng.normal(loc=0.2, size=(6, 40)))
    sig = {X: percentile_significance(pop, X).significant_features() for X in (60.0, 75.0, 90.0)}
    assert sig[90.0] <= sig[75.0] <= sig[60.0]


def test_percentile_validation():
    pop = _pop([[1.0, 2.0]])
    for bad in (0.0, 100.0, -5.0):
        with pytest.raises(ConfigurationError):
            percentile_significance(pop, bad)
    with pytest.raises(ConfigurationError):
        percentile_significance(pop, [75.0, 75.0])  # wrong length
    empty = StatPopulation(np.empty((0, 0)), ACTION_SENSITIVITY, 0, 0)
    with pytest.raises(AnalysisError):
        percentile_significance(empty, 75.0)


def test_column_permutation_leaves_percentiles_unchanged():
    rng = np.random.default_rng(12)
    pop = _pop(rng.normal(size=(3, 30)))
    report = percentile_significance(pop, 75.0)
    perm = rng.permutation(30)
    shuffled = _pop(pop.values[:, perm])
    report2 = percentile_significance(shuffled, 75.0)
    assert report2.percentile_values == pytest.approx(report.percentile_values)


# ----------------------------------------------------------------------
# verdict decision table


def _report(significant, d=3, kind=REWARD_CONTRIBUTION):
    sig = np.zeros(d, dtype=bool)
    for i in significant:
        sig[i] = True
    values = np.where(sig, 1.0, -1.0)
    return SignificanceReport(kind, np.full(d, 75.0), values, sig)


def test_verdict_decision_table():
    cases = [
        (set(), set(), Outcome.NO_REWARD_SIGNAL),
        (set(), {1, 2}, Outcome.NO_REWARD_SIGNAL),
        ({0}, set(), Outcome.NO_ACTION_CONTROL),
        ({0, 1}, {1, 2}, Outcome.POTENTIALLY_SUITABLE),
    ]
    for reward, action, outcome in cases:
        v = decide_verdict(_report(reward), _report(action, kind=OFFSET_ACTION_SENSITIVITY))
        assert v.outcome is outcome
        assert v.reward_features == frozenset(reward)
        if outcome is Outcome.POTENTIALLY_SUITABLE:
            assert v.actionable_features == frozenset(reward & action)
            assert v.actionable_features <= v.reward_features
        else:
            assert v.actionable_features == frozenset()


def test_verdict_disjoint_and_env5_examples():
    d = 10
    v = decide_verdict(_report({0}, d=d), _report({3, 4}, d=d))
    assert v.outcome is Outcome.NO_ACTION_CONTROL
    v = decide_verdict(_report({0}, d=d), _report(set(range(d)), d=d))
    assert v.outcome is Outcome.POTENTIALLY_SUITABLE
    assert v.actionable_features == {0}
    with pytest.raises(AnalysisError):
        decide_verdict(_report({0}, d=3), _report({0}, d=4))


# ----------------------------------------------------------------------
# ensemble training


def test_train_ensemble_seeds_and_single_model_equivalence():
    from dataclasses import replace

    ds = collect(make_env(EnvSpec(1, seed=4)), 2, 20, seed=6)
    cfg = ModelConfig(d=10, K=2, hidden_sizes=(8,), train_batches=8, batch_size=20, seed=0)
    ens = train_ensemble(ds, cfg, N=1, base_seed=21, shuffle_actions=False)
    assert ens.kind == ORIGINAL
    assert ens.seeds == [derive_seed(21, 0)]
    solo = train(ds, replace(cfg, seed=derive_seed(21, 0)))
    assert ens.models[0].equals(solo.params)
    assert ens.loss_curves[0] == solo.loss_curve

    with pytest.raises(ConfigurationError):
        train_ensemble(ds, cfg, N=0, base_seed=21, shuffle_actions=False)


def test_train_ensemble_parallel_matches_serial():
    ds = collect(make_env(EnvSpec(3, seed=4)), 2, 20, seed=6)
    cfg = ModelConfig(d=10, K=2, hidden_sizes=(8,), train_batches=6, batch_size=20, seed=0)
    serial = train_ensemble(ds, cfg, N=2, base_seed=33, shuffle_actions=True)
    parallel = train_ensemble(ds, cfg, N=2, base_seed=33, shuffle_actions=True, jobs=2)
    assert serial.kind == parallel.kind == SHUFFLED_BASELINE
    for a, b in zip(serial.models, parallel.models):
        assert a.equals(b)
    assert serial.loss_curves == parallel.loss_curves


# ----------------------------------------------------------------------
# export


def test_population_exports(tmp_path):
    pop = StatPopulation(np.array([[1.0, -2.5], [0.0, 3.25]]), REWARD_CONTRIBUTION, 1, 2)
    d = population_to_dict(pop)
    assert d["kind"] == REWARD_CONTRIBUTION
    assert d["values"] == [[1.0, -2.5], [0.0, 3.25]]
    path = str(tmp_path / "pop.csv")
    population_to_csv(pop, path)
    lines = open(path, encoding="utf-8").read().splitlines()
    assert lines[0] == "feature,m0_b0,m0_b1"
    assert lines[1] == "f0,1.0,-2.5"
    assert lines[2] == "f1,0.0,3.25"
