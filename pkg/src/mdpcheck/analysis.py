"""Ensemble training and the two feature-significance probes.

The validation question is answered from two sample populations per state
feature, each of size N·num_eval_batches (one sample per trained model per
evaluation batch):

* reward contribution: how much the reward-prediction MAE rises when the
  feature's column is replaced by its within-batch mean;
* action sensitivity: how far the predicted next-state means move when the
  batch's actions are shuffled, weighted by the averaged mixture affinities,
  minus the same statistic from a baseline ensemble trained on
  action-shuffled data.

A feature is significant when the value that X% of its samples lie at or
above is strictly positive.  That level is the (100−X)-th percentile of the
sorted sample under linear interpolation; raising X can only lower it, so
demanding more confidence never flags new features.  X defaults to 75 and
may be set per feature.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .data import Dataset, batches, shuffle_actions_within_batch
from .errors import AnalysisError, ConfigurationError, TrainingError
from .model import ModelConfig, ModelParams, forward_batch, train
from .seeding import check_seed, derive_seed

ORIGINAL = "original"
SHUFFLED_BASELINE = "shuffled_baseline"

REWARD_CONTRIBUTION = "reward_contribution"
ACTION_SENSITIVITY = "action_sensitivity"
OFFSET_ACTION_SENSITIVITY = "offset_action_sensitivity"


class Outcome(str, Enum):
    """Final call on a designed MDP."""

    NO_REWARD_SIGNAL = "NoRewardSignal"
    NO_ACTION_CONTROL = "NoActionControl"
    POTENTIALLY_SUITABLE = "PotentiallySuitable"


@dataclass(frozen=True)
class Verdict:
    outcome: Outcome
    reward_features: frozenset[int]
    actionable_features: frozenset[int]

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "reward_features": sorted(self.reward_features),
            "actionable_features": sorted(self.actionable_features),
        }


@dataclass
class Ensemble:
    """N world models trained on one dataset with derived seeds."""

    models: list[ModelParams]
    kind: str  # ORIGINAL or SHUFFLED_BASELINE
    seeds: list[int]
    loss_curves: list[list[float]] | None = None


@dataclass
class StatPopulation:
    """Per-feature samples; column j·num_batches+b belongs to (model j, batch b)."""

    values: np.ndarray  # (d, num_models · num_batches) float64
    kind: str
    num_models: int
    num_batches: int


@dataclass
class SignificanceReport:
    kind: str
    X: np.ndarray                  # (d,) percentile level per feature
    percentile_values: np.ndarray  # (d,) the value X% of samples lie at or above
    significant: np.ndarray        # (d,) bool, == percentile_values > 0

    def significant_features(self) -> frozenset[int]:
        return frozenset(int(i) for i in np.flatnonzero(self.significant))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "X": [float(x) for x in self.X],
            "percentile_values": [float(v) for v in self.percentile_values],
            "significant": [bool(s) for s in self.significant],
            "significant_features": sorted(self.significant_features()),
        }


# ----------------------------------------------------------------------
# ensemble training


def _train_one(ds: Dataset, config: ModelConfig, base_seed: int, j: int, shuffle: bool):
    cfg_j = replace(config, seed=derive_seed(base_seed, j))
    try:
        res = train(ds, cfg_j, shuffle_actions=shuffle)
    except TrainingError as e:
        raise TrainingError(f"model {j}: {e}") from e
    return res


_FORK_STATE: dict = {}


def _train_one_forked(j: int):
    s = _FORK_STATE
    return _train_one(s["ds"], s["config"], s["base_seed"], j, s["shuffle"])


def train_ensemble(
    ds: Dataset,
    config: ModelConfig,
    N: int,
    base_seed: int,
    shuffle_actions: bool,
    jobs: int = 1,
) -> Ensemble:
    """Train N models; model j uses seed derive_seed(base_seed, j).

    With ``shuffle_actions`` the ensemble is the noise baseline: every
    training mini-batch has its actions permuted before the forward pass.
    ``jobs`` > 1 trains models in parallel worker processes (fork); results
    are identical to the serial order either way.
    """
    if N < 1:
        raise ConfigurationError(f"ensemble size must be >= 1, got {N}")
    check_seed(base_seed, "ensemble base seed")
    kind = SHUFFLED_BASELINE if shuffle_actions else ORIGINAL

    if jobs > 1 and N > 1 and "fork" in multiprocessing.get_all_start_methods():
        _FORK_STATE.update(ds=ds, config=config, base_seed=base_seed, shuffle=shuffle_actions)
        try:
            with multiprocessing.get_context("fork").Pool(min(jobs, N)) as pool:
                results = pool.map(_train_one_forked, range(N))
        finally:
            _FORK_STATE.clear()
    else:
        results = [_train_one(ds, config, base_seed, j, shuffle_actions) for j in range(N)]

    return Ensemble(
        models=[r.params for r in results],
        kind=kind,
        seeds=[derive_seed(base_seed, j) for j in range(N)],
        loss_curves=[r.loss_curve for r in results],
    )


# ----------------------------------------------------------------------
# statistic populations


def reward_contribution(ens: Ensemble, eval_ds: Dataset, batch_size: int) -> StatPopulation:
    """MAE increase of reward prediction under within-batch mean replacement.

    For model j, batch b, feature i the sample is
    MAE(r_hat on batch with column i set to the batch's column-i mean) −
    MAE(r_hat unperturbed).  Positive values mean the model leans on the
    feature to predict reward.  Dropout stays off.
    """
    if ens.kind != ORIGINAL:
        raise AnalysisError(
            f"reward contribution is defined on the original ensemble, got kind {ens.kind!r}"
        )
    mbs = batches(eval_ds, batch_size)
    d = eval_ds.d
    N, nb = len(ens.models), len(mbs)
    values = np.empty((d, N * nb), dtype=np.float64)
    rows = np.arange(d)
    for j, params in enumerate(ens.models):
        for b, mb in enumerate(mbs):
            B = len(mb)
            preds = forward_batch(params, mb.states, mb.actions).r_hat
            mae_orig = np.mean(np.abs(preds - mb.rewards))
            means = mb.states.mean(axis=0)
            perturbed = np.broadcast_to(mb.states, (d, B, d)).copy()
            perturbed[rows, :, rows] = means[:, None]
            preds_p = forward_batch(
                params, perturbed.reshape(d * B, d), np.tile(mb.actions, d)
            ).r_hat.reshape(d, B)
            mae_pert = np.mean(np.abs(preds_p - mb.rewards[None, :]), axis=1)
            values[:, j * nb + b] = mae_pert - mae_orig
    return StatPopulation(values, REWARD_CONTRIBUTION, N, nb)


def action_sensitivity(
    ens: Ensemble, eval_ds: Dataset, batch_size: int, shuffle_seed: int
) -> StatPopulation:
    """Affinity-weighted shift of predicted next-state means under action shuffle.

    Batch b is shuffled once with seed derive_seed(shuffle_seed, b) and that
    single shuffled action vector ā is shared by every model.  The sample for
    feature i sums, over the batch's examples and mixture components,
    (α_k(s,a)+α_k(s,ā))/2 · |μ_k(s,a)[i] − μ_k(s,ā)[i]|.
    """
    check_seed(shuffle_seed, "eval shuffle seed")
    mbs = batches(eval_ds, batch_size)
    d = eval_ds.d
    N, nb = len(ens.models), len(mbs)
    values = np.empty((d, N * nb), dtype=np.float64)
    shuffled_actions = [
        shuffle_actions_within_batch(mb, derive_seed(shuffle_seed, b)).actions
        for b, mb in enumerate(mbs)
    ]
    for j, params in enumerate(ens.models):
        for b, mb in enumerate(mbs):
            out_a = forward_batch(params, mb.states, mb.actions)
            out_s = forward_batch(params, mb.states, shuffled_actions[b])
            affinity = 0.5 * (out_a.alpha + out_s.alpha)          # (B, K)
            shift = np.abs(out_a.mu - out_s.mu)                   # (B, K, d)
            values[:, j * nb + b] = np.einsum("bk,bkd->d", affinity, shift)
    return StatPopulation(values, ACTION_SENSITIVITY, N, nb)


def offset_sensitivity(actual: StatPopulation, baseline: StatPopulation) -> StatPopulation:
    """Actual minus baseline sensitivity, paired by (model index, batch index)."""
    if actual.kind != ACTION_SENSITIVITY or baseline.kind != ACTION_SENSITIVITY:
        raise AnalysisError(
            f"offset needs two action-sensitivity populations, got {actual.kind!r} "
            f"and {baseline.kind!r}"
        )
    if (
        actual.values.shape != baseline.values.shape
        or actual.num_models != baseline.num_models
        or actual.num_batches != baseline.num_batches
    ):
        raise AnalysisError(
            f"population shapes differ: {actual.values.shape} with "
            f"({actual.num_models} models × {actual.num_batches} batches) vs "
            f"{baseline.values.shape} with "
            f"({baseline.num_models} models × {baseline.num_batches} batches)"
        )
    return StatPopulation(
        actual.values - baseline.values,
        OFFSET_ACTION_SENSITIVITY,
        actual.num_models,
        actual.num_batches,
    )


# ----------------------------------------------------------------------
# significance and verdict


def resolve_percentiles(X, d: int) -> np.ndarray:
    """Broadcast a scalar or per-feature X to a validated d-vector."""
    levels = np.asarray(X, dtype=np.float64)
    if levels.ndim == 0:
        levels = np.full(d, float(levels))
    if levels.shape != (d,):
        raise ConfigurationError(f"X must be a scalar or a {d}-vector, got shape {levels.shape}")
    if np.any(levels <= 0) or np.any(levels >= 100):
        raise ConfigurationError(f"percentile levels must lie strictly in (0, 100), got {X}")
    return levels


def significance_levels(pop: StatPopulation, X) -> np.ndarray:
    """Per-feature value that X% of the samples equal or exceed.

    This is the (100−X)-th percentile of each feature's sorted sample under
    linear interpolation — the quantity the significance rule compares to 0.
    """
    if pop.values.size == 0:
        raise AnalysisError("cannot take percentiles of an empty population")
    d = pop.values.shape[0]
    levels = resolve_percentiles(X, d)
    values = np.empty(d, dtype=np.float64)
    for i in range(d):
        values[i] = np.percentile(pop.values[i], 100.0 - levels[i])
    return values


def percentile_significance(pop: StatPopulation, X) -> SignificanceReport:
    """Apply the X% significance rule to every feature of ``pop``.

    The reported ``percentile_value`` per feature is the point that X% of the
    samples equal or exceed; the feature is significant iff that value is
    strictly greater than 0.  Raising X can only lower the level, so a
    feature never becomes significant by demanding more of it.
    """
    values = significance_levels(pop, X)
    levels = resolve_percentiles(X, pop.values.shape[0])
    return SignificanceReport(pop.kind, levels, values, values > 0.0)


def decide_verdict(
    reward_report: SignificanceReport, offset_action_report: SignificanceReport
) -> Verdict:
    """Combine the two probes into the final call.

    No reward-significant feature: the data cannot even support reward
    prediction from state, so no RL target exists.  Reward features with no
    action-sensitive member: rewards are predictable but nothing the agent
    does moves them.  Otherwise the intersection is the actionable set.
    """
    if reward_report.X.shape != offset_action_report.X.shape:
        raise AnalysisError(
            f"reports cover different feature counts: {reward_report.X.shape} "
            f"vs {offset_action_report.X.shape}"
        )
    reward_features = reward_report.significant_features()
    if not reward_features:
        return Verdict(Outcome.NO_REWARD_SIGNAL, frozenset(), frozenset())
    actionable = reward_features & offset_action_report.significant_features()
    if not actionable:
        return Verdict(Outcome.NO_ACTION_CONTROL, reward_features, frozenset())
    return Verdict(Outcome.POTENTIALLY_SUITABLE, reward_features, actionable)


# ----------------------------------------------------------------------
# export


def population_to_dict(pop: StatPopulation) -> dict:
    return {
        "kind": pop.kind,
        "num_models": pop.num_models,
        "num_batches": pop.num_batches,
        "values": [[float(v) for v in row] for row in pop.values],
    }


def population_to_csv(pop: StatPopulation, path: str) -> None:
    """Row per feature, one column per (model, batch) sample."""
    header = ["feature"] + [
        f"m{j}_b{b}" for j in range(pop.num_models) for b in range(pop.num_batches)
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i, row in enumerate(pop.values):
            fh.write(",".join([f"f{i}"] + [repr(float(v)) for v in row]) + "\n")
