"""Transition datasets: collection, batching, shuffling, persistence.

A Dataset stores transitions column-wise (one array per field) in collection
order.  On disk it is JSON Lines: a single header object carrying ``d`` and
collection metadata, then one transition object per line with fields
(episode_id, t, state, action, reward, next_state).  Paths ending in ``.gz``
are transparently gzip-compressed.

Datasets are immutable by convention once collected; batches may hold views
into the dataset arrays and must be treated as read-only.
"""

from __future__ import annotations

import gzip
import json
from dataclasses import dataclass
from typing import IO, TYPE_CHECKING

import numpy as np

from .errors import ConfigurationError, DatasetError
from .seeding import check_seed, derive_seed

if TYPE_CHECKING:
    from .envs import EnvHandle

_FORMAT = "mdpcheck-dataset"
_VERSION = 1


@dataclass(eq=False)
class Dataset:
    """Column-wise transition storage; all arrays share the leading dimension."""

    states: np.ndarray       # (n, d) float64
    actions: np.ndarray      # (n,)   int64, values in {0, 1} for synthetic envs
    rewards: np.ndarray      # (n,)   float64
    next_states: np.ndarray  # (n, d) float64
    episode_ids: np.ndarray  # (n,)   int64, non-decreasing
    ts: np.ndarray           # (n,)   int64, step index within episode
    meta: dict

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[1]

    def equals(self, other: "Dataset") -> bool:
        """Field-for-field equality, including metadata."""
        return (
            self.states.shape == other.states.shape
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.rewards, other.rewards)
            and np.array_equal(self.next_states, other.next_states)
            and np.array_equal(self.episode_ids, other.episode_ids)
            and np.array_equal(self.ts, other.ts)
            and self.meta == other.meta
        )


@dataclass(frozen=True)
class MiniBatch:
    """One slice of a dataset; arrays may alias the parent, treat as read-only."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]


def _validate_columns(ds: Dataset, source: str) -> None:
    n = ds.states.shape[0]
    if ds.states.ndim != 2 or ds.next_states.shape != ds.states.shape:
        raise DatasetError(f"{source}: state matrices must be (n, d) and match")
    for name in ("actions", "rewards", "episode_ids", "ts"):
        col = getattr(ds, name)
        if col.shape != (n,):
            raise DatasetError(f"{source}: column {name} has shape {col.shape}, want ({n},)")
    if n == 0:
        return
    # episode ids non-decreasing, step counters restart at 0 and advance by 1
    if np.any(np.diff(ds.episode_ids) < 0):
        raise DatasetError(f"{source}: episode_ids must be non-decreasing")
    new_episode = np.empty(n, dtype=bool)
    new_episode[0] = True
    new_episode[1:] = np.diff(ds.episode_ids) != 0
    if np.any(ds.ts[new_episode] != 0):
        raise DatasetError(f"{source}: each episode must start at t=0")
    within = ~new_episode[1:]
    if np.any(np.diff(ds.ts)[within] != 1):
        raise DatasetError(f"{source}: step counter must advance by 1 within an episode")


def collect(
    env: "EnvHandle",
    num_batches: int,
    batch_size: int,
    seed: int,
    remainder: str = "strict",
) -> Dataset:
    """Roll random-policy episodes on ``env`` until num_batches × batch_size
    transitions exist.

    Episodes are rolled sequentially on the given handle (pass a freshly made
    one for reproducibility); episode ``e`` uses policy seed
    ``derive_seed(seed, e)``.  Under the default "strict" policy the total
    transition count must be a whole number of episodes; "pad-episodes" rolls
    one extra episode and truncates the tail instead.
    """
    from .envs import rollout_episode

    if num_batches < 1 or batch_size < 1:
        raise ConfigurationError("num_batches and batch_size must be >= 1")
    check_seed(seed, "collect seed")
    if remainder not in ("strict", "pad-episodes"):
        raise ConfigurationError(f"unknown remainder policy {remainder!r}")

    T = env.spec.T
    d = env.spec.d
    total = num_batches * batch_size
    if total % T != 0 and remainder == "strict":
        raise ConfigurationError(
            f"num_batches × batch_size = {total} is not a whole number of "
            f"T={T} episodes; use remainder='pad-episodes' to truncate"
        )
    num_episodes = -(-total // T)

    states = np.zeros((num_episodes * T, d), dtype=np.float64)
    actions = np.zeros(num_episodes * T, dtype=np.int64)
    rewards = np.zeros(num_episodes * T, dtype=np.float64)
    next_states = np.zeros((num_episodes * T, d), dtype=np.float64)
    episode_ids = np.zeros(num_episodes * T, dtype=np.int64)
    ts = np.zeros(num_episodes * T, dtype=np.int64)

    row = 0
    for e in range(num_episodes):
        episode = rollout_episode(env, derive_seed(seed, e), episode_id=e)
        for tr in episode.transitions:
            states[row] = tr.state
            actions[row] = tr.action
            rewards[row] = tr.reward
            next_states[row] = tr.next_state
            episode_ids[row] = tr.episode_id
            ts[row] = tr.t
            row += 1

    meta = {
        "source": env.spec.env_id,
        "d": d,
        "T": T,
        "env_seed": env.spec.seed,
        "collect_seed": seed,
        "num_batches": num_batches,
        "batch_size": batch_size,
        "remainder": remainder,
        "num_episodes": num_episodes,
        "num_transitions": total,
    }
    ds = Dataset(
        states[:total],
        actions[:total],
        rewards[:total],
        next_states[:total],
        episode_ids[:total],
        ts[:total],
        meta,
    )
    _validate_columns(ds, "collect")
    return ds


def batches(
    ds: Dataset,
    batch_size: int,
    shuffle_seed: int | None = None,
    allow_partial: bool = False,
) -> list[MiniBatch]:
    """Split ``ds`` into mini-batches.

    Without ``shuffle_seed`` batches follow collection order; with one, the
    transitions are permuted first (deterministically).  The remainder that
    does not fill a whole batch is dropped unless ``allow_partial`` is set.
    """
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
    n = len(ds)
    if n == 0:
        raise ConfigurationError("cannot batch an empty dataset")
    if n < batch_size and not allow_partial:
        raise ConfigurationError(
            f"batch_size {batch_size} exceeds dataset size {n}; "
            "set allow_partial to get a single short batch"
        )

    if shuffle_seed is None:
        def take(lo: int, hi: int) -> MiniBatch:
            return MiniBatch(
                ds.states[lo:hi], ds.actions[lo:hi], ds.rewards[lo:hi], ds.next_states[lo:hi]
            )
    else:
        check_seed(shuffle_seed, "shuffle seed")
        perm = np.random.default_rng(shuffle_seed).permutation(n)

        def take(lo: int, hi: int) -> MiniBatch:
            idx = perm[lo:hi]
            return MiniBatch(
                ds.states[idx], ds.actions[idx], ds.rewards[idx], ds.next_states[idx]
            )

    out = [take(lo, lo + batch_size) for lo in range(0, n - batch_size + 1, batch_size)]
    if allow_partial and n % batch_size:
        out.append(take(n - n % batch_size, n))
    return out


def shuffle_actions_within_batch(b: MiniBatch, seed: int) -> MiniBatch:
    """Return ``b`` with its action column uniformly permuted; rest untouched."""
    check_seed(seed, "shuffle seed")
    perm = np.random.default_rng(seed).permutation(len(b))
    return MiniBatch(b.states, b.actions[perm], b.rewards, b.next_states)


# ----------------------------------------------------------------------
# persistence


def _open(path: str, mode: str) -> IO:
    if str(path).endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def save(ds: Dataset, path: str) -> None:
    """Write ``ds`` as JSON Lines (header line, then one transition per line)."""
    header = {"format": _FORMAT, "version": _VERSION, "d": ds.d, "meta": ds.meta}
    with _open(path, "w") as fh:
        fh.write(json.dumps(header, separators=(",", ":"), sort_keys=True) + "\n")
        for i in range(len(ds)):
            row = {
                "episode_id": int(ds.episode_ids[i]),
                "t": int(ds.ts[i]),
                "state": ds.states[i].tolist(),
                "action": int(ds.actions[i]),
                "reward": float(ds.rewards[i]),
                "next_state": ds.next_states[i].tolist(),
            }
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")


def load(path: str) -> Dataset:
    """Read a dataset written by ``save``; errors carry the offending line number."""
    with _open(path, "r") as fh:
        try:
            first = fh.readline()
            if not first:
                raise DatasetError(f"{path}: line 1: empty file")
            header = json.loads(first)
        except json.JSONDecodeError as e:
            raise DatasetError(f"{path}: line 1: malformed header: {e}") from e
        if not isinstance(header, dict) or header.get("format") != _FORMAT:
            raise DatasetError(f"{path}: line 1: not a {_FORMAT} file")
        if header.get("version") != _VERSION:
            raise DatasetError(f"{path}: line 1: unsupported version {header.get('version')!r}")
        d = header.get("d")
        if not isinstance(d, int) or d < 1:
            raise DatasetError(f"{path}: line 1: bad state dimension {d!r}")

        states, actions, rewards, next_states, episode_ids, ts = [], [], [], [], [], []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{path}: line {lineno}: malformed row: {e}") from e
            try:
                s, ns = row["state"], row["next_state"]
                if len(s) != d or len(ns) != d:
                    raise DatasetError(
                        f"{path}: line {lineno}: state dimension "
                        f"{len(s)}/{len(ns)} does not match header d={d}"
                    )
                states.append(s)
                next_states.append(ns)
                actions.append(row["action"])
                rewards.append(row["reward"])
                episode_ids.append(row["episode_id"])
                ts.append(row["t"])
            except (KeyError, TypeError) as e:
                raise DatasetError(f"{path}: line {lineno}: missing or bad field: {e}") from e

    n = len(states)
    ds = Dataset(
        np.asarray(states, dtype=np.float64).reshape(n, d),
        np.asarray(actions, dtype=np.int64),
        np.asarray(rewards, dtype=np.float64),
        np.asarray(next_states, dtype=np.float64).reshape(n, d),
        np.asarray(episode_ids, dtype=np.int64),
        np.asarray(ts, dtype=np.int64),
        header.get("meta", {}),
    )
    _validate_columns(ds, path)
    return ds
