"""Mixture-density world model over raw state features, from scratch in numpy.

The network takes one (state, action) pair and predicts the reward and a
K-component diagonal-Gaussian mixture over the next state.  A tanh trunk of
fully-connected layers feeds four heads: reward (1 value, passed through the
configured reward activation), mixture logits (K), means (K×d) and
log-sigmas (K×d).  The training loss per example is

    (r_hat - r)^2  -  log Σ_k α_k · N(s' | μ_k, diag σ_k²)

with the mixture log evaluated by max-shifted log-sum-exp.  Sigmas are
exp(log-sigma) clamped to [SIGMA_MIN, SIGMA_MAX]; the clamp passes zero
gradient at either bound.  Input dropout applies to the state features only
(never the action one-hot), with inverted 1/keep_prob scaling, and only
where a mask or dropout seed is supplied; evaluation passes no mask.

Everything here is deterministic given (dataset, config): initialization,
dropout masks, batch order and the within-batch action shuffle all derive
from ``config.seed`` via ``seeding.derive_seed``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import log, pi, sqrt

import numpy as np

from .data import Dataset, MiniBatch, batches, shuffle_actions_within_batch
from .errors import CheckpointError, ConfigurationError, NumericError, TrainingError, UsageError
from .seeding import check_seed, derive_seed

SIGMA_MIN = 1e-3
SIGMA_MAX = 1e3

_LOG_2PI = log(2.0 * pi)
_CKPT_FORMAT = "mdpcheck-checkpoint"
_CKPT_VERSION = 1
_DTYPES = {"float32": "<f4", "float64": "<f8"}

# Gradients mirror ModelParams.arrays: one array per parameter, same shapes.
Gradients = dict[str, np.ndarray]


@dataclass(frozen=True)
class ModelConfig:
    """Architecture plus optimizer settings for one world model.

    ``hidden_sizes`` may be empty, in which case the heads read the input
    directly (useful for hand-built fixtures).  ``history_steps`` is fixed at
    1: the model conditions on the current state and action only.
    ``reward_activation`` shapes the reward head's output: ``sigmoid``
    (default) squashes predictions into (0, 1), the codomain of the binary
    rewards every environment here emits, and keeps a converged head's
    perturbation response symmetric instead of rectified; ``linear`` leaves
    the head unbounded for regression-style targets and hand-built fixtures.
    ``weight_decay`` applies decoupled decay to the weight matrices (never
    the biases) after each Adam step: with normalized step sizes, decay is
    what bounds how far two models trained on near-identical streams can
    drift apart along directions the data does not determine, and it is the
    lever that stops heads from memorizing noise correlations.  ``dtype``
    selects the parameter precision; float64 exists for gradient
    verification, float32 is the training default.
    """

    d: int
    K: int = 5
    hidden_sizes: tuple[int, ...] = (32, 32)
    input_dropout_rate: float = 0.2
    history_steps: int = 1
    reward_activation: str = "sigmoid"
    learn_rate: float = 1e-3
    lr_schedule: str = "constant"
    weight_decay: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    train_batches: int = 1000
    batch_size: int = 1024
    seed: int = 0
    dtype: str = "float32"


def validate_config(config: ModelConfig) -> ModelConfig:
    if config.d < 1:
        raise ConfigurationError(f"d must be >= 1, got {config.d}")
    if config.K < 1:
        raise ConfigurationError(f"K must be >= 1, got {config.K}")
    if any(w < 1 for w in config.hidden_sizes):
        raise ConfigurationError(f"hidden layer widths must be >= 1, got {config.hidden_sizes}")
    if not 0.0 <= config.input_dropout_rate < 1.0:
        raise ConfigurationError(
            f"input_dropout_rate must be in [0, 1), got {config.input_dropout_rate}"
        )
    if config.history_steps != 1:
        raise ConfigurationError("history_steps is fixed at 1")
    if config.reward_activation not in ("sigmoid", "linear"):
        raise ConfigurationError(
            f"reward_activation must be 'sigmoid' or 'linear', got {config.reward_activation!r}"
        )
    if config.learn_rate <= 0:
        raise ConfigurationError(f"learn_rate must be positive, got {config.learn_rate}")
    if config.lr_schedule not in ("constant", "cosine"):
        raise ConfigurationError(
            f"lr_schedule must be 'constant' or 'cosine', got {config.lr_schedule!r}"
        )
    if config.weight_decay < 0:
        raise ConfigurationError(f"weight_decay must be >= 0, got {config.weight_decay}")
    for name in ("adam_beta1", "adam_beta2"):
        b = getattr(config, name)
        if not 0.0 <= b < 1.0:
            raise ConfigurationError(f"{name} must be in [0, 1), got {b}")
    if config.adam_eps <= 0:
        raise ConfigurationError(f"adam_eps must be positive, got {config.adam_eps}")
    if config.train_batches < 1 or config.batch_size < 1:
        raise ConfigurationError("train_batches and batch_size must be >= 1")
    if config.dtype not in _DTYPES:
        raise ConfigurationError(f"dtype must be one of {sorted(_DTYPES)}, got {config.dtype!r}")
    check_seed(config.seed, "model seed")
    return config


@dataclass(eq=False)
class ModelParams:
    """All weights of one model, keyed by the documented layout order.

    ``feature_loc``/``feature_scale`` are frozen per-feature standardization
    constants (identity after ``init_params``; set from the training split by
    ``train``).  The network standardizes its state inputs with them and
    un-standardizes the mean/sigma heads, so predictions and the loss stay in
    raw feature units while the trainable weights see unit-scale values.
    """

    config: ModelConfig
    arrays: dict[str, np.ndarray]
    feature_loc: np.ndarray
    feature_scale: np.ndarray

    def equals(self, other: "ModelParams") -> bool:
        return (
            self.config == other.config
            and list(self.arrays) == list(other.arrays)
            and all(np.array_equal(self.arrays[k], other.arrays[k]) for k in self.arrays)
            and np.array_equal(self.feature_loc, other.feature_loc)
            and np.array_equal(self.feature_scale, other.feature_scale)
        )


@dataclass(frozen=True)
class MdnOutput:
    """Prediction for a single (state, action) pair."""

    r_hat: float
    alpha: np.ndarray  # (K,), simplex
    mu: np.ndarray     # (K, d)
    sigma: np.ndarray  # (K, d), within [SIGMA_MIN, SIGMA_MAX]


@dataclass(frozen=True)
class BatchOutput:
    """Vectorized predictions for a batch of inputs."""

    r_hat: np.ndarray  # (B,)
    alpha: np.ndarray  # (B, K)
    mu: np.ndarray     # (B, K, d)
    sigma: np.ndarray  # (B, K, d)


@dataclass
class TrainResult:
    params: ModelParams
    loss_curve: list[float]


# ----------------------------------------------------------------------
# parameters


def param_layout(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Names and shapes of every parameter, in initialization and file order."""
    in_dim = config.d + 2  # state features + one-hot action
    layout: list[tuple[str, tuple[int, ...]]] = []
    prev = in_dim
    for i, width in enumerate(config.hidden_sizes):
        layout.append((f"trunk{i}_w", (prev, width)))
        layout.append((f"trunk{i}_b", (width,)))
        prev = width
    kd = config.K * config.d
    layout.append(("reward_w", (prev, 1)))
    layout.append(("reward_b", (1,)))
    layout.append(("alpha_w", (prev, config.K)))
    layout.append(("alpha_b", (config.K,)))
    layout.append(("mu_w", (prev, kd)))
    layout.append(("mu_b", (kd,)))
    layout.append(("logsigma_w", (prev, kd)))
    layout.append(("logsigma_b", (kd,)))
    return layout


def init_params(config: ModelConfig) -> ModelParams:
    """Seeded init: weights uniform in ±sqrt(6/(fan_in+fan_out)), biases zero.

    Zero log-sigma biases put the initial sigma near 1.  Weight matrices are
    drawn in layout order from ``default_rng(config.seed)``.
    """
    validate_config(config)
    dtype = np.dtype(config.dtype)
    rng = np.random.default_rng(config.seed)
    arrays: dict[str, np.ndarray] = {}
    for name, shape in param_layout(config):
        if name.endswith("_b"):
            arrays[name] = np.zeros(shape, dtype=dtype)
        else:
            limit = sqrt(6.0 / (shape[0] + shape[1]))
            arrays[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return ModelParams(
        config,
        arrays,
        np.zeros(config.d, dtype=dtype),
        np.ones(config.d, dtype=dtype),
    )


# ----------------------------------------------------------------------
# forward


def _check_finite(name: str, value: np.ndarray) -> None:
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite values in {name}")


def _forward_core(
    params: ModelParams,
    states: np.ndarray,
    actions: np.ndarray,
    masks: np.ndarray | None,
) -> dict:
    """Shared forward pass; returns every intermediate needed by backprop."""
    config = params.config
    dtype = np.dtype(config.dtype)
    arrays = params.arrays
    B = states.shape[0]
    if states.shape != (B, config.d):
        raise UsageError(f"states must be (B, {config.d}), got {states.shape}")
    _check_finite("states", states)
    acts = np.asarray(actions)
    if acts.shape != (B,):
        raise UsageError(f"actions must be ({B},), got {acts.shape}")
    if not np.all((acts == 0) | (acts == 1)):
        raise UsageError("actions must be 0 or 1")

    x_state = states.astype(dtype, copy=False)
    if masks is not None:
        if masks.shape != states.shape:
            raise UsageError(f"dropout masks must match states shape {states.shape}")
        keep = 1.0 - config.input_dropout_rate
        x_state = x_state * masks.astype(dtype, copy=False) / dtype.type(keep)
    loc, scale = params.feature_loc, params.feature_scale
    x_state = (x_state - loc) / scale
    onehot = np.zeros((B, 2), dtype=dtype)
    onehot[np.arange(B), acts.astype(np.int64)] = 1.0
    x = np.concatenate([x_state, onehot], axis=1)

    h = x
    activations = [x]  # activations[l] is the input of trunk layer l
    for i in range(len(config.hidden_sizes)):
        z = h @ arrays[f"trunk{i}_w"] + arrays[f"trunk{i}_b"]
        h = np.tanh(z)
        activations.append(h)

    z_reward = (h @ arrays["reward_w"] + arrays["reward_b"])[:, 0]
    r_hat = _sigmoid(z_reward) if config.reward_activation == "sigmoid" else z_reward
    logits = h @ arrays["alpha_w"] + arrays["alpha_b"]
    log_alpha = logits - _logsumexp(logits)
    alpha = np.exp(log_alpha)
    K, d = config.K, config.d
    mu_net = (h @ arrays["mu_w"] + arrays["mu_b"]).reshape(B, K, d)
    mu = loc + scale * mu_net
    raw = (h @ arrays["logsigma_w"] + arrays["logsigma_b"]).reshape(B, K, d)
    with np.errstate(over="ignore"):
        sigma_unc = scale * np.exp(raw)
    sigma = np.clip(sigma_unc, SIGMA_MIN, SIGMA_MAX)
    return {
        "activations": activations,
        "r_hat": r_hat,
        "logits": logits,
        "log_alpha": log_alpha,
        "alpha": alpha,
        "scale": scale,
        "mu": mu,
        "sigma": sigma,
        "sigma_pass": (sigma_unc > SIGMA_MIN) & (sigma_unc < SIGMA_MAX),
    }


def _logsumexp(a: np.ndarray) -> np.ndarray:
    """Row-wise max-shifted log-sum-exp, keepdims."""
    m = np.max(a, axis=-1, keepdims=True)
    return m + np.log(np.sum(np.exp(a - m), axis=-1, keepdims=True))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    """Overflow-safe logistic function."""
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward_batch(
    params: ModelParams,
    states: np.ndarray,
    actions: np.ndarray,
    dropout_masks: np.ndarray | None = None,
) -> BatchOutput:
    """Vectorized forward; pass no masks for evaluation-time predictions."""
    c = _forward_core(params, np.asarray(states, dtype=np.float64), actions, dropout_masks)
    return BatchOutput(c["r_hat"], c["alpha"], c["mu"], c["sigma"])


def forward(
    params: ModelParams,
    state: np.ndarray,
    action: int,
    dropout_mask: np.ndarray | None = None,
) -> MdnOutput:
    """Predict reward and next-state mixture for one (state, action) pair."""
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (params.config.d,):
        raise UsageError(f"state must be a {params.config.d}-vector, got shape {state.shape}")
    masks = None if dropout_mask is None else np.asarray(dropout_mask)[None, :]
    out = forward_batch(params, state[None, :], np.asarray([action]), masks)
    return MdnOutput(float(out.r_hat[0]), out.alpha[0], out.mu[0], out.sigma[0])


# ----------------------------------------------------------------------
# loss


def loss(out: MdnOutput, reward_target: float, next_state_target: np.ndarray) -> float:
    """Single-example loss: squared reward error plus mixture negative
    log-density of the next state under (alpha, mu, sigma)."""
    target = np.asarray(next_state_target, dtype=np.float64)
    delta = target[None, :] - np.asarray(out.mu, dtype=np.float64)
    sigma = np.asarray(out.sigma, dtype=np.float64)
    gauss_log = np.sum(-0.5 * _LOG_2PI - np.log(sigma) - delta**2 / (2.0 * sigma**2), axis=-1)
    with np.errstate(divide="ignore"):  # zero-weight components drop out
        comp_log = np.log(np.asarray(out.alpha, dtype=np.float64)) + gauss_log
    nll = -float(_logsumexp(comp_log[None, :])[0, 0])
    return (float(out.r_hat) - float(reward_target)) ** 2 + nll


def _transition_nll(core: dict, next_states: np.ndarray) -> tuple[np.ndarray, dict]:
    """Per-example mixture NLL plus intermediates for backprop."""
    mu, sigma = core["mu"], core["sigma"]
    delta = next_states[:, None, :].astype(mu.dtype, copy=False) - mu
    gauss_log = np.sum(-0.5 * _LOG_2PI - np.log(sigma) - delta**2 / (2.0 * sigma**2), axis=2)
    comp_log = core["log_alpha"] + gauss_log
    lse = _logsumexp(comp_log)
    resp = np.exp(comp_log - lse)  # responsibilities, rows sum to 1
    return -lse[:, 0], {"delta": delta, "resp": resp}


def batch_loss(params: ModelParams, batch: MiniBatch, dropout_seed: int) -> float:
    """Mean loss over ``batch`` with dropout masks drawn from ``dropout_seed``.

    Uses the same mask derivation as ``gradients``, so finite differences of
    this function verify that one.
    """
    masks = _dropout_masks(params.config, len(batch), dropout_seed)
    core = _forward_core(params, batch.states, batch.actions, masks)
    nll, _ = _transition_nll(core, batch.next_states)
    sq = (core["r_hat"] - batch.rewards.astype(core["r_hat"].dtype, copy=False)) ** 2
    return float(np.mean(sq + nll))


def _dropout_masks(config: ModelConfig, B: int, dropout_seed: int) -> np.ndarray | None:
    if config.input_dropout_rate == 0.0:
        return None
    check_seed(dropout_seed, "dropout seed")
    rng = np.random.default_rng(dropout_seed)
    return (rng.random((B, config.d)) >= config.input_dropout_rate).astype(config.dtype)


# ----------------------------------------------------------------------
# gradients


def gradients(params: ModelParams, batch: MiniBatch, dropout_seed: int) -> Gradients:
    """Mean-over-batch gradient of the loss w.r.t. every parameter."""
    _, grads = _loss_and_gradients(params, batch, dropout_seed)
    return grads


def _loss_and_gradients(
    params: ModelParams, batch: MiniBatch, dropout_seed: int
) -> tuple[float, Gradients]:
    if len(batch) == 0:
        raise UsageError("gradient of an empty batch")
    config = params.config
    arrays = params.arrays
    B = len(batch)
    masks = _dropout_masks(config, B, dropout_seed)
    core = _forward_core(params, batch.states, batch.actions, masks)
    nll, aux = _transition_nll(core, batch.next_states)
    rewards = batch.rewards.astype(core["r_hat"].dtype, copy=False)
    r_err = core["r_hat"] - rewards
    loss_val = float(np.mean(r_err**2 + nll))

    sigma, delta, resp = core["sigma"], aux["delta"], aux["resp"]
    inv_b = 1.0 / B
    # head-output gradients of the mean loss; mu head output is in
    # standardized units, so its raw-unit gradient picks up the scale
    g_r = (2.0 * inv_b) * r_err                                   # (B,)
    if config.reward_activation == "sigmoid":
        g_r = g_r * core["r_hat"] * (1.0 - core["r_hat"])
    g_logits = inv_b * (core["alpha"] - resp)                     # (B, K)
    g_mu = (-inv_b) * core["scale"] * resp[:, :, None] * delta / sigma**2
    g_raw = inv_b * resp[:, :, None] * (1.0 - delta**2 / sigma**2)
    g_raw = np.where(core["sigma_pass"], g_raw, 0.0)              # clamp blocks gradient

    h_last = core["activations"][-1]
    K, d = config.K, config.d
    g_mu_flat = g_mu.reshape(B, K * d)
    g_raw_flat = g_raw.reshape(B, K * d)

    grads: Gradients = {}
    grads["reward_w"] = h_last.T @ g_r[:, None]
    grads["reward_b"] = np.array([g_r.sum()], dtype=h_last.dtype)
    grads["alpha_w"] = h_last.T @ g_logits
    grads["alpha_b"] = g_logits.sum(axis=0)
    grads["mu_w"] = h_last.T @ g_mu_flat
    grads["mu_b"] = g_mu_flat.sum(axis=0)
    grads["logsigma_w"] = h_last.T @ g_raw_flat
    grads["logsigma_b"] = g_raw_flat.sum(axis=0)

    g_h = (
        g_r[:, None] @ arrays["reward_w"].T
        + g_logits @ arrays["alpha_w"].T
        + g_mu_flat @ arrays["mu_w"].T
        + g_raw_flat @ arrays["logsigma_w"].T
    )
    for i in reversed(range(len(config.hidden_sizes))):
        h_i = core["activations"][i + 1]
        g_z = g_h * (1.0 - h_i**2)
        grads[f"trunk{i}_w"] = core["activations"][i].T @ g_z
        grads[f"trunk{i}_b"] = g_z.sum(axis=0)
        g_h = g_z @ arrays[f"trunk{i}_w"].T

    for name, _ in param_layout(config):
        if not np.all(np.isfinite(grads[name])):
            raise TrainingError(f"non-finite gradient in {name}")
    return loss_val, {name: grads[name] for name, _ in param_layout(config)}


# ----------------------------------------------------------------------
# training


def train(dataset: Dataset, config: ModelConfig, shuffle_actions: bool = False) -> TrainResult:
    """Run ``config.train_batches`` Adam steps over shuffled mini-batches.

    Cycles the dataset with a fresh shuffle per pass.  With
    ``shuffle_actions`` every mini-batch gets its action column permuted
    before the step (fresh permutation each step), which severs any true
    action-transition link while preserving the action marginal.  Returns the
    final parameters and the per-step loss curve (loss measured before each
    update).
    """
    validate_config(config)
    if dataset.d != config.d:
        raise ConfigurationError(f"dataset d={dataset.d} does not match config d={config.d}")

    params = init_params(config)
    dtype = np.dtype(config.dtype)
    # freeze standardization constants from the training split; constant
    # features get scale 1e-3 to keep the affine invertible
    params.feature_loc = dataset.states.mean(axis=0).astype(dtype)
    params.feature_scale = np.maximum(dataset.states.std(axis=0), 1e-3).astype(dtype)
    m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    v = {k: np.zeros_like(a) for k, a in params.arrays.items()}
    b1 = dtype.type(config.adam_beta1)
    b2 = dtype.type(config.adam_beta2)
    eps = dtype.type(config.adam_eps)

    def step_lr(t: int) -> np.floating:
        # cosine anneal over the full step budget; constant otherwise
        if config.lr_schedule == "cosine":
            frac = 0.5 * (1.0 + np.cos(np.pi * t / config.train_batches))
            return dtype.type(config.learn_rate * frac)
        return dtype.type(config.learn_rate)

    curve: list[float] = []
    step = 0
    pass_idx = 0
    while step < config.train_batches:
        mbs = batches(dataset, config.batch_size, shuffle_seed=derive_seed(config.seed, "order", pass_idx))
        for mb in mbs:
            if step >= config.train_batches:
                break
            if shuffle_actions:
                mb = shuffle_actions_within_batch(mb, derive_seed(config.seed, "ashuffle", step))
            try:
                loss_val, grads = _loss_and_gradients(
                    params, mb, derive_seed(config.seed, "dropout", step)
                )
            except TrainingError as e:
                raise TrainingError(f"step {step}: {e}") from e
            if not np.isfinite(loss_val):
                raise TrainingError(f"step {step}: non-finite loss {loss_val}")
            curve.append(loss_val)

            t = step + 1
            bc1 = 1.0 - float(b1) ** t
            bc2 = 1.0 - float(b2) ** t
            lr = step_lr(step)
            for name, g in grads.items():
                m[name] = b1 * m[name] + (1 - b1) * g
                v[name] = b2 * v[name] + (1 - b2) * g**2
                params.arrays[name] -= lr * (m[name] / bc1) / (np.sqrt(v[name] / bc2) + eps)
                if config.weight_decay > 0.0 and name.endswith("_w"):
                    params.arrays[name] -= lr * dtype.type(config.weight_decay) * params.arrays[name]
            step += 1
        pass_idx += 1
    return TrainResult(params, curve)


# ----------------------------------------------------------------------
# checkpoints


def config_to_dict(config: ModelConfig) -> dict:
    return {
        "d": config.d,
        "K": config.K,
        "hidden_sizes": list(config.hidden_sizes),
        "input_dropout_rate": config.input_dropout_rate,
        "history_steps": config.history_steps,
        "reward_activation": config.reward_activation,
        "learn_rate": config.learn_rate,
        "lr_schedule": config.lr_schedule,
        "weight_decay": config.weight_decay,
        "adam_beta1": config.adam_beta1,
        "adam_beta2": config.adam_beta2,
        "adam_eps": config.adam_eps,
        "train_batches": config.train_batches,
        "batch_size": config.batch_size,
        "seed": config.seed,
        "dtype": config.dtype,
    }


def config_from_dict(obj: dict) -> ModelConfig:
    try:
        cfg = ModelConfig(
            d=obj["d"],
            K=obj["K"],
            hidden_sizes=tuple(obj["hidden_sizes"]),
            input_dropout_rate=obj["input_dropout_rate"],
            history_steps=obj["history_steps"],
            reward_activation=obj["reward_activation"],
            learn_rate=obj["learn_rate"],
            lr_schedule=obj["lr_schedule"],
            weight_decay=obj["weight_decay"],
            adam_beta1=obj["adam_beta1"],
            adam_beta2=obj["adam_beta2"],
            adam_eps=obj["adam_eps"],
            train_batches=obj["train_batches"],
            batch_size=obj["batch_size"],
            seed=obj["seed"],
            dtype=obj["dtype"],
        )
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"bad model config: {e}") from e
    return validate_config(cfg)


def save_checkpoint(params: ModelParams, path: str, loss_curve: list[float] | None = None) -> None:
    """Write a checkpoint: one JSON header line, then the raw parameter block.

    The block is every parameter in layout order, flattened C-order,
    little-endian, in the config's precision (32-bit floats by default).
    """
    header = {
        "format": _CKPT_FORMAT,
        "version": _CKPT_VERSION,
        "config": config_to_dict(params.config),
        "block_dtype": _DTYPES[params.config.dtype],
        "layout": [[name, list(shape)] for name, shape in param_layout(params.config)],
        "feature_loc": [float(v) for v in params.feature_loc],
        "feature_scale": [float(v) for v in params.feature_scale],
        "loss_curve": loss_curve,
    }
    le = np.dtype(_DTYPES[params.config.dtype])
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":"), sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for name, _ in param_layout(params.config):
            fh.write(np.ascontiguousarray(params.arrays[name], dtype=le).tobytes())


def read_checkpoint_meta(path: str) -> dict:
    """Return the parsed JSON header of a checkpoint."""
    with open(path, "rb") as fh:
        line = fh.readline()
    try:
        header = json.loads(line)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: malformed header: {e}") from e
    if not isinstance(header, dict) or header.get("format") != _CKPT_FORMAT:
        raise CheckpointError(f"{path}: not a {_CKPT_FORMAT} file")
    if header.get("version") != _CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {header.get('version')!r}")
    return header


def load_checkpoint(path: str) -> ModelParams:
    """Read a checkpoint, validating block size and shapes against its config."""
    header = read_checkpoint_meta(path)
    config = config_from_dict(header.get("config", {}))
    expected = [[name, list(shape)] for name, shape in param_layout(config)]
    if header.get("layout") != expected:
        raise CheckpointError(f"{path}: layout does not match config shapes")
    le = np.dtype(_DTYPES[config.dtype])
    with open(path, "rb") as fh:
        fh.readline()
        block = fh.read()
    total = sum(int(np.prod(shape)) for _, shape in param_layout(config))
    if len(block) != total * le.itemsize:
        raise CheckpointError(
            f"{path}: parameter block holds {len(block)} bytes, want {total * le.itemsize}"
        )
    flat = np.frombuffer(block, dtype=le).astype(config.dtype)
    arrays: dict[str, np.ndarray] = {}
    off = 0
    for name, shape in param_layout(config):
        size = int(np.prod(shape))
        arrays[name] = flat[off : off + size].reshape(shape).copy()
        off += size
    loc = np.asarray(header.get("feature_loc"), dtype=config.dtype)
    scale = np.asarray(header.get("feature_scale"), dtype=config.dtype)
    if loc.shape != (config.d,) or scale.shape != (config.d,):
        raise CheckpointError(f"{path}: standardization constants must be d-vectors")
    return ModelParams(config, arrays, loc, scale)
