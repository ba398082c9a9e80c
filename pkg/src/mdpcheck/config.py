"""Run configuration: one JSON document that pins every knob of a run.

A run is fully determined by this structure — every seed is derived from the
single ``seed`` field by documented paths, and the effective values of all
defaults are echoed into ``report.json`` so a run can be reproduced from its
own output.  Flag overrides win over the config file, which wins over the
defaults below.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any

from .errors import ConfigurationError
from .model import ModelConfig, validate_config
from .seeding import check_seed, derive_seed

# Full-scale experiment profile (ensemble size, data volumes, significance).
FULL_PROFILE = {
    "ensemble_size": 10,
    "num_train_batches": 1000,
    "num_eval_batches": 200,
    "batch_size": 1024,
}

# CI-scale profile: small enough for minutes-long runs, large enough that the
# per-environment significance patterns survive.
REDUCED_PROFILE = {
    "ensemble_size": 5,
    "num_train_batches": 300,
    "num_eval_batches": 50,
    "batch_size": 250,
}


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs, resolved to concrete values.

    ``percentile`` may be a single level or one level per feature.  ``jobs``
    bounds process fan-out during ensemble training; it does not affect any
    computed value.  ``model`` carries the per-model hyperparameters; its
    ``train_batches``/``batch_size``/``seed`` fields are overwritten from
    this config during pipeline runs, so only the architecture and optimizer
    fields matter here.
    """

    env_id: int
    output_dir: str
    seed: int = 0
    reduced_scale: bool = False
    ensemble_size: int = 10
    num_train_batches: int = 1000
    num_eval_batches: int = 200
    batch_size: int = 1024
    percentile: float | tuple[float, ...] = 75.0
    jobs: int = 1
    model: ModelConfig = field(default_factory=lambda: ModelConfig(d=10))

    def seeds(self) -> dict[str, int]:
        """The derived seeds a run consumes, echoed verbatim in reports."""
        return {
            "train_env": derive_seed(self.seed, "env", "train"),
            "eval_env": derive_seed(self.seed, "env", "eval"),
            "train_collect": derive_seed(self.seed, "collect", "train"),
            "eval_collect": derive_seed(self.seed, "collect", "eval"),
            "ensemble": derive_seed(self.seed, "ensemble"),
            "eval_shuffle": derive_seed(self.seed, "eval-shuffle"),
        }

    def to_dict(self) -> dict[str, Any]:
        percentile = self.percentile
        if isinstance(percentile, tuple):
            percentile = list(percentile)
        model = {k: list(v) if isinstance(v, tuple) else v
                 for k, v in vars(self.model).items()}
        return {
            "env_id": self.env_id,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "reduced_scale": self.reduced_scale,
            "ensemble_size": self.ensemble_size,
            "num_train_batches": self.num_train_batches,
            "num_eval_batches": self.num_eval_batches,
            "batch_size": self.batch_size,
            "percentile": percentile,
            "jobs": self.jobs,
            "model": model,
        }


_RUN_KEYS = {
    "env_id", "output_dir", "seed", "reduced_scale", "ensemble_size",
    "num_train_batches", "num_eval_batches", "batch_size", "percentile",
    "jobs", "model",
}

_PROFILE_KEYS = ("ensemble_size", "num_train_batches", "num_eval_batches", "batch_size")


def _build_model(base: ModelConfig, data: dict[str, Any]) -> ModelConfig:
    known = set(vars(base))
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown model config keys: {sorted(unknown)}")
    if "hidden_sizes" in data:
        data = dict(data)
        data["hidden_sizes"] = tuple(int(h) for h in data["hidden_sizes"])
    return replace(base, **data)


def resolve_config(
    file_data: dict[str, Any] | None = None,
    overrides: dict[str, Any] | None = None,
) -> RunConfig:
    """Merge defaults <- config file <- flag overrides into a RunConfig.

    The scale profile is applied first (from ``reduced_scale``, wherever it
    was set), then explicit counts from either layer override the profile.
    """
    merged: dict[str, Any] = {}
    for layer in (file_data or {}), (overrides or {}):
        unknown = set(layer) - _RUN_KEYS
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        merged.update({k: v for k, v in layer.items() if v is not None})

    if "env_id" not in merged:
        raise ConfigurationError("config needs env_id (or pass --env)")
    if "output_dir" not in merged:
        raise ConfigurationError("config needs output_dir (or pass --out)")

    profile = REDUCED_PROFILE if merged.get("reduced_scale") else FULL_PROFILE
    cfg = RunConfig(
        env_id=int(merged["env_id"]),
        output_dir=str(merged["output_dir"]),
        reduced_scale=bool(merged.get("reduced_scale", False)),
        **{k: int(merged.get(k, profile[k])) for k in _PROFILE_KEYS},
    )
    if "seed" in merged:
        cfg = replace(cfg, seed=int(merged["seed"]))
    if "jobs" in merged:
        cfg = replace(cfg, jobs=int(merged["jobs"]))
    if "percentile" in merged:
        x = merged["percentile"]
        cfg = replace(cfg, percentile=tuple(float(v) for v in x)
                      if isinstance(x, (list, tuple)) else float(x))
    if "model" in merged:
        if not isinstance(merged["model"], dict):
            raise ConfigurationError("model section must be an object")
        cfg = replace(cfg, model=_build_model(cfg.model, merged["model"]))
    validate_run_config(cfg)
    return cfg


def validate_run_config(cfg: RunConfig) -> None:
    if not 1 <= cfg.env_id <= 7:
        raise ConfigurationError(f"env_id must be in 1..7, got {cfg.env_id}")
    check_seed(cfg.seed, "seed")
    for name in ("ensemble_size", "num_train_batches", "num_eval_batches", "batch_size"):
        if getattr(cfg, name) < 1:
            raise ConfigurationError(f"{name} must be >= 1, got {getattr(cfg, name)}")
    if cfg.jobs < 1:
        raise ConfigurationError(f"jobs must be >= 1, got {cfg.jobs}")
    levels = cfg.percentile if isinstance(cfg.percentile, tuple) else (cfg.percentile,)
    for x in levels:
        if not 0.0 < x < 100.0:
            raise ConfigurationError(f"percentile must lie strictly in (0, 100), got {x}")
    if isinstance(cfg.percentile, tuple) and len(cfg.percentile) != cfg.model.d:
        raise ConfigurationError(
            f"per-feature percentile needs {cfg.model.d} entries, got {len(cfg.percentile)}"
        )
    validate_config(cfg.model)


def load_config_file(path: str) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    return data
