"""Run orchestration: generate -> train -> analyze with idempotent resume.

Each stage writes its artifacts under the run directory plus a stamp in
``.stamps/`` holding a hash of the stage's effective inputs.  A stage is
skipped when its stamp matches and its outputs still exist, so editing only
the significance percentile reruns just the analyze stage while touching the
seed invalidates everything.  All artifacts are deterministic functions of
the config; timings live in their own ``report.json`` key and are the only
non-reproducible bytes a run emits.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing
import os
import time
from dataclasses import replace
from typing import Any, Callable

from . import data
from .analysis import (
    ORIGINAL,
    SHUFFLED_BASELINE,
    Ensemble,
    action_sensitivity,
    decide_verdict,
    offset_sensitivity,
    percentile_significance,
    population_to_csv,
    reward_contribution,
)
from .boxplot import render_boxplots
from .config import RunConfig
from .envs import EnvSpec, make_env
from .errors import CheckpointError, MdpcheckError, PipelineError
from .model import (
    load_checkpoint,
    read_checkpoint_meta,
    save_checkpoint,
    train,
)
from .seeding import derive_seed

TRAIN_DATA = "train.jsonl"
EVAL_DATA = "eval.jsonl"
CHECKPOINT_DIR = "checkpoints"
REPORT = "report.json"
CSV_FILES = {
    "reward_contribution": "reward_contribution.csv",
    "action_sensitivity": "action_sensitivity.csv",
    "offset_action_sensitivity": "offset_action_sensitivity.csv",
}
BOXPLOTS = "boxplots.svg"
CONFIG_ECHO = "config.json"


def _file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_obj(obj: Any) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def _stamp_path(out_dir: str, stage: str) -> str:
    return os.path.join(out_dir, ".stamps", f"{stage}.json")


def _stage_current(out_dir: str, stage: str, input_hash: str, outputs: list[str]) -> bool:
    path = _stamp_path(out_dir, stage)
    try:
        with open(path, encoding="utf-8") as fh:
            stamp = json.load(fh)
    except (OSError, json.JSONDecodeError):
        return False
    if stamp.get("input_hash") != input_hash:
        return False
    return all(os.path.exists(os.path.join(out_dir, p)) for p in stamp.get("outputs", []))


def _write_stamp(out_dir: str, stage: str, input_hash: str, outputs: list[str]) -> None:
    path = _stamp_path(out_dir, stage)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"input_hash": input_hash, "outputs": outputs}, fh, sort_keys=True)
        fh.write("\n")


def _write_config_echo(cfg: RunConfig) -> None:
    path = os.path.join(cfg.output_dir, CONFIG_ECHO)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _checkpoint_name(kind: str, j: int) -> str:
    prefix = "original" if kind == ORIGINAL else "baseline"
    return f"{prefix}_{j:02d}.ckpt"


def _model_config(cfg: RunConfig, seed: int):
    return replace(
        cfg.model,
        train_batches=cfg.num_train_batches,
        batch_size=cfg.batch_size,
        seed=seed,
    )


# ----------------------------------------------------------------------
# stages


def cmd_generate(cfg: RunConfig, log: Callable[[str], None] = print) -> dict[str, str]:
    """Roll the train and eval datasets for the configured environment."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    _write_config_echo(cfg)
    seeds = cfg.seeds()
    input_hash = _hash_obj({
        "stage": "generate",
        "env_id": cfg.env_id,
        "seed": cfg.seed,
        "num_train_batches": cfg.num_train_batches,
        "num_eval_batches": cfg.num_eval_batches,
        "batch_size": cfg.batch_size,
    })
    outputs = [TRAIN_DATA, EVAL_DATA]
    if _stage_current(cfg.output_dir, "generate", input_hash, outputs):
        log("generate: up to date, skipping")
        return {p: os.path.join(cfg.output_dir, p) for p in outputs}

    for name, env_seed, collect_seed, num in (
        (TRAIN_DATA, seeds["train_env"], seeds["train_collect"], cfg.num_train_batches),
        (EVAL_DATA, seeds["eval_env"], seeds["eval_collect"], cfg.num_eval_batches),
    ):
        env = make_env(EnvSpec(env_id=cfg.env_id, seed=env_seed))
        ds = data.collect(env, num, cfg.batch_size, collect_seed, remainder="pad-episodes")
        data.save(ds, os.path.join(cfg.output_dir, name))
        log(f"generate: wrote {name} ({len(ds)} transitions)")

    _write_stamp(cfg.output_dir, "generate", input_hash, outputs)
    return {p: os.path.join(cfg.output_dir, p) for p in outputs}


def _train_input_hash(cfg: RunConfig, train_path: str) -> str:
    seeds = cfg.seeds()
    model = _model_config(cfg, 0)
    return _hash_obj({
        "stage": "train",
        "train_data": _file_sha256(train_path),
        "ensemble_size": cfg.ensemble_size,
        "ensemble_seed": seeds["ensemble"],
        "model": {
            "d": model.d,
            "K": model.K,
            "hidden_sizes": list(model.hidden_sizes),
            "input_dropout_rate": model.input_dropout_rate,
            "history_steps": model.history_steps,
            "reward_activation": model.reward_activation,
            "learn_rate": model.learn_rate,
            "lr_schedule": model.lr_schedule,
            "weight_decay": model.weight_decay,
            "adam_beta1": model.adam_beta1,
            "adam_beta2": model.adam_beta2,
            "adam_eps": model.adam_eps,
            "train_batches": model.train_batches,
            "batch_size": model.batch_size,
            "dtype": model.dtype,
        },
    })


_TRAIN_STATE: dict = {}


def _train_one_model(task: tuple[str, int]):
    """Train one (kind, index) model from the shared state; never raises."""
    kind, j = task
    s = _TRAIN_STATE
    cfg_j = replace(s["config"], seed=derive_seed(s["base_seed"], j))
    try:
        res = train(s["ds"], cfg_j, shuffle_actions=(kind == SHUFFLED_BASELINE))
    except MdpcheckError as e:
        return kind, j, None, str(e)
    return kind, j, res, None


def cmd_train(cfg: RunConfig, log: Callable[[str], None] = print) -> dict[str, list[str]]:
    """Train the original and shuffled-baseline ensembles to checkpoints.

    Both ensembles share the derived ensemble seed, so original/baseline
    model j are twins that differ only by the action shuffling; their paired
    difference is what the offset statistic consumes.  A model that fails to
    train is reported and the rest continue; any failure raises at the end.
    """
    train_path = os.path.join(cfg.output_dir, TRAIN_DATA)
    eval_path = os.path.join(cfg.output_dir, EVAL_DATA)
    for path in (train_path, eval_path):
        if not os.path.exists(path):
            raise PipelineError(f"missing dataset {path}; run generate first")
    _write_config_echo(cfg)

    input_hash = _train_input_hash(cfg, train_path)
    ckpt_dir = os.path.join(cfg.output_dir, CHECKPOINT_DIR)
    names = {
        kind: [_checkpoint_name(kind, j) for j in range(cfg.ensemble_size)]
        for kind in (ORIGINAL, SHUFFLED_BASELINE)
    }
    outputs = [os.path.join(CHECKPOINT_DIR, n) for ns in names.values() for n in ns]
    if _stage_current(cfg.output_dir, "train", input_hash, outputs):
        log("train: up to date, skipping")
        return {k: [os.path.join(ckpt_dir, n) for n in ns] for k, ns in names.items()}

    os.makedirs(ckpt_dir, exist_ok=True)
    tasks = [(kind, j) for kind in (ORIGINAL, SHUFFLED_BASELINE)
             for j in range(cfg.ensemble_size)]
    _TRAIN_STATE.update(
        ds=data.load(train_path),
        config=_model_config(cfg, 0),
        base_seed=cfg.seeds()["ensemble"],
    )
    try:
        if cfg.jobs > 1 and "fork" in multiprocessing.get_all_start_methods():
            with multiprocessing.get_context("fork").Pool(min(cfg.jobs, len(tasks))) as pool:
                results = pool.map(_train_one_model, tasks)
        else:
            results = [_train_one_model(t) for t in tasks]
    finally:
        _TRAIN_STATE.clear()

    failures: list[str] = []
    for kind, j, res, err in results:
        name = names[kind][j]
        if err is not None:
            failures.append(f"{kind} model {j}: {err}")
            log(f"train: {kind} model {j} failed: {err}")
            continue
        save_checkpoint(res.params, os.path.join(ckpt_dir, name), loss_curve=res.loss_curve)
    if failures:
        raise PipelineError("; ".join(failures))
    log(f"train: wrote {2 * cfg.ensemble_size} checkpoints")

    _write_stamp(cfg.output_dir, "train", input_hash, outputs)
    return {k: [os.path.join(ckpt_dir, n) for n in ns] for k, ns in names.items()}


def _load_ensemble(cfg: RunConfig, kind: str) -> Ensemble:
    ckpt_dir = os.path.join(cfg.output_dir, CHECKPOINT_DIR)
    base_seed = cfg.seeds()["ensemble"]
    expected = _model_config(cfg, 0)
    models, curves, seeds = [], [], []
    for j in range(cfg.ensemble_size):
        path = os.path.join(ckpt_dir, _checkpoint_name(kind, j))
        if not os.path.exists(path):
            raise PipelineError(f"missing checkpoint {path}; run train first")
        params = load_checkpoint(path)
        want = replace(expected, seed=derive_seed(base_seed, j))
        if params.config != want:
            raise CheckpointError(
                f"{path}: checkpoint config does not match the run config "
                f"(got {params.config}, want {want})"
            )
        header = read_checkpoint_meta(path)
        models.append(params)
        curves.append(header.get("loss_curve") or [])
        seeds.append(params.config.seed)
    return Ensemble(models=models, kind=kind, seeds=seeds, loss_curves=curves)


def cmd_analyze(cfg: RunConfig, log: Callable[[str], None] = print) -> dict[str, Any]:
    """Compute statistics, decide the verdict, and write the report artifacts."""
    eval_path = os.path.join(cfg.output_dir, EVAL_DATA)
    if not os.path.exists(eval_path):
        raise PipelineError(f"missing dataset {eval_path}; run generate first")
    ckpt_dir = os.path.join(cfg.output_dir, CHECKPOINT_DIR)
    ckpt_rel = [
        os.path.join(CHECKPOINT_DIR, _checkpoint_name(kind, j))
        for kind in (ORIGINAL, SHUFFLED_BASELINE)
        for j in range(cfg.ensemble_size)
    ]
    for rel in ckpt_rel:
        if not os.path.exists(os.path.join(cfg.output_dir, rel)):
            raise PipelineError(f"missing checkpoint {rel}; run train first")
    _write_config_echo(cfg)

    seeds = cfg.seeds()
    percentile = list(cfg.percentile) if isinstance(cfg.percentile, tuple) else cfg.percentile
    input_hash = _hash_obj({
        "stage": "analyze",
        "eval_data": _file_sha256(eval_path),
        "checkpoints": [_file_sha256(os.path.join(cfg.output_dir, rel)) for rel in ckpt_rel],
        "batch_size": cfg.batch_size,
        "num_eval_batches": cfg.num_eval_batches,
        "percentile": percentile,
        "eval_shuffle_seed": seeds["eval_shuffle"],
    })
    outputs = [REPORT, BOXPLOTS, *CSV_FILES.values()]
    report_path = os.path.join(cfg.output_dir, REPORT)
    if _stage_current(cfg.output_dir, "analyze", input_hash, outputs):
        with open(report_path, encoding="utf-8") as fh:
            report = json.load(fh)
        log("analyze: up to date, skipping")
        log(f"VERDICT: {report['verdict']['outcome']}")
        return report

    t0 = time.perf_counter()
    eval_ds = data.load(eval_path)
    original = _load_ensemble(cfg, ORIGINAL)
    baseline = _load_ensemble(cfg, SHUFFLED_BASELINE)

    rc = reward_contribution(original, eval_ds, cfg.batch_size)
    sens = action_sensitivity(original, eval_ds, cfg.batch_size, seeds["eval_shuffle"])
    sens_base = action_sensitivity(baseline, eval_ds, cfg.batch_size, seeds["eval_shuffle"])
    offset = offset_sensitivity(sens, sens_base)

    reward_report = percentile_significance(rc, cfg.percentile)
    offset_report = percentile_significance(offset, cfg.percentile)
    verdict = decide_verdict(reward_report, offset_report)

    for pop in (rc, sens, offset):
        population_to_csv(pop, os.path.join(cfg.output_dir, CSV_FILES[pop.kind]))
    svg = render_boxplots([rc, offset], cfg.percentile)
    with open(os.path.join(cfg.output_dir, BOXPLOTS), "w", encoding="utf-8") as fh:
        fh.write(svg)

    report = {
        "config": cfg.to_dict(),
        "seeds": seeds,
        "verdict": verdict.to_dict(),
        "reward_report": reward_report.to_dict(),
        "offset_action_report": offset_report.to_dict(),
        "artifacts": {
            "train_data": TRAIN_DATA,
            "eval_data": EVAL_DATA,
            "checkpoints": ckpt_rel,
            "reward_contribution_csv": CSV_FILES["reward_contribution"],
            "action_sensitivity_csv": CSV_FILES["action_sensitivity"],
            "offset_action_sensitivity_csv": CSV_FILES["offset_action_sensitivity"],
            "boxplots": BOXPLOTS,
            "report": REPORT,
        },
        "timings": {"analyze_seconds": round(time.perf_counter() - t0, 3)},
    }
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    _write_stamp(cfg.output_dir, "analyze", input_hash, outputs)
    log(f"VERDICT: {verdict.outcome.value}")
    return report


def cmd_run_all(cfg: RunConfig, log: Callable[[str], None] = print) -> dict[str, Any]:
    """generate -> train -> analyze, skipping stages whose inputs are unchanged."""
    cmd_generate(cfg, log)
    cmd_train(cfg, log)
    return cmd_analyze(cfg, log)
