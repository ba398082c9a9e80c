"""Decide whether a designed MDP is a plausible target for RL.

The library trains ensembles of mixture-density world models on
random-policy rollouts and tests two properties per state feature: whether
it contributes to reward prediction, and whether its predicted transition is
sensitive to the chosen action once a shuffled-action baseline is subtracted
out.  A feature set that passes both means the MDP is potentially suitable
for reinforcement learning; see ``decide_verdict`` for the exact flow.
"""

from .analysis import (
    Ensemble,
    Outcome,
    SignificanceReport,
    StatPopulation,
    Verdict,
    action_sensitivity,
    decide_verdict,
    offset_sensitivity,
    percentile_significance,
    reward_contribution,
    train_ensemble,
)
from .boxplot import render_boxplots
from .config import RunConfig, resolve_config
from .data import Dataset, MiniBatch, collect, load, save
from .envs import (
    Episode,
    EnvSpec,
    EnvState,
    ExpectedPattern,
    Transition,
    expected_significance,
    make_env,
    rollout_episode,
)
from .errors import (
    AnalysisError,
    CheckpointError,
    ConfigurationError,
    DatasetError,
    MdpcheckError,
    NumericError,
    PipelineError,
    TrainingError,
    UsageError,
)
from .model import (
    MdnOutput,
    ModelConfig,
    ModelParams,
    TrainResult,
    forward,
    forward_batch,
    gradients,
    init_params,
    load_checkpoint,
    loss,
    save_checkpoint,
    train,
)
from .pipeline import cmd_analyze, cmd_generate, cmd_run_all, cmd_train
from .seeding import derive_seed

__version__ = "0.1.0"

__all__ = [
    "AnalysisError",
    "CheckpointError",
    "ConfigurationError",
    "Dataset",
    "DatasetError",
    "Ensemble",
    "EnvSpec",
    "EnvState",
    "Episode",
    "ExpectedPattern",
    "MdnOutput",
    "MdpcheckError",
    "MiniBatch",
    "ModelConfig",
    "ModelParams",
    "NumericError",
    "Outcome",
    "PipelineError",
    "RunConfig",
    "SignificanceReport",
    "StatPopulation",
    "TrainResult",
    "TrainingError",
    "Transition",
    "UsageError",
    "Verdict",
    "action_sensitivity",
    "cmd_analyze",
    "cmd_generate",
    "cmd_run_all",
    "cmd_train",
    "collect",
    "decide_verdict",
    "derive_seed",
    "expected_significance",
    "forward",
    "forward_batch",
    "gradients",
    "init_params",
    "load",
    "load_checkpoint",
    "loss",
    "make_env",
    "offset_sensitivity",
    "percentile_significance",
    "render_boxplots",
    "resolve_config",
    "reward_contribution",
    "rollout_episode",
    "save",
    "save_checkpoint",
    "train",
    "train_ensemble",
    "__version__",
]
