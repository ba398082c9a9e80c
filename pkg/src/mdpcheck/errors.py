"""Exception hierarchy shared across the package.

Every error raised on a contract violation derives from MdpcheckError so
callers (and the CLI) can distinguish expected failures from genuine bugs.
"""

from __future__ import annotations


class MdpcheckError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MdpcheckError):
    """A config value is out of range or the config is inconsistent."""


class UsageError(MdpcheckError):
    """An operation was called out of order or with incompatible inputs."""


class DatasetError(MdpcheckError):
    """A dataset file is malformed or inconsistent."""


class NumericError(MdpcheckError):
    """An input to a numeric routine is non-finite."""


class TrainingError(MdpcheckError):
    """Optimization produced a non-finite loss or gradient."""


class CheckpointError(MdpcheckError):
    """A checkpoint file is malformed or does not match its declared config."""


class AnalysisError(MdpcheckError):
    """Statistic populations are incompatible or empty."""


class PipelineError(MdpcheckError):
    """A pipeline stage precondition failed."""
