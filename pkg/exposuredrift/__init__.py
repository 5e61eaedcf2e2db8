"""Bayesian drift model for dynamic weighted exposure networks."""

from __future__ import annotations

from dotenv import load_dotenv

load_dotenv()

from .config import ChainConfig, Config, Hyperparams, RunConfig, TransformOptions  # noqa: E402
from .exceptions import DataValidationError, ExposureDriftError, NumericalAbort, UsageError  # noqa: E402
from .models import DynamicNetwork, ExposureRecord  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "ChainConfig",
    "Config",
    "DataValidationError",
    "DynamicNetwork",
    "ExposureDriftError",
    "ExposureRecord",
    "Hyperparams",
    "NumericalAbort",
    "RunConfig",
    "TransformOptions",
    "UsageError",
    "__version__",
]
