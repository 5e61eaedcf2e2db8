from __future__ import annotations

import json
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Mapping

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

PROJECT_ROOT = Path(__file__).resolve().parent.parent
DEFAULT_HOME = Path(os.getenv("EXPOSUREDRIFT_HOME", PROJECT_ROOT / "instance"))
DEFAULT_LOG_DIR = Path(os.getenv("EXPOSUREDRIFT_LOG_DIR", DEFAULT_HOME / "logs"))


def _env_flag(value: str | None, default: bool = False) -> bool:
    if value is None:
        return default
    normalized = value.strip().lower()
    if normalized in {"0", "false", "no", "off"}:
        return False
    if normalized in {"1", "true", "yes", "on"}:
        return True
    return default


def _env_int(name: str, default: int) -> int:
    raw = (os.getenv(name) or "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        return default


class Config:
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
    LOG_FORMAT = os.getenv("LOG_FORMAT", "json")
    LOG_TO_STDOUT = _env_flag(os.getenv("LOG_TO_STDOUT"), default=True)
    LOG_TO_FILE = _env_flag(os.getenv("LOG_TO_FILE"), default=False)
    LOG_VERBOSITY = os.getenv("LOG_VERBOSITY", "essential")
    LOG_DIR = os.getenv("LOG_DIR", str(DEFAULT_LOG_DIR))
    LOG_FILE = os.getenv("LOG_FILE", str(DEFAULT_LOG_DIR / "exposuredrift.log"))
    LOG_FILE_MAX_BYTES = _env_int("LOG_FILE_MAX_BYTES", 10 * 1024 * 1024)
    LOG_FILE_BACKUP_COUNT = _env_int("LOG_FILE_BACKUP_COUNT", 5)
    DEFAULT_THREADS = max(1, _env_int("EXPOSUREDRIFT_THREADS", 1))

    @classmethod
    def as_dict(cls) -> dict[str, Any]:
        return {key: getattr(cls, key) for key in dir(cls) if key.isupper()}


class Hyperparams(BaseModel):
    """Prior settings. Gamma priors are shape/rate."""

    model_config = ConfigDict(frozen=True)

    tau_mu: float = Field(0.01, gt=0)
    a_eta: float = Field(0.01, gt=0)
    b_eta: float = Field(0.01, gt=0)
    a_theta: float = Field(0.01, gt=0)
    b_theta: float = Field(0.01, gt=0)
    a_gamma: float = Field(0.01, gt=0)
    b_gamma: float = Field(0.01, gt=0)


class ChainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_iterations: int = Field(400_000, ge=1)
    n_burnin: int = Field(200_000, ge=0)
    thin: int = Field(20, ge=1)
    adapt_window: int | None = Field(None, ge=0)
    adapt_batch: int = Field(100, ge=1)
    target_acceptance: tuple[float, float] = (0.22, 0.30)
    seed: int | None = None
    initial_proposal_sd: float = Field(0.1, gt=0)
    threads: int = Field(1, ge=1)
    record_decisions: bool = False

    @field_validator("target_acceptance")
    @classmethod
    def _check_interval(cls, value: tuple[float, float]) -> tuple[float, float]:
        low, high = value
        if not (0.0 < low <= high < 1.0):
            raise ValueError("target_acceptance must satisfy 0 < low <= high < 1")
        return value

    @field_validator("seed")
    @classmethod
    def _check_seed(cls, value: int | None) -> int | None:
        if value is not None and not (0 <= value < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        return value

    @model_validator(mode="after")
    def _check_schedule(self) -> "ChainConfig":
        if self.n_burnin >= self.n_iterations:
            raise ValueError("n_burnin must be smaller than n_iterations")
        if self.adapt_window is not None and self.adapt_window > self.n_burnin:
            raise ValueError("adapt_window cannot exceed n_burnin")
        return self

    @property
    def effective_adapt_window(self) -> int:
        if self.adapt_window is None:
            return self.n_burnin // 2
        return self.adapt_window

    @property
    def expected_draws(self) -> int:
        return (self.n_iterations - self.n_burnin) // self.thin


class TransformOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(1e-8, ge=0)
    top_k: int | None = Field(None, ge=1)
    min_ratio_samples: int = Field(10, ge=1)
    multimodal_tolerance: float = Field(0.10, ge=0)


class RunConfig(BaseModel):
    """Everything one CLI invocation needs, loadable from a TOML config file."""

    hyper: Hyperparams = Field(default_factory=Hyperparams)
    chain: ChainConfig = Field(default_factory=ChainConfig)
    transform: TransformOptions = Field(default_factory=TransformOptions)
    input_path: Path | None = None
    output_dir: Path | None = None

    @field_validator("input_path")
    @classmethod
    def _input_exists(cls, value: Path | None) -> Path | None:
        if value is not None and not Path(value).exists():
            raise ValueError(f"input path does not exist: {value}")
        return value

    @classmethod
    def merged(
        cls, file_values: Mapping[str, Any] | None, flag_values: Mapping[str, Any] | None
    ) -> "RunConfig":
        values: dict[str, Any] = dict(file_values or {})
        for key, value in (flag_values or {}).items():
            if value is not None:
                values[key] = value
        sections: dict[str, dict[str, Any]] = {"hyper": {}, "chain": {}, "transform": {}}
        top: dict[str, Any] = {}
        for key, value in values.items():
            for section, model in (
                ("hyper", Hyperparams),
                ("chain", ChainConfig),
                ("transform", TransformOptions),
            ):
                if key in model.model_fields:
                    sections[section][key] = value
                    break
            else:
                if key in cls.model_fields:
                    top[key] = value
        return cls(
            hyper=Hyperparams(**sections["hyper"]),
            chain=ChainConfig(**sections["chain"]),
            transform=TransformOptions(**sections["transform"]),
            **top,
        )

    @classmethod
    def from_file(
        cls, path: Path | str, overrides: Mapping[str, Any] | None = None
    ) -> "RunConfig":
        return cls.merged(read_config_file(path), overrides)

    def flat(self) -> dict[str, Any]:
        values: dict[str, Any] = {}
        values.update(self.hyper.model_dump())
        values.update(self.chain.model_dump())
        values.update(self.transform.model_dump())
        if self.input_path is not None:
            values["input_path"] = str(self.input_path)
        if self.output_dir is not None:
            values["output_dir"] = str(self.output_dir)
        return values

    def to_file(self, path: Path | str, *, include_paths: bool = True) -> None:
        """Write the flat TOML form that ``from_file`` reads back."""

        lines = []
        for key, value in self.flat().items():
            if value is None or (not include_paths and key in {"input_path", "output_dir"}):
                continue
            lines.append(f"{key} = {_toml_value(value)}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_toml_value(item) for item in value) + "]"
    if isinstance(value, str):
        # JSON string escapes are valid TOML basic strings
        return json.dumps(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_config_file(path: Path | str) -> dict[str, Any]:
    """Parse a TOML config file into flat field values.

    Tables are one level of grouping only; their keys are merged into the
    top level, so ``[chain]`` and ``[hyper]`` headers are optional.
    """

    with Path(path).open("rb") as handle:
        document = tomllib.load(handle)
    values: dict[str, Any] = {}
    for key, value in document.items():
        if isinstance(value, dict):
            for inner_key, inner_value in value.items():
                if isinstance(inner_value, dict):
                    raise ValueError(f"nested table [{key}.{inner_key}] is not supported")
                values[inner_key] = inner_value
        else:
            values[key] = value
    return values
