from __future__ import annotations

import json
import logging
from logging.config import dictConfig
from pathlib import Path
from typing import Any, Iterable, Mapping

_CONTEXT: dict[str, Any] = {"run_id": None, "stage": None}

_RESERVED_RECORD_FIELDS = {
    "name",
    "msg",
    "args",
    "levelname",
    "levelno",
    "pathname",
    "filename",
    "module",
    "exc_info",
    "exc_text",
    "stack_info",
    "lineno",
    "funcName",
    "created",
    "msecs",
    "relativeCreated",
    "thread",
    "threadName",
    "process",
    "processName",
    "taskName",
    "message",
    "asctime",
    "stacklevel",
    "run_id",
    "stage",
}


def bind_run_context(*, run_id: str | None = None, stage: str | None = None) -> None:
    """Attach run metadata to every subsequent log record."""
    if run_id is not None:
        _CONTEXT["run_id"] = run_id
    if stage is not None:
        _CONTEXT["stage"] = stage


def clear_run_context() -> None:
    _CONTEXT["run_id"] = None
    _CONTEXT["stage"] = None


class RunContextFilter(logging.Filter):
    """Injects run specific metadata into every log record."""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run_id = getattr(record, "run_id", None) or _CONTEXT["run_id"] or "n/a"
        record.stage = getattr(record, "stage", None) or _CONTEXT["stage"] or "-"
        return True


def _coerce_json_value(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, dict):
        return {str(key): _coerce_json_value(val) for key, val in value.items()}
    if isinstance(value, (list, tuple, set)):
        return [_coerce_json_value(item) for item in value]
    if hasattr(value, "item"):
        try:
            return value.item()
        except (TypeError, ValueError):
            pass
    return str(value)


class JsonFormatter(logging.Formatter):
    """Formats log records as one JSON object per line."""

    default_time_format = "%Y-%m-%dT%H:%M:%S"
    default_msec_format = "%s.%03dZ"

    def __init__(self, *, excluded_keys: Iterable[str] | None = None):
        super().__init__()
        self._excluded_keys = set(excluded_keys or ())

    def format(self, record: logging.LogRecord) -> str:
        log_record: dict[str, Any] = {
            "timestamp": self.formatTime(record, self.datefmt),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        for key in ("run_id", "stage"):
            value = getattr(record, key, None)
            if value is not None and key not in self._excluded_keys:
                log_record[key] = value

        for key, value in record.__dict__.items():
            if key in _RESERVED_RECORD_FIELDS or key.startswith("_") or key in self._excluded_keys:
                continue
            log_record[key] = _coerce_json_value(value)

        if record.exc_info:
            log_record["exc_info"] = self.formatException(record.exc_info)

        return json.dumps(log_record, ensure_ascii=True)


def _resolve_log_level(level: Any) -> int:
    if isinstance(level, int):
        return level
    if isinstance(level, str):
        normalized = level.strip()
        if not normalized:
            return logging.INFO
        if normalized.isdigit():
            return int(normalized)
        return getattr(logging, normalized.upper(), logging.INFO)
    return logging.INFO


def _clear_logger_handlers(*loggers: logging.Logger) -> None:
    for logger in loggers:
        for handler in list(logger.handlers):
            handler.close()
            logger.removeHandler(handler)


def setup_logging(settings: Mapping[str, Any]) -> None:
    """Configure stderr/file logging with selectable verbosity profiles."""

    log_format = str(settings.get("LOG_FORMAT", "json")).lower()
    log_to_stdout = bool(settings.get("LOG_TO_STDOUT", True))
    log_to_file = bool(settings.get("LOG_TO_FILE", False))
    max_bytes = int(settings.get("LOG_FILE_MAX_BYTES", 10 * 1024 * 1024))
    backup_count = int(settings.get("LOG_FILE_BACKUP_COUNT", 5))
    verbosity = str(settings.get("LOG_VERBOSITY", "essential")).strip().lower()

    logging.disable(logging.NOTSET)

    if verbosity not in {"none", "essential", "verbose"}:
        verbosity = "essential"

    if verbosity == "none":
        _clear_logger_handlers(logging.getLogger())
        logging.disable(logging.CRITICAL)
        return

    log_level_value = _resolve_log_level(settings.get("LOG_LEVEL", "INFO"))
    if verbosity == "essential":
        log_level_value = max(log_level_value, logging.WARNING)
    log_level = logging.getLevelName(log_level_value)

    if log_format == "json":
        formatter_config: dict[str, Any] = {"()": "exposuredrift.logging_utils.JsonFormatter"}
    else:
        formatter_config = {
            "format": "%(asctime)s %(levelname)s [%(run_id)s/%(stage)s] %(name)s: %(message)s",
            "datefmt": "%Y-%m-%d %H:%M:%S",
        }

    handler_names: list[str] = []
    handlers: dict[str, Any] = {}

    if log_to_file:
        log_file = Path(settings.get("LOG_FILE") or Path(settings.get("LOG_DIR", ".")) / "exposuredrift.log")
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handler_names.append("file")
        handlers["file"] = {
            "class": "logging.handlers.RotatingFileHandler",
            "level": log_level,
            "formatter": "standard",
            "filename": str(log_file),
            "maxBytes": max_bytes,
            "backupCount": backup_count,
            "encoding": "utf-8",
            "filters": ["run_meta"],
        }

    if log_to_stdout or not handler_names:
        handler_names.insert(0, "console")
        handlers["console"] = {
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "level": log_level,
            "formatter": "standard",
            "filters": ["run_meta"],
        }

    dictConfig(
        {
            "version": 1,
            "disable_existing_loggers": False,
            "filters": {
                "run_meta": {"()": "exposuredrift.logging_utils.RunContextFilter"},
            },
            "formatters": {"standard": formatter_config},
            "handlers": handlers,
            "root": {
                "level": log_level,
                "handlers": handler_names,
            },
        }
    )


__all__ = [
    "JsonFormatter",
    "RunContextFilter",
    "bind_run_context",
    "clear_run_context",
    "setup_logging",
]
