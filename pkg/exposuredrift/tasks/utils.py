from __future__ import annotations

from contextlib import contextmanager
from typing import Iterator
from uuid import uuid4

from ..logging_utils import bind_run_context, clear_run_context


@contextmanager
def job_context(stage: str, run_id: str | None = None) -> Iterator[str]:
    """Bind a run id and stage to every log record emitted inside the block."""
    run_id = run_id or uuid4().hex[:12]
    bind_run_context(run_id=run_id, stage=stage)
    try:
        yield run_id
    finally:
        clear_run_context()


__all__ = ["job_context"]
