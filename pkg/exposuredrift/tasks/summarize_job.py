from __future__ import annotations

import logging
from pathlib import Path

import pandas as pd

from ..exceptions import DataValidationError
from ..services.posterior import Summary, summarize, write_summary
from ..services.sampler import load_sample
from ..services.transform import RelevanceTable
from .utils import job_context

logger = logging.getLogger(__name__)


def run_summarize_job(
    run_dir: Path | str,
    output_dir: Path | str,
    *,
    relevance_path: Path | str | None = None,
) -> Summary:
    source = Path(run_dir)
    if not source.is_dir() or not any(source.iterdir()):
        raise DataValidationError(f"run directory {source} is missing or empty")
    with job_context("summarize"):
        sample = load_sample(source)
        table = None
        if relevance_path is not None:
            table = RelevanceTable.from_frame(pd.read_csv(relevance_path))
        summary = summarize(sample, table)
        write_summary(summary, output_dir)
        for warning in summary.warnings:
            logger.warning("summary_warning", extra={"detail": warning})
        logger.info("summarize_job_complete", extra={"output_dir": str(output_dir), "draws": summary.n_draws})
    return summary


__all__ = ["run_summarize_job"]
