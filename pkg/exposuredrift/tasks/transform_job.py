from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import pandas as pd

from ..config import TransformOptions
from ..services.edge_list import network_stats, parse_edge_list, stats_frame, write_network_dir
from ..services.transform import (
    PipelineResult,
    entropy_change_distribution,
    entropy_change_summary,
    entropy_table,
    mean_relevance_by_period,
    run_pipeline,
)
from .utils import job_context

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def run_transform_job(
    input_path: Path | str,
    output_dir: Path | str,
    options: TransformOptions,
    *,
    period_labels: Sequence[str] | None = None,
) -> PipelineResult:
    """Edge list in, relative network directory plus reports out."""

    target = Path(output_dir)
    with job_context("transform"):
        net = parse_edge_list(input_path, period_labels=period_labels)
        logger.info(
            "transform_input_parsed",
            extra={"n_nodes": net.n_nodes, "n_periods": net.n_periods, "source": str(input_path)},
        )
        result = run_pipeline(net, options)

        target.mkdir(parents=True, exist_ok=True)
        write_network_dir(result.relative, target / "network")
        (target / "rescale_report.json").write_text(
            result.report.model_dump_json(indent=2), encoding="utf-8"
        )
        result.relevance.to_frame().to_csv(
            target / "relevance.csv", index=False, float_format=FLOAT_FORMAT
        )
        pd.DataFrame(
            {
                "period": range(result.absolute.n_periods),
                "label": result.absolute.period_labels,
                "mean_relevance": mean_relevance_by_period(result.relevance),
            }
        ).to_csv(target / "relevance_by_period.csv", index=False, float_format=FLOAT_FORMAT)
        # a single period has no transitions to report
        if result.relative.n_periods >= 2:
            changes = entropy_change_distribution(result.relative)
            changes.to_csv(target / "entropy_changes.csv", index=False, float_format=FLOAT_FORMAT)
            entropy_change_summary(changes).to_csv(
                target / "entropy_change_summary.csv", index=False, float_format=FLOAT_FORMAT
            )
        entropy_table(result.relative).to_csv(
            target / "entropy.csv", index=False, float_format=FLOAT_FORMAT
        )
        stats_frame(network_stats(net)).to_csv(
            target / "stats.csv", index=False, float_format=FLOAT_FORMAT
        )
        logger.info(
            "transform_job_complete",
            extra={
                "output_dir": str(target),
                "kept_nodes": result.relative.n_nodes,
                "multimodal_transitions": sum(item.multimodal for item in result.report.transitions),
            },
        )
    return result


__all__ = ["run_transform_job"]
