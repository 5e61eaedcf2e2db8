from __future__ import annotations

import json
import logging
from pathlib import Path

from ..models import DynamicNetwork
from ..services.edge_list import write_edge_list, write_network_dir
from ..services.model import ModelParams
from ..services.synthetic import SynthSpec, generate
from .utils import job_context

logger = logging.getLogger(__name__)


def run_simulate_job(
    spec: SynthSpec, output_dir: Path | str, *, threads: int = 1
) -> tuple[DynamicNetwork, ModelParams]:
    """Forward-simulate a network and write edges, ground truth and the Y directory."""

    target = Path(output_dir)
    with job_context("simulate"):
        net, truth = generate(spec, threads=threads)
        target.mkdir(parents=True, exist_ok=True)
        write_edge_list(net, target / "edges.csv")
        write_network_dir(net, target / "network")
        payload = {"spec": spec.to_dict(), "truth": truth.to_dict()}
        (target / "truth.json").write_text(json.dumps(payload, indent=2), encoding="utf-8")
        logger.info("simulate_job_complete", extra={"output_dir": str(target), "seed": spec.seed})
    return net, truth


__all__ = ["run_simulate_job"]
