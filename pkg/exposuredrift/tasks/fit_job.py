from __future__ import annotations

import logging
from pathlib import Path

from ..config import RunConfig
from ..exceptions import DataValidationError, NumericalAbort
from ..run_store import DrawWriter, code_identifier, save_manifest, update_manifest
from ..services.edge_list import read_network_dir
from ..services.sampler import PosteriorSample, resolve_seed, run_chain
from .utils import job_context

logger = logging.getLogger(__name__)


def run_fit_job(network_dir: Path | str, output_dir: Path | str, config: RunConfig) -> PosteriorSample:
    """Fit the drift model to a relative network directory, streaming draws to disk.

    The manifest is written before the first sweep and updated on success or
    abort, so an interrupted run directory still says what it was.
    """

    net = read_network_dir(network_dir)
    if net.provenance != "Y":
        raise DataValidationError(
            f"fit expects a relative (Y) network directory, got provenance {net.provenance!r}"
        )
    # the seed is fixed up front so an entropy-drawn one is echoed in the manifest
    chain = config.chain.model_copy(update={"seed": resolve_seed(config.chain)})
    target = Path(output_dir)

    with job_context("fit") as run_id:
        save_manifest(
            target,
            {
                "run_id": run_id,
                "status": "running",
                "network_dir": str(network_dir),
                "seed": chain.seed,
                "config": {**config.flat(), **chain.model_dump(mode="json")},
                "code_id": code_identifier(),
                "node_labels": list(net.node_labels),
                "period_labels": list(net.period_labels),
            },
        )
        try:
            with DrawWriter(target) as writer:
                sample = run_chain(net, config.hyper, chain, writer=writer)
        except NumericalAbort as exc:
            update_manifest(target, status="aborted", error=str(exc), aborted_at_iteration=exc.iteration)
            logger.error("fit_job_aborted", extra={"error": str(exc), "iteration": exc.iteration})
            raise

        update_manifest(
            target,
            status="succeeded",
            draws=sample.n_draws,
            wall_time=sample.wall_time,
            acceptance=sample.acceptance,
            proposal_sd=sample.proposal_sd,
        )
        if sample.decisions is not None:
            (target / "decisions.bin").write_bytes(sample.decisions)
        logger.info(
            "fit_job_complete",
            extra={"output_dir": str(target), "draws": sample.n_draws, "seed": chain.seed},
        )
    return sample


__all__ = ["run_fit_job"]
