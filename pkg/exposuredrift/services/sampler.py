"""Metropolis-within-Gibbs engine with batch-adaptive Gaussian proposals."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, NamedTuple

import numpy as np
import pandas as pd

from ..config import ChainConfig, Hyperparams
from ..exceptions import DataValidationError, NumericalAbort
from ..models import DynamicNetwork
from ..run_store import DRAW_GROUPS, DrawWriter, fetch_manifest
from .model import (
    LikelihoodEvaluator,
    ModelParams,
    PreparedData,
    log_posterior,
    logfc_gamma,
    logfc_mu,
    logfc_theta,
    sample_tau_eta,
    sample_tau_gamma,
    sample_tau_theta,
)

logger = logging.getLogger(__name__)

SD_BOUNDS = (1e-6, 1e3)
GROW_FACTOR = 1.25
SHRINK_FACTOR = 0.8

BlockKind = Literal["mu", "theta", "gamma"]
CONJUGATE_STEPS = ("tau_eta", "tau_theta", "tau_gamma")


class Block(NamedTuple):
    kind: BlockKind
    index: int

    @property
    def slot(self) -> int:
        # gamma counters and sds are stored for the free coordinates only
        return self.index - 1 if self.kind == "gamma" else self.index


def sweep_schedule(n_periods: int, n_nodes: int) -> list[Block | str]:
    schedule: list[Block | str] = [Block("mu", s) for s in range(n_periods)]
    schedule += [Block("theta", k) for k in range(n_nodes)]
    schedule += [Block("gamma", l) for l in range(1, n_nodes)]
    schedule += list(CONJUGATE_STEPS)
    return schedule


def _block_sizes(n_periods: int, n_nodes: int) -> dict[str, int]:
    return {"mu": n_periods, "theta": n_nodes, "gamma": n_nodes - 1}


def _counter(sizes: dict[str, int], dtype=np.int64) -> dict[str, np.ndarray]:
    return {kind: np.zeros(size, dtype=dtype) for kind, size in sizes.items()}


@dataclass
class ChainState:
    params: ModelParams
    proposal_sd: dict[str, np.ndarray]
    rng: np.random.Generator
    accepted: dict[str, np.ndarray]
    proposed: dict[str, np.ndarray]
    batch_accepted: dict[str, np.ndarray]
    batch_proposed: dict[str, np.ndarray]
    tuned_accepted: dict[str, np.ndarray]
    tuned_proposed: dict[str, np.ndarray]
    iteration: int = 0
    adapting: bool = True
    decisions: bytearray | None = field(default=None)

    def acceptance_rates(self, *, tuned: bool = True) -> dict[str, np.ndarray]:
        accepted = self.tuned_accepted if tuned else self.accepted
        proposed = self.tuned_proposed if tuned else self.proposed
        rates: dict[str, np.ndarray] = {}
        for kind in accepted:
            with np.errstate(invalid="ignore", divide="ignore"):
                rates[kind] = np.where(
                    proposed[kind] > 0, accepted[kind] / np.maximum(proposed[kind], 1), np.nan
                )
        return rates


def _as_prepared(data: DynamicNetwork | PreparedData) -> PreparedData:
    if isinstance(data, PreparedData):
        return data
    return PreparedData.from_network(data)


def init_state(
    data: DynamicNetwork | PreparedData,
    hyper: Hyperparams,
    config: ChainConfig,
    rng: np.random.Generator,
    start: ModelParams | None = None,
) -> ChainState:
    """Zeros for every location parameter, unit precisions, uniform proposal sds."""

    del hyper
    prepared = _as_prepared(data)
    n_periods, n_nodes = prepared.n_periods, prepared.n_nodes
    if start is None:
        params = ModelParams.zeros(n_periods, n_nodes)
    else:
        if start.n_periods != n_periods or start.n_nodes != n_nodes:
            raise ValueError("starting parameters do not match the data dimensions")
        params = start
    sizes = _block_sizes(n_periods, n_nodes)
    return ChainState(
        params=params,
        proposal_sd={
            kind: np.full(size, config.initial_proposal_sd) for kind, size in sizes.items()
        },
        rng=rng,
        accepted=_counter(sizes),
        proposed=_counter(sizes),
        batch_accepted=_counter(sizes),
        batch_proposed=_counter(sizes),
        tuned_accepted=_counter(sizes),
        tuned_proposed=_counter(sizes),
        adapting=config.effective_adapt_window > 0,
        decisions=bytearray() if config.record_decisions else None,
    )


def _current_value(params: ModelParams, block: Block) -> float:
    if block.kind == "mu":
        return float(params.mu[block.index])
    if block.kind == "theta":
        return float(params.theta[block.index])
    return float(params.gamma[block.index])


def _logfc(
    block: Block,
    params: ModelParams,
    data: PreparedData,
    hyper: Hyperparams,
    value: float,
    evaluator: LikelihoodEvaluator | None,
) -> float:
    if block.kind == "mu":
        return logfc_mu(params, data, hyper, block.index, value, evaluator)
    if block.kind == "theta":
        return logfc_theta(params, data, hyper, block.index, value, evaluator)
    return logfc_gamma(params, data, hyper, block.index, value, evaluator)


def _with_value(params: ModelParams, block: Block, value: float) -> ModelParams:
    if block.kind == "mu":
        return params.with_mu(block.index, value)
    if block.kind == "theta":
        return params.with_theta(block.index, value)
    return params.with_gamma(block.index, value)


def mh_update(
    block: Block,
    state: ChainState,
    data: PreparedData,
    hyper: Hyperparams,
    evaluator: LikelihoodEvaluator | None = None,
) -> tuple[ChainState, bool]:
    """One random-walk Metropolis step on a scalar block.

    The Gaussian proposal is symmetric, so the acceptance ratio is the plain
    full-conditional ratio.
    """

    if block.kind == "gamma" and block.index < 1:
        raise IndexError("gamma[0] is not a sampled block")
    slot = block.slot
    current = _current_value(state.params, block)
    current_logfc = _logfc(block, state.params, data, hyper, current, evaluator)
    sd = float(state.proposal_sd[block.kind][slot])
    proposal = current + sd * float(state.rng.standard_normal())
    uniform = float(state.rng.random())
    log_u = math.log(uniform) if uniform > 0 else -math.inf
    try:
        proposal_logfc = _logfc(block, state.params, data, hyper, proposal, evaluator)
    except NumericalAbort:
        proposal_logfc = -math.inf

    accepted = log_u < proposal_logfc - current_logfc
    if accepted:
        state.params = _with_value(state.params, block, proposal)

    state.proposed[block.kind][slot] += 1
    state.batch_proposed[block.kind][slot] += 1
    if accepted:
        state.accepted[block.kind][slot] += 1
        state.batch_accepted[block.kind][slot] += 1
    if not state.adapting:
        state.tuned_proposed[block.kind][slot] += 1
        if accepted:
            state.tuned_accepted[block.kind][slot] += 1
    if state.decisions is not None:
        state.decisions.append(1 if accepted else 0)
    return state, accepted


def gibbs_sweep(
    state: ChainState,
    data: PreparedData,
    hyper: Hyperparams,
    evaluator: LikelihoodEvaluator | None = None,
) -> ChainState:
    """Every mu, then every theta, then free gammas, then the three precisions."""

    params = state.params
    for step in sweep_schedule(params.n_periods, params.n_nodes):
        if isinstance(step, Block):
            mh_update(step, state, data, hyper, evaluator)
        elif step == "tau_eta":
            state.params = state.params.with_precisions(
                tau_eta=sample_tau_eta(state.params, hyper, state.rng)
            )
        elif step == "tau_theta":
            state.params = state.params.with_precisions(
                tau_theta=sample_tau_theta(state.params, hyper, state.rng)
            )
        else:
            state.params = state.params.with_precisions(
                tau_gamma=sample_tau_gamma(state.params, hyper, state.rng)
            )
    state.iteration += 1
    return state


def adapt(state: ChainState, config: ChainConfig) -> ChainState:
    """Batch multiplicative tuning of proposal sds, frozen after the window."""

    if not state.adapting:
        return state
    if state.iteration > 0 and state.iteration % config.adapt_batch == 0:
        low, high = config.target_acceptance
        for kind, sds in state.proposal_sd.items():
            proposed = state.batch_proposed[kind]
            rates = state.batch_accepted[kind] / np.maximum(proposed, 1)
            factor = np.ones_like(sds)
            factor[(proposed > 0) & (rates > high)] = GROW_FACTOR
            factor[(proposed > 0) & (rates < low)] = SHRINK_FACTOR
            state.proposal_sd[kind] = np.clip(sds * factor, *SD_BOUNDS)
            state.batch_accepted[kind][:] = 0
            state.batch_proposed[kind][:] = 0
    if state.iteration >= config.effective_adapt_window:
        state.adapting = False
        logger.info(
            "chain_adaptation_frozen",
            extra={
                "iteration": state.iteration,
                "sd_median": {kind: float(np.median(sds)) for kind, sds in state.proposal_sd.items()},
            },
        )
    return state


@dataclass(frozen=True)
class PosteriorSample:
    iterations: np.ndarray
    mu: np.ndarray
    theta: np.ndarray
    gamma: np.ndarray
    tau_eta: np.ndarray
    tau_theta: np.ndarray
    tau_gamma: np.ndarray
    acceptance: dict[str, list[float]]
    proposal_sd: dict[str, list[float]]
    config: dict
    seed: int
    wall_time: float = 0.0
    node_labels: tuple[int, ...] = ()
    period_labels: tuple[str, ...] = ()
    decisions: bytes | None = None

    @property
    def n_draws(self) -> int:
        return int(self.iterations.size)

    def group(self, name: str) -> np.ndarray:
        return getattr(self, name)

    @classmethod
    def from_run_dir(cls, run_dir: Path | str) -> "PosteriorSample":
        """Rebuild a sample from the streamed draw files and the run manifest."""

        source = Path(run_dir)
        manifest = fetch_manifest(source)
        if manifest is None:
            raise DataValidationError(f"no run manifest in {source}")
        arrays: dict[str, np.ndarray] = {}
        iterations: np.ndarray | None = None
        for group in DRAW_GROUPS:
            path = source / f"{group}.csv"
            if not path.exists():
                raise DataValidationError(f"missing draw file {path}")
            frame = pd.read_csv(path, float_precision="round_trip")
            if frame.empty:
                raise DataValidationError(f"draw file {path} holds no draws")
            table = frame.pivot(index="iteration", columns="index", values="value").sort_index()
            values = table.to_numpy(dtype=np.float64)
            if group.startswith("tau_"):
                values = values[:, 0]
            arrays[group] = values
            if iterations is None:
                iterations = table.index.to_numpy()
        counts = {values.shape[0] for values in arrays.values()}
        if len(counts) != 1:
            # an interrupted run may have flushed some groups one draw further
            keep = min(counts)
            arrays = {group: values[:keep] for group, values in arrays.items()}
            iterations = iterations[:keep]
        return cls(
            iterations=iterations,
            acceptance=manifest.get("acceptance", {}),
            proposal_sd=manifest.get("proposal_sd", {}),
            config=manifest.get("config", {}),
            seed=int(manifest.get("seed", 0)),
            wall_time=float(manifest.get("wall_time", 0.0)),
            node_labels=tuple(manifest.get("node_labels", ())),
            period_labels=tuple(manifest.get("period_labels", ())),
            **arrays,
        )


def load_sample(run_dir: Path | str) -> PosteriorSample:
    return PosteriorSample.from_run_dir(run_dir)


def resolve_seed(config: ChainConfig) -> int:
    if config.seed is not None:
        return int(config.seed)
    return int(np.random.SeedSequence().entropy % 2**64)


def run_chain(
    data: DynamicNetwork | PreparedData,
    hyper: Hyperparams,
    config: ChainConfig,
    *,
    writer: DrawWriter | None = None,
    start: ModelParams | None = None,
    node_labels: tuple[int, ...] = (),
    period_labels: tuple[str, ...] = (),
) -> PosteriorSample:
    """Run the full schedule: adaptation, burn-in, then thinned storage."""

    if isinstance(data, DynamicNetwork):
        node_labels = node_labels or data.node_labels
        period_labels = period_labels or data.period_labels
    prepared = _as_prepared(data)
    if prepared.n_nodes < 3:
        raise DataValidationError("N must exceed 2")
    seed = resolve_seed(config)
    rng = np.random.default_rng(seed)
    n_draws = config.expected_draws
    n_periods, n_nodes = prepared.n_periods, prepared.n_nodes
    draws = {
        "mu": np.zeros((n_draws, n_periods)),
        "theta": np.zeros((n_draws, n_nodes)),
        "gamma": np.zeros((n_draws, n_nodes)),
        "tau_eta": np.zeros(n_draws),
        "tau_theta": np.zeros(n_draws),
        "tau_gamma": np.zeros(n_draws),
    }
    iterations = np.zeros(n_draws, dtype=np.int64)
    started = time.perf_counter()
    progress_every = max(1, config.n_iterations // 10)

    with LikelihoodEvaluator(prepared, threads=config.threads) as evaluator:
        state = init_state(prepared, hyper, config, rng, start=start)
        try:
            log_posterior(state.params, prepared, hyper, evaluator)
        except NumericalAbort as exc:
            raise NumericalAbort(f"initial state has {exc}", iteration=0) from exc
        logger.info(
            "chain_started",
            extra={"seed": seed, "n_periods": n_periods, "n_nodes": n_nodes, "threads": config.threads},
        )
        stored = 0
        for iteration in range(1, config.n_iterations + 1):
            try:
                gibbs_sweep(state, prepared, hyper, evaluator)
            except NumericalAbort as exc:
                raise NumericalAbort(str(exc), iteration=iteration) from exc
            adapt(state, config)
            if iteration > config.n_burnin and (iteration - config.n_burnin) % config.thin == 0:
                if stored < n_draws:
                    params = state.params
                    draws["mu"][stored] = params.mu
                    draws["theta"][stored] = params.theta
                    draws["gamma"][stored] = params.gamma
                    draws["tau_eta"][stored] = params.tau_eta
                    draws["tau_theta"][stored] = params.tau_theta
                    draws["tau_gamma"][stored] = params.tau_gamma
                    iterations[stored] = iteration
                    if writer is not None:
                        writer.write(
                            iteration,
                            {
                                "mu": params.mu,
                                "theta": params.theta,
                                "gamma": params.gamma,
                                "tau_eta": params.tau_eta,
                                "tau_theta": params.tau_theta,
                                "tau_gamma": params.tau_gamma,
                            },
                        )
                    stored += 1
            if iteration % progress_every == 0:
                logger.info(
                    "chain_progress",
                    extra={"iteration": iteration, "elapsed": round(time.perf_counter() - started, 3)},
                )

    wall_time = time.perf_counter() - started
    rates = state.acceptance_rates(tuned=True)
    acceptance = {kind: np.nan_to_num(values, nan=0.0).tolist() for kind, values in rates.items()}
    logger.info("chain_finished", extra={"draws": stored, "wall_time": round(wall_time, 3)})
    return PosteriorSample(
        iterations=iterations[:stored],
        mu=draws["mu"][:stored],
        theta=draws["theta"][:stored],
        gamma=draws["gamma"][:stored],
        tau_eta=draws["tau_eta"][:stored],
        tau_theta=draws["tau_theta"][:stored],
        tau_gamma=draws["tau_gamma"][:stored],
        acceptance=acceptance,
        proposal_sd={kind: sds.tolist() for kind, sds in state.proposal_sd.items()},
        config=config.model_dump(mode="json"),
        seed=seed,
        wall_time=wall_time,
        node_labels=tuple(node_labels),
        period_labels=tuple(period_labels),
        decisions=None if state.decisions is None else bytes(state.decisions),
    )


__all__ = [
    "Block",
    "ChainState",
    "PosteriorSample",
    "adapt",
    "gibbs_sweep",
    "init_state",
    "load_sample",
    "mh_update",
    "resolve_seed",
    "run_chain",
    "sweep_schedule",
]
