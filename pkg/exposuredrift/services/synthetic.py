from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..models import DynamicNetwork
from .model import ModelParams, alpha_matrix, constrained_gamma

logger = logging.getLogger(__name__)

UNDERFLOW_FLOOR = 1e-300


@dataclass
class SynthSpec:
    n_nodes: int
    n_periods: int
    mu: Sequence[float] | None = None
    mu_start: float = 0.0
    mu_slope: float | None = None
    tau_eta: float = 1.0
    theta: Sequence[float] | None = None
    tau_theta: float = 1.0
    gamma: Sequence[float] | None = None
    tau_gamma: float = 1.0
    seed: int | None = None
    period_labels: Sequence[str] | None = field(default=None)

    def __post_init__(self) -> None:
        if self.n_nodes < 3:
            raise ValueError("synthetic networks need N >= 3")
        if self.n_periods < 1:
            raise ValueError("synthetic networks need T >= 1")
        for name, length in (("mu", self.n_periods), ("theta", self.n_nodes), ("gamma", self.n_nodes)):
            values = getattr(self, name)
            if values is not None and len(values) != length:
                raise ValueError(f"{name} must have length {length}")
        for name in ("tau_eta", "tau_theta", "tau_gamma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.seed is None:
            self.seed = int(np.random.SeedSequence().entropy % 2**63)

    def to_dict(self) -> dict:
        payload = asdict(self)
        for key in ("mu", "theta", "gamma", "period_labels"):
            if payload[key] is not None:
                payload[key] = list(payload[key])
        return payload


def dirichlet_draw(alpha_vector: Sequence[float] | np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Gamma-normalization Dirichlet draw; underflowed zeros floored at 1e-300."""

    alphas = np.asarray(alpha_vector, dtype=np.float64)
    if np.any(alphas <= 0):
        raise ValueError("alpha entries must be strictly positive")
    draws = np.maximum(rng.gamma(alphas), UNDERFLOW_FLOOR)
    return draws / draws.sum()


def ground_truth(spec: SynthSpec) -> ModelParams:
    rng = np.random.default_rng([int(spec.seed), 0xA11A])
    if spec.mu is not None:
        mu = np.asarray(spec.mu, dtype=np.float64)
    elif spec.mu_slope is not None:
        mu = spec.mu_start + spec.mu_slope * np.arange(spec.n_periods)
    else:
        steps = rng.normal(0.0, 1.0 / np.sqrt(spec.tau_eta), size=spec.n_periods - 1)
        mu = spec.mu_start + np.concatenate(([0.0], np.cumsum(steps)))
    if spec.theta is not None:
        theta = np.asarray(spec.theta, dtype=np.float64)
    else:
        theta = rng.normal(0.0, 1.0 / np.sqrt(spec.tau_theta), size=spec.n_nodes)
    if spec.gamma is not None:
        raw = np.asarray(spec.gamma, dtype=np.float64)
    else:
        raw = rng.normal(0.0, 1.0 / np.sqrt(spec.tau_gamma), size=spec.n_nodes)
    centered = raw - raw.mean()
    return ModelParams(
        mu=mu,
        theta=theta,
        gamma=constrained_gamma(centered[1:]),
        tau_eta=spec.tau_eta,
        tau_theta=spec.tau_theta,
        tau_gamma=spec.tau_gamma,
    )


def _draw_row(seed: int, t: int, i: int, alpha_row: np.ndarray) -> np.ndarray:
    rng = np.random.default_rng([seed, t, i])
    return dirichlet_draw(alpha_row, rng)


def generate(spec: SynthSpec, *, threads: int = 1) -> tuple[DynamicNetwork, ModelParams]:
    """Forward-simulate a relative ("Y") network from the model.

    Each row uses its own RNG stream derived from ``(seed, t, i)``, so the
    output does not depend on ``threads``.
    """

    truth = ground_truth(spec)
    n_nodes, n_periods = spec.n_nodes, spec.n_periods
    seed = int(spec.seed)
    off = ~np.eye(n_nodes, dtype=bool)
    jobs: list[tuple[int, int, np.ndarray]] = []
    for t in range(n_periods):
        alphas = alpha_matrix(truth, t)
        for i in range(n_nodes):
            jobs.append((t, i, alphas[i, off[i]]))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads, thread_name_prefix="synthetic") as executor:
            rows = list(executor.map(lambda job: _draw_row(seed, *job), jobs))
    else:
        rows = [_draw_row(seed, *job) for job in jobs]

    matrices = np.zeros((n_periods, n_nodes, n_nodes))
    for (t, i, _), row in zip(jobs, rows):
        matrices[t, i, off[i]] = row

    labels = spec.period_labels or [str(t) for t in range(n_periods)]
    net = DynamicNetwork(
        matrices=matrices,
        node_labels=tuple(range(n_nodes)),
        period_labels=tuple(labels),
        provenance="Y",
        mask=np.zeros((n_periods, n_nodes), dtype=bool),
    )
    logger.info(
        "synthetic_network_generated",
        extra={"n_nodes": n_nodes, "n_periods": n_periods, "seed": seed},
    )
    return net, truth


__all__ = ["SynthSpec", "dirichlet_draw", "generate", "ground_truth"]
