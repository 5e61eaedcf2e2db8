from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Sequence

import arviz as az
import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from scipy import stats

from ..exceptions import DataValidationError
from .sampler import PosteriorSample
from .transform import RelevanceTable

logger = logging.getLogger(__name__)

MIN_QUANTILE_DRAWS = 100
QUANTILE_METHOD = "linear"


class ParameterSummary(BaseModel):
    name: str
    index: int | None = None
    mean: float
    variance: float
    lower: float | None = None
    upper: float | None = None
    rhat: float | None = None
    ess: float | None = None


class DriftRow(BaseModel):
    t: int
    label: str
    mean: float
    lo: float | None = None
    hi: float | None = None


class NodeRecord(BaseModel):
    node: int
    theta_mean: float
    theta_var: float
    gamma_mean: float
    gamma_var: float
    relevance: float | None = None


class Summary(BaseModel):
    n_draws: int
    credible_mass: float = 0.95
    quantile_rule: str = "linear interpolation between order statistics (type 7)"
    interval: str = "equal-tailed"
    parameters: list[ParameterSummary]
    acceptance: dict[str, float] = Field(default_factory=dict)
    drift: list[DriftRow] = Field(default_factory=list)
    nodes: list[NodeRecord] = Field(default_factory=list)
    correlations: dict[str, float | None] = Field(default_factory=dict)
    warnings: list[str] = Field(default_factory=list)

    def parameter(self, name: str, index: int | None = None) -> ParameterSummary:
        for item in self.parameters:
            if item.name == name and item.index == index:
                return item
        raise KeyError((name, index))


def _none_if_nan(value: float) -> float | None:
    return None if value is None or not math.isfinite(value) else float(value)


def _chain_dataset(draws: Sequence[float] | np.ndarray):
    """One-chain arviz dataset, or None when diagnostics are undefined."""

    values = np.asarray(draws, dtype=np.float64)
    if values.size < 4 or not np.all(np.isfinite(values)) or np.ptp(values) == 0:
        return None
    return az.convert_to_dataset({"x": values[np.newaxis, :]})


def split_rhat(draws: Sequence[float] | np.ndarray) -> float:
    """Rank-normalized split R-hat of a single chain."""

    dataset = _chain_dataset(draws)
    if dataset is None:
        return math.nan
    return float(az.rhat(dataset, method="rank")["x"].values)


def effective_sample_size(draws: Sequence[float] | np.ndarray) -> float:
    """Bulk effective sample size of a single chain."""

    dataset = _chain_dataset(draws)
    if dataset is None:
        return math.nan
    return float(az.ess(dataset, method="bulk")["x"].values)


def rank_correlation(x: Sequence[float] | np.ndarray, y: Sequence[float] | np.ndarray) -> float:
    """Spearman correlation with average ranks for ties."""

    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("rank correlation needs two equal-length vectors")
    if a.size < 3:
        raise ValueError("rank correlation needs at least 3 values")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise ValueError("rank correlation is undefined for constant input")
    result = stats.spearmanr(a, b)
    return float(result[0])


def _scalar_summary(
    name: str, index: int | None, draws: np.ndarray, mass: float, with_quantiles: bool
) -> ParameterSummary:
    lower = upper = None
    if with_quantiles:
        tail = (1.0 - mass) / 2.0
        lower, upper = (
            float(q) for q in np.quantile(draws, [tail, 1.0 - tail], method=QUANTILE_METHOD)
        )
    return ParameterSummary(
        name=name,
        index=index,
        mean=float(np.mean(draws)),
        variance=float(np.var(draws)),
        lower=lower,
        upper=upper,
        rhat=_none_if_nan(split_rhat(draws)),
        ess=_none_if_nan(effective_sample_size(draws)),
    )


def _join_relevance(sample: PosteriorSample, relevance: RelevanceTable, n_nodes: int) -> np.ndarray:
    labels = tuple(sample.node_labels) or tuple(range(n_nodes))
    table_labels = set(relevance.node_labels)
    unmatched_sample = sorted(set(labels) - table_labels)
    unmatched_table = sorted(table_labels - set(labels))
    if unmatched_sample or unmatched_table:
        raise DataValidationError(
            "relevance node set does not match the fitted nodes; "
            f"missing from relevance: {unmatched_sample}; unknown to the fit: {unmatched_table}"
        )
    return relevance.subset(labels).aggregate


def summarize(
    sample: PosteriorSample,
    relevance: RelevanceTable | None = None,
    *,
    credible_mass: float = 0.95,
) -> Summary:
    """Posterior moments, equal-tailed intervals, drift trajectory and node table."""

    n_draws = sample.n_draws
    if n_draws == 0:
        raise DataValidationError("posterior sample holds no draws")
    warnings: list[str] = []
    with_quantiles = n_draws >= MIN_QUANTILE_DRAWS
    if not with_quantiles:
        message = f"only {n_draws} draws; credible intervals need at least {MIN_QUANTILE_DRAWS}"
        warnings.append(message)
        logger.warning("summary_quantiles_refused", extra={"n_draws": n_draws})

    parameters: list[ParameterSummary] = []
    for group in ("mu", "theta", "gamma"):
        values = sample.group(group)
        for index in range(values.shape[1]):
            parameters.append(_scalar_summary(group, index, values[:, index], credible_mass, with_quantiles))
    for group in ("tau_eta", "tau_theta", "tau_gamma"):
        taus = sample.group(group)
        # summaries of the transformed draws, not transforms of summaries
        parameters.append(
            _scalar_summary(f"var_{group[4:]}", None, 1.0 / taus, credible_mass, with_quantiles)
        )

    n_periods = sample.mu.shape[1]
    period_labels = list(sample.period_labels) or [str(t) for t in range(n_periods)]
    drift = []
    for t in range(n_periods):
        item = parameters[t]
        drift.append(DriftRow(t=t, label=period_labels[t], mean=item.mean, lo=item.lower, hi=item.upper))

    n_nodes = sample.theta.shape[1]
    node_labels = list(sample.node_labels) or list(range(n_nodes))
    theta_means = sample.theta.mean(axis=0)
    gamma_means = sample.gamma.mean(axis=0)
    aggregate = None if relevance is None else _join_relevance(sample, relevance, n_nodes)
    nodes = [
        NodeRecord(
            node=int(node_labels[k]),
            theta_mean=float(theta_means[k]),
            theta_var=float(np.var(sample.theta[:, k])),
            gamma_mean=float(gamma_means[k]),
            gamma_var=float(np.var(sample.gamma[:, k])),
            relevance=None if aggregate is None else float(aggregate[k]),
        )
        for k in range(n_nodes)
    ]

    correlations: dict[str, float | None] = {}
    pairs = [("theta_vs_gamma", theta_means, gamma_means)]
    if aggregate is not None:
        pairs += [
            ("theta_vs_relevance", theta_means, aggregate),
            ("gamma_vs_relevance", gamma_means, aggregate),
        ]
    for name, x, y in pairs:
        try:
            correlations[name] = rank_correlation(x, y)
        except ValueError as exc:
            correlations[name] = None
            warnings.append(f"{name}: {exc}")

    acceptance = {
        kind: float(np.mean(rates)) if len(rates) else 0.0 for kind, rates in sample.acceptance.items()
    }
    return Summary(
        n_draws=n_draws,
        credible_mass=credible_mass,
        parameters=parameters,
        acceptance=acceptance,
        drift=drift,
        nodes=nodes,
        correlations=correlations,
        warnings=warnings,
    )


def write_summary(
    summary: Summary, out_dir: Path | str, period_labels: Sequence[str] | None = None
) -> Path:
    """Write summary.json, drift.csv and nodes.csv; labels override the stored period labels."""

    target = Path(out_dir)
    drift = summary.drift
    if period_labels is not None:
        if len(period_labels) != len(drift):
            raise DataValidationError(
                f"{len(period_labels)} period labels supplied for {len(drift)} periods"
            )
        drift = [row.model_copy(update={"label": str(label)}) for row, label in zip(drift, period_labels)]
    target.mkdir(parents=True, exist_ok=True)
    (target / "summary.json").write_text(summary.model_dump_json(indent=2), encoding="utf-8")
    pd.DataFrame(
        [row.model_dump() for row in drift], columns=["t", "label", "mean", "lo", "hi"]
    ).to_csv(target / "drift.csv", index=False, float_format="%.10g")
    pd.DataFrame(
        [row.model_dump() for row in summary.nodes],
        columns=["node", "theta_mean", "theta_var", "gamma_mean", "gamma_var", "relevance"],
    ).to_csv(target / "nodes.csv", index=False, float_format="%.10g")
    return target


__all__ = [
    "DriftRow",
    "NodeRecord",
    "ParameterSummary",
    "Summary",
    "effective_sample_size",
    "rank_correlation",
    "split_rhat",
    "summarize",
    "write_summary",
]
