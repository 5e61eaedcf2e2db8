"""Observable -> absolute -> relative exposure pipeline and diversification diagnostics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator
from scipy.special import entr

from ..config import TransformOptions
from ..exceptions import DataValidationError
from ..models import DynamicNetwork

logger = logging.getLogger(__name__)

# np.histogram refuses absurd bin counts on extremely heavy tails
MAX_HISTOGRAM_BINS = 100_000


class TransitionRescale(BaseModel):
    period_from: int
    period_to: int
    ratio: float = Field(..., gt=0)
    sample_size: int
    bin_width: float
    method: Literal["histogram", "unanimous", "median_fallback"]
    top_bin_counts: list[int] = Field(default_factory=list)
    multimodal: bool = False


class RescaleReport(BaseModel):
    transitions: list[TransitionRescale]
    cumulative_factors: list[float]
    largest_exposure: list[float] = Field(
        default_factory=list,
        description="Largest absolute exposure per period relative to period 0",
    )

    @model_validator(mode="after")
    def _anchor(self) -> "RescaleReport":
        if not self.cumulative_factors or self.cumulative_factors[0] != 1.0:
            raise ValueError("cumulative factor of period 0 must equal 1")
        return self


@dataclass(frozen=True)
class RelevanceTable:
    per_period: np.ndarray
    node_labels: tuple[int, ...]

    @property
    def aggregate(self) -> np.ndarray:
        return self.per_period.sum(axis=0)

    def subset(self, labels: Sequence[int]) -> "RelevanceTable":
        positions = [self.node_labels.index(int(label)) for label in labels]
        return RelevanceTable(
            per_period=self.per_period[:, positions], node_labels=tuple(int(x) for x in labels)
        )

    def to_frame(self) -> pd.DataFrame:
        """Long format: one row per (node, period) plus one ``aggregate`` row per node."""
        rows = []
        n_periods = self.per_period.shape[0]
        aggregate = self.aggregate
        for k, label in enumerate(self.node_labels):
            for t in range(n_periods):
                rows.append({"node": label, "period": str(t), "relevance": float(self.per_period[t, k])})
            rows.append({"node": label, "period": "aggregate", "relevance": float(aggregate[k])})
        return pd.DataFrame(rows, columns=["node", "period", "relevance"])

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "RelevanceTable":
        missing = {"node", "period", "relevance"} - set(frame.columns)
        if missing:
            raise DataValidationError(f"relevance table missing columns {sorted(missing)}")
        periodic = frame[frame["period"].astype(str) != "aggregate"]
        labels = tuple(int(label) for label in dict.fromkeys(frame["node"].tolist()))
        n_periods = int(periodic["period"].astype(int).max()) + 1 if len(periodic) else 0
        per_period = np.zeros((max(n_periods, 1), len(labels)))
        index = {label: k for k, label in enumerate(labels)}
        for node, period, value in periodic[["node", "period", "relevance"]].itertuples(index=False):
            per_period[int(period), index[int(node)]] = float(value)
        if not len(periodic):
            aggregate_rows = frame[frame["period"].astype(str) == "aggregate"]
            for node, value in aggregate_rows[["node", "relevance"]].itertuples(index=False):
                per_period[0, index[int(node)]] = float(value)
        return cls(per_period=per_period, node_labels=labels)


@dataclass(frozen=True)
class PipelineResult:
    observable: DynamicNetwork
    absolute: DynamicNetwork
    report: RescaleReport
    relevance: RelevanceTable
    reduced: DynamicNetwork
    relative: DynamicNetwork


def _require_provenance(net: DynamicNetwork, allowed: Sequence[str], operation: str) -> None:
    if net.provenance not in allowed:
        raise DataValidationError(
            f"{operation} expects a network tagged {'/'.join(allowed)}, got {net.provenance!r}"
        )


def to_observable(net: DynamicNetwork) -> DynamicNetwork:
    """Scale every period so its largest exposure equals exactly 1."""

    _require_provenance(net, ("E", "D", "X"), "to_observable")
    maxima = net.matrices.max(axis=(1, 2))
    empty = np.flatnonzero(maxima <= 0)
    if empty.size:
        raise DataValidationError(f"all-zero period(s) {empty.tolist()} cannot be normalized")
    return net.with_matrices(net.matrices / maxima[:, None, None], "D")


def _top_bins(counts: np.ndarray, modal: int) -> list[int]:
    # second mode must be separated from the modal bin by at least one bin
    others = [
        int(count)
        for position, count in enumerate(counts.tolist())
        if abs(position - modal) > 1
    ]
    top = [int(counts[modal])]
    if others:
        top.append(max(others))
    return top


def estimate_modal_ratio(
    log_ratios: np.ndarray,
    *,
    min_samples: int = 10,
    multimodal_tolerance: float = 0.10,
) -> tuple[float, float, str, list[int], bool]:
    """Most frequent ratio from log-space ratios.

    Returns ``(ratio, bin_width, method, top_bin_counts, multimodal)``.
    """

    values = np.sort(np.asarray(log_ratios, dtype=np.float64))
    n = values.size
    if n == 0:
        raise DataValidationError("empty ratio sample")
    median = float(np.median(values))
    if np.ptp(values) == 0:
        return math.exp(values[0]), 0.0, "unanimous", [n], False

    if n < min_samples and np.unique(values).size == n:
        return math.exp(median), 0.0, "median_fallback", [], False

    q1, q3 = np.quantile(values, [0.25, 0.75])
    iqr = float(q3 - q1)
    if iqr == 0:
        # at least half of the sample sits exactly on the median
        return math.exp(median), 0.0, "unanimous", [int(np.count_nonzero(values == median))], False

    # numpy materializes every Freedman-Diaconis edge, so outliers are capped first
    fd_bins = np.ptp(values) * n ** (1.0 / 3.0) / (2.0 * iqr)
    if fd_bins > MAX_HISTOGRAM_BINS:
        edges = np.histogram_bin_edges(values, bins=MAX_HISTOGRAM_BINS)
    else:
        edges = np.histogram_bin_edges(values, bins="fd")
    counts, edges = np.histogram(values, bins=edges)
    n_bins = counts.size
    modal = int(np.argmax(counts))
    low, high = edges[modal], edges[modal + 1]
    if modal == n_bins - 1:
        inside = values[(values >= low) & (values <= high)]
    else:
        inside = values[(values >= low) & (values < high)]
    refined = float(np.median(inside)) if inside.size else 0.5 * float(low + high)
    top = _top_bins(counts, modal)
    multimodal = len(top) == 2 and top[1] >= (1.0 - multimodal_tolerance) * top[0]
    return math.exp(refined), float(edges[1] - edges[0]), "histogram", top, multimodal


def rescale_to_absolute(
    net: DynamicNetwork, options: TransformOptions | None = None
) -> tuple[DynamicNetwork, RescaleReport]:
    """Chain periods together through the modal ratio of common edges.

    For each transition the modal ratio ``m = d(t) / d(t+1)`` is taken to
    mean unchanged absolute exposure, so period ``t+1`` is multiplied by the
    running product of ratios. Period 0 is the anchor.
    """

    _require_provenance(net, ("D",), "rescale_to_absolute")
    opts = options or TransformOptions()
    factors = [1.0]
    transitions: list[TransitionRescale] = []
    for t in range(net.n_periods - 1):
        current, following = net.matrices[t], net.matrices[t + 1]
        common = (current > 0) & (following > 0)
        n_common = int(np.count_nonzero(common))
        if n_common == 0:
            raise DataValidationError(f"periods {t} and {t + 1} share no positive edge")
        log_ratios = np.log(current[common]) - np.log(following[common])
        ratio, width, method, top, multimodal = estimate_modal_ratio(
            log_ratios,
            min_samples=opts.min_ratio_samples,
            multimodal_tolerance=opts.multimodal_tolerance,
        )
        if method == "median_fallback":
            logger.warning(
                "rescale_ratio_sample_degenerate",
                extra={"period_from": t, "sample_size": n_common},
            )
        if multimodal:
            logger.warning(
                "rescale_ratio_multimodal",
                extra={"period_from": t, "top_bin_counts": top},
            )
        transitions.append(
            TransitionRescale(
                period_from=t,
                period_to=t + 1,
                ratio=ratio,
                sample_size=n_common,
                bin_width=width,
                method=method,
                top_bin_counts=top,
                multimodal=multimodal,
            )
        )
        factors.append(factors[-1] * ratio)

    scale = np.asarray(factors)
    absolute = net.with_matrices(net.matrices * scale[:, None, None], "X")
    largest = absolute.matrices.max(axis=(1, 2))
    report = RescaleReport(
        transitions=transitions,
        cumulative_factors=factors,
        largest_exposure=(largest / largest[0]).tolist(),
    )
    logger.info(
        "rescale_complete",
        extra={"periods": net.n_periods, "final_factor": factors[-1]},
    )
    return absolute, report


def relevance(net: DynamicNetwork) -> RelevanceTable:
    """Row plus column sums per node and period."""

    _require_provenance(net, ("X", "E"), "relevance")
    per_period = net.matrices.sum(axis=2) + net.matrices.sum(axis=1)
    return RelevanceTable(per_period=per_period, node_labels=net.node_labels)


def mean_relevance_by_period(table: RelevanceTable) -> np.ndarray:
    return table.per_period.mean(axis=1)


def top_k_subnetwork(net: DynamicNetwork, table: RelevanceTable, k: int) -> DynamicNetwork:
    """Induced subnetwork on the k most relevant nodes (ties: smaller id first)."""

    if not 1 <= k <= net.n_nodes:
        raise DataValidationError(f"k must lie in [1, {net.n_nodes}], got {k}")
    if table.node_labels != net.node_labels:
        table = table.subset(net.node_labels)
    aggregate = table.aggregate
    ranked = sorted(range(net.n_nodes), key=lambda idx: (-aggregate[idx], net.node_labels[idx]))
    keep = sorted(ranked[:k])
    return net.subnetwork(keep)


def to_relative(net: DynamicNetwork, epsilon: float = 1e-8) -> DynamicNetwork:
    """Row-normalize exposures; zero rows are masked, zeros in active rows floored."""

    _require_provenance(net, ("X",), "to_relative")
    if epsilon < 0 or not math.isfinite(epsilon):
        raise DataValidationError(f"epsilon must be a nonnegative finite real, got {epsilon}")
    matrices = np.array(net.matrices, copy=True)
    n_nodes = net.n_nodes
    off_diagonal = ~np.eye(n_nodes, dtype=bool)
    row_sums = matrices.sum(axis=2)
    active = row_sums > 0
    floor_mask = active[:, :, None] & off_diagonal[None, :, :] & (matrices == 0)
    matrices[floor_mask] = epsilon
    sums = matrices.sum(axis=2, keepdims=True)
    np.divide(matrices, sums, out=matrices, where=active[:, :, None])
    masked = ~active
    if masked.any():
        logger.info("relative_rows_masked", extra={"masked_rows": int(masked.sum())})
    return net.with_matrices(matrices, "Y", mask=masked)


def node_entropy(y_row: Sequence[float] | np.ndarray) -> float:
    """Shannon entropy in nats with 0 log 0 = 0."""
    return float(np.sum(entr(np.asarray(y_row, dtype=np.float64))))


def herfindahl(y_row: Sequence[float] | np.ndarray) -> float:
    row = np.asarray(y_row, dtype=np.float64)
    return float(np.sum(row * row))


def _active_rows(net: DynamicNetwork) -> np.ndarray:
    if net.mask is None:
        return net.matrices.sum(axis=2) > 0
    return ~net.mask


def entropy_table(net: DynamicNetwork) -> pd.DataFrame:
    _require_provenance(net, ("Y",), "entropy_table")
    active = _active_rows(net)
    rows = []
    for t in range(net.n_periods):
        for i in np.flatnonzero(active[t]).tolist():
            row = net.matrices[t, i]
            rows.append(
                {
                    "period": t,
                    "node": net.node_labels[i],
                    "entropy": node_entropy(row),
                    "herfindahl": herfindahl(row),
                }
            )
    return pd.DataFrame(rows, columns=["period", "node", "entropy", "herfindahl"])


def entropy_change_distribution(net: DynamicNetwork) -> pd.DataFrame:
    """``S_i(t+1) - S_i(t)`` per node per transition, keyed by the later period."""

    _require_provenance(net, ("Y",), "entropy_change_distribution")
    if net.n_periods < 2:
        raise DataValidationError("entropy changes need at least two periods")
    active = _active_rows(net)
    entropies = np.sum(entr(net.matrices), axis=2)
    rows = []
    for t in range(net.n_periods - 1):
        both = active[t] & active[t + 1]
        for i in np.flatnonzero(both).tolist():
            rows.append(
                {
                    "period": t + 1,
                    "node": net.node_labels[i],
                    "delta_entropy": float(entropies[t + 1, i] - entropies[t, i]),
                }
            )
    return pd.DataFrame(rows, columns=["period", "node", "delta_entropy"])


def entropy_change_summary(changes: pd.DataFrame) -> pd.DataFrame:
    if changes.empty:
        return pd.DataFrame(columns=["period", "count", "mean", "variance"])
    grouped = changes.groupby("period")["delta_entropy"]
    summary = pd.DataFrame(
        {
            "count": grouped.count(),
            "mean": grouped.mean(),
            "variance": grouped.var(ddof=0),
        }
    ).reset_index()
    return summary


def run_pipeline(net: DynamicNetwork, options: TransformOptions | None = None) -> PipelineResult:
    opts = options or TransformOptions()
    observable = to_observable(net)
    absolute, report = rescale_to_absolute(observable, opts)
    table = relevance(absolute)
    reduced = absolute
    if opts.top_k is not None:
        reduced = top_k_subnetwork(absolute, table, opts.top_k)
    relative = to_relative(reduced, opts.epsilon)
    return PipelineResult(
        observable=observable,
        absolute=absolute,
        report=report,
        relevance=table,
        reduced=reduced,
        relative=relative,
    )


__all__ = [
    "PipelineResult",
    "RelevanceTable",
    "RescaleReport",
    "TransitionRescale",
    "entropy_change_distribution",
    "entropy_change_summary",
    "entropy_table",
    "estimate_modal_ratio",
    "herfindahl",
    "mean_relevance_by_period",
    "node_entropy",
    "relevance",
    "rescale_to_absolute",
    "run_pipeline",
    "to_observable",
    "to_relative",
    "top_k_subnetwork",
]
