"""Edge-list parsing and the on-disk network directory format."""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence, TextIO

import numpy as np
import pandas as pd

from ..exceptions import DataValidationError
from ..models import DynamicNetwork, ExposureRecord

EDGE_LIST_HEADER = ("period", "lender", "borrower", "weight")
MANIFEST_NAME = "manifest.json"
_UNDECODABLE = re.compile("[\udc80-\udcff]")


@dataclass(frozen=True)
class PeriodStats:
    period: int
    label: str
    edge_count: int
    total_weight: float
    relative_total: float


def _open_source(source: TextIO | Path | str) -> tuple[TextIO, bool]:
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"Edge list not found: {path}")
        # undecodable bytes survive as lone surrogates and are rejected per row
        return path.open("r", encoding="utf-8", errors="surrogateescape", newline=""), True
    return source, False


def _parse_int(value: str, name: str, line: int) -> int:
    try:
        return int(value.strip())
    except (AttributeError, ValueError):
        raise DataValidationError(f"malformed {name} {value!r}", line=line) from None


def _rows(reader) -> Iterator[list[str]]:
    while True:
        try:
            row = next(reader)
        except StopIteration:
            return
        except UnicodeDecodeError:
            raise DataValidationError("edge list is not valid UTF-8", line=reader.line_num + 1) from None
        if any(_UNDECODABLE.search(cell) for cell in row):
            raise DataValidationError("edge list is not valid UTF-8", line=reader.line_num)
        yield row


def iter_records(stream: TextIO) -> Iterator[tuple[int, ExposureRecord]]:
    """Yield ``(line_number, record)`` pairs, validating every row."""

    reader = csv.reader(stream)
    rows = _rows(reader)
    try:
        header = next(rows)
    except StopIteration:
        raise DataValidationError("no records: missing header", line=1) from None
    normalized = tuple(cell.strip().lower() for cell in header)
    if normalized != EDGE_LIST_HEADER:
        raise DataValidationError(
            f"expected header {','.join(EDGE_LIST_HEADER)}, got {','.join(header)}", line=1
        )
    for row in rows:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(EDGE_LIST_HEADER):
            raise DataValidationError(
                f"malformed row: expected 4 fields, got {len(row)}", line=line
            )
        period = _parse_int(row[0], "period", line)
        lender = _parse_int(row[1], "lender", line)
        borrower = _parse_int(row[2], "borrower", line)
        try:
            weight = float(row[3].strip())
        except ValueError:
            raise DataValidationError(f"malformed weight {row[3]!r}", line=line) from None
        if not math.isfinite(weight):
            raise DataValidationError(f"non-finite weight {row[3]!r}", line=line)
        if weight <= 0:
            raise DataValidationError(f"weight must be positive, got {weight}", line=line)
        if lender == borrower:
            raise DataValidationError(f"self-loop on node {lender}", line=line)
        if period < 0:
            raise DataValidationError(f"negative period {period}", line=line)
        yield line, ExposureRecord(period=period, lender=lender, borrower=borrower, weight=weight)


def parse_edge_list(
    source: TextIO | Path | str,
    *,
    period_labels: Sequence[str] | None = None,
) -> DynamicNetwork:
    """Build a dense DynamicNetwork from a ``period,lender,borrower,weight`` CSV."""

    stream, owned = _open_source(source)
    try:
        records: list[ExposureRecord] = []
        seen: dict[tuple[int, int, int], int] = {}
        for line, record in iter_records(stream):
            key = (record.period, record.lender, record.borrower)
            if key in seen:
                raise DataValidationError(
                    f"duplicate edge {key} (first seen on line {seen[key]})", line=line
                )
            seen[key] = line
            records.append(record)
    finally:
        if owned:
            stream.close()

    if not records:
        raise DataValidationError("no records")

    periods = sorted({record.period for record in records})
    n_periods = periods[-1] + 1
    if len(periods) != n_periods:
        missing = sorted(set(range(n_periods)) - set(periods))
        raise DataValidationError(f"period indices must be contiguous from 0; missing {missing}")

    node_ids = sorted({record.lender for record in records} | {record.borrower for record in records})
    index = {node_id: position for position, node_id in enumerate(node_ids)}
    matrices = np.zeros((n_periods, len(node_ids), len(node_ids)), dtype=np.float64)
    for record in records:
        matrices[record.period, index[record.lender], index[record.borrower]] = record.weight

    if period_labels is None:
        labels = tuple(str(period) for period in range(n_periods))
    else:
        labels = tuple(period_labels)
        if len(labels) != n_periods:
            raise DataValidationError(
                f"{len(labels)} period labels supplied for {n_periods} periods"
            )
    return DynamicNetwork(matrices=matrices, node_labels=tuple(node_ids), period_labels=labels)


def parse_edge_text(text: str, **kwargs) -> DynamicNetwork:
    return parse_edge_list(io.StringIO(text), **kwargs)


def to_records(net: DynamicNetwork) -> list[ExposureRecord]:
    records: list[ExposureRecord] = []
    periods, lenders, borrowers = np.nonzero(net.matrices > 0)
    for t, i, j in zip(periods.tolist(), lenders.tolist(), borrowers.tolist()):
        records.append(
            ExposureRecord(
                period=t,
                lender=net.node_labels[i],
                borrower=net.node_labels[j],
                weight=float(net.matrices[t, i, j]),
            )
        )
    return records


def write_edge_list(net: DynamicNetwork, path: Path | str) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(EDGE_LIST_HEADER)
        for record in to_records(net):
            writer.writerow([record.period, record.lender, record.borrower, repr(record.weight)])
    return target


def network_stats(net: DynamicNetwork) -> list[PeriodStats]:
    """Per-period edge count, total weight and total relative to period 0."""

    edge_counts = np.count_nonzero(net.matrices > 0, axis=(1, 2))
    totals = net.matrices.sum(axis=(1, 2))
    base = float(totals[0])
    stats: list[PeriodStats] = []
    for t in range(net.n_periods):
        total = float(totals[t])
        # an empty anchor period leaves nothing to scale against
        relative = total / base if base > 0 else 0.0
        stats.append(
            PeriodStats(
                period=t,
                label=net.period_labels[t],
                edge_count=int(edge_counts[t]),
                total_weight=total,
                relative_total=relative,
            )
        )
    return stats


def stats_frame(stats: Iterable[PeriodStats]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "period": item.period,
                "label": item.label,
                "edge_count": item.edge_count,
                "total_weight": item.total_weight,
                "relative_total": item.relative_total,
            }
            for item in stats
        ]
    )


def _period_file(t: int) -> str:
    return f"period_{t:03d}.csv"


def write_network_dir(net: DynamicNetwork, directory: Path | str) -> Path:
    """Write one dense CSV per period plus a JSON manifest."""

    target = Path(directory)
    target.mkdir(parents=True, exist_ok=True)
    for t in range(net.n_periods):
        np.savetxt(target / _period_file(t), net.matrices[t], delimiter=",", fmt="%.17g")
    manifest = {
        "n_nodes": net.n_nodes,
        "n_periods": net.n_periods,
        "node_labels": list(net.node_labels),
        "period_labels": list(net.period_labels),
        "provenance": net.provenance,
        "files": [_period_file(t) for t in range(net.n_periods)],
        "mask": None if net.mask is None else net.mask.astype(int).tolist(),
    }
    (target / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return target


def read_network_dir(directory: Path | str) -> DynamicNetwork:
    source = Path(directory)
    manifest_path = source / MANIFEST_NAME
    if not manifest_path.exists():
        raise DataValidationError(f"network manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    n_nodes = int(manifest["n_nodes"])
    matrices = []
    for name in manifest["files"]:
        matrix = np.loadtxt(source / name, delimiter=",", dtype=np.float64, ndmin=2)
        if matrix.shape != (n_nodes, n_nodes):
            raise DataValidationError(f"{name} has shape {matrix.shape}, expected {(n_nodes, n_nodes)}")
        matrices.append(matrix)
    if len(matrices) != int(manifest["n_periods"]):
        raise DataValidationError("manifest period count does not match the period files")
    mask = manifest.get("mask")
    return DynamicNetwork(
        matrices=np.stack(matrices),
        node_labels=tuple(manifest["node_labels"]),
        period_labels=tuple(manifest["period_labels"]),
        provenance=manifest.get("provenance", "E"),
        mask=None if mask is None else np.asarray(mask, dtype=bool),
    )


__all__ = [
    "EDGE_LIST_HEADER",
    "PeriodStats",
    "iter_records",
    "network_stats",
    "parse_edge_list",
    "parse_edge_text",
    "read_network_dir",
    "stats_frame",
    "to_records",
    "write_edge_list",
    "write_network_dir",
]
