"""Shared data model for temporal exposure networks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .exceptions import DataValidationError

Provenance = Literal["E", "D", "X", "Y"]
PROVENANCE_TAGS: tuple[str, ...] = ("E", "D", "X", "Y")


@dataclass(frozen=True)
class ExposureRecord:
    period: int
    lender: int
    borrower: int
    weight: float

    def __post_init__(self) -> None:
        if self.period < 0:
            raise DataValidationError(f"negative period {self.period}")
        if self.lender == self.borrower:
            raise DataValidationError(f"self-loop on node {self.lender}")
        if not np.isfinite(self.weight) or self.weight <= 0:
            raise DataValidationError(f"weight must be positive and finite, got {self.weight}")


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class DynamicNetwork:
    """T dense N x N nonnegative matrices over a fixed node set.

    ``node_labels[k]`` is the original id of dense index ``k``. ``mask`` is only
    set on relative ("Y") networks and marks the all-zero rows that the
    likelihood skips.
    """

    matrices: np.ndarray
    node_labels: tuple[int, ...]
    period_labels: tuple[str, ...]
    provenance: Provenance = "E"
    mask: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        matrices = np.array(self.matrices, dtype=np.float64, copy=True)
        if matrices.ndim != 3 or matrices.shape[1] != matrices.shape[2]:
            raise DataValidationError(f"matrices must have shape (T, N, N), got {matrices.shape}")
        n_periods, n_nodes, _ = matrices.shape
        if n_periods == 0 or n_nodes == 0:
            raise DataValidationError("network must have at least one period and one node")
        if not np.all(np.isfinite(matrices)):
            raise DataValidationError("matrices contain non-finite entries")
        if np.any(matrices < 0):
            raise DataValidationError("matrices contain negative entries")
        diagonal = matrices[:, np.arange(n_nodes), np.arange(n_nodes)]
        if np.any(diagonal != 0):
            raise DataValidationError("diagonal entries must be exactly zero")
        if len(self.node_labels) != n_nodes:
            raise DataValidationError("node_labels length does not match N")
        if len(set(self.node_labels)) != n_nodes:
            raise DataValidationError("node_labels must be unique")
        if len(self.period_labels) != n_periods:
            raise DataValidationError("period_labels length does not match T")
        if self.provenance not in PROVENANCE_TAGS:
            raise DataValidationError(f"unknown provenance tag {self.provenance!r}")
        object.__setattr__(self, "matrices", _readonly(matrices))
        object.__setattr__(self, "node_labels", tuple(int(label) for label in self.node_labels))
        object.__setattr__(self, "period_labels", tuple(str(label) for label in self.period_labels))
        if self.mask is not None:
            mask = np.array(self.mask, dtype=bool, copy=True)
            if mask.shape != (n_periods, n_nodes):
                raise DataValidationError(f"mask must have shape {(n_periods, n_nodes)}")
            object.__setattr__(self, "mask", _readonly(mask))

    @property
    def n_periods(self) -> int:
        return int(self.matrices.shape[0])

    @property
    def n_nodes(self) -> int:
        return int(self.matrices.shape[1])

    def index_of(self, label: int) -> int:
        try:
            return self.node_labels.index(int(label))
        except ValueError as exc:
            raise KeyError(f"unknown node id {label}") from exc

    def with_matrices(
        self,
        matrices: np.ndarray,
        provenance: Provenance,
        mask: np.ndarray | None = None,
    ) -> "DynamicNetwork":
        return DynamicNetwork(
            matrices=matrices,
            node_labels=self.node_labels,
            period_labels=self.period_labels,
            provenance=provenance,
            mask=mask,
        )

    def subnetwork(self, indices: Sequence[int]) -> "DynamicNetwork":
        """Induced subgraph on the given dense indices, kept in the given order."""
        idx = np.asarray(indices, dtype=int)
        sub = self.matrices[:, idx][:, :, idx]
        mask = None if self.mask is None else self.mask[:, idx]
        return DynamicNetwork(
            matrices=sub,
            node_labels=tuple(self.node_labels[i] for i in idx),
            period_labels=self.period_labels,
            provenance=self.provenance,
            mask=mask,
        )

    def relabel(self, permutation: Sequence[int]) -> "DynamicNetwork":
        """Reorder nodes so that new index ``k`` holds old index ``permutation[k]``."""
        perm = np.asarray(permutation, dtype=int)
        if sorted(perm.tolist()) != list(range(self.n_nodes)):
            raise DataValidationError("permutation must be a bijection on node indices")
        return self.subnetwork(perm)


__all__ = ["ExposureRecord", "DynamicNetwork", "Provenance", "PROVENANCE_TAGS"]
