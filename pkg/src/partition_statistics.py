"""
Statistic points of partitions: entry (s, l, m) is the measure of gamma_s A_l
intersected with A_m, for the first t enumerated words and a k-block partition.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .action_models import ActionUsageError, MPAction, Partition
from .weakeq_config import MASS_TOLERANCE


@dataclass(frozen=True, eq=False)
class StatPoint:
    """Point of [0,1]^(t x k x k)."""
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise ActionUsageError(f"a statistic point has shape (t, k, k), got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def t(self) -> int:
        return int(self.values.shape[0])

    @property
    def k(self) -> int:
        return int(self.values.shape[1])

    def to_flat_list(self) -> List[float]:
        """Row-major (s, l, m) order; the order is part of the file format."""
        return [float(x) for x in self.values.reshape(-1)]

    @classmethod
    def from_flat(cls, t: int, k: int, flat: Sequence[float]) -> StatPoint:
        if len(flat) != t * k * k:
            raise ActionUsageError(f"expected {t * k * k} values for (t={t}, k={k}), got {len(flat)}")
        return cls(np.asarray(flat, dtype=np.float64).reshape(t, k, k))

    def prefix(self, t: int) -> StatPoint:
        if not 1 <= t <= self.t:
            raise ActionUsageError(f"prefix length {t} outside 1..{self.t}")
        return StatPoint(self.values[:t])


def batch_statistics(word_perms: np.ndarray, weights: np.ndarray, labelings: np.ndarray, k: int) -> np.ndarray:
    """
    Statistics of many labelings at once, shape (B, t, k, k).

    Atom x contributes its weight to (s, label[x], label[gamma_s x]); with
    weight-preserving gamma_s this equals mu(gamma_s A_l cap A_m).
    """
    labelings = np.asarray(labelings, dtype=np.int64)
    if labelings.ndim == 1:
        labelings = labelings[None, :]
    batch, size = labelings.shape
    t = word_perms.shape[0]
    cells = t * k * k

    image_labels = labelings[:, word_perms]                      # (B, t, N)
    source_labels = np.broadcast_to(labelings[:, None, :], image_labels.shape)
    flat = (np.arange(batch)[:, None, None] * cells
            + np.arange(t)[None, :, None] * k * k
            + source_labels * k
            + image_labels)
    counts = np.bincount(
        flat.reshape(-1),
        weights=np.broadcast_to(weights, image_labels.shape).reshape(-1),
        minlength=batch * cells,
    )
    return counts.reshape(batch, t, k, k)


def stat_point(a: MPAction, partition: Partition, t: int) -> StatPoint:
    """Statistic point of *partition* under the first *t* words of *a*."""
    if partition.space != a.space:
        raise ActionUsageError("partition lives on a different space than the action")
    if not 1 <= t <= a.word_count:
        raise ActionUsageError(f"t={t} outside the {a.word_count} cached words (use with_words)")
    values = batch_statistics(a.word_perms[:t], a.space.as_array, partition.labels, partition.k)[0]
    return StatPoint(values)


def l1_distance(x: StatPoint, y: StatPoint) -> float:
    """Sum of coordinate distances."""
    if x.values.shape != y.values.shape:
        raise ActionUsageError(f"shape mismatch: {x.values.shape} vs {y.values.shape}")
    return float(np.abs(x.values - y.values).sum())


def relabel_point(point: StatPoint, sigma: Sequence[int]) -> StatPoint:
    """Statistic of the same partition after block l is renamed sigma[l]."""
    perm = np.asarray(sigma, dtype=np.int64)
    if perm.shape != (point.k,) or not np.array_equal(np.sort(perm), np.arange(point.k)):
        raise ActionUsageError(f"sigma must be a permutation of 0..{point.k - 1}")
    out = np.empty_like(point.values)
    out[:, perm[:, None], perm[None, :]] = point.values
    return StatPoint(out)


def check_stat_point(point: StatPoint) -> List[str]:
    """Reports violated statistic invariants (entry range, per-word mass, identity slice)."""
    issues: List[str] = []
    values = point.values
    if values.min() < -MASS_TOLERANCE or values.max() > 1 + MASS_TOLERANCE:
        issues.append("entry outside [0, 1]")
    masses = values.sum(axis=(1, 2))
    for s, mass in enumerate(masses):
        if abs(mass - 1.0) > MASS_TOLERANCE:
            issues.append(f"word {s}: total mass {mass!r} != 1")
    off_diagonal = values[0] - np.diag(np.diag(values[0]))
    if np.abs(off_diagonal).max() > 1e-12:
        issues.append("identity slice has off-diagonal mass")
    return issues
