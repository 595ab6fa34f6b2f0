"""
Truncated fine metric d_f and the approximate weak containment / equivalence testers.

d_f(a, b) = sum_t 2^-t max_{k <= K} d_H(C_{t,k}(a), C_{t,k}(b)), summed for t <= T.
Every d_H is at most 2t (each word slice carries total mass 1 on both sides),
which gives the reported tail bound for the dropped terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Literal, Mapping, Optional, Tuple

import numpy as np

from .action_models import ActionUsageError, MPAction
from .cset_search import (
    CSet, SearchConfig, SearchMode, cset_for, directed_hausdorff, hausdorff, labeling_count,
    nearest_points,
)
from .parallel_tasks import run_tasks
from .partition_statistics import batch_statistics
from .storage.run_logging import add_run_log

if TYPE_CHECKING:
    from .storage.cset_cache import CSetCache

ContainmentNorm = Literal["l1", "slice", "entry"]

# ---------------------------------------------------------------------------
# Truncation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncationParams:
    """Finite truncation of the series (T words) and of the sup over block counts (K)."""
    T: int
    K: int
    search: SearchConfig = field(default_factory=SearchConfig)
    overrides: Mapping[Tuple[int, int], SearchConfig] = field(default_factory=dict)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.T < 1 or self.K < 1:
            raise ActionUsageError(f"T and K must be at least 1, got T={self.T}, K={self.K}")

    def config_for(self, t: int, k: int) -> SearchConfig:
        return self.overrides.get((t, k), self.search)

    @classmethod
    def for_actions(cls, a: MPAction, b: MPAction, T: int, K: Optional[int] = None,
                    search: Optional[SearchConfig] = None) -> TruncationParams:
        """Default K is the atom count of the larger space."""
        return cls(T=T, K=K if K is not None else max(a.size, b.size), search=search or SearchConfig())


def tail_bound(T: int) -> float:
    """sum_{t > T} 2^-t * 2t, in closed form 2 (T + 2) / 2^T."""
    return 2.0 * (T + 2) / 2.0 ** T


def slice_mass_bound(T: int) -> float:
    """sum_{t <= T} 2^-t * 2t: no truncated value can exceed this."""
    return sum(2.0 * t / 2.0 ** t for t in range(1, T + 1))

# ---------------------------------------------------------------------------
# Fine distance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FineCell:
    t: int
    k: int
    value: float
    exact: bool


@dataclass(frozen=True)
class FineDistanceReport:
    value: float
    cells: List[FineCell]
    tail_bound: float
    slice_bound: float
    T: int
    K: int

    @property
    def exact(self) -> bool:
        return all(cell.exact for cell in self.cells)

    @property
    def mode(self) -> str:
        return "exact" if self.exact else "heuristic"

    @property
    def label(self) -> str:
        return "truncated estimate of d_f"

    def table(self) -> List[List[float]]:
        """Rows t = 1..T, columns k = 1..K."""
        grid = [[0.0] * self.K for _ in range(self.T)]
        for cell in self.cells:
            grid[cell.t - 1][cell.k - 1] = cell.value
        return grid

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "label": self.label,
            "mode": self.mode,
            "truncation": {"T": self.T, "K": self.K},
            "tail_bound": self.tail_bound,
            "slice_bound": self.slice_bound,
            "table": [
                {"t": c.t, "k": c.k, "d_H": c.value, "mode": "exact" if c.exact else "heuristic"}
                for c in self.cells
            ],
        }


def _both_enumerable(a: MPAction, b: MPAction, k: int, cfg: SearchConfig) -> bool:
    return max(labeling_count(k, a.size), labeling_count(k, b.size)) <= cfg.labeling_budget


def _cells_for_k(a: MPAction, b: MPAction, k: int, p: TruncationParams, mode: SearchMode,
                 cache: Optional[CSetCache]) -> List[FineCell]:
    """All t <= T cells for one block count; exact sets are enumerated once at T and projected."""
    cells: List[FineCell] = []
    top = p.config_for(p.T, k)
    if mode != "heuristic" and (mode == "exact" or _both_enumerable(a, b, k, top)):
        full_a = cset_for(a, p.T, k, top, "exact", cache)
        full_b = cset_for(b, p.T, k, top, "exact", cache)
        for t in range(1, p.T + 1):
            set_a, set_b = full_a.prefix(t), full_b.prefix(t)
            forward, _ = nearest_points(set_a.flat_points(), set_b.flat_points())
            backward, _ = nearest_points(set_b.flat_points(), set_a.flat_points())
            cells.append(FineCell(t, k, float(max(forward.max(), backward.max())), True))
        return cells
    for t in range(1, p.T + 1):
        result = hausdorff(a, b, t, k, p.config_for(t, k), mode, n_jobs=1, cache=cache)
        cells.append(FineCell(t, k, result.value, result.exact))
    return cells


def fine_distance(a: MPAction, b: MPAction, p: TruncationParams, mode: SearchMode = "auto",
                  n_jobs: Optional[int] = None, cache: Optional[CSetCache] = None) -> FineDistanceReport:
    """Truncated d_f with its per-(t,k) table and the tail bound for t > T."""
    if a.rank != b.rank:
        raise ActionUsageError(f"actions have different ranks ({a.rank} vs {b.rank})")
    a, b = a.with_words(p.T), b.with_words(p.T)
    per_k = run_tasks(_cells_for_k, [(a, b, k, p, mode, cache) for k in range(1, p.K + 1)], n_jobs)
    cells = sorted((cell for group in per_k for cell in group), key=lambda c: (c.t, c.k))

    value = 0.0
    for t in range(1, p.T + 1):
        value += max(c.value for c in cells if c.t == t) / 2.0 ** t
    report = FineDistanceReport(value, cells, tail_bound(p.T), slice_mass_bound(p.T), p.T, p.K)
    add_run_log(3, "fine_distance", f"T={p.T} K={p.K} value={value!r} mode={report.mode}")
    return report

# ---------------------------------------------------------------------------
# Weak containment / equivalence
# ---------------------------------------------------------------------------

def norm_values(source_points: np.ndarray, witness_points: np.ndarray, norm: ContainmentNorm) -> np.ndarray:
    """Per-point distance under the chosen norm; l1 >= slice >= entry."""
    diff = np.abs(source_points - witness_points)
    if norm == "l1":
        return diff.sum(axis=(1, 2, 3))
    if norm == "slice":
        return diff.sum(axis=(2, 3)).max(axis=1)
    if norm == "entry":
        return diff.max(axis=(1, 2, 3))
    raise ActionUsageError(f"unknown norm {norm!r}")


@dataclass(frozen=True, eq=False)
class ContainmentWitness:
    t: int
    k: int
    source_labels: np.ndarray
    target_labels: np.ndarray
    distance: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "k": self.k,
            "partition": [int(x) + 1 for x in self.source_labels],
            "nearest_partition": [int(x) + 1 for x in self.target_labels],
            "distance": self.distance,
        }


@dataclass(frozen=True, eq=False)
class ContainmentVerdict:
    passed: bool
    eps: float
    norm: str
    cells: List[FineCell]
    witness: Optional[ContainmentWitness] = None

    @property
    def exact(self) -> bool:
        return all(cell.exact for cell in self.cells)

    @property
    def certified_failure(self) -> bool:
        """A FAIL with both sides enumerated certifies non-containment at this truncation."""
        return not self.passed and self.exact

    def to_dict(self) -> Dict[str, Any]:
        return {
            "verdict": "PASS" if self.passed else "FAIL",
            "eps": self.eps,
            "norm": self.norm,
            "mode": "exact" if self.exact else "heuristic",
            "certified_failure": self.certified_failure,
            "cells": [{"t": c.t, "k": c.k, "distance": c.value} for c in self.cells],
            "witness": self.witness.to_dict() if self.witness else None,
        }


def weakly_contained(a: MPAction, b: MPAction, p: TruncationParams, eps: float,
                     norm: ContainmentNorm = "l1", mode: SearchMode = "auto",
                     n_jobs: Optional[int] = None, cache: Optional[CSetCache] = None) -> ContainmentVerdict:
    """
    PASS when every statistic point of *a* is within *eps* of *b*'s partition
    space for all t <= T, k <= K. Stops at the first failing cell and returns its worst point.
    """
    if a.rank != b.rank:
        raise ActionUsageError(f"actions have different ranks ({a.rank} vs {b.rank})")
    if eps < 0:
        raise ActionUsageError("eps must be non-negative")
    a, b = a.with_words(p.T), b.with_words(p.T)
    cells: List[FineCell] = []
    for k in range(1, p.K + 1):
        top = p.config_for(p.T, k)
        exact_sets = mode != "heuristic" and (mode == "exact" or _both_enumerable(a, b, k, top))
        full_a: Optional[CSet] = cset_for(a, p.T, k, top, "exact", cache) if exact_sets else None
        full_b: Optional[CSet] = cset_for(b, p.T, k, top, "exact", cache) if exact_sets else None
        for t in range(1, p.T + 1):
            cfg = p.config_for(t, k)
            source = full_a.prefix(t) if full_a is not None else cset_for(a, t, k, cfg, mode, cache)
            target = full_b.prefix(t) if full_b is not None else None
            directed = directed_hausdorff(source, b, cfg, mode, n_jobs, to_cset=target)
            witness_points = batch_statistics(b.word_perms[:t], b.space.as_array, directed.witness_labelings, k)
            values = norm_values(source.points, witness_points, norm)
            worst = int(values.argmax())
            cells.append(FineCell(t, k, float(values[worst]), directed.exact))
            if values[worst] > eps:
                witness = ContainmentWitness(t, k, source.labelings[worst], directed.witness_labelings[worst],
                                             float(values[worst]))
                add_run_log(3, "weakly_contained", f"FAIL at t={t} k={k}: {values[worst]!r} > {eps}")
                return ContainmentVerdict(False, eps, norm, cells, witness)
    return ContainmentVerdict(True, eps, norm, cells)


@dataclass(frozen=True, eq=False)
class EquivalenceVerdict:
    passed: bool
    forward: ContainmentVerdict
    backward: ContainmentVerdict

    def to_dict(self) -> Dict[str, Any]:
        return {
            "verdict": "PASS" if self.passed else "FAIL",
            "forward": self.forward.to_dict(),
            "backward": self.backward.to_dict(),
        }


def weakly_equivalent(a: MPAction, b: MPAction, p: TruncationParams, eps: float,
                      norm: ContainmentNorm = "l1", mode: SearchMode = "auto",
                      n_jobs: Optional[int] = None, cache: Optional[CSetCache] = None) -> EquivalenceVerdict:
    forward = weakly_contained(a, b, p, eps, norm, mode, n_jobs, cache)
    backward = weakly_contained(b, a, p, eps, norm, mode, n_jobs, cache)
    return EquivalenceVerdict(forward.passed and backward.passed, forward, backward)


def fine_ball_check(a_n: MPAction, a: MPAction, p: TruncationParams, eps: float,
                    mode: SearchMode = "auto", n_jobs: Optional[int] = None) -> ContainmentVerdict:
    """
    Convergence criterion of the fine topology at truncation: every partition
    of *a_n* has a partner for *a* whose per-word L1 deviation is at most *eps*.
    """
    return weakly_contained(a_n, a, p, eps, norm="slice", mode=mode, n_jobs=n_jobs)
