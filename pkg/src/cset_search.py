"""
Statistic sets C_{t,k}(a): exhaustive enumeration over all k^N labelings,
sampled outer sets, annealed local search for the nearest partition, and
directed / symmetric Hausdorff distances under the L1 ground metric.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .action_models import ActionUsageError, BudgetExceededError, MPAction, Partition
from .parallel_tasks import run_tasks, task_rng
from .partition_statistics import StatPoint, batch_statistics, l1_distance, stat_point
from .storage.run_logging import add_run_log
from .weakeq_config import DEDUP_TOLERANCE, LABELING_BUDGET

if TYPE_CHECKING:
    from .storage.cset_cache import CSetCache

SearchMode = Literal["auto", "exact", "heuristic"]

_ENUMERATION_CHUNK = 1 << 15
_CDIST_CELLS = 1 << 22
_ZERO = 1e-15
_IMPROVEMENT = 1e-15

# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchConfig:
    """
    Local-search and sampling parameters; every task derives its RNG from (seed, task key).
    ``initial_temperature`` is relative to the distance of the starting labeling.
    """
    seed: int = 0
    restarts: int = 6
    max_steps: int = 3000
    initial_temperature: float = 0.1
    decay: float = 0.997
    swap_probability: float = 0.3
    sample_count: int = 64
    patience: int = 600
    pair_polish_limit: int = 48
    labeling_budget: int = LABELING_BUDGET

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ActionUsageError("seed must be non-negative")
        for name in ("restarts", "max_steps", "sample_count", "patience", "labeling_budget"):
            if getattr(self, name) < 1:
                raise ActionUsageError(f"{name} must be positive")
        if self.pair_polish_limit < 0:
            raise ActionUsageError("pair_polish_limit must be non-negative")
        if not self.initial_temperature > 0:
            raise ActionUsageError("initial_temperature must be positive")
        if not 0 < self.decay < 1:
            raise ActionUsageError("decay must lie in (0, 1)")
        if not 0 <= self.swap_probability <= 1:
            raise ActionUsageError("swap_probability must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class CSet:
    """
    Finite set of statistic points of shape (t, k, k). Row i of ``labelings``
    is a partition attaining ``points[i]``. ``exact`` means the set is the
    statistic of every k^N labeling.
    """
    t: int
    k: int
    points: np.ndarray
    labelings: np.ndarray
    exact: bool
    provenance: Dict[str, Any] = field(default_factory=dict)  # type: ignore[assignment]

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def stat_points(self) -> List[StatPoint]:
        return [StatPoint(p) for p in self.points]

    def flat_points(self) -> np.ndarray:
        return self.points.reshape(len(self), -1)

    def prefix(self, t: int) -> CSet:
        """The set for the first *t* words: projection of every point, deduplicated."""
        if not 1 <= t <= self.t:
            raise ActionUsageError(f"prefix length {t} outside 1..{self.t}")
        points, labelings = _deduplicate(self.points[:, :t], self.labelings)
        return CSet(t, self.k, points, labelings, self.exact, dict(self.provenance))


def labeling_count(k: int, size: int) -> int:
    return k ** size


def _deduplicate(points: np.ndarray, labelings: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Keeps one point per DEDUP_TOLERANCE grid cell (first occurrence), in sorted key order."""
    if points.shape[0] == 0:
        return points, labelings
    keys = np.rint(points.reshape(points.shape[0], -1) / DEDUP_TOLERANCE).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return points[first], labelings[first]

# ---------------------------------------------------------------------------
# Building statistic sets
# ---------------------------------------------------------------------------

def enumerate_cset(a: MPAction, t: int, k: int, budget: Optional[int] = None) -> CSet:
    """Exact C_{t,k}(a): statistics of all k^N labelings, empty blocks included."""
    if t < 1 or k < 1:
        raise ActionUsageError(f"t and k must be positive, got t={t}, k={k}")
    limit = LABELING_BUDGET if budget is None else budget
    size = a.size
    total = labeling_count(k, size)
    if total > limit:
        add_run_log(1, "enumerate_cset", f"refused: k^N = {k}^{size} = {total} > {limit}")
        raise BudgetExceededError(f"k^N = {k}^{size} = {total} exceeds labeling budget {limit}")

    a = a.with_words(t)
    perms = a.word_perms[:t]
    weights = a.space.as_array
    radix = np.array([k ** i for i in range(size)], dtype=np.int64)
    kept_points: List[np.ndarray] = []
    kept_labelings: List[np.ndarray] = []
    for start in range(0, total, _ENUMERATION_CHUNK):
        index = np.arange(start, min(total, start + _ENUMERATION_CHUNK), dtype=np.int64)
        labelings = (index[:, None] // radix[None, :]) % k
        points = batch_statistics(perms, weights, labelings, k)
        points, labelings = _deduplicate(points, labelings)
        kept_points.append(points)
        kept_labelings.append(labelings)

    points, labelings = _deduplicate(np.concatenate(kept_points), np.concatenate(kept_labelings))
    add_run_log(4, "enumerate_cset", f"N={size} t={t} k={k}: {total} labelings -> {len(points)} points")
    return CSet(t, k, points, labelings, True, {"kind": "enumeration", "labelings": total})


def orbit_labels(a: MPAction) -> np.ndarray:
    """Orbit index of every atom under the generators."""
    size = a.size
    rows = np.concatenate([np.arange(size) for _ in a.generator_perms])
    cols = np.concatenate(a.generator_arrays)
    graph = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(size, size))
    _, labels = connected_components(graph, directed=True, connection="weak")
    return labels.astype(np.int64)


def _structured_labelings(a: MPAction, k: int) -> List[np.ndarray]:
    """Extreme partitions: single-block, weight-quantile blocks, orbit-based blocks."""
    size = a.size
    weights = a.space.as_array
    candidates: List[np.ndarray] = [np.full(size, label, dtype=np.int64) for label in range(k)]

    order = np.argsort(weights, kind="stable")
    before = np.concatenate([[0.0], np.cumsum(weights[order])[:-1]])
    quantile = np.minimum((before * k).astype(np.int64), k - 1)
    by_weight = np.empty(size, dtype=np.int64)
    by_weight[order] = quantile
    candidates.append(by_weight)

    orbits = orbit_labels(a)
    candidates.append(orbits % k)
    if k >= 2:
        for orbit in range(min(int(orbits.max()) + 1, 8)):
            candidates.append((orbits == orbit).astype(np.int64))
    return candidates


def sample_cset(a: MPAction, t: int, k: int, cfg: SearchConfig) -> CSet:
    """Heuristic outer set: seeded random labelings plus structured partitions."""
    a = a.with_words(t)
    rng = task_rng(cfg.seed, 0xC5E7, t, k)
    random_labelings = rng.integers(k, size=(cfg.sample_count, a.size))
    labelings = np.vstack([np.stack(_structured_labelings(a, k)), random_labelings]).astype(np.int64)
    points = batch_statistics(a.word_perms[:t], a.space.as_array, labelings, k)
    points, labelings = _deduplicate(points, labelings)
    provenance = {"kind": "search", "seed": cfg.seed, "sample_count": cfg.sample_count,
                  "budget": cfg.labeling_budget}
    return CSet(t, k, points, labelings, False, provenance)


def cset_for(a: MPAction, t: int, k: int, cfg: SearchConfig, mode: SearchMode = "auto",
             cache: Optional[CSetCache] = None) -> CSet:
    """Exact set when feasible (or required), sampled set otherwise."""
    feasible = labeling_count(k, a.size) <= cfg.labeling_budget
    if mode == "exact" or (mode == "auto" and feasible):
        if cache is not None:
            return cache.get_or_build(a, t, k, cfg.labeling_budget)
        return enumerate_cset(a, t, k, cfg.labeling_budget)
    return sample_cset(a, t, k, cfg)

# ---------------------------------------------------------------------------
# Local search
# ---------------------------------------------------------------------------

class _LocalSearchState:
    """Statistic table of one labeling with O(t) single-atom relabel updates."""

    def __init__(self, perms: List[List[int]], inverses: List[List[int]], weights: List[float],
                 target: List[float], k: int, labels: List[int]):
        self.perms = perms
        self.inverses = inverses
        self.weights = weights
        self.target = target
        self.k = k
        self.labels = list(labels)
        self.table = [0.0] * len(target)
        kk = k * k
        for s, perm in enumerate(perms):
            base = s * kk
            for x, image in enumerate(perm):
                self.table[base + self.labels[x] * k + self.labels[image]] += weights[x]
        self.distance = sum(abs(v - g) for v, g in zip(self.table, target))

    def _changes(self, x: int, new: int) -> Dict[int, float]:
        k = self.k
        kk = k * k
        old = self.labels[x]
        labels = self.labels
        changes: Dict[int, float] = {}

        def add(index: int, amount: float) -> None:
            changes[index] = changes.get(index, 0.0) + amount

        wx = self.weights[x]
        for s, perm in enumerate(self.perms):
            base = s * kk
            image = perm[x]
            if image == x:
                add(base + old * k + old, -wx)
                add(base + new * k + new, wx)
                continue
            image_label = labels[image]
            add(base + old * k + image_label, -wx)
            add(base + new * k + image_label, wx)
            source = self.inverses[s][x]
            source_label = labels[source]
            ws = self.weights[source]
            add(base + source_label * k + old, -ws)
            add(base + source_label * k + new, ws)
        return changes

    def move_delta(self, x: int, new: int) -> Tuple[float, Dict[int, float]]:
        changes = self._changes(x, new)
        delta = 0.0
        for index, amount in changes.items():
            value = self.table[index]
            goal = self.target[index]
            delta += abs(value + amount - goal) - abs(value - goal)
        return delta, changes

    def apply(self, x: int, new: int, delta: float, changes: Dict[int, float]) -> None:
        for index, amount in changes.items():
            self.table[index] += amount
        self.labels[x] = new
        self.distance += delta

    def revert(self, x: int, old: int, delta: float, changes: Dict[int, float]) -> None:
        for index, amount in changes.items():
            self.table[index] -= amount
        self.labels[x] = old
        self.distance -= delta

    def swap_delta(self, x: int, y: int) -> Tuple[float, _SwapParts]:
        """Delta of exchanging the labels of x and y. Leaves the state unchanged."""
        label_x, label_y = self.labels[x], self.labels[y]
        first_delta, first = self.move_delta(x, label_y)
        self.apply(x, label_y, first_delta, first)
        second_delta, second = self.move_delta(y, label_x)
        self.revert(x, label_x, first_delta, first)
        return first_delta + second_delta, (first_delta, first, second_delta, second)

    def apply_swap(self, x: int, y: int, parts: _SwapParts) -> None:
        label_x, label_y = self.labels[x], self.labels[y]
        first_delta, first, second_delta, second = parts
        self.apply(x, label_y, first_delta, first)
        self.apply(y, label_x, second_delta, second)


_SwapParts = Tuple[float, Dict[int, float], float, Dict[int, float]]


def _polish(state: _LocalSearchState, rng: np.random.Generator, cfg: SearchConfig) -> None:
    """First-improvement hill climbing over single relabels, then label swaps on small spaces."""
    size = len(state.labels)
    pairs = size <= cfg.pair_polish_limit
    improved = True
    while improved:
        improved = False
        for x in rng.permutation(size).tolist():
            for new in range(state.k):
                if new == state.labels[x]:
                    continue
                delta, changes = state.move_delta(x, new)
                if delta < -_IMPROVEMENT:
                    state.apply(x, new, delta, changes)
                    improved = True
                    break
        if improved or not pairs:
            continue
        for x in range(size):
            for y in range(x + 1, size):
                if state.labels[x] == state.labels[y]:
                    continue
                delta, parts = state.swap_delta(x, y)
                if delta < -_IMPROVEMENT:
                    state.apply_swap(x, y, parts)
                    improved = True
                    break
            if improved:
                break


def _anneal_restart(perms: List[List[int]], inverses: List[List[int]], weights: List[float],
                    target: List[float], k: int, cfg: SearchConfig,
                    rng_key: Tuple[int, ...]) -> Tuple[float, List[int]]:
    """
    One annealing run from a random labeling. Moves are single-atom relabels or,
    with probability ``swap_probability``, label exchanges between two atoms.
    The best labeling seen is polished by hill climbing.
    """
    rng = task_rng(*rng_key)
    size = len(weights)
    state = _LocalSearchState(perms, inverses, weights, target, k, rng.integers(k, size=size).tolist())
    best_distance = state.distance
    best_labels = list(state.labels)

    if k > 1:
        temperature = cfg.initial_temperature * max(state.distance, 1e-9)
        stale = 0
        for _ in range(cfg.max_steps):
            if best_distance <= _ZERO or stale >= cfg.patience:
                break
            stale += 1
            if size > 1 and rng.random() < cfg.swap_probability:
                x, y = (int(v) for v in rng.choice(size, 2, replace=False))
                if state.labels[x] != state.labels[y]:
                    delta, parts = state.swap_delta(x, y)
                    if delta <= 0 or rng.random() < math.exp(-delta / temperature):
                        state.apply_swap(x, y, parts)
            else:
                x = int(rng.integers(size))
                new = int(rng.integers(k - 1))
                if new >= state.labels[x]:
                    new += 1
                delta, changes = state.move_delta(x, new)
                if delta <= 0 or rng.random() < math.exp(-delta / temperature):
                    state.apply(x, new, delta, changes)
            if state.distance < best_distance - _IMPROVEMENT:
                best_distance = state.distance
                best_labels = list(state.labels)
                stale = 0
            temperature = max(temperature * cfg.decay, 1e-12)

    state = _LocalSearchState(perms, inverses, weights, target, k, best_labels)
    if k > 1:
        _polish(state, rng, cfg)
    return state.distance, state.labels


@dataclass(frozen=True)
class ClosestPointResult:
    partition: Partition
    distance: float
    heuristic: bool = True


def closest_point(target: StatPoint, a: MPAction, cfg: SearchConfig, task_index: int = 0,
                  n_jobs: Optional[int] = 1, mode: SearchMode = "auto") -> ClosestPointResult:
    """
    Partition of *a* whose statistic is L1-nearest to *target*.

    When k^N fits the labeling budget (or mode is "exact") the answer comes from the
    enumerated set and is the true minimum. Otherwise multi-restart annealing runs;
    its distance is achieved by the returned partition, so it upper-bounds the minimum.
    """
    t, k = target.t, target.k
    if t > a.word_count:
        a = a.with_words(t)
    feasible = labeling_count(k, a.size) <= cfg.labeling_budget
    if mode == "exact" or (mode == "auto" and feasible):
        exact_set = enumerate_cset(a, t, k, cfg.labeling_budget)
        minima, argmins = nearest_points(target.values.reshape(1, -1), exact_set.flat_points())
        partition = Partition(a.space, k, exact_set.labelings[int(argmins[0])])
        return ClosestPointResult(partition=partition, distance=float(minima[0]), heuristic=False)

    perms = a.word_perms[:t]
    inverses = np.argsort(perms, axis=1)
    arguments = [
        (perms.tolist(), inverses.tolist(), a.space.as_array.tolist(), target.to_flat_list(), k, cfg,
         (cfg.seed, task_index, restart))
        for restart in range(cfg.restarts)
    ]
    runs = run_tasks(_anneal_restart, arguments, n_jobs)
    best_restart = min(range(len(runs)), key=lambda r: (runs[r][0], r))
    partition = Partition(a.space, k, np.asarray(runs[best_restart][1], dtype=np.int64))
    distance = l1_distance(target, stat_point(a, partition, t))
    return ClosestPointResult(partition=partition, distance=distance, heuristic=True)

# ---------------------------------------------------------------------------
# Hausdorff distances
# ---------------------------------------------------------------------------

def nearest_points(from_points: np.ndarray, to_points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """For each row of *from_points*: L1 distance to and index of the nearest row of *to_points*."""
    n = from_points.shape[0]
    m = to_points.shape[0]
    minima = np.empty(n, dtype=np.float64)
    argmins = np.empty(n, dtype=np.int64)
    step = max(1, _CDIST_CELLS // max(1, m))
    for start in range(0, n, step):
        block = cdist(from_points[start:start + step], to_points, metric="cityblock")
        argmins[start:start + step] = block.argmin(axis=1)
        minima[start:start + step] = block[np.arange(block.shape[0]), argmins[start:start + step]]
    return minima, argmins


@dataclass(frozen=True, eq=False)
class DirectedHausdorff:
    """
    Sup over the source points of the distance to the target action's
    partitions. ``witness_labelings[i]`` is the target partition nearest to source point i.
    """
    value: float
    exact: bool
    point_distances: np.ndarray
    witness_labelings: np.ndarray
    worst_index: int


def _closest_task(values: np.ndarray, to_action: MPAction, cfg: SearchConfig,
                  task_index: int) -> Tuple[float, np.ndarray]:
    result = closest_point(StatPoint(values), to_action, cfg, task_index=task_index, n_jobs=1, mode="heuristic")
    return result.distance, result.partition.labels


def directed_hausdorff(source: CSet, to_action: MPAction, cfg: Optional[SearchConfig] = None,
                       mode: SearchMode = "auto", n_jobs: Optional[int] = None,
                       to_cset: Optional[CSet] = None) -> DirectedHausdorff:
    """
    Max over points of *source* of the distance into *to_action*'s partition space.
    Inner minima are exact whenever the target side can be enumerated; the value is
    exact when *source* is exact too. Otherwise every inner minimum comes from
    annealing and is an upper bound.
    """
    config = cfg or SearchConfig()
    if len(source) == 0:
        raise ActionUsageError("source statistic set is empty")
    if mode == "exact" and not source.exact:
        raise ActionUsageError("exact mode needs an exhaustively enumerated source set")

    target_set = to_cset
    if target_set is None and mode != "heuristic":
        feasible = labeling_count(source.k, to_action.size) <= config.labeling_budget
        if feasible or mode == "exact":
            target_set = enumerate_cset(to_action, source.t, source.k, config.labeling_budget)

    if mode != "heuristic" and target_set is not None and target_set.exact:
        if (target_set.t, target_set.k) != (source.t, source.k):
            raise ActionUsageError(
                f"shape mismatch: ({source.t},{source.k}) vs ({target_set.t},{target_set.k})"
            )
        minima, argmins = nearest_points(source.flat_points(), target_set.flat_points())
        worst = int(minima.argmax())
        return DirectedHausdorff(float(minima[worst]), source.exact, minima, target_set.labelings[argmins], worst)

    arguments = [(source.points[i], to_action, config, i) for i in range(len(source))]
    results = run_tasks(_closest_task, arguments, n_jobs)
    minima = np.array([r[0] for r in results], dtype=np.float64)
    witnesses = np.stack([r[1] for r in results])
    worst = int(minima.argmax())
    return DirectedHausdorff(float(minima[worst]), False, minima, witnesses, worst)


@dataclass(frozen=True, eq=False)
class HausdorffResult:
    value: float
    exact: bool
    forward: DirectedHausdorff
    backward: DirectedHausdorff


def hausdorff(a: MPAction, b: MPAction, t: int, k: int, cfg: Optional[SearchConfig] = None,
              mode: SearchMode = "auto", n_jobs: Optional[int] = None,
              cache: Optional[CSetCache] = None) -> HausdorffResult:
    """d_H(C_{t,k}(a), C_{t,k}(b)); exact only when both sets were enumerated."""
    if a.rank != b.rank:
        raise ActionUsageError(f"actions have different ranks ({a.rank} vs {b.rank})")
    config = cfg or SearchConfig()
    set_a = cset_for(a, t, k, config, mode, cache)
    set_b = cset_for(b, t, k, config, mode, cache)
    forward = directed_hausdorff(set_a, b, config, mode, n_jobs, to_cset=set_b if set_b.exact else None)
    backward = directed_hausdorff(set_b, a, config, mode, n_jobs, to_cset=set_a if set_a.exact else None)
    return HausdorffResult(
        value=max(forward.value, backward.value),
        exact=forward.exact and backward.exact,
        forward=forward,
        backward=backward,
    )
