"""
Product actions and the constructive steps of the product continuity argument:
rectangle decompositions of product partitions, coarsening of factor blocks,
transfer of a rectangle partition onto replacement factor partitions, the
arithmetic product lemma, and the probe that certifies the additive bound
witness by witness.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .action_models import ActionUsageError, MPAction, Partition, WeightedSpace, product_space
from .cset_search import CSet, SearchConfig, enumerate_cset, nearest_points
from .parallel_tasks import run_tasks, task_rng
from .partition_statistics import l1_distance, stat_point
from .storage.run_logging import add_run_log

# ---------------------------------------------------------------------------
# Product actions
# ---------------------------------------------------------------------------

def product_action(a: MPAction, b: MPAction) -> MPAction:
    """Componentwise action on pairs (i, j); atom index i * N_b + j, weight w_a(i) w_b(j)."""
    if a.rank != b.rank:
        raise ActionUsageError(f"actions have different ranks ({a.rank} vs {b.rank})")
    space = product_space(a.space, b.space)
    size_b = b.size
    generators = [
        (perm_a[:, None] * size_b + perm_b[None, :]).reshape(-1)
        for perm_a, perm_b in zip(a.generator_arrays, b.generator_arrays)
    ]
    return MPAction.build(space, generators, max(a.word_count, b.word_count))


def _factors_of(space: WeightedSpace) -> Tuple[WeightedSpace, WeightedSpace]:
    if space.factors is None:
        raise ActionUsageError("space was not built as a product; its factor structure is unknown")
    return space.factors


def swap_factors(ab: MPAction) -> MPAction:
    """Reindexes an action on X x Y as the same action on Y x X."""
    left, right = _factors_of(ab.space)
    n_left, n_right = left.size, right.size
    # atom (i, j) of X x Y becomes atom (j, i) of Y x X
    relabel = (np.arange(n_right)[None, :] * n_left + np.arange(n_left)[:, None]).reshape(-1)
    inverse = np.argsort(relabel)
    generators = [relabel[perm[inverse]] for perm in ab.generator_arrays]
    return MPAction.build(product_space(right, left), generators, ab.word_count)

# ---------------------------------------------------------------------------
# Rectangle partitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RectanglePartition:
    """
    Factor partitions (p left blocks, q right blocks) and an assignment of every
    cell (i, j) to one target label; block l is the union of its cells.
    """
    left: Partition
    right: Partition
    assignment: np.ndarray
    k: int

    def __post_init__(self) -> None:
        assignment = np.asarray(self.assignment, dtype=np.int64)
        if assignment.shape != (self.left.k, self.right.k):
            raise ActionUsageError(
                f"assignment shape {assignment.shape} != ({self.left.k}, {self.right.k}) factor blocks"
            )
        if assignment.size and (assignment.min() < 0 or assignment.max() >= self.k):
            raise ActionUsageError(f"assignment labels must lie in 0..{self.k - 1}")
        assignment.setflags(write=False)
        object.__setattr__(self, "assignment", assignment)

    @property
    def p(self) -> int:
        return self.left.k

    @property
    def q(self) -> int:
        return self.right.k

    def induced_partition(self) -> Partition:
        labels = self.assignment[self.left.labels[:, None], self.right.labels[None, :]].reshape(-1)
        return Partition(product_space(self.left.space, self.right.space), self.k, labels)


def _label_grid(partition: Partition) -> np.ndarray:
    left, right = _factors_of(partition.space)
    return partition.labels.reshape(left.size, right.size)


def exact_rectangle_decomposition(partition: Partition) -> RectanglePartition:
    """Singleton factor blocks; cell (i, j) keeps the label of atom (i, j), so the error is 0."""
    left, right = _factors_of(partition.space)
    return RectanglePartition(
        left=Partition.singletons(left),
        right=Partition.singletons(right),
        assignment=_label_grid(partition),
        k=partition.k,
    )


def minimal_rectangle_decomposition(partition: Partition) -> RectanglePartition:
    """Exact decomposition with the fewest factor blocks: classes of equal rows and equal columns."""
    left, right = _factors_of(partition.space)
    grid = _label_grid(partition)
    rows, row_first, row_class = np.unique(grid, axis=0, return_index=True, return_inverse=True)
    cols, col_first, col_class = np.unique(grid.T, axis=0, return_index=True, return_inverse=True)
    assignment = grid[np.asarray(row_first)[:, None], np.asarray(col_first)[None, :]]
    return RectanglePartition(
        left=Partition(left, rows.shape[0], np.asarray(row_class).reshape(-1)),
        right=Partition(right, cols.shape[0], np.asarray(col_class).reshape(-1)),
        assignment=assignment,
        k=partition.k,
    )


def rectangle_errors(rectangles: RectanglePartition, partition: Partition) -> np.ndarray:
    """mu(D_l symmetric-difference A_l) for every label l."""
    induced = rectangles.induced_partition()
    if induced.space != partition.space or induced.k != partition.k:
        raise ActionUsageError("rectangle partition and partition live on different spaces or block counts")
    weights = partition.space.as_array
    return np.array([
        weights[(induced.labels == label) != (partition.labels == label)].sum()
        for label in range(partition.k)
    ])


def rectangle_statistic_bound(c: MPAction, partition: Partition, rectangles: RectanglePartition,
                              t: int) -> Tuple[float, float]:
    """
    (actual, bound): L1 distance between the statistics of A and of its rectangle
    approximation D under *c*, and t * 2k * sum_l mu(A_l symmetric-difference D_l).
    """
    induced = rectangles.induced_partition()
    errors = rectangle_errors(rectangles, partition)
    c = c.with_words(t)
    actual = l1_distance(stat_point(c, partition, t), stat_point(c, induced, t))
    return actual, float(t * 2 * partition.k * errors.sum())

# ---------------------------------------------------------------------------
# Coarsening
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CoarseningResult:
    rectangles: RectanglePartition
    max_error: float
    total_error: float


class _CellMasses:
    """Label masses of every (left group, right group) cell of a fixed target partition."""

    def __init__(self, rectangles: RectanglePartition):
        self.target = rectangles.induced_partition()
        self.left_blocks = rectangles.left.labels
        self.right_blocks = rectangles.right.labels
        n_left, n_right = rectangles.left.space.size, rectangles.right.space.size
        weights = self.target.space.as_array.reshape(n_left, n_right)
        labels = self.target.labels.reshape(n_left, n_right)
        self.masses = np.stack([weights * (labels == label) for label in range(rectangles.k)])
        self.k = rectangles.k

    def cell_masses(self, left_groups: Sequence[Sequence[int]],
                    right_groups: Sequence[Sequence[int]]) -> np.ndarray:
        left_indicator = np.stack([np.isin(self.left_blocks, g) for g in left_groups], axis=1).astype(float)
        right_indicator = np.stack([np.isin(self.right_blocks, g) for g in right_groups], axis=1).astype(float)
        return np.einsum("xg,lxy,yh->ghl", left_indicator, self.masses, right_indicator)

    def misassigned(self, left_groups: Sequence[Sequence[int]], right_groups: Sequence[Sequence[int]]) -> float:
        cells = self.cell_masses(left_groups, right_groups)
        return float((cells.sum(axis=2) - cells.max(axis=2)).sum())

    def result(self, left_groups: Sequence[Sequence[int]], right_groups: Sequence[Sequence[int]],
               source: RectanglePartition) -> CoarseningResult:
        cells = self.cell_masses(left_groups, right_groups)
        assignment = cells.argmax(axis=2)
        left_labels = np.empty_like(self.left_blocks)
        for group_index, group in enumerate(left_groups):
            left_labels[np.isin(self.left_blocks, group)] = group_index
        right_labels = np.empty_like(self.right_blocks)
        for group_index, group in enumerate(right_groups):
            right_labels[np.isin(self.right_blocks, group)] = group_index
        rectangles = RectanglePartition(
            left=Partition(source.left.space, len(left_groups), left_labels),
            right=Partition(source.right.space, len(right_groups), right_labels),
            assignment=assignment,
            k=source.k,
        )
        errors = rectangle_errors(rectangles, self.target)
        return CoarseningResult(rectangles, float(errors.max()), float(errors.sum()))


def coarsen_rectangles(rectangles: RectanglePartition, p_max: int, q_max: int) -> CoarseningResult:
    """
    Greedily merges the pair of factor blocks whose merge misassigns the least
    mass until there are at most (p_max, q_max) blocks. Cells take their
    majority label. Errors are measured against the partition *rectangles* induces.
    """
    if p_max < 1 or q_max < 1:
        raise ActionUsageError("p_max and q_max must be at least 1")
    masses = _CellMasses(rectangles)
    left_groups: List[List[int]] = [[i] for i in range(rectangles.p)]
    right_groups: List[List[int]] = [[j] for j in range(rectangles.q)]

    while len(left_groups) > p_max or len(right_groups) > q_max:
        best: Optional[Tuple[float, int, int, int]] = None
        for side, groups, limit in ((0, left_groups, p_max), (1, right_groups, q_max)):
            if len(groups) <= limit:
                continue
            for first in range(len(groups)):
                for second in range(first + 1, len(groups)):
                    merged = [g for index, g in enumerate(groups) if index not in (first, second)]
                    merged.insert(first, groups[first] + groups[second])
                    cost = (masses.misassigned(merged, right_groups) if side == 0
                            else masses.misassigned(left_groups, merged))
                    candidate = (cost, side, first, second)
                    if best is None or candidate < best:
                        best = candidate
        assert best is not None
        _, side, first, second = best
        groups = left_groups if side == 0 else right_groups
        groups[first] = groups[first] + groups[second]
        del groups[second]

    return masses.result(left_groups, right_groups, rectangles)


def _set_partitions(items: Sequence[int], max_blocks: int) -> Iterator[List[List[int]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partial in _set_partitions(rest, max_blocks):
        for index in range(len(partial)):
            yield partial[:index] + [[first] + partial[index]] + partial[index + 1:]
        if len(partial) < max_blocks:
            yield [[first]] + partial


def exhaustive_coarsening(rectangles: RectanglePartition, p_max: int, q_max: int) -> CoarseningResult:
    """Best grouping of factor blocks into at most (p_max, q_max) groups; oracle for small grids."""
    if p_max < 1 or q_max < 1:
        raise ActionUsageError("p_max and q_max must be at least 1")
    if rectangles.p > 6 or rectangles.q > 6:
        raise ActionUsageError("exhaustive coarsening is limited to at most 6 x 6 factor blocks")
    masses = _CellMasses(rectangles)
    best: Optional[Tuple[float, List[List[int]], List[List[int]]]] = None
    right_options = list(_set_partitions(list(range(rectangles.q)), q_max))
    for left_groups in _set_partitions(list(range(rectangles.p)), p_max):
        for right_groups in right_options:
            cost = masses.misassigned(left_groups, right_groups)
            if best is None or cost < best[0] - 1e-15:
                best = (cost, left_groups, right_groups)
    assert best is not None
    return masses.result(best[1], best[2], rectangles)

# ---------------------------------------------------------------------------
# Transfer
# ---------------------------------------------------------------------------

def transfer_partition(rectangles: RectanglePartition, e_left: Partition, e_right: Partition) -> Partition:
    """Partition of the replacement product: atom (x, y) gets assignment[E1(x), E2(y)]."""
    if e_left.k != rectangles.p:
        raise ActionUsageError(f"left replacement has {e_left.k} blocks, expected {rectangles.p}")
    if e_right.k != rectangles.q:
        raise ActionUsageError(f"right replacement has {e_right.k} blocks, expected {rectangles.q}")
    labels = rectangles.assignment[e_left.labels[:, None], e_right.labels[None, :]].reshape(-1)
    return Partition(product_space(e_left.space, e_right.space), rectangles.k, labels)


@dataclass(frozen=True)
class ThreeSetReport:
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 1e-12


def three_set_check(space: WeightedSpace, s1: Iterable[int], s2: Iterable[int], s3: Iterable[int]) -> ThreeSetReport:
    """|nu(S1 cap S3) - nu(S2 cap S3)| against nu(S1 symmetric-difference S2)."""
    first, second, third = (set(int(x) for x in atoms) for atoms in (s1, s2, s3))
    lhs = abs(space.measure(sorted(first & third)) - space.measure(sorted(second & third)))
    return ThreeSetReport(lhs=lhs, rhs=space.measure(sorted(first ^ second)))

# ---------------------------------------------------------------------------
# Product lemma
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Lemma1Report:
    lhs: float
    tight_bound: float
    sharpened_bound: float
    two_delta_bound: float

    @property
    def verdict(self) -> bool:
        return (self.lhs <= self.tight_bound + 1e-12
                and self.tight_bound <= self.sharpened_bound + 1e-9
                and self.sharpened_bound < self.two_delta_bound + 1e-9
                and self.lhs < self.two_delta_bound)

    def to_dict(self) -> Dict[str, Any]:
        return {"lhs": self.lhs, "tight_bound": self.tight_bound, "sharpened_bound": self.sharpened_bound,
                "bound_2delta": self.two_delta_bound, "verdict": self.verdict}


def lemma1_check(a: Sequence[float], b: Sequence[float], c: Sequence[float], d: Sequence[float],
                 delta: float) -> Lemma1Report:
    """
    sum_{i,j} |a_i c_j - b_i d_j| against three bounds:
    tight  = sum(a) * sum|c - d| + sum(d) * sum|a - b|  (triangle inequality),
    sharpened = delta * sum(a) + sum|a - b|,
    2 delta.
    """
    av, bv, cv, dv = (np.asarray(x, dtype=np.float64) for x in (a, b, c, d))
    if av.shape != bv.shape or cv.shape != dv.shape or av.ndim != 1 or cv.ndim != 1:
        raise ActionUsageError("a, b must share one length and c, d another")
    for name, vector in (("a", av), ("b", bv), ("c", cv), ("d", dv)):
        if vector.size and (vector.min() < 0 or vector.max() > 1):
            raise ActionUsageError(f"entries of {name} must lie in [0, 1]")
    if abs(av.sum() - 1) > 1e-9 or abs(dv.sum() - 1) > 1e-9:
        raise ActionUsageError("sum(a) and sum(d) must equal 1")
    gap_ab = float(np.abs(av - bv).sum())
    gap_cd = float(np.abs(cv - dv).sum())
    if not (gap_ab < delta and gap_cd < delta):
        raise ActionUsageError(f"need sum|a-b| < delta and sum|c-d| < delta (got {gap_ab}, {gap_cd}, delta={delta})")

    lhs = float(np.abs(np.outer(av, cv) - np.outer(bv, dv)).sum())
    return Lemma1Report(
        lhs=lhs,
        tight_bound=float(av.sum() * gap_cd + dv.sum() * gap_ab),
        sharpened_bound=float(delta * av.sum() + gap_ab),
        two_delta_bound=2.0 * delta,
    )


def random_lemma1_instance(rng: np.random.Generator, delta: float,
                           max_size: int = 6) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Random a, d on the simplex and perturbations b, c with L1 gap strictly below delta."""
    def perturb(base: np.ndarray) -> np.ndarray:
        noise = rng.normal(size=base.size)
        noise *= delta * rng.uniform(0.0, 0.999) / max(np.abs(noise).sum(), 1e-300)
        return np.clip(base + noise, 0.0, 1.0)

    a = rng.dirichlet(np.ones(int(rng.integers(1, max_size + 1))))
    d = rng.dirichlet(np.ones(int(rng.integers(1, max_size + 1))))
    return a, perturb(a), perturb(d), d


@dataclass(frozen=True)
class Lemma1SuiteReport:
    delta: float
    count: int
    passed: int
    worst_ratio: float  # max lhs / (2 delta)
    worst_sharpened_ratio: float  # max lhs / sharpened bound

    @property
    def all_passed(self) -> bool:
        return self.passed == self.count

    def to_dict(self) -> Dict[str, Any]:
        return {"delta": self.delta, "count": self.count, "passed": self.passed,
                "worst_ratio_to_2delta": self.worst_ratio,
                "worst_ratio_to_sharpened": self.worst_sharpened_ratio, "all_passed": self.all_passed}


def lemma1_suite(count: int, delta: float, seed: int = 0) -> Lemma1SuiteReport:
    """Seeded random instances of the product lemma."""
    if count < 1 or not delta > 0:
        raise ActionUsageError("count must be positive and delta > 0")
    rng = task_rng(seed, 0x1E3A, int(round(delta * 1e12)))
    passed = 0
    worst = 0.0
    worst_sharpened = 0.0
    for _ in range(count):
        report = lemma1_check(*random_lemma1_instance(rng, delta), delta=delta)
        passed += int(report.verdict)
        worst = max(worst, report.lhs / report.two_delta_bound)
        if report.sharpened_bound > 0:
            worst_sharpened = max(worst_sharpened, report.lhs / report.sharpened_bound)
    add_run_log(3, "lemma1_suite", f"delta={delta}: {passed}/{count} instances passed")
    return Lemma1SuiteReport(delta, count, passed, worst, worst_sharpened)

# ---------------------------------------------------------------------------
# Continuity probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeWitness:
    index: int
    p: int
    q: int
    distance: float          # l1(M^A(a x b), M^B(a' x b'))
    factor_distance_a: float  # l1 of the left factor statistics to their nearest replacement
    factor_distance_b: float
    bound: float              # delta_a(t, p) + delta_b(t, q)
    tol: float

    @property
    def holds(self) -> bool:
        pointwise = self.factor_distance_a + self.factor_distance_b
        return self.distance <= pointwise + self.tol and pointwise <= self.bound + self.tol

    def to_dict(self) -> Dict[str, Any]:
        return {"index": self.index, "p": self.p, "q": self.q, "distance": self.distance,
                "factor_distance_a": self.factor_distance_a, "factor_distance_b": self.factor_distance_b,
                "bound": self.bound, "holds": self.holds}


@dataclass(frozen=True, eq=False)
class ProbeReport:
    t: int
    k: int
    delta_a: float
    delta_b: float
    delta_a_by_blocks: Dict[int, float]
    delta_b_by_blocks: Dict[int, float]
    witnesses: List[ProbeWitness]
    reverse: Optional[ProbeReport] = None

    @property
    def max_distance(self) -> float:
        return max(w.distance for w in self.witnesses)

    @property
    def all_hold(self) -> bool:
        return all(w.holds for w in self.witnesses) and (self.reverse is None or self.reverse.all_hold)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "t": self.t, "k": self.k, "mode": "exact",
            "delta_a": self.delta_a, "delta_b": self.delta_b,
            "delta_a_by_blocks": {str(p): v for p, v in sorted(self.delta_a_by_blocks.items())},
            "delta_b_by_blocks": {str(q): v for q, v in sorted(self.delta_b_by_blocks.items())},
            "max_distance": self.max_distance,
            "all_hold": self.all_hold,
            "witnesses": [w.to_dict() for w in self.witnesses],
            "reverse": self.reverse.to_dict() if self.reverse else None,
        }


def _exact_hausdorff(first: CSet, second: CSet) -> float:
    forward, _ = nearest_points(first.flat_points(), second.flat_points())
    backward, _ = nearest_points(second.flat_points(), first.flat_points())
    return float(max(forward.max(), backward.max()))


@dataclass
class _FactorSets:
    """Exact C_{t,p} of a factor and of its replacement, per block count p."""
    action: MPAction
    replacement: MPAction
    t: int
    budget: int
    own: Dict[int, CSet] = field(default_factory=dict)
    other: Dict[int, CSet] = field(default_factory=dict)
    deltas: Dict[int, float] = field(default_factory=dict)

    def ensure(self, blocks: int) -> None:
        if blocks in self.deltas:
            return
        self.own[blocks] = enumerate_cset(self.action, self.t, blocks, self.budget)
        self.other[blocks] = enumerate_cset(self.replacement, self.t, blocks, self.budget)
        self.deltas[blocks] = _exact_hausdorff(self.own[blocks], self.other[blocks])

    def nearest_replacement(self, factor_partition: Partition) -> Tuple[Partition, float]:
        point = stat_point(self.action, factor_partition, self.t).values.reshape(1, -1)
        candidates = self.other[factor_partition.k]
        distances, index = nearest_points(point, candidates.flat_points())
        labels = candidates.labelings[int(index[0])]
        return Partition(self.replacement.space, factor_partition.k, labels), float(distances[0])


def _probe_chunk(indices: List[int], labelings: np.ndarray, ab: MPAction, ab2: MPAction, t: int, k: int,
                 left: _FactorSets, right: _FactorSets, tol: float) -> List[ProbeWitness]:
    witnesses: List[ProbeWitness] = []
    for index in indices:
        partition = Partition(ab.space, k, labelings[index])
        rectangles = minimal_rectangle_decomposition(partition)
        e_left, distance_a = left.nearest_replacement(rectangles.left)
        e_right, distance_b = right.nearest_replacement(rectangles.right)
        transferred = transfer_partition(rectangles, e_left, e_right)
        distance = l1_distance(stat_point(ab, partition, t), stat_point(ab2, transferred, t))
        witnesses.append(ProbeWitness(
            index=index, p=rectangles.p, q=rectangles.q, distance=distance,
            factor_distance_a=distance_a, factor_distance_b=distance_b,
            bound=left.deltas[rectangles.p] + right.deltas[rectangles.q], tol=tol,
        ))
    return witnesses


def _probe_direction(a: MPAction, a2: MPAction, b: MPAction, b2: MPAction, t: int, k: int,
                     budget: int, tol: float, n_jobs: Optional[int]) -> ProbeReport:
    ab = product_action(a, b).with_words(t)
    ab2 = product_action(a2, b2).with_words(t)
    source = enumerate_cset(ab, t, k, budget)

    left = _FactorSets(a.with_words(t), a2.with_words(t), t, budget)
    right = _FactorSets(b.with_words(t), b2.with_words(t), t, budget)
    left.ensure(k)
    right.ensure(k)
    for labels in source.labelings:
        rectangles = minimal_rectangle_decomposition(Partition(ab.space, k, labels))
        left.ensure(rectangles.p)
        right.ensure(rectangles.q)

    indices = list(range(len(source)))
    chunk_count = max(1, min(len(indices), 8))
    chunks = [indices[i::chunk_count] for i in range(chunk_count)]
    results = run_tasks(_probe_chunk, [(chunk, source.labelings, ab, ab2, t, k, left, right, tol)
                                       for chunk in chunks], n_jobs)
    witnesses = sorted((w for group in results for w in group), key=lambda w: w.index)
    return ProbeReport(
        t=t, k=k, delta_a=left.deltas[k], delta_b=right.deltas[k],
        delta_a_by_blocks=dict(left.deltas), delta_b_by_blocks=dict(right.deltas),
        witnesses=witnesses,
    )


def product_continuity_probe(a: MPAction, a2: MPAction, b: MPAction, b2: MPAction, t: int, k: int,
                             cfg: Optional[SearchConfig] = None, symmetric: bool = False,
                             tol: float = 1e-9, n_jobs: Optional[int] = None) -> ProbeReport:
    """
    For every statistic point of a x b, builds the transferred partition of
    a' x b' (exact rectangle decomposition, nearest factor replacements,
    transfer) and checks its distance against delta_a + delta_b at the factor
    block counts. Everything is enumerated exactly; infeasible sizes are refused.
    """
    ranks = {a.rank, a2.rank, b.rank, b2.rank}
    if len(ranks) != 1:
        raise ActionUsageError(f"all four actions must share one rank, got {sorted(ranks)}")
    budget = (cfg or SearchConfig()).labeling_budget
    report = _probe_direction(a, a2, b, b2, t, k, budget, tol, n_jobs)
    if symmetric:
        reverse = _probe_direction(a2, a, b2, b, t, k, budget, tol, n_jobs)
        report = ProbeReport(report.t, report.k, report.delta_a, report.delta_b, report.delta_a_by_blocks,
                             report.delta_b_by_blocks, report.witnesses, reverse)
    add_run_log(3, "product_continuity_probe",
                f"t={t} k={k}: {len(report.witnesses)} witnesses, max distance {report.max_distance!r}, "
                f"all hold: {report.all_hold}")
    return report
