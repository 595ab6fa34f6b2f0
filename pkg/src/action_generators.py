"""
Constructors for the action families used in experiments: finite-group
Bernoulli shifts, mixtures, conjugations, seeded random actions, and the
sequence harness that tabulates fine distances of factors and products.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from .action_models import (
    ActionUsageError, BudgetExceededError, MPAction, Weight, WeightedSpace, _inverse_permutation,
    _is_permutation,
)
from .fine_metric import TruncationParams, fine_distance
from .parallel_tasks import run_tasks, task_rng
from .product_transfer import product_action
from .storage.run_logging import add_run_log
from .weakeq_config import ATOM_BUDGET

MAX_GROUP_ORDER = 64

# ---------------------------------------------------------------------------
# Finite groups
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteGroupTable:
    """
    Multiplication table of a finite group (table[g][h] = g h) with the
    elements that play the free generators g1, g2, ...
    """
    name: str
    table: Tuple[Tuple[int, ...], ...]
    generators: Tuple[int, ...]

    @property
    def order(self) -> int:
        return len(self.table)

    def validation_issues(self) -> List[str]:
        """Exhaustive group-axiom check; an empty list means the table is a group."""
        n = self.order
        if not 1 <= n <= MAX_GROUP_ORDER:
            return [f"order {n} outside 1..{MAX_GROUP_ORDER}"]
        table = np.asarray(self.table, dtype=np.int64)
        if table.shape != (n, n) or table.min() < 0 or table.max() >= n:
            return [f"table must be {n} x {n} with entries in 0..{n - 1}"]

        issues: List[str] = []
        left = table[table[:, :, None], np.arange(n)[None, None, :]]   # (g h) x
        right = table[np.arange(n)[:, None, None], table[None, :, :]]  # g (h x)
        if not np.array_equal(left, right):
            issues.append("multiplication is not associative")

        identities = [e for e in range(n)
                      if np.array_equal(table[e], np.arange(n)) and np.array_equal(table[:, e], np.arange(n))]
        if not identities:
            issues.append("no identity element")
        else:
            identity = identities[0]
            for g in range(n):
                if not (np.any(table[g] == identity) and np.any(table[:, g] == identity)):
                    issues.append(f"element {g} has no inverse")
                    break

        if not self.generators:
            issues.append("at least one generator is required")
        elif any(not 0 <= g < n for g in self.generators):
            issues.append("generator outside the group")
        elif not issues and len(self._closure()) != n:
            issues.append("generators do not generate the group")
        return issues

    def _closure(self) -> set:
        reached = {self.identity}
        frontier = [self.identity]
        while frontier:
            element = frontier.pop()
            for g in self.generators:
                product = self.table[g][element]
                if product not in reached:
                    reached.add(product)
                    frontier.append(product)
        return reached

    @property
    def identity(self) -> int:
        for e in range(self.order):
            if all(self.table[e][x] == x for x in range(self.order)):
                return e
        raise ActionUsageError(f"group {self.name} has no identity")

    def inverse(self, g: int) -> int:
        return self.table[g].index(self.identity)

    @classmethod
    def build(cls, name: str, table: Sequence[Sequence[int]], generators: Sequence[int]) -> FiniteGroupTable:
        group = cls(name, tuple(tuple(int(x) for x in row) for row in table), tuple(int(g) for g in generators))
        issues = group.validation_issues()
        if issues:
            raise ActionUsageError(f"{name}: " + "; ".join(issues))
        return group


def cyclic(n: int) -> FiniteGroupTable:
    """Z/n with generator 1."""
    if n < 1:
        raise ActionUsageError("cyclic group order must be at least 1")
    return FiniteGroupTable.build(f"z{n}", [[(g + h) % n for h in range(n)] for g in range(n)], [1 % n])


def symmetric3() -> FiniteGroupTable:
    """S3 on permutations of (0, 1, 2); generators are a transposition and a 3-cycle."""
    elements = list(itertools.permutations(range(3)))
    index = {p: i for i, p in enumerate(elements)}
    table = [[index[tuple(p[q[i]] for i in range(3))] for q in elements] for p in elements]
    return FiniteGroupTable.build("s3", table, [index[(1, 0, 2)], index[(1, 2, 0)]])


def named(name: str) -> FiniteGroupTable:
    groups = {"z2": lambda: cyclic(2), "z3": lambda: cyclic(3), "z4": lambda: cyclic(4), "s3": symmetric3}
    if name not in groups:
        raise ActionUsageError(f"unknown group '{name}' (choose from {', '.join(sorted(groups))})")
    return groups[name]()

# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------

def bernoulli_shift(group: FiniteGroupTable, base_weights: Sequence[Weight],
                    atom_budget: Optional[int] = None) -> MPAction:
    """
    Translation action of *group* on functions f: G -> {0..m-1} with product weights.
    Atoms are listed in itertools.product order; generator g acts by (g f)(h) = f(g^-1 h).
    """
    m = len(base_weights)
    if m < 2:
        raise ActionUsageError("a Bernoulli base needs at least 2 points")
    base = WeightedSpace(tuple(base_weights))
    limit = ATOM_BUDGET if atom_budget is None else atom_budget
    n = group.order
    atom_count = m ** n
    if atom_count > limit:
        add_run_log(1, "bernoulli_shift", f"refused: m^|G| = {m}^{n} = {atom_count} > {limit}")
        raise BudgetExceededError(f"m^|G| = {m}^{n} = {atom_count} exceeds atom budget {limit}")

    functions = np.array(list(itertools.product(range(m), repeat=n)), dtype=np.int64).reshape(atom_count, n)
    radix = np.array([m ** (n - 1 - h) for h in range(n)], dtype=np.int64)
    weights: List[Weight] = []
    for row in functions.tolist():
        weight: Weight = Fraction(1) if base.rational else 1.0
        for value in row:
            weight = weight * base.weights[value]
        weights.append(weight)

    table = np.asarray(group.table, dtype=np.int64)
    generators = []
    for g in group.generators:
        # (g f)(h) = f(g^-1 h)
        positions = table[group.inverse(g)]
        generators.append(functions[:, positions] @ radix)
    return MPAction.build(WeightedSpace(tuple(weights)), generators)


def mixture(a: MPAction, c: MPAction, lam: Weight) -> MPAction:
    """Disjoint union: a-atoms weighted by (1 - lam), c-atoms by lam, generators blockwise."""
    if a.rank != c.rank:
        raise ActionUsageError(f"actions have different ranks ({a.rank} vs {c.rank})")
    if not 0 < lam < 1:
        raise ActionUsageError(f"mixture weight must lie in (0, 1), got {lam}")
    if not isinstance(lam, Fraction):
        lam = float(lam)
    weights = tuple((1 - lam) * w for w in a.space.weights) + tuple(lam * w for w in c.space.weights)
    offset = a.size
    generators = [np.concatenate([perm_a, perm_c + offset])
                  for perm_a, perm_c in zip(a.generator_arrays, c.generator_arrays)]
    return MPAction.build(WeightedSpace(weights), generators, max(a.word_count, c.word_count))


def conjugate(a: MPAction, sigma: Sequence[int]) -> MPAction:
    """Action with generator images sigma . pi . sigma^-1 (sigma must preserve weights)."""
    perm = np.asarray(sigma, dtype=np.int64)
    if not _is_permutation(perm, a.size):
        raise ActionUsageError(f"sigma is not a permutation of {a.size} atoms")
    for x in range(a.size):
        if not a.space.same_weight(x, int(perm[x])):
            raise ActionUsageError(f"sigma does not preserve weights at atom {x} -> {int(perm[x])}")
    inverse = _inverse_permutation(perm)
    generators = [perm[g[inverse]] for g in a.generator_arrays]
    return MPAction.build(a.space, generators, a.word_count)


def _weight_classes(space: WeightedSpace) -> List[np.ndarray]:
    if space.rational:
        keys: List[Any] = list(space.weights)
    else:
        keys = [round(float(w) / 1e-12) for w in space.weights]
    classes: Dict[Any, List[int]] = {}
    for atom, key in enumerate(keys):
        classes.setdefault(key, []).append(atom)
    return [np.asarray(atoms, dtype=np.int64) for atoms in classes.values()]


def random_weight_preserving_permutation(space: WeightedSpace, rng: np.random.Generator) -> np.ndarray:
    """Uniform permutation within each class of equal-weight atoms."""
    perm = np.arange(space.size, dtype=np.int64)
    for atoms in _weight_classes(space):
        perm[atoms] = rng.permutation(atoms)
    return perm


def random_action(rng: np.random.Generator, size: int, rank: int = 1, uniform: bool = True) -> MPAction:
    """
    Seeded random action on *size* atoms. Non-uniform spaces group atoms into
    random equal-weight classes so generators can still move atoms.
    """
    if size < 1 or rank < 1:
        raise ActionUsageError("size and rank must be at least 1")
    if uniform:
        space = WeightedSpace.uniform(size)
    else:
        classes = rng.integers(int(rng.integers(1, size + 1)), size=size)
        raw = rng.uniform(0.5, 1.5, size=size)[classes]
        space = WeightedSpace(tuple(float(w) for w in raw / raw.sum()))
    generators = [random_weight_preserving_permutation(space, rng) for _ in range(rank)]
    return MPAction.build(space, generators)


def one_point_action(rank: int = 1) -> MPAction:
    return MPAction.build(WeightedSpace((1.0,)), [[0] for _ in range(rank)])

# ---------------------------------------------------------------------------
# Sequence harness
# ---------------------------------------------------------------------------

SequenceFamily = Literal["constant", "conjugate", "mixture"]
HARNESS_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class HarnessSpec:
    """
    Sequence a_n, b_n of the chosen family next to the limits a, b.
    Mixture rows start at n = 2 so that lambda_n = 1/n lies in (0, 1).
    """
    family: SequenceFamily
    a: MPAction
    b: MPAction
    n_max: int
    T: int
    K: int
    seed: int = 0
    partner_a: Optional[MPAction] = None
    partner_b: Optional[MPAction] = None

    def __post_init__(self) -> None:
        if self.family not in ("constant", "conjugate", "mixture"):
            raise ActionUsageError(f"unknown family '{self.family}'")
        if self.n_max < 1 or self.T < 1 or self.K < 1:
            raise ActionUsageError("n_max, T and K must be at least 1")
        if self.a.rank != self.b.rank:
            raise ActionUsageError(f"actions have different ranks ({self.a.rank} vs {self.b.rank})")

    def indices(self) -> List[int]:
        first = 2 if self.family == "mixture" else 1
        return list(range(first, max(first, self.n_max) + 1))

    def member(self, n: int) -> Tuple[MPAction, MPAction, Optional[Fraction]]:
        if self.family == "constant":
            return self.a, self.b, None
        if self.family == "conjugate":
            rng = task_rng(self.seed, 0xC0A7, n)
            return (conjugate(self.a, random_weight_preserving_permutation(self.a.space, rng)),
                    conjugate(self.b, random_weight_preserving_permutation(self.b.space, rng)), None)
        lam = Fraction(1, n)
        partner_a = self.partner_a or one_point_action(self.a.rank)
        partner_b = self.partner_b or one_point_action(self.b.rank)
        return mixture(self.a, partner_a, lam), mixture(self.b, partner_b, lam), lam


@dataclass(frozen=True)
class HarnessRow:
    n: int
    lam: Optional[Fraction]
    d_a: float
    d_b: float
    d_prod: float

    @property
    def bound(self) -> float:
        return self.d_a + self.d_b

    @property
    def holds(self) -> bool:
        return self.d_prod <= self.bound + HARNESS_TOLERANCE


def _harness_row(spec: HarnessSpec, n: int) -> HarnessRow:
    a_n, b_n, lam = spec.member(n)
    # factor sups cover every block count a minimal rectangle decomposition can use
    k_a = max(spec.K, spec.a.size, a_n.size)
    k_b = max(spec.K, spec.b.size, b_n.size)
    d_a = fine_distance(a_n, spec.a, TruncationParams(spec.T, k_a), "exact", n_jobs=1).value
    d_b = fine_distance(b_n, spec.b, TruncationParams(spec.T, k_b), "exact", n_jobs=1).value
    d_prod = fine_distance(product_action(a_n, b_n), product_action(spec.a, spec.b),
                           TruncationParams(spec.T, spec.K), "exact", n_jobs=1).value
    return HarnessRow(n=n, lam=lam, d_a=d_a, d_b=d_b, d_prod=d_prod)


def sequence_harness(spec: HarnessSpec, n_jobs: Optional[int] = None) -> List[HarnessRow]:
    """Rows are computed independently in exact mode and returned ordered by n."""
    rows = run_tasks(_harness_row, [(spec, n) for n in spec.indices()], n_jobs)
    rows = sorted(rows, key=lambda row: row.n)
    failing = [row.n for row in rows if not row.holds]
    add_run_log(3 if not failing else 1, "sequence_harness",
                f"{spec.family}: {len(rows)} rows, product bound violated at n={failing}" if failing
                else f"{spec.family}: {len(rows)} rows, product bound holds on every row")
    return rows
