"""
Finite models for measure-preserving actions: weighted atom spaces, the
breadth-first enumeration of the free group, actions given by weight-preserving
permutations, and labeled partitions.
"""
from __future__ import annotations  # Allows forward references for type hints

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .weakeq_config import WEIGHT_TOLERANCE

Weight = Union[float, Fraction]
Word = Tuple[int, ...]  # letters: +i is g_i, -i is g_i^-1 (i is 1-based)

# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class ActionUsageError(ValueError):
    """Raised when an operation is called outside its domain."""
    pass


class BudgetExceededError(RuntimeError):
    """Raised when an exhaustive computation would exceed a configured budget."""
    pass

# ---------------------------------------------------------------------------
# Weighted spaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightedSpace:
    """
    Finite probability space: atoms 0..N-1 with strictly positive weights summing to 1.
    Spaces built by ``product_space`` remember their two factors (row-major atom order).
    """
    weights: Tuple[Weight, ...]
    factors: Optional[Tuple[WeightedSpace, WeightedSpace]] = None

    def __post_init__(self) -> None:
        if not self.weights:
            raise ActionUsageError("a weighted space needs at least one atom")
        for index, w in enumerate(self.weights):
            if not w > 0:
                raise ActionUsageError(f"atom {index} has non-positive weight {w}")
        total = sum(self.weights)
        if self.rational:
            if total != 1:
                raise ActionUsageError(f"weights sum to {total}, not exactly 1")
        elif abs(float(total) - 1.0) > WEIGHT_TOLERANCE:
            raise ActionUsageError(f"weights sum to {float(total)!r}, not 1 within {WEIGHT_TOLERANCE}")

    @classmethod
    def uniform(cls, size: int, rational: bool = False) -> WeightedSpace:
        if size < 1:
            raise ActionUsageError("a weighted space needs at least one atom")
        weight: Weight = Fraction(1, size) if rational else 1.0 / size
        return cls(tuple(weight for _ in range(size)))

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def rational(self) -> bool:
        return all(isinstance(w, Fraction) for w in self.weights)

    @cached_property
    def as_array(self) -> np.ndarray:
        array = np.array([float(w) for w in self.weights], dtype=np.float64)
        array.setflags(write=False)
        return array

    def measure(self, atoms: Sequence[int]) -> float:
        """Total weight of a set of atoms (duplicates counted once)."""
        unique = np.unique(np.asarray(atoms, dtype=np.int64))
        return float(self.as_array[unique].sum()) if unique.size else 0.0

    def same_weight(self, x: int, y: int) -> bool:
        wx, wy = self.weights[x], self.weights[y]
        if isinstance(wx, Fraction) and isinstance(wy, Fraction):
            return wx == wy
        return abs(float(wx) - float(wy)) <= WEIGHT_TOLERANCE


def product_space(left: WeightedSpace, right: WeightedSpace) -> WeightedSpace:
    """Product measure on pairs (i, j), atom index i * N_right + j."""
    weights = tuple(wl * wr for wl in left.weights for wr in right.weights)
    return WeightedSpace(weights, factors=(left, right))

# ---------------------------------------------------------------------------
# Free group enumeration
# ---------------------------------------------------------------------------

def _letters(rank: int) -> List[int]:
    """Letter order g1, g1^-1, g2, g2^-1, ..."""
    letters: List[int] = []
    for generator in range(1, rank + 1):
        letters.extend((generator, -generator))
    return letters


def format_word(word: Word) -> str:
    if not word:
        return "e"
    return "".join(f"g{abs(x)}" if x > 0 else f"g{abs(x)}^-1" for x in word)


@dataclass(frozen=True)
class GroupEnumeration:
    """First words of the free group F_rank in breadth-first, lexicographic order."""
    rank: int
    words: Tuple[Word, ...]

    def __len__(self) -> int:
        return len(self.words)

    def index_of(self, word: Word) -> int:
        try:
            return self.words.index(tuple(word))
        except ValueError:
            raise ActionUsageError(f"word {format_word(tuple(word))} is not among the first {len(self.words)} words")

    def labels(self) -> List[str]:
        return [format_word(w) for w in self.words]


def enumerate_words(rank: int, t: int) -> GroupEnumeration:
    """
    Returns the first *t* reduced words over g_1..g_rank and their inverses,
    identity first, then by length, then lexicographically in the letter order
    g1 < g1^-1 < g2 < g2^-1 < ...
    """
    if rank < 1:
        raise ActionUsageError(f"rank must be at least 1, got {rank}")
    if t < 1:
        raise ActionUsageError(f"t must be at least 1, got {t}")

    letters = _letters(rank)
    words: List[Word] = [()]
    layer: List[Word] = [()]
    while len(words) < t:
        next_layer: List[Word] = []
        for word in layer:
            for letter in letters:
                if word and word[-1] == -letter:
                    continue  # not reduced
                next_layer.append(word + (letter,))
                if len(words) + len(next_layer) >= t:
                    break
            if len(words) + len(next_layer) >= t:
                break
        words.extend(next_layer)
        layer = next_layer
    return GroupEnumeration(rank=rank, words=tuple(words[:t]))

# ---------------------------------------------------------------------------
# Actions
# ---------------------------------------------------------------------------

def _inverse_permutation(perm: np.ndarray) -> np.ndarray:
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(perm.size, dtype=perm.dtype)
    return inverse


def _is_permutation(perm: np.ndarray, size: int) -> bool:
    return perm.shape == (size,) and np.array_equal(np.sort(perm), np.arange(size))


def compose_word(generator_perms: Sequence[np.ndarray], word: Word, size: int) -> np.ndarray:
    """Permutation of g_{x1} ... g_{xL} computed letter by letter (rightmost letter acts first)."""
    current = np.arange(size, dtype=np.int64)
    for letter in word:
        perm = generator_perms[abs(letter) - 1]
        current = current[perm if letter > 0 else _inverse_permutation(perm)]
    return current


@dataclass(frozen=True, eq=False)
class MPAction:
    """
    Action of the free group F_rank on a weighted space, given by one
    permutation per generator, plus the cached permutations of the first
    enumerated words (row s of ``word_perms`` is gamma_s acting on atoms).
    """
    space: WeightedSpace
    generator_perms: Tuple[Tuple[int, ...], ...]
    enumeration: GroupEnumeration
    word_perms: np.ndarray

    @classmethod
    def build(cls, space: WeightedSpace, generator_perms: Sequence[Sequence[int]], t: int = 1) -> MPAction:
        """Builds an action and its word cache for the first *t* words. Permutations are 0-based."""
        if not generator_perms:
            raise ActionUsageError("an action needs at least one generator")
        perms = [np.asarray(p, dtype=np.int64) for p in generator_perms]
        for index, perm in enumerate(perms):
            if not _is_permutation(perm, space.size):
                raise ActionUsageError(f"generator g{index + 1} is not a permutation of {space.size} atoms")

        enumeration = enumerate_words(len(perms), max(1, t))
        inverses = [_inverse_permutation(p) for p in perms]
        position: Dict[Word, int] = {}
        cache = np.empty((len(enumeration), space.size), dtype=np.int64)
        for s, word in enumerate(enumeration.words):
            position[word] = s
            if not word:
                cache[s] = np.arange(space.size)
                continue
            letter = word[-1]
            last = perms[letter - 1] if letter > 0 else inverses[-letter - 1]
            cache[s] = cache[position[word[:-1]]][last]
        cache.setflags(write=False)
        return cls(
            space=space,
            generator_perms=tuple(tuple(int(x) for x in p) for p in perms),
            enumeration=enumeration,
            word_perms=cache,
        )

    @property
    def rank(self) -> int:
        return len(self.generator_perms)

    @property
    def size(self) -> int:
        return self.space.size

    @property
    def word_count(self) -> int:
        return len(self.enumeration)

    @cached_property
    def generator_arrays(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.asarray(p, dtype=np.int64) for p in self.generator_perms)

    def with_words(self, t: int) -> MPAction:
        """Returns this action with a word cache of at least *t* words."""
        if t <= self.word_count:
            return self
        return MPAction.build(self.space, self.generator_perms, t)


def act(a: MPAction, s: int, atom: int) -> int:
    """Image of *atom* under gamma_s^a."""
    if not 0 <= s < a.word_count:
        raise ActionUsageError(f"word index {s} outside the {a.word_count} cached words")
    if not 0 <= atom < a.size:
        raise ActionUsageError(f"atom {atom} outside 0..{a.size - 1}")
    return int(a.word_perms[s, atom])


def validate_action(a: MPAction) -> List[str]:
    """Reports every violated invariant of *a*; an empty list means the action is valid."""
    issues: List[str] = []
    size = a.space.size
    perms: List[Optional[np.ndarray]] = []

    for index, raw in enumerate(a.generator_perms):
        perm = np.asarray(raw, dtype=np.int64)
        name = f"g{index + 1}"
        if not _is_permutation(perm, size):
            issues.append(f"{name}: not a bijection of {size} atoms")
            perms.append(None)
            continue
        perms.append(perm)
        for x in range(size):
            if not a.space.same_weight(x, int(perm[x])):
                issues.append(
                    f"{name}: weight not preserved at atom {x} -> {int(perm[x])} "
                    f"({a.space.weights[x]} vs {a.space.weights[int(perm[x])]})"
                )
                break

    if a.enumeration.rank != len(a.generator_perms):
        issues.append(f"enumeration rank {a.enumeration.rank} != {len(a.generator_perms)} generators")
        return issues
    if a.word_perms.shape != (len(a.enumeration), size):
        issues.append(f"cache mismatch: word cache shape {a.word_perms.shape} != {(len(a.enumeration), size)}")
        return issues
    if any(p is None for p in perms):
        return issues

    valid_perms = [p for p in perms if p is not None]
    for s, word in enumerate(a.enumeration.words):
        expected = compose_word(valid_perms, word, size)
        if not np.array_equal(a.word_perms[s], expected):
            issues.append(f"cache mismatch: word {s} ({format_word(word)}) differs from composed generators")
    return issues

# ---------------------------------------------------------------------------
# Partitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Partition:
    """Assignment of every atom to one of k labeled blocks (labels 0..k-1; empty blocks allowed)."""
    space: WeightedSpace
    k: int
    labels: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=np.int64)
        if self.k < 1:
            raise ActionUsageError(f"a partition needs k >= 1 blocks, got {self.k}")
        if labels.shape != (self.space.size,):
            raise ActionUsageError(f"expected {self.space.size} labels, got shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            raise ActionUsageError(f"labels must lie in 0..{self.k - 1}")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def singletons(cls, space: WeightedSpace) -> Partition:
        return cls(space, space.size, np.arange(space.size))

    @classmethod
    def trivial(cls, space: WeightedSpace, k: int = 1) -> Partition:
        return cls(space, k, np.zeros(space.size, dtype=np.int64))

    def blocks(self) -> List[np.ndarray]:
        return [np.flatnonzero(self.labels == label) for label in range(self.k)]

    def block_weights(self) -> np.ndarray:
        return np.bincount(self.labels, weights=self.space.as_array, minlength=self.k)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Partition):
            return NotImplemented
        return self.space == other.space and self.k == other.k and np.array_equal(self.labels, other.labels)

    __hash__ = None  # type: ignore[assignment]
