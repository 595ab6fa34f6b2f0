from fractions import Fraction

import numpy as np
import pytest

from src.action_generators import (
    FiniteGroupTable, HarnessSpec, bernoulli_shift, conjugate, cyclic, mixture, named, one_point_action,
    random_action, random_weight_preserving_permutation, sequence_harness,
)
from src.action_models import ActionUsageError, BudgetExceededError, MPAction, Partition, WeightedSpace, validate_action
from src.cset_search import directed_hausdorff, enumerate_cset
from src.fine_metric import TruncationParams, fine_distance
from src.partition_statistics import l1_distance, stat_point

# ---------------------------------------------------------------------------
# Groups
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("name, order, rank", [("z2", 2, 1), ("z3", 3, 1), ("z4", 4, 1), ("s3", 6, 2)])
def test_named_groups_validate(name, order, rank):
    group = named(name)
    assert group.order == order
    assert len(group.generators) == rank
    assert group.validation_issues() == []


def test_s3_is_not_abelian():
    table = np.asarray(named("s3").table)
    assert not np.array_equal(table, table.T)


def test_validation_reports_problems():
    not_associative = FiniteGroupTable("bad", ((0, 1, 2), (1, 0, 0), (2, 0, 1)), (1,))
    assert "multiplication is not associative" in not_associative.validation_issues()
    not_generated = FiniteGroupTable("z4", cyclic(4).table, (2,))
    assert "generators do not generate the group" in not_generated.validation_issues()
    with pytest.raises(ActionUsageError):
        FiniteGroupTable.build("z4", cyclic(4).table, [2])
    with pytest.raises(ActionUsageError):
        named("z5")


def test_inverse_and_identity():
    group = cyclic(4)
    assert group.identity == 0
    assert group.inverse(1) == 3

# ---------------------------------------------------------------------------
# Bernoulli shifts
# ---------------------------------------------------------------------------

def test_z2_shift_swaps_non_constant_functions():
    shift = bernoulli_shift(named("z2"), [0.5, 0.5])
    assert shift.space.weights == (0.25, 0.25, 0.25, 0.25)
    # atoms (0,0), (0,1), (1,0), (1,1)
    assert shift.generator_perms == ((0, 2, 1, 3),)
    assert validate_action(shift) == []


def test_trivial_group_shift_is_the_base_space():
    shift = bernoulli_shift(cyclic(1), [Fraction(1, 3), Fraction(2, 3)])
    assert shift.space.weights == (Fraction(1, 3), Fraction(2, 3))
    assert shift.generator_perms == ((0, 1),)


@pytest.mark.parametrize("name, weights", [("z3", [0.2, 0.8]), ("z4", [0.5, 0.25, 0.25]), ("s3", [0.3, 0.7])])
def test_shifts_preserve_weights(name, weights):
    shift = bernoulli_shift(named(name), weights)
    assert shift.size == len(weights) ** named(name).order
    assert validate_action(shift.with_words(5)) == []


def test_shift_budget_refusal():
    with pytest.raises(BudgetExceededError) as info:
        bernoulli_shift(named("z4"), [Fraction(1, 3)] * 3, atom_budget=80)
    assert "3^4 = 81" in str(info.value)
    with pytest.raises(ActionUsageError):
        bernoulli_shift(named("z2"), [1.0])

# ---------------------------------------------------------------------------
# Mixtures and conjugations
# ---------------------------------------------------------------------------

def test_mixture_weights_and_generators(swap2, cycle3):
    mixed = mixture(swap2, cycle3, 0.25)
    assert mixed.size == 5
    assert sum(mixed.space.weights) == pytest.approx(1.0)
    assert mixed.generator_perms == ((1, 0, 3, 4, 2),)
    assert validate_action(mixed) == []
    with pytest.raises(ActionUsageError):
        mixture(swap2, cycle3, 1.0)


def test_mixture_mass_bound(rng):
    t = 3
    for _ in range(50):
        a = random_action(rng, int(rng.integers(1, 4)), 1, uniform=False).with_words(t)
        c = random_action(rng, int(rng.integers(1, 4)), 1).with_words(t)
        lam = float(rng.uniform(0.01, 0.5))
        mixed = mixture(a, c, lam).with_words(t)
        labels = rng.integers(2, size=a.size)
        block = int(rng.integers(2))
        mixed_labels = np.concatenate([labels, np.full(c.size, block)])
        distance = l1_distance(stat_point(a, Partition(a.space, 2, labels), t),
                               stat_point(mixed, Partition(mixed.space, 2, mixed_labels), t))
        assert distance <= 2 * t * lam + 1e-12


def test_action_is_contained_in_its_self_mixture(rng):
    for _ in range(10):
        a = random_action(rng, int(rng.integers(1, 4)), 1).with_words(2)
        mixed = mixture(a, a, Fraction(1, 2))
        result = directed_hausdorff(enumerate_cset(a, 2, 2), mixed.with_words(2), mode="exact")
        assert result.value <= 1e-12


def test_conjugation_identities(cycle3):
    assert conjugate(cycle3, [0, 1, 2]).generator_perms == cycle3.generator_perms
    sigma = np.array([2, 0, 1])
    inverse = np.argsort(sigma)
    assert conjugate(conjugate(cycle3, sigma), inverse).generator_perms == cycle3.generator_perms


def test_conjugation_must_preserve_weights():
    a = MPAction.build(WeightedSpace((0.25, 0.75)), [[0, 1]])
    with pytest.raises(ActionUsageError):
        conjugate(a, [1, 0])


def test_conjugates_are_at_distance_zero(rng):
    for _ in range(5):
        a = random_action(rng, 3, 1, uniform=False)
        b = conjugate(a, random_weight_preserving_permutation(a.space, rng))
        assert fine_distance(a, b, TruncationParams(T=2, K=3), "exact").value <= 1e-12


def test_random_weight_preserving_permutation_respects_classes(rng):
    space = WeightedSpace((0.1, 0.1, 0.4, 0.4))
    for _ in range(20):
        perm = random_weight_preserving_permutation(space, rng)
        assert sorted(perm[:2].tolist()) == [0, 1]
        assert sorted(perm[2:].tolist()) == [2, 3]

# ---------------------------------------------------------------------------
# Sequence harness
# ---------------------------------------------------------------------------

def test_constant_sequence_is_all_zero(swap2, identity2):
    rows = sequence_harness(HarnessSpec("constant", swap2, identity2, n_max=3, T=2, K=2), n_jobs=1)
    assert [row.n for row in rows] == [1, 2, 3]
    assert all(row.d_a == row.d_b == row.d_prod == 0.0 for row in rows)


def test_conjugate_sequence_is_all_zero(cycle3, swap2):
    rows = sequence_harness(HarnessSpec("conjugate", cycle3, swap2, n_max=3, T=2, K=2, seed=5), n_jobs=1)
    assert all(max(row.d_a, row.d_b, row.d_prod) <= 1e-12 for row in rows)


def test_mixture_sequence_respects_the_product_bound(swap2, identity2):
    spec = HarnessSpec("mixture", swap2, identity2, n_max=4, T=2, K=2)
    rows = sequence_harness(spec, n_jobs=1)
    assert [row.n for row in rows] == [2, 3, 4]
    assert [row.lam for row in rows] == [Fraction(1, 2), Fraction(1, 3), Fraction(1, 4)]
    assert all(row.holds for row in rows)
    assert rows == sequence_harness(spec, n_jobs=1)


def test_harness_spec_validation(swap2):
    rank_two = MPAction.build(swap2.space, [[1, 0], [0, 1]])
    with pytest.raises(ActionUsageError):
        HarnessSpec("mixture", swap2, rank_two, n_max=2, T=2, K=2)
    with pytest.raises(ActionUsageError):
        HarnessSpec("drift", swap2, swap2, n_max=2, T=2, K=2)  # type: ignore[arg-type]


def test_one_point_action():
    a = one_point_action(2)
    assert a.size == 1 and a.rank == 2
