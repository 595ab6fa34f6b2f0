import numpy as np
import pytest

from src.action_generators import random_action
from src.action_models import ActionUsageError, BudgetExceededError, MPAction, Partition, WeightedSpace
from src.cset_search import (
    CSet, SearchConfig, closest_point, cset_for, directed_hausdorff, enumerate_cset, hausdorff, labeling_count,
    nearest_points, orbit_labels, sample_cset,
)
from src.partition_statistics import stat_point


def _point_set(cset, decimals=12):
    return {tuple(np.round(p.reshape(-1), decimals)) for p in cset.points}


def test_swap_cset_has_three_points(swap2):
    cset = enumerate_cset(swap2, 2, 2)
    assert cset.exact
    assert len(cset) == 3
    assert cset.points.shape == (3, 2, 2, 2)
    assert cset.provenance["labelings"] == 4


def test_worked_hausdorff_identity_vs_swap(identity2, swap2):
    result = hausdorff(identity2, swap2, 2, 2)
    assert result.exact
    assert result.value == 2.0
    assert hausdorff(identity2, swap2, 1, 2).value == 0.0
    assert hausdorff(identity2, swap2, 2, 1).value == 0.0


def test_budget_refusal_names_the_bound(swap2):
    with pytest.raises(BudgetExceededError) as info:
        enumerate_cset(swap2, 1, 2, budget=3)
    assert "2^2 = 4" in str(info.value)
    assert "3" in str(info.value)
    with pytest.raises(BudgetExceededError):
        cset_for(swap2, 1, 2, SearchConfig(labeling_budget=3), mode="exact")


def test_auto_mode_falls_back_to_sampling(cycle3):
    cfg = SearchConfig(labeling_budget=2, sample_count=16)
    cset = cset_for(cycle3, 2, 2, cfg, mode="auto")
    assert not cset.exact
    assert cset.provenance["kind"] == "search"


def test_prefix_matches_direct_enumeration(cycle3):
    full = enumerate_cset(cycle3, 4, 2)
    for t in range(1, 5):
        assert _point_set(full.prefix(t)) == _point_set(enumerate_cset(cycle3, t, 2))
    with pytest.raises(ActionUsageError):
        full.prefix(5)


def test_sampled_set_is_inside_the_exact_set(cycle3):
    exact = _point_set(enumerate_cset(cycle3, 3, 2))
    sampled = sample_cset(cycle3, 3, 2, SearchConfig(seed=3, sample_count=20))
    assert _point_set(sampled) <= exact


def test_labelings_reproduce_their_points(cycle3):
    cset = enumerate_cset(cycle3, 3, 3)
    for point, labels in zip(cset.points, cset.labelings):
        assert np.array_equal(stat_point(cycle3, Partition(cycle3.space, 3, labels), 3).values, point)


def test_orbit_labels():
    a = MPAction.build(WeightedSpace.uniform(4), [[1, 0, 2, 3], [0, 1, 3, 2]])
    labels = orbit_labels(a)
    assert labels[0] == labels[1]
    assert labels[2] == labels[3]
    assert labels[0] != labels[2]


def test_nearest_points_small_example():
    source = np.array([[0.0, 0.0], [1.0, 1.0]])
    target = np.array([[0.0, 1.0], [2.0, 2.0], [1.0, 1.0]])
    distances, indices = nearest_points(source, target)
    assert distances.tolist() == [1.0, 0.0]
    assert indices.tolist() == [0, 2]


def test_closest_point_recovers_an_attained_point(cycle3):
    target = stat_point(cycle3, Partition(cycle3.space, 2, [0, 1, 1]), 3)
    result = closest_point(target, cycle3, SearchConfig(seed=5), mode="heuristic")
    assert result.heuristic
    assert result.distance <= 1e-12


def test_closest_point_is_deterministic_per_seed(rng):
    a = random_action(rng, 5, 2).with_words(3)
    b = random_action(rng, 5, 2).with_words(3)
    target = stat_point(a, Partition(a.space, 2, [0, 1, 0, 1, 1]), 3)
    first = closest_point(target, b, SearchConfig(seed=11), task_index=4, mode="heuristic")
    second = closest_point(target, b, SearchConfig(seed=11), task_index=4, mode="heuristic")
    assert np.array_equal(first.partition.labels, second.partition.labels)
    assert first.distance == second.distance


def test_closest_point_independent_of_worker_count(rng):
    a = random_action(rng, 4, 1).with_words(3)
    b = random_action(rng, 4, 1).with_words(3)
    target = stat_point(a, Partition(a.space, 2, [0, 1, 1, 0]), 3)
    serial = closest_point(target, b, SearchConfig(seed=2), n_jobs=1, mode="heuristic")
    parallel = closest_point(target, b, SearchConfig(seed=2), n_jobs=2, mode="heuristic")
    assert np.array_equal(serial.partition.labels, parallel.partition.labels)


def test_exact_mode_needs_an_exact_source(cycle3, swap2):
    sampled = sample_cset(cycle3, 2, 2, SearchConfig(sample_count=4))
    with pytest.raises(ActionUsageError):
        directed_hausdorff(sampled, cycle3, mode="exact")


def test_rank_mismatch_is_a_usage_error(swap2):
    rank_two = MPAction.build(WeightedSpace.uniform(2), [[1, 0], [0, 1]])
    with pytest.raises(ActionUsageError):
        hausdorff(swap2, rank_two, 1, 1)


def test_heuristic_directed_hausdorff_tracks_exact():
    rng = np.random.default_rng(50)
    cfg = SearchConfig(seed=1)
    close = 0
    instances = 50
    for _ in range(instances):
        rank = int(rng.integers(1, 3))
        t, k = int(rng.integers(2, 4)), int(rng.integers(2, 4))
        a = random_action(rng, int(rng.integers(2, 8)), rank, uniform=bool(rng.integers(2))).with_words(t)
        b = random_action(rng, int(rng.integers(2, 8)), rank, uniform=bool(rng.integers(2))).with_words(t)
        full = enumerate_cset(a, t, k)
        all_minima, _ = nearest_points(full.flat_points(), enumerate_cset(b, t, k).flat_points())
        # the points that decide the exact value plus a random spread of the rest
        farthest = np.argsort(-all_minima, kind="stable")[:3]
        spread = rng.choice(len(full), size=min(len(full), 5), replace=False)
        chosen = np.unique(np.concatenate([farthest, spread]))
        source = CSet(t, k, full.points[chosen], full.labelings[chosen], exact=False)
        exact_minima = all_minima[chosen]

        heuristic = directed_hausdorff(source, b, cfg, mode="heuristic")
        assert not heuristic.exact
        # every heuristic inner minimum is attained, so it can only overestimate
        assert np.all(heuristic.point_distances >= exact_minima - 1e-9)
        exact_value = float(exact_minima.max())
        if heuristic.value - exact_value <= max(0.05 * exact_value, 1e-6):
            close += 1
    assert close >= 0.95 * instances


def test_closest_point_answers_from_the_enumeration_when_feasible():
    rng = np.random.default_rng(9)
    cfg = SearchConfig(seed=2)
    for _ in range(10):
        a = random_action(rng, 9, 1).with_words(4)
        target = stat_point(a, Partition(a.space, 3, rng.integers(3, size=9)), 4)
        result = closest_point(target, a, cfg)
        assert not result.heuristic
        assert result.distance <= 1e-9
        assert stat_point(a, result.partition, 4).values == pytest.approx(target.values, abs=1e-9)


def test_closest_point_exact_mode_respects_the_budget(cycle3):
    target = stat_point(cycle3, Partition(cycle3.space, 2, [0, 1, 1]), 2)
    with pytest.raises(BudgetExceededError):
        closest_point(target, cycle3, SearchConfig(labeling_budget=4), mode="exact")
    assert closest_point(target, cycle3, SearchConfig(labeling_budget=4)).heuristic


def test_sampled_source_gets_exact_inner_minima(cycle3):
    sampled = sample_cset(cycle3, 2, 2, SearchConfig(seed=4, sample_count=8))
    result = directed_hausdorff(sampled, cycle3)
    assert not result.exact
    assert result.value <= 1e-9


def test_directed_hausdorff_grows_with_t():
    rng = np.random.default_rng(31)
    for _ in range(15):
        a = random_action(rng, int(rng.integers(2, 5)), 1, uniform=bool(rng.integers(2))).with_words(4)
        b = random_action(rng, int(rng.integers(2, 5)), 1, uniform=bool(rng.integers(2))).with_words(4)
        k = int(rng.integers(1, 4))
        values = [directed_hausdorff(enumerate_cset(a, t, k), b, mode="exact").value for t in range(1, 5)]
        assert all(later >= earlier - 1e-9 for earlier, later in zip(values, values[1:]))


def test_search_config_validation():
    with pytest.raises(ActionUsageError):
        SearchConfig(swap_probability=1.5)
    with pytest.raises(ActionUsageError):
        SearchConfig(pair_polish_limit=-1)


def test_labeling_count():
    assert labeling_count(2, 10) == 1024
    assert labeling_count(3, 0) == 1
