import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.action_generators import random_action
from src.action_models import ActionUsageError, Partition
from src.partition_statistics import (
    StatPoint, batch_statistics, check_stat_point, l1_distance, relabel_point, stat_point,
)


def test_identity_and_swap_statistics(identity2, swap2):
    partition = Partition(swap2.space, 2, [0, 1])
    on_identity = stat_point(identity2, partition, 2).values
    on_swap = stat_point(swap2, partition, 2).values
    assert on_identity.tolist() == [[[0.5, 0.0], [0.0, 0.5]], [[0.5, 0.0], [0.0, 0.5]]]
    assert on_swap.tolist() == [[[0.5, 0.0], [0.0, 0.5]], [[0.0, 0.5], [0.5, 0.0]]]
    assert l1_distance(StatPoint(on_identity), StatPoint(on_swap)) == pytest.approx(2.0)


def test_empty_blocks_contribute_zero(cycle3):
    point = stat_point(cycle3, Partition(cycle3.space, 3, [1, 1, 1]), 3)
    assert point.values[:, 1, 1].tolist() == pytest.approx([1.0, 1.0, 1.0])
    assert point.values.sum() == pytest.approx(3.0)


def test_statistic_integrity_on_random_triples():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        size = int(rng.integers(1, 6))
        rank = int(rng.integers(1, 3))
        t = int(rng.integers(1, 5))
        k = int(rng.integers(1, 4))
        a = random_action(rng, size, rank, uniform=bool(rng.integers(2))).with_words(t)
        partition = Partition(a.space, k, rng.integers(k, size=size))
        point = stat_point(a, partition, t)
        assert point.values.shape == (t, k, k)
        assert check_stat_point(point) == []
        assert np.allclose(point.values.sum(axis=(1, 2)), 1.0, atol=1e-9)


def test_batch_matches_single_points(cycle3):
    labelings = np.array([[0, 0, 1], [1, 0, 1], [2, 1, 0]])
    batch = batch_statistics(cycle3.word_perms[:3], cycle3.space.as_array, labelings, 3)
    for row, labels in zip(batch, labelings):
        single = stat_point(cycle3, Partition(cycle3.space, 3, labels), 3).values
        assert np.array_equal(row, single)


def test_relabel_point_matches_relabelled_partition(cycle3):
    labels = np.array([0, 1, 1])
    sigma = [1, 0]
    original = stat_point(cycle3, Partition(cycle3.space, 2, labels), 4)
    renamed = stat_point(cycle3, Partition(cycle3.space, 2, np.array(sigma)[labels]), 4)
    assert np.array_equal(relabel_point(original, sigma).values, renamed.values)


def test_stat_point_domain_errors(swap2, cycle3):
    with pytest.raises(ActionUsageError):
        stat_point(swap2, Partition(cycle3.space, 2, [0, 1, 0]), 2)
    with pytest.raises(ActionUsageError):
        stat_point(swap2, Partition(swap2.space, 2, [0, 1]), 99)


def test_l1_shape_mismatch():
    with pytest.raises(ActionUsageError):
        l1_distance(StatPoint(np.zeros((1, 2, 2))), StatPoint(np.zeros((2, 2, 2))))


def test_flat_order_and_prefix():
    values = np.arange(8, dtype=float).reshape(2, 2, 2) / 10
    point_list = StatPoint(values).to_flat_list()
    point = StatPoint.from_flat(2, 2, point_list)
    assert point_list == [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]
    assert np.array_equal(point.prefix(1).values, values[:1])
    with pytest.raises(ActionUsageError):
        StatPoint.from_flat(2, 2, [0.0])


def test_check_stat_point_flags_broken_points():
    broken = np.zeros((2, 2, 2))
    broken[0, 0, 1] = 1.0
    broken[1, 0, 0] = 0.5
    issues = check_stat_point(StatPoint(broken))
    assert "identity slice has off-diagonal mass" in issues
    assert any(issue.startswith("word 1:") for issue in issues)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1), t=st.integers(1, 4), k=st.integers(1, 3))
def test_l1_distance_is_a_metric(seed, t, k):
    rng = np.random.default_rng(seed)
    size = int(rng.integers(1, 6))
    a = random_action(rng, size, int(rng.integers(1, 3)), uniform=bool(rng.integers(2))).with_words(t)
    x, y, z = (stat_point(a, Partition(a.space, k, rng.integers(k, size=size)), t) for _ in range(3))
    assert l1_distance(x, x) == 0.0
    assert l1_distance(x, y) == l1_distance(y, x)
    assert l1_distance(x, y) >= 0.0
    assert l1_distance(x, z) <= l1_distance(x, y) + l1_distance(y, z) + 1e-12
