import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.distance import pdist
from scipy.stats import chisquare

from vecchia.locations import LocationSet, regular_grid
from vecchia.ordering import (
    SCHEMES,
    Permutation,
    order_ammd,
    order_middle_out,
    order_mmd_exact,
    order_points,
    order_random,
    order_sorted_coordinate,
)

point_clouds = st.integers(1, 4).flatmap(
    lambda d: arrays(np.float64, st.tuples(st.integers(1, 80), st.just(d)),
                     elements=st.floats(-10, 10, allow_nan=False))
)


def mmd_oracle(X, first):
    """Greedy argmax recursion written directly from pairwise distances."""
    D = np.sqrt(((X[:, None] - X[None]) ** 2).sum(-1))
    order = [first]
    while len(order) < len(X):
        rest = [j for j in range(len(X)) if j not in order]
        score = [D[j, order].min() for j in rest]
        order.append(rest[int(np.argmax(score))])
    return order


def test_permutation_roundtrip():
    p = Permutation.from_forward([2, 0, 1])
    np.testing.assert_array_equal(p.inverse[p.forward], np.arange(3))
    assert p.is_valid()
    assert Permutation.identity(4).is_valid()


@pytest.mark.parametrize("forward", [[0, 0, 1], [0, 3], [-1, 0]])
def test_permutation_rejects_non_bijection(forward):
    with pytest.raises(ValueError):
        Permutation.from_forward(forward)


def test_sorted_coordinate_1d():
    p = order_sorted_coordinate(np.array([[0.3], [0.1], [0.2]]))
    np.testing.assert_array_equal(p.forward, [1, 2, 0])


def test_sorted_coordinate_already_sorted():
    X = np.linspace(0, 1, 12)[:, None]
    np.testing.assert_array_equal(order_sorted_coordinate(X).forward, np.arange(12))


def test_sum_axis_equals_rotated_sort(rng):
    X = rng.uniform(size=(200, 2))
    c, s = np.cos(np.pi / 4), np.sin(np.pi / 4)
    rotated = X @ np.array([[c, -s], [s, c]])
    ref = np.argsort(rotated[:, 0], kind="stable")
    np.testing.assert_array_equal(order_sorted_coordinate(X, "sum").forward, ref)


def test_middle_out_center_first():
    X = regular_grid(5).coords
    assert order_middle_out(X).forward[0] == 12


def test_middle_out_equidistant_keeps_index_order():
    X = np.array([[0.0, 2.0], [2.0, 0.0], [-2.0, 0.0], [0.0, -2.0], [1.2, 1.6], [-1.6, 1.2]])
    np.testing.assert_array_equal(order_middle_out(X, center=[0, 0]).forward, np.arange(6))


def test_middle_out_plus_sign():
    X = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [-1.0, 0.0], [0.0, -1.0]])
    np.testing.assert_array_equal(order_middle_out(X).forward, [2, 0, 1, 3, 4])


def test_random_n1_and_determinism():
    np.testing.assert_array_equal(order_random(1, 5).forward, [0])
    a, b = order_random(5, 123), order_random(5, 123)
    np.testing.assert_array_equal(a.forward, b.forward)
    assert not np.array_equal(order_random(50, 1).forward, order_random(50, 2).forward)


def test_random_uniform_over_permutations():
    N = 100_000
    counts = Counter(tuple(order_random(4, s).forward) for s in range(N))
    assert len(counts) == 24
    p = 1 / 24
    sd = np.sqrt(N * p * (1 - p))
    obs = np.array([counts[perm] for perm in itertools.permutations(range(4))])
    assert np.all(np.abs(obs - N * p) <= 3 * sd)
    assert chisquare(obs).pvalue > 1e-3


def test_mmd_n2_nearer_center_first():
    X = np.array([[0.9, 0.9], [0.4, 0.6]])
    np.testing.assert_array_equal(order_mmd_exact(X, center=[0.5, 0.5]).forward, [1, 0])


def test_mmd_corners_and_center():
    X = np.array([[0, 0], [1, 0], [0, 1], [1, 1], [0.5, 0.5]], dtype=float)
    got = order_mmd_exact(X).forward
    assert got[0] == 4
    np.testing.assert_array_equal(got, mmd_oracle(X, 4))


@pytest.mark.parametrize("seed", range(10))
def test_mmd_matches_argmax_recursion(seed):
    X = np.random.default_rng(seed).uniform(size=(25, 2))
    got = order_mmd_exact(X).forward
    np.testing.assert_array_equal(got, mmd_oracle(X, got[0]))


@pytest.mark.parametrize("seed", range(8))
def test_mmd_prefix_beats_swaps(seed):
    X = np.random.default_rng(seed).uniform(size=(10, 2))
    order = order_mmd_exact(X).forward
    for k in range(2, len(X)):
        best = pdist(X[order[: k + 1]]).min()
        for j in range(k + 1, len(X)):
            swapped = order.copy()
            swapped[[k, j]] = swapped[[j, k]]
            assert best >= pdist(X[swapped[: k + 1]]).min() - 1e-15


def test_mmd_prefix_spread_nonincreasing():
    X = regular_grid(12).coords
    order = order_mmd_exact(X).forward
    spread = [pdist(X[order[:k]]).min() for k in range(2, len(X) + 1)]
    assert np.all(np.diff(spread) <= 0)


def test_ammd_single_box_equals_exact(rng):
    X = rng.uniform(size=(12, 2))
    np.testing.assert_array_equal(order_ammd(X, target=16).forward, order_mmd_exact(X).forward)


def test_ammd_spread_vs_exact_on_grid():
    X = regular_grid(20).coords
    a, e = order_ammd(X).forward[:50], order_mmd_exact(X).forward[:50]
    assert pdist(X[a]).min() >= 0.7 * pdist(X[e]).min()


def test_ammd_deterministic(rng):
    X = rng.uniform(size=(700, 2))
    np.testing.assert_array_equal(order_ammd(X).forward, order_ammd(X.copy()).forward)


def test_ammd_recursive_box_ordering(rng):
    X = rng.uniform(size=(3000, 2))
    p = order_ammd(X, target=2, max_exact_boxes=256)
    assert p.is_valid()


@pytest.mark.parametrize("scheme", SCHEMES)
@given(X=point_clouds)
def test_every_scheme_is_bijection(scheme, X):
    p = order_points(LocationSet(X), scheme, seed=3)
    assert len(p) == len(X)
    assert p.is_valid()
    np.testing.assert_array_equal(np.sort(p.forward), np.arange(len(X)))


def test_order_points_unknown_scheme():
    with pytest.raises(ValueError):
        order_points(np.zeros((3, 2)), "hilbert")


def test_spacetime_orders_on_space_and_time():
    locs = LocationSet(np.zeros((3, 2)), times=[2.0, 0.0, 1.0])
    np.testing.assert_array_equal(order_points(locs, "coord", axis=2).forward, [1, 2, 0])
