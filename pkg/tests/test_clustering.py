import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prism.clustering import (_lloyd, adjusted_rand_index, assign_all, assign_nearest, exhaustive_min_sse,
                              inertia_of, kmeans, kmeans_plusplus)
from prism.errors import CapacityError, InputError, ShapeError

FOUR = np.array([[0.0, 0.0], [0.0, 0.1], [10.0, 10.0], [10.0, 10.1]])


def test_four_point_example():
    model = kmeans(FOUR, 2, seed=0)
    assert model.assignment[0] == model.assignment[1] != model.assignment[2] == model.assignment[3]
    assert abs(model.inertia - 0.01) < 1e-12
    labels, sse = exhaustive_min_sse(FOUR, 2)
    assert abs(sse - 0.01) < 1e-12
    assert adjusted_rand_index(labels, model.assignment) == 1.0


def test_n_equals_n_points():
    pts = np.random.default_rng(0).normal(size=(5, 3))
    model = kmeans(pts, 5, seed=1)
    assert model.inertia == 0.0
    assert sorted(map(tuple, model.centroids)) == sorted(map(tuple, pts))


def test_identical_points():
    pts = np.ones((6, 2))
    model = kmeans(pts, 2, seed=0)
    assert model.inertia == 0.0
    assert np.allclose(model.centroids[model.assignment], 1.0)


def test_input_errors():
    with pytest.raises(InputError):
        kmeans(np.zeros((2, 2)), 3)
    with pytest.raises(InputError):
        kmeans(np.array([[np.nan, 0.0]]), 1)
    with pytest.raises(ShapeError):
        kmeans(np.zeros(4), 1)


def test_assign_nearest():
    assert assign_nearest([[0.0], [10.0]], [1.0]) == 0
    assert assign_nearest([[0.0], [10.0]], [5.0]) == 0  # tie -> lowest index
    c = np.array([[0.0, 0.0], [3.0, 4.0], [-1.0, 5.0]])
    assert assign_nearest(c, [0.0, 4.0]) == 2  # distances^2 = 16, 9, 2
    with pytest.raises(ShapeError):
        assign_nearest(c, [1.0, 2.0, 3.0])


@given(st.integers(2, 6), st.integers(0, 10 ** 6))
@settings(max_examples=30, deadline=None)
def test_assign_nearest_returns_own_centroid(n, seed):
    c = np.random.default_rng(seed).normal(size=(n, 3))
    assert [assign_nearest(c, c[i]) for i in range(n)] == list(range(n))
    assert assign_all(c, c).tolist() == list(range(n))


@given(st.integers(4, 40), st.integers(1, 4), st.integers(0, 10 ** 6))
@settings(max_examples=30, deadline=None)
def test_lloyd_inertia_non_increasing(N, n, seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(N, 2))
    init = kmeans_plusplus(pts, n, rng)
    centroids, assignment, final, _, history = _lloyd(pts, init.copy(), 100, 1e-6)
    assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))
    assert abs(final - inertia_of(pts, centroids, assignment)) < 1e-9


def test_inertia_consistent_with_assignment():
    pts = np.random.default_rng(3).normal(size=(30, 2))
    model = kmeans(pts, 3, seed=2)
    assert abs(model.inertia - inertia_of(pts, model.centroids, model.assignment)) < 1e-9
    assert set(model.assignment.tolist()) == {0, 1, 2}


def test_exhaustive_single_cluster_is_total_scatter():
    pts = np.random.default_rng(4).normal(size=(7, 2))
    _, sse = exhaustive_min_sse(pts, 1)
    assert abs(sse - np.sum((pts - pts.mean(axis=0)) ** 2)) < 1e-12


def test_exhaustive_two_opposite_points():
    assert exhaustive_min_sse(np.array([[-1.0], [1.0]]), 2)[1] == 0.0


def test_exhaustive_capacity():
    with pytest.raises(CapacityError):
        exhaustive_min_sse(np.zeros((21, 1)), 2)


def test_restarts_are_deterministic():
    pts = np.random.default_rng(5).normal(size=(40, 3))
    a, b = kmeans(pts, 4, seed=7), kmeans(pts, 4, seed=7)
    assert np.array_equal(a.assignment, b.assignment) and np.array_equal(a.centroids, b.centroids)


def test_ari_properties():
    assert adjusted_rand_index([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    assert adjusted_rand_index(["a", "a", "b", "b"], [0, 0, 1, 1]) == 1.0
    assert adjusted_rand_index([0, 0, 0, 0], [0, 0, 0, 0]) == 1.0
    # standard worked example
    assert abs(adjusted_rand_index([0, 0, 1, 1], [0, 1, 0, 1]) + 0.5) < 1e-12
    with pytest.raises(ShapeError):
        adjusted_rand_index([0, 1], [0])


@given(st.lists(st.integers(0, 3), min_size=2, max_size=40), st.integers(0, 10 ** 6))
@settings(max_examples=50, deadline=None)
def test_ari_matches_reference_implementation(a, seed):
    metrics = pytest.importorskip("sklearn.metrics")
    b = np.random.default_rng(seed).integers(0, 3, size=len(a))
    assert abs(adjusted_rand_index(a, b) - metrics.adjusted_rand_score(a, b)) < 1e-12
