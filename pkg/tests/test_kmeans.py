import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepstdp.kmeans import KMeansParams, assign_step, kmeans_fit, objective, update_step
from deepstdp.numerics import seeded_rng


def test_single_cluster_is_the_mean():
    X = seeded_rng(0).normal(size=(30, 3))
    res = kmeans_fit(X, KMeansParams(k=1, it=3), seeded_rng(1))
    assert np.allclose(res.centroids[0], X.mean(axis=0), atol=1e-12)
    assert res.objective == pytest.approx(X.var(axis=0).sum() * len(X), rel=1e-12)


def test_four_points_two_clusters():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    for seed in range(10):
        res = kmeans_fit(X, KMeansParams(k=2, it=5), seeded_rng(seed))
        assert sorted(res.centroids[:, 0]) == [0.5, 10.5]
        assert res.objective == pytest.approx(1.0)


def test_assign_exact_match_and_ties():
    C = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [5.0, 5.0]])
    assert assign_step(np.array([[5.0, 5.0]]), C)[0] == 3
    C2 = np.array([[9.0, 9.0], [1.0, 0.0], [-1.0, 0.0]])
    assert assign_step(np.array([[0.0, 0.0]]), C2)[0] == 1


def test_assign_matches_exhaustive_scan():
    rng = seeded_rng(2)
    X, C = rng.normal(size=(50, 4)), rng.normal(size=(7, 4))
    brute = []
    for x in X:
        best, best_d = 0, np.inf
        for j, c in enumerate(C):
            dist = sum((x[i] - c[i]) ** 2 for i in range(4))
            if dist < best_d:
                best, best_d = j, dist
        brute.append(best)
    assert np.array_equal(assign_step(X, C), brute)


def test_update_is_arithmetic_mean():
    rng = seeded_rng(3)
    X = rng.normal(size=(40, 3))
    a = rng.integers(0, 5, 40)
    means, counts = update_step(X, a, 5)
    for j in range(5):
        members = X[a == j]
        assert counts[j] == len(members)
        if len(members):
            assert np.abs(means[j] - members.sum(axis=0) / len(members)).max() < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 5))
def test_objective_nonincreasing(seed, k, d):
    rng = seeded_rng(seed)
    X = rng.normal(size=(k * 4 + 3, d))
    res = kmeans_fit(X, KMeansParams(k=k, it=8), rng.spawn("fit"))
    h = res.history + [res.objective]
    assert all(b <= a * (1 + 1e-12) + 1e-12 for a, b in zip(h, h[1:]))
    # final labels are nearest under final centroids, objective recomputes
    assert np.array_equal(res.assignments, assign_step(X, res.centroids))
    assert res.objective == pytest.approx(objective(X, res.centroids, res.assignments), rel=1e-9)


def test_op_count_matches_formula():
    rng = seeded_rng(4)
    centers = rng.normal(size=(6, 5)) * 10
    X = np.repeat(centers, 20, axis=0) + 0.1 * rng.normal(size=(120, 5))
    k, d, it, n = 6, 5, 7, 120
    res = kmeans_fit(X, KMeansParams(k=k, it=it), rng.spawn("fit"))
    assert res.reseeds == 0 and res.iterations_run == it
    assert res.op_count.mults == k * d * it * n
    assert res.op_count.adds == (k * (2 * d - 1) + d) * it * n


def test_restarts_keep_best_and_count_all_work():
    rng = seeded_rng(6)
    centers = rng.normal(size=(3, 4)) * 10
    X = np.repeat(centers, 10, axis=0) + 0.01 * rng.normal(size=(30, 4))
    truth = np.repeat(np.arange(3), 10)
    optimum = sum(((X[truth == c] - X[truth == c].mean(axis=0)) ** 2).sum() for c in range(3))
    res = kmeans_fit(X, KMeansParams(k=3, it=5, restarts=20), seeded_rng(7))
    assert res.objective == pytest.approx(optimum, rel=1e-9)
    assert res.op_count.mults == 20 * 3 * 4 * 5 * 30
    # the first restart consumes the stream exactly like a single run
    assert kmeans_fit(X, KMeansParams(k=3, it=5, restarts=1), seeded_rng(7)).history == \
        kmeans_fit(X, KMeansParams(k=3, it=5), seeded_rng(7)).history


def test_empty_cluster_reseeded():
    X = np.array([[0.0], [0.0], [0.0], [0.0], [1.0], [5.0]])
    res = kmeans_fit(X, KMeansParams(k=3, it=4), seeded_rng(0))
    assert np.all(np.isfinite(res.centroids))


def test_early_stop():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    res = kmeans_fit(X, KMeansParams(k=2, it=50, tol=1e-9), seeded_rng(1))
    assert res.iterations_run < 50


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        kmeans_fit(np.zeros((2, 2)), KMeansParams(k=3), seeded_rng(0))
    with pytest.raises(ValueError):
        kmeans_fit(np.array([[np.inf], [0.0]]), KMeansParams(k=1), seeded_rng(0))
    with pytest.raises(ValueError):
        KMeansParams(k=0)


def test_deterministic():
    X = seeded_rng(5).normal(size=(40, 3))
    a = kmeans_fit(X, KMeansParams(k=4), seeded_rng(8))
    b = kmeans_fit(X, KMeansParams(k=4), seeded_rng(8))
    assert np.array_equal(a.assignments, b.assignments) and np.array_equal(a.centroids, b.centroids)
