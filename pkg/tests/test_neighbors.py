import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rdad.exceptions import DegenerateDistance, DuplicateOverload
from rdad.neighbors import (
    KNNDensity,
    NeighborIndex,
    PointCloud,
    build_index,
    density_profile,
    jitter,
    knn_density,
    kth_distance,
    normalizing_constant,
    unit_ball_volume,
)


def brute_kth(points, x, k):
    d = np.sqrt(np.sum((points - x) ** 2, axis=1))
    return np.sort(d)[k - 1]


# --- point cloud -------------------------------------------------------------


def test_point_cloud_rejects_nonfinite():
    with pytest.raises(ValueError):
        PointCloud([[0.0, np.nan]])


def test_point_cloud_label_length_checked():
    with pytest.raises(ValueError):
        PointCloud([[0.0, 0.0], [1.0, 1.0]], ["signal"])


def test_point_cloud_take_and_concat():
    c = PointCloud([[0.0, 0.0], [1.0, 1.0]], ["signal", "outlier"])
    t = c.take([1, 1])
    assert t.points.tolist() == [[1.0, 1.0], [1.0, 1.0]]
    assert list(t.labels) == ["outlier", "outlier"]
    both = c.concat(PointCloud([[2.0, 2.0]]))
    assert len(both) == 3 and both.labels[-1] == "signal"


# --- unit ball ---------------------------------------------------------------


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_hardcoded_ball_volumes_match_closed_form(dim):
    closed = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)
    assert abs(unit_ball_volume(dim) - closed) <= 1e-12


def test_ball_volume_high_dim():
    assert unit_ball_volume(4) == pytest.approx(math.pi**2 / 2)


# --- index -------------------------------------------------------------------


def test_singleton_index():
    idx = build_index(PointCloud([[0.0, 0.0]]))
    nn, d = idx.kneighbors([3.0, 4.0], 1)
    assert nn.tolist() == [0] and d[0] == 5.0


def test_two_point_query():
    idx = build_index(PointCloud([[0.0, 0.0], [1.0, 0.0]]))
    nn, d = idx.kneighbors([0.4, 0.0], 1)
    assert nn.tolist() == [0]
    assert d[0] == pytest.approx(0.4)


def test_kneighbors_match_exhaustive(rng):
    pts = rng.uniform(size=(100, 2))
    idx = build_index(pts)
    for _ in range(20):
        x = rng.uniform(size=2)
        nn, d = idx.kneighbors(x, 7)
        dist = np.sqrt(np.sum((pts - x) ** 2, axis=1))
        expected = np.lexsort((np.arange(100), dist))[:7]
        assert set(nn.tolist()) == set(expected.tolist())
        assert np.array_equal(np.sort(d), np.sort(dist[expected]))


def test_ties_ordered_by_index():
    pts = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    nn, _ = build_index(pts).kneighbors([0.0, 0.0], 3)
    assert nn.tolist() == [0, 1, 2]


def test_kth_distance_line_example(line_cloud):
    idx = build_index(line_cloud)
    assert kth_distance(idx, [0.5], 2) == 0.5


def test_kth_distance_self_and_max(line_cloud, rng):
    idx = build_index(line_cloud)
    for p in line_cloud:
        assert kth_distance(idx, p, 1) == 0.0
    assert kth_distance(idx, [0.5], 4) == 9.5


def test_k_out_of_range(line_cloud):
    idx = build_index(line_cloud)
    with pytest.raises(ValueError):
        kth_distance(idx, [0.5], 5)
    with pytest.raises(ValueError):
        kth_distance(idx, [0.5], 0)


def test_kth_distances_vectorized_matches_scalar(rng):
    pts = rng.normal(size=(150, 2))
    idx = NeighborIndex(pts)
    q = rng.normal(size=(30, 2))
    vec = idx.kth_distances(q, 5)
    assert np.array_equal(vec, [idx.kth_distance(x, 5) for x in q])


@given(
    pts=arrays(np.float64, st.tuples(st.integers(1, 60), st.just(2)), elements=st.floats(-10, 10)),
    x=arrays(np.float64, 2, elements=st.floats(-10, 10)),
    data=st.data(),
)
def test_kth_distance_is_order_statistic(pts, x, data):
    k = data.draw(st.integers(1, len(pts)))
    assert kth_distance(build_index(pts), x, k) == brute_kth(pts, x, k)


# --- density -----------------------------------------------------------------


def test_knn_density_line_example(line_cloud):
    assert knn_density(build_index(line_cloud), [0.5], 2) == pytest.approx(0.5)


def test_knn_density_single_point():
    assert knn_density(build_index([[0.0, 0.0]]), [1.0, 0.0], 1) == pytest.approx(1 / math.pi)


def test_knn_density_degenerate():
    with pytest.raises(DegenerateDistance):
        knn_density(build_index([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]]), [0.0, 0.0], 2)


def test_knn_density_uniform_square():
    pts = np.random.default_rng(0).uniform(size=(5000, 2))
    k = math.ceil(math.log10(5000) ** 2)
    assert knn_density(build_index(pts), [0.5, 0.5], k) == pytest.approx(1.0, rel=0.3)


def test_density_profile_line_example(line_cloud):
    prof = density_profile(build_index(line_cloud), 2)
    assert prof.d.tolist() == [1.0, 1.0, 1.0, 8.0]
    assert prof.c_norm == 0.25
    assert prof.omega_D == 2.0


def test_density_profile_k2_is_nearest_other(rng):
    pts = rng.uniform(size=(80, 3))
    prof = density_profile(build_index(pts), 2)
    full = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    np.fill_diagonal(full, np.inf)
    assert np.allclose(prof.d, full.min(axis=1), rtol=0, atol=1e-15)


def test_density_profile_constant_formula(rng):
    pts = rng.uniform(size=(500, 2))
    prof = density_profile(build_index(pts), 8)
    assert prof.c_norm == (8 / (500 * math.pi)) ** 0.5
    assert prof.c_norm == normalizing_constant(500, 8, 2)


def test_density_profile_duplicate_overload():
    pts = np.vstack([np.zeros((3, 2)), np.random.default_rng(1).uniform(size=(10, 2))])
    with pytest.raises(DuplicateOverload):
        density_profile(build_index(pts), 3)
    # two copies are fine with k_den = 3
    density_profile(build_index(pts[1:]), 3)


def test_density_profile_k_den_range(line_cloud):
    with pytest.raises(ValueError):
        density_profile(build_index(line_cloud), 1)


def test_jitter_resolves_duplicates():
    pts = np.zeros((20, 2))
    pts[10:] = 1.0
    moved = jitter(pts, 1e-9, random_state=0)
    assert np.max(np.abs(moved - pts)) <= 1e-9 * math.sqrt(2)
    density_profile(build_index(moved), 3)


# --- invariances -------------------------------------------------------------


def test_permutation_invariance(rng):
    pts = rng.normal(size=(120, 2))
    perm = rng.permutation(120)
    a, b = build_index(pts), build_index(pts[perm])
    for x in rng.normal(size=(10, 2)):
        assert kth_distance(a, x, 5) == kth_distance(b, x, 5)
        assert knn_density(a, x, 5) == knn_density(b, x, 5)
    assert np.array_equal(np.sort(density_profile(a, 8).d), np.sort(density_profile(b, 8).d))


def test_rigid_motion_invariance(rng):
    pts = rng.normal(size=(100, 2))
    th = 0.7
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    shift = np.array([3.0, -2.0])
    a, b = build_index(pts), build_index(pts @ R.T + shift)
    for x in rng.normal(size=(10, 2)):
        y = R @ x + shift
        assert kth_distance(b, y, 4) == pytest.approx(kth_distance(a, x, 4), rel=1e-9)
        assert knn_density(b, y, 4) == pytest.approx(knn_density(a, x, 4), rel=1e-9)
    assert np.allclose(density_profile(a, 6).d, density_profile(b, 6).d, rtol=1e-9)


@given(a=st.floats(0.1, 10.0))
def test_scaling_covariance(a):
    pts = np.random.default_rng(3).normal(size=(60, 2))
    x = np.array([0.3, -0.2])
    i0, i1 = build_index(pts), build_index(a * pts)
    assert kth_distance(i1, a * x, 3) == pytest.approx(a * kth_distance(i0, x, 3), rel=1e-12)
    assert knn_density(i1, a * x, 3) == pytest.approx(knn_density(i0, x, 3) / a**2, rel=1e-12)


# --- estimator ---------------------------------------------------------------


def test_knn_density_estimator(rng):
    pts = rng.uniform(size=(500, 2))
    est = KNNDensity().fit(pts)
    assert est.k_ == 8
    q = rng.uniform(size=(5, 2))
    idx = build_index(pts)
    assert np.allclose(est.density(q), [knn_density(idx, x, 8) for x in q], rtol=1e-14)
    assert np.allclose(est.score_samples(q), np.log(est.density(q)))
    assert est.get_params() == {"k": None}
