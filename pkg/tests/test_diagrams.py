import numpy as np
import pytest
from hypothesis import given, strategies as st

from rdad.cubical import PersistenceDiagram, PersistencePoint
from rdad.diagrams import (
    SignificanceReport,
    bottleneck,
    brute_force_bottleneck,
    significance_mask,
    significant_points,
)

INF = np.inf


def random_pairs(rng, n, ess=0):
    b = rng.integers(0, 6, size=n).astype(float)
    d = b + rng.integers(1, 5, size=n)
    pairs = np.column_stack([b, d])
    if ess:
        pairs = np.vstack([pairs, np.column_stack([rng.integers(0, 6, size=ess), np.full(ess, INF)])])
    return pairs


def diagrams(max_points=4):
    pt = st.tuples(st.integers(0, 8), st.integers(1, 5)).map(lambda t: (float(t[0]), float(t[0] + t[1])))
    return st.lists(pt, max_size=max_points).map(lambda xs: np.array(xs, dtype=float).reshape(-1, 2))


# --- examples ----------------------------------------------------------------


def test_identical_is_zero(rng):
    P = random_pairs(rng, 6, ess=1)
    assert bottleneck(P, P) == 0.0


def test_single_point_to_empty():
    assert bottleneck([[0.0, 2.0]], np.empty((0, 2))) == 1.0


def test_extra_small_point():
    assert bottleneck([[1.0, 5.0]], [[1.0, 5.0], [2.0, 2.5]]) == 0.25


def test_direct_match_beats_diagonal():
    assert brute_force_bottleneck([[0.0, 2.0]], [[0.0, 3.0]]) == 1.0
    assert bottleneck([[0.0, 2.0]], [[0.0, 3.0]]) == 1.0
    assert brute_force_bottleneck([[0.0, 1.0]], [[0.0, 1.0]]) == 0.0


def test_infinite_points():
    assert bottleneck([[0.0, INF]], [[0.5, INF]]) == 0.5
    assert bottleneck([[0.0, INF]], np.empty((0, 2))) == INF
    assert bottleneck([[0.0, INF], [1.0, INF]], [[0.2, INF]]) == INF
    assert bottleneck([[0.0, INF], [1.0, 2.0]], [[0.1, INF]]) == 0.5


def test_diagram_objects_and_dim():
    P = PersistenceDiagram([0, 1, 1], [0.0, 1.0, 2.0], [INF, 5.0, 2.5])
    Q = PersistenceDiagram([0, 1], [0.0, 1.0], [INF, 5.0])
    assert bottleneck(P, Q, dim=1) == 0.25
    assert bottleneck(P, Q, dim=0) == 0.0


def test_brute_force_cap():
    with pytest.raises(ValueError):
        brute_force_bottleneck(np.ones((5, 2)) * [0, 1], np.ones((4, 2)) * [0, 1])


# --- properties --------------------------------------------------------------


@given(P=diagrams(), Q=diagrams())
def test_matches_brute_force(P, Q):
    if len(P) + len(Q) > 8:
        return
    assert bottleneck(P, Q) == brute_force_bottleneck(P, Q)


def test_matches_brute_force_with_essentials(rng):
    for _ in range(100):
        e = int(rng.integers(0, 2))
        P, Q = random_pairs(rng, int(rng.integers(0, 3)), e), random_pairs(rng, int(rng.integers(0, 3)), e)
        assert bottleneck(P, Q) == brute_force_bottleneck(P, Q)


@given(P=diagrams(6), Q=diagrams(6), R=diagrams(6))
def test_metric_axioms(P, Q, R):
    pq, qp = bottleneck(P, Q), bottleneck(Q, P)
    assert pq == qp
    assert pq >= 0
    assert pq <= bottleneck(P, R) + bottleneck(R, Q) + 1e-12


def test_continuous_values(rng):
    for _ in range(50):
        P = np.sort(rng.uniform(size=(3, 2)), axis=1)
        Q = np.sort(rng.uniform(size=(4, 2)), axis=1)
        assert bottleneck(P, Q) == brute_force_bottleneck(P, Q)


def test_large_diagrams_fast(rng):
    P = np.sort(rng.uniform(size=(400, 2)), axis=1)
    Q = P + rng.uniform(-0.01, 0.01, size=P.shape)
    Q = Q[Q[:, 1] > Q[:, 0]]
    assert bottleneck(P, Q) <= 0.01


# --- significance --------------------------------------------------------------


def _dgm(pairs, dim=1):
    pairs = np.asarray(pairs, dtype=float)
    return PersistenceDiagram(np.full(len(pairs), dim), pairs[:, 0], pairs[:, 1])


def test_significance_examples():
    d = _dgm([[1.0, 5.0]])
    assert len(significant_points(d, 1, 0.3)) == 1
    assert len(significant_points(d, 1, 2.0)) == 0
    d = _dgm([[1.0, 5.0], [0.0, 0.1], [2.0, 2.5]])
    assert len(significant_points(d, 1, 0.0)) == 3
    assert significance_mask(d, 1, 0.2).tolist() == [True, False, True]


def test_infinite_always_significant():
    d = PersistenceDiagram([0], [0.0], [INF])
    assert significant_points(d, 0, 1e9) == [PersistencePoint(0, 0.0, INF, None)]


def test_negative_radius():
    with pytest.raises(ValueError):
        significant_points(_dgm([[0.0, 1.0]]), 1, -0.1)


@given(r1=st.floats(0, 5), r2=st.floats(0, 5))
def test_significance_monotone(r1, r2):
    d = _dgm(random_pairs(np.random.default_rng(0), 20))
    lo, hi = min(r1, r2), max(r1, r2)
    big = {(p.birth, p.death) for p in significant_points(d, 1, hi)}
    small = {(p.birth, p.death) for p in significant_points(d, 1, lo)}
    assert big <= small


def test_report_csv(tmp_path):
    from rdad.filtration import GridSpec

    g = GridSpec((0.0, 0.0), 1.0, (4, 4))
    d = PersistenceDiagram([1, 1, 0], [1.0, 0.0, 0.0], [5.0, 0.1, INF], [[1, 2], [0, 0], [-1, -1]], grid=g)
    SignificanceReport(d, 1, 0.5).to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines == ["dim,birth,death,persistence,death_x,death_y", "1,1.0,5.0,4.0,1.5,2.5"]
