"""Exact k-nearest-neighbor queries and the nearest-neighbor density estimator.

The index is a thin wrapper around :class:`scipy.spatial.cKDTree`. Distances
returned to callers are always recomputed from coordinates with the same
floating-point expression (:func:`euclidean`), so results do not depend on the
tree's internal arithmetic.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_neighbor_count, check_points, check_query
from .exceptions import DegenerateDistance, DuplicateOverload

_UNIT_BALL_VOLUMES = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}

LABELS = ("signal", "noise", "outlier")


def unit_ball_volume(dim):
    """Volume of the unit ball in ``dim`` dimensions, pi^(D/2) / Gamma(D/2 + 1)."""
    if dim < 1:
        raise ValueError("dimension must be positive")
    if dim in _UNIT_BALL_VOLUMES:
        return _UNIT_BALL_VOLUMES[dim]
    return math.pi ** (dim / 2.0) / math.gamma(dim / 2.0 + 1.0)


def euclidean(points, x):
    """Distances from every row of ``points`` to the single point ``x``."""
    diff = points - x
    return np.sqrt(np.sum(diff * diff, axis=-1))


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An ordered sample of points in R^D with optional per-point source labels.

    Empty clouds are allowed as intermediate values (e.g. a zero-count
    annulus); indexing one is an error.
    """

    points: np.ndarray
    labels: np.ndarray = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 2 and pts.shape[0] == 0 and pts.shape[1] >= 1:
            pts = np.ascontiguousarray(pts)
        else:
            pts = check_points(pts, name="points")
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=object)
            if labels.shape != (pts.shape[0],):
                raise ValueError("labels must have one entry per point")
            object.__setattr__(self, "labels", labels)

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def label_array(self, default="signal"):
        if self.labels is None:
            return np.full(len(self), default, dtype=object)
        return self.labels

    def take(self, indices):
        indices = np.asarray(indices, dtype=np.intp)
        labels = None if self.labels is None else self.labels[indices]
        return PointCloud(self.points[indices], labels)

    def concat(self, other):
        labels = np.concatenate([self.label_array(), other.label_array()])
        return PointCloud(np.vstack([self.points, other.points]), labels)


def as_cloud(X):
    """Coerce an array-like or :class:`PointCloud` to a :class:`PointCloud`."""
    if isinstance(X, PointCloud):
        return X
    return PointCloud(X)


class NeighborIndex:
    """Immutable exact kNN index over a point cloud.

    Read-only after construction, so concurrent queries are safe.
    """

    def __init__(self, cloud):
        self.cloud = as_cloud(cloud)
        if len(self.cloud) == 0:
            raise ValueError("cannot index an empty point cloud")
        self._tree = cKDTree(self.cloud.points)

    @property
    def points(self):
        return self.cloud.points

    @property
    def n_samples(self):
        return len(self.cloud)

    @property
    def dim(self):
        return self.cloud.dim

    def kneighbors(self, x, k):
        """Indices and distances of the ``k`` nearest data points to ``x``.

        Equidistant neighbors are ordered by ascending point index.
        """
        k = check_neighbor_count(k, self.n_samples)
        x = check_query(x, self.dim)[0]
        _, idx = self._tree.query(x, k=k)
        idx = np.atleast_1d(idx)
        radius = euclidean(self.points[idx], x).max()
        # widen slightly so ties at the k-th distance are all seen
        cand = np.asarray(self._tree.query_ball_point(x, radius * (1 + 1e-9) + 1e-300), dtype=np.intp)
        dist = euclidean(self.points[cand], x)
        order = np.lexsort((cand, dist))[:k]
        return cand[order], dist[order]

    def kth_distance(self, x, k):
        """Distance from ``x`` to its k-th nearest data point."""
        _, dist = self.kneighbors(x, k)
        return float(dist[-1])

    def kth_distances(self, X, k):
        """Vectorized :meth:`kth_distance` for an array of queries."""
        k = check_neighbor_count(k, self.n_samples)
        X = check_query(X, self.dim)
        _, idx = self._tree.query(X, k=k)
        idx = idx.reshape(len(X), k)
        # the tree only fixes the neighbor set; the k-th value is recomputed
        dist = np.sqrt(np.sum((self.points[idx] - X[:, None, :]) ** 2, axis=-1))
        return np.max(dist, axis=1)


def build_index(cloud):
    return NeighborIndex(cloud)


def kth_distance(index, x, k):
    return index.kth_distance(x, k)


def knn_density(index, x, k):
    """Nearest-neighbor density estimate (k/N) / (omega_D d_k(x)^D)."""
    d_k = index.kth_distance(x, k)
    if d_k == 0.0:
        raise DegenerateDistance(f"query coincides with at least {k} data points")
    n, dim = index.n_samples, index.dim
    return (k / n) / (unit_ball_volume(dim) * d_k**dim)


@dataclass(frozen=True, eq=False)
class DensityProfile:
    """Per-sample k_den-th neighbor distances and the normalizing constant.

    ``d[i]`` is the distance from sample i to its ``k_den``-th nearest sample,
    counting the sample itself at rank 1.
    """

    k_den: int
    d: np.ndarray
    c_norm: float
    omega_D: float
    cloud: PointCloud = field(repr=False)

    @property
    def inverse_d(self):
        return 1.0 / self.d


def normalizing_constant(n, k_den, dim):
    return (k_den / (n * unit_ball_volume(dim))) ** (1.0 / dim)


def density_profile(index, k_den):
    """Compute :class:`DensityProfile` for the indexed cloud.

    Raises
    ------
    DuplicateOverload
        If some point has at least ``k_den`` coincident copies.
    """
    n = index.n_samples
    k_den = check_neighbor_count(k_den, n, name="k_den", minimum=2)
    pts = index.points
    _, idx = index._tree.query(pts, k=k_den)
    idx = idx.reshape(n, k_den)
    d = np.sqrt(np.sum((pts[idx] - pts[:, None, :]) ** 2, axis=-1)).max(axis=1)
    if np.any(d == 0.0):
        bad = int(np.flatnonzero(d == 0.0)[0])
        raise DuplicateOverload(
            f"point {bad} has at least {k_den} coincident copies; deduplicate or jitter the input"
        )
    omega = unit_ball_volume(index.dim)
    return DensityProfile(
        k_den=k_den,
        d=d,
        c_norm=normalizing_constant(n, k_den, index.dim),
        omega_D=omega,
        cloud=index.cloud,
    )


def jitter(points, scale=1e-9, random_state=None):
    """Perturb points uniformly by ``scale`` times the bounding-box diagonal."""
    rng = np.random.default_rng(random_state)
    points = check_points(points)
    diag = float(np.linalg.norm(points.max(axis=0) - points.min(axis=0))) or 1.0
    return points + rng.uniform(-1, 1, size=points.shape) * scale * diag


class KNNDensity(BaseEstimator):
    """k-nearest-neighbor density estimator with a scikit-learn interface.

    Parameters
    ----------
    k : int or None
        Neighbor rank. ``None`` uses ceil((log10 N)^2).

    Attributes
    ----------
    index_ : NeighborIndex
    k_ : int
        Neighbor rank actually used.
    """

    def __init__(self, k=None):
        self.k = k

    def fit(self, X, y=None):
        from .filtration import default_k_den

        self.index_ = NeighborIndex(X)
        n = self.index_.n_samples
        self.k_ = default_k_den(n) if self.k is None else check_neighbor_count(self.k, n)
        self.n_features_in_ = self.index_.dim
        return self

    def density(self, X):
        check_is_fitted(self, "index_")
        d_k = self.index_.kth_distances(X, self.k_)
        if np.any(d_k == 0.0):
            raise DegenerateDistance(f"a query coincides with at least {self.k_} data points")
        n, dim = self.index_.n_samples, self.index_.dim
        return (self.k_ / n) / (unit_ball_volume(dim) * d_k**dim)

    def score_samples(self, X):
        """Log density at each query, mirroring ``KernelDensity.score_samples``."""
        return np.log(self.density(X))
