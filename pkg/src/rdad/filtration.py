"""Distance, DTM, DAD and RDAD filtration functions on points and grids.

All four functions share one evaluator: for a query x, form the ratios
``dist(x, X_i) / w_i``, keep the ``k`` smallest, and return
``scale * sqrt(mean of their squares)``.

==========  ==========  ============  ==========
kind        k           w_i           scale
==========  ==========  ============  ==========
distance    1           1             1
dtm         k_dtm       1             1
dad         1           d_i           c_norm
rdad        k_dtm       d_i           c_norm
==========  ==========  ============  ==========

Evaluation is exact. Queries are grouped into spatial tiles; for each tile a
bound on the k-th smallest ratio discards data points that cannot be among
the k smallest for any query in the tile.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
import json
import math

import numba
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_fraction, check_neighbor_count, check_query
from .exceptions import CloudMismatch, GridError
from .neighbors import NeighborIndex, as_cloud, density_profile

KINDS = ("distance", "dtm", "dad", "rdad")
DEFAULT_M_DTM = 0.002

_TILE_QUERIES = 64
_BRUTE_FORCE_WORK = 200_000


def default_k_den(n):
    """ceil((log10 N)^2), the density-estimation neighbor count."""
    if n < 2:
        raise ValueError("need at least two samples")
    return int(math.ceil(math.log10(n) ** 2))


def default_k_dtm(n, m_dtm=DEFAULT_M_DTM):
    """round(m_dtm * N), rounding halves up, and never below 1."""
    m_dtm = check_fraction(m_dtm, "m_dtm")
    return max(1, int(math.floor(m_dtm * n + 0.5)))


@dataclass(frozen=True)
class FiltrationSpec:
    """Which filtration function to evaluate and its neighbor parameters.

    ``k_dtm`` and ``k_den`` left as ``None`` are filled from the sample size by
    :meth:`resolve`.
    """

    kind: str = "rdad"
    k_dtm: int = None
    k_den: int = None
    m_dtm: float = DEFAULT_M_DTM

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        check_fraction(self.m_dtm, "m_dtm")

    def resolve(self, n):
        """Return a copy with k_dtm and k_den fixed for a sample of size n."""
        k_den = self.k_den
        if k_den is None and self.uses_density:
            k_den = default_k_den(n)
        k_dtm = self.k_dtm if self.k_dtm is not None else default_k_dtm(n, self.m_dtm)
        if self.kind in ("distance", "dad"):
            k_dtm = 1
        check_neighbor_count(k_dtm, n, name="k_dtm")
        if self.kind in ("dad", "rdad"):
            check_neighbor_count(k_den, n, name="k_den", minimum=2)
        return replace(self, k_dtm=k_dtm, k_den=k_den)

    @property
    def uses_density(self):
        return self.kind in ("dad", "rdad")


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Axis-aligned uniform grid; cell ``(i, j)`` is centered at
    ``lower + ((i + 0.5) dx, (j + 0.5) dx)``.
    """

    lower: tuple
    delta_x: float
    counts: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        if len(lower) != len(counts):
            raise ValueError("lower and counts must have the same length")
        if not self.delta_x > 0:
            raise ValueError("delta_x must be positive")
        if any(c < 1 for c in counts):
            raise ValueError("all cell counts must be at least 1")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "delta_x", float(self.delta_x))

    @property
    def dim(self):
        return len(self.counts)

    @property
    def n_cells(self):
        return int(np.prod(self.counts))

    @property
    def upper(self):
        return tuple(lo + c * self.delta_x for lo, c in zip(self.lower, self.counts))

    def axis_centers(self, axis):
        return self.lower[axis] + (np.arange(self.counts[axis]) + 0.5) * self.delta_x

    def cell_center(self, index):
        return np.array([lo + (i + 0.5) * self.delta_x for lo, i in zip(self.lower, index)])

    def centers(self):
        """Cell centers in row-major order, shape (n_cells, dim)."""
        axes = [self.axis_centers(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def __eq__(self, other):
        if not isinstance(other, GridSpec):
            return NotImplemented
        return (self.lower, self.delta_x, self.counts) == (other.lower, other.delta_x, other.counts)

    def __hash__(self):
        return hash((self.lower, self.delta_x, self.counts))

    def to_dict(self):
        return {"dim": self.dim, "lower": list(self.lower), "delta_x": self.delta_x, "counts": list(self.counts)}


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One filtration value per grid cell; ``values`` has shape ``grid.counts``.

    ``spec`` is None for arbitrary user-supplied arrays; fields produced by a
    filtration function must also be non-negative.
    """

    grid: GridSpec
    values: np.ndarray
    spec: FiltrationSpec = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.size != self.grid.n_cells:
            raise ValueError(f"expected {self.grid.n_cells} values, got {values.size}")
        values = values.reshape(self.grid.counts)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        if self.spec is not None and np.any(values < 0):
            raise ValueError("filtration values must be non-negative")
        object.__setattr__(self, "values", values)

    @property
    def kind(self):
        return None if self.spec is None else self.spec.kind

    def to_json(self):
        header = self.grid.to_dict()
        if self.spec is None:
            header.update(kind=None)
        else:
            header.update(kind=self.spec.kind, k_dtm=self.spec.k_dtm, k_den=self.spec.k_den, m_dtm=self.spec.m_dtm)
        header["values"] = self.values.ravel().tolist()
        return json.dumps(header)

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        grid = GridSpec(obj["lower"], obj["delta_x"], obj["counts"])
        spec = None
        if obj.get("kind") is not None:
            spec = FiltrationSpec(
                kind=obj["kind"],
                k_dtm=obj.get("k_dtm"),
                k_den=obj.get("k_den"),
                m_dtm=obj.get("m_dtm", DEFAULT_M_DTM),
            )
        return cls(grid, np.asarray(obj["values"], dtype=np.float64), spec)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())

    def to_csv(self, path):
        """Write ``x,y,value`` rows (cell centers) for plotting."""
        centers = self.grid.centers()
        cols = ["x", "y", "z"][: self.grid.dim] + ["value"]
        data = np.column_stack([centers, self.values.ravel()])
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")


def make_grid(points, delta_x, padding_fraction=0.05):
    """Grid covering the padded bounding box of ``points``.

    Each side of the box is extended by ``padding_fraction`` of its length on
    both ends and split into ceil(side / delta_x) cells.
    """
    pts = as_cloud(points).points
    if not delta_x > 0:
        raise ValueError("delta_x must be positive")
    if padding_fraction < 0:
        raise ValueError("padding_fraction must be non-negative")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    side = hi - lo
    if np.any(side <= 0):
        raise GridError("point cloud has zero extent along an axis; pass an explicit GridSpec")
    lower = lo - padding_fraction * side
    extent = side * (1.0 + 2.0 * padding_fraction)
    counts = [max(1, int(math.ceil(e / delta_x - 1e-9))) for e in extent]
    return GridSpec(tuple(lower), delta_x, tuple(counts))


def grid_from_rectangle(lower, upper, delta_x=None, cells_on_short_side=100):
    """Grid on an explicit rectangle; by default dx is 1/100 of its shorter side."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    side = upper - lower
    if np.any(side <= 0):
        raise GridError("rectangle must have positive extent")
    if delta_x is None:
        delta_x = float(side.min()) / cells_on_short_side
    counts = [max(1, int(math.ceil(s / delta_x - 1e-9))) for s in side]
    return GridSpec(tuple(lower), delta_x, tuple(counts))


@numba.njit(cache=True, nogil=True)
def _rms_of_smallest(queries, points, weights, k, scale, out):
    n, dim = points.shape
    best = np.empty(k)
    for q in range(queries.shape[0]):
        for j in range(k):
            best[j] = np.inf
        for i in range(n):
            s = 0.0
            for a in range(dim):
                t = queries[q, a] - points[i, a]
                s += t * t
            r = np.sqrt(s) / weights[i]
            if r < best[k - 1]:
                j = k - 1
                while j > 0 and best[j - 1] > r:
                    best[j] = best[j - 1]
                    j -= 1
                best[j] = r
        acc = 0.0
        for j in range(k):
            acc += best[j] * best[j]
        out[q] = scale * np.sqrt(acc / k)


@numba.njit(cache=True, nogil=True)
def _eval_tiles(queries, points, weights, k, scale, order, offsets, out):
    """Evaluate tile by tile; ``order[offsets[t]:offsets[t+1]]`` are the queries of tile t."""
    n, dim = points.shape
    dc = np.empty(n)
    upper = np.empty(n)
    for t in range(offsets.shape[0] - 1):
        members = order[offsets[t]:offsets[t + 1]]
        lo = queries[members[0]].copy()
        hi = queries[members[0]].copy()
        for m in members:
            for a in range(dim):
                lo[a] = min(lo[a], queries[m, a])
                hi[a] = max(hi[a], queries[m, a])
        half_diag = 0.0
        for a in range(dim):
            half_diag += (hi[a] - lo[a]) ** 2
        half_diag = 0.5 * np.sqrt(half_diag) * (1 + 1e-12)
        for i in range(n):
            s = 0.0
            for a in range(dim):
                u = 0.5 * (lo[a] + hi[a]) - points[i, a]
                s += u * u
            dc[i] = np.sqrt(s)
            upper[i] = (dc[i] + half_diag) / weights[i]
        # every query in the tile has at least k ratios below this bound
        bound = np.partition(upper, k - 1)[k - 1] * (1 + 1e-9) + 1e-300
        cand = np.empty(n, dtype=np.int64)
        n_cand = 0
        for i in range(n):
            if max(dc[i] - half_diag, 0.0) / weights[i] <= bound:
                cand[n_cand] = i
                n_cand += 1
        cand = cand[:n_cand]
        tile_out = np.empty(members.shape[0])
        _rms_of_smallest(queries[members], points[cand], weights[cand], k, scale, tile_out)
        for j in range(members.shape[0]):
            out[members[j]] = tile_out[j]


def _tile_groups(queries, tile_side):
    keys = np.floor((queries - queries.min(axis=0)) / tile_side).astype(np.int64)
    order = np.lexsort(keys.T[::-1])
    sorted_keys = keys[order]
    breaks = np.flatnonzero(np.any(np.diff(sorted_keys, axis=0) != 0, axis=1)) + 1
    offsets = np.concatenate([[0], breaks, [len(queries)]]).astype(np.int64)
    return order.astype(np.int64), offsets


def evaluate_ratios(points, weights, k, scale, queries, tile_side=None, n_jobs=1):
    """Exact ``scale * RMS`` of the k smallest ``dist(q, X_i) / w_i`` per query.

    The result does not depend on ``tile_side`` or ``n_jobs``. Pruning only
    removes points that cannot enter the k smallest, and the k survivors are
    summed in ascending order, so every query sees identical arithmetic.
    """
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    points = np.ascontiguousarray(points, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    nq = len(queries)
    out = np.empty(nq)
    if nq == 0:
        return out
    if nq * len(points) <= _BRUTE_FORCE_WORK:
        _rms_of_smallest(queries, points, weights, k, float(scale), out)
        return out
    if tile_side is None:
        extent = float(np.max(queries.max(axis=0) - queries.min(axis=0))) or 1.0
        n_tiles = max(1.0, nq / _TILE_QUERIES)
        tile_side = extent / n_tiles ** (1.0 / queries.shape[1])
    order, offsets = _tile_groups(queries, tile_side)
    if n_jobs is None or n_jobs == 1:
        _eval_tiles(queries, points, weights, k, float(scale), order, offsets, out)
        return out
    n_tiles = len(offsets) - 1
    workers = None if n_jobs in (-1, 0) else int(n_jobs)
    n_chunks = min(n_tiles, 4 * (workers or 8))
    cuts = np.linspace(0, n_tiles, n_chunks + 1).astype(np.int64)

    def work(c):
        sub = offsets[cuts[c]:cuts[c + 1] + 1]
        _eval_tiles(queries, points, weights, k, float(scale), order, sub, out)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(work, range(n_chunks)))
    return out


def _same_cloud(index, profile):
    if profile.cloud is index.cloud:
        return
    a, b = profile.cloud.points, index.points
    if a.shape != b.shape or not np.array_equal(a, b):
        raise CloudMismatch("density profile was built from a different point cloud")


def _maybe_scalar(x, dim, values):
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1 and (x.size == dim):
        return float(values[0])
    return values


def eval_dtm(index, x, k_dtm):
    """Empirical distance-to-measure: RMS of the k_dtm smallest distances to the data."""
    k_dtm = check_neighbor_count(k_dtm, index.n_samples, name="k_dtm")
    q = check_query(x, index.dim)
    vals = evaluate_ratios(index.points, np.ones(index.n_samples), k_dtm, 1.0, q)
    return _maybe_scalar(x, index.dim, vals)


def eval_distance(index, x):
    return eval_dtm(index, x, 1)


def eval_rdad(index, profile, x, k_dtm):
    """Empirical RDAD: c_norm times the RMS of the k_dtm smallest ratios dist(x, X_i)/d_i.

    The order statistics are taken over the ratios, not over raw distances.
    """
    _same_cloud(index, profile)
    k_dtm = check_neighbor_count(k_dtm, index.n_samples, name="k_dtm")
    q = check_query(x, index.dim)
    vals = evaluate_ratios(index.points, profile.d, k_dtm, profile.c_norm, q)
    return _maybe_scalar(x, index.dim, vals)


def eval_dad(index, profile, x):
    """Empirical DAD: min_i c_norm * dist(x, X_i) / d_i."""
    return eval_rdad(index, profile, x, 1)


def _evaluator_inputs(cloud, spec):
    """Resolve ``spec`` against ``cloud``; return (spec, weights, scale, profile)."""
    cloud = as_cloud(cloud)
    spec = spec.resolve(len(cloud))
    index = NeighborIndex(cloud)
    if spec.uses_density:
        profile = density_profile(index, spec.k_den)
        return spec, profile.d, profile.c_norm, profile
    return spec, np.ones(len(cloud)), 1.0, None


def build_field(cloud, spec, grid, n_jobs=1):
    """Evaluate the filtration function of ``spec`` at every cell center of ``grid``."""
    cloud = as_cloud(cloud)
    if grid.dim != cloud.dim:
        raise ValueError("grid and cloud dimensions differ")
    spec, weights, scale, _ = _evaluator_inputs(cloud, spec)
    centers = grid.centers()
    tile_side = 8 * grid.delta_x
    values = evaluate_ratios(cloud.points, weights, spec.k_dtm, scale, centers, tile_side=tile_side, n_jobs=n_jobs)
    return ScalarField(grid, values, spec)


class DensityAwareDistance(TransformerMixin, BaseEstimator):
    """Fit a filtration function to a sample and evaluate it anywhere.

    Parameters
    ----------
    kind : {'rdad', 'dad', 'dtm', 'distance'}
    k_dtm : int or None
        Number of smallest ratios averaged. ``None`` means round(m_dtm * N).
    k_den : int or None
        Neighbor rank for the density estimate. ``None`` means ceil((log10 N)^2).
    m_dtm : float
        Mass fraction used when ``k_dtm`` is None.
    n_jobs : int
        Threads used for evaluation; results do not depend on it.

    Attributes
    ----------
    spec_ : FiltrationSpec
        Filtration parameters with the neighbor counts actually used.
    profile_ : DensityProfile or None
    """

    def __init__(self, kind="rdad", k_dtm=None, k_den=None, m_dtm=DEFAULT_M_DTM, n_jobs=1):
        self.kind = kind
        self.k_dtm = k_dtm
        self.k_den = k_den
        self.m_dtm = m_dtm
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        cloud = as_cloud(X)
        spec = FiltrationSpec(self.kind, self.k_dtm, self.k_den, self.m_dtm)
        self.spec_, self.weights_, self.scale_, self.profile_ = _evaluator_inputs(cloud, spec)
        self.cloud_ = cloud
        self.n_features_in_ = cloud.dim
        return self

    def evaluate(self, X):
        """Filtration values at the query points, shape (n_queries,)."""
        check_is_fitted(self, "spec_")
        q = check_query(X, self.n_features_in_)
        return evaluate_ratios(self.cloud_.points, self.weights_, self.spec_.k_dtm, self.scale_, q, n_jobs=self.n_jobs)

    def transform(self, X):
        return self.evaluate(X)[:, None]

    def field(self, grid):
        """Evaluate on every cell center of ``grid``."""
        check_is_fitted(self, "spec_")
        values = evaluate_ratios(
            self.cloud_.points,
            self.weights_,
            self.spec_.k_dtm,
            self.scale_,
            grid.centers(),
            tile_side=8 * grid.delta_x,
            n_jobs=self.n_jobs,
        )
        return ScalarField(grid, values, self.spec_)


def lipschitz_bound(profile):
    """c_norm * max_i 1/d_i, a Lipschitz constant of the empirical DAD and RDAD."""
    return profile.c_norm * float(np.max(1.0 / profile.d))


__all__ = [
    "KINDS",
    "FiltrationSpec",
    "GridSpec",
    "ScalarField",
    "DensityAwareDistance",
    "build_field",
    "default_k_den",
    "default_k_dtm",
    "eval_dad",
    "eval_distance",
    "eval_dtm",
    "eval_rdad",
    "evaluate_ratios",
    "grid_from_rectangle",
    "lipschitz_bound",
    "make_grid",
]
