"""Bootstrap confidence radii for persistence diagrams.

A replicate draws a new sample (with replacement from the data, or fresh from
a generator), evaluates the filtration on the *same* grid as the observed
sample, and records the bottleneck distance between the two diagrams. The
confidence radius is an empirical (1 - alpha) quantile of those distances.

Replicate b always uses the seed sequence ``SeedSequence(seed, spawn_key=(b, attempt))``,
so results do not depend on execution order or thread count.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
import json
import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .cubical import build_complex, persistence
from .diagrams import bottleneck, significant_points
from .exceptions import DuplicateOverload
from .filtration import DEFAULT_M_DTM, FiltrationSpec, GridSpec, build_field, make_grid
from .neighbors import PointCloud, as_cloud

MODES = ("subsample", "oracle")
MAX_REDRAWS = 20


@dataclass(frozen=True)
class Pipeline:
    """Cloud -> field on a fixed grid -> persistence diagram."""

    spec: FiltrationSpec
    grid: GridSpec
    p: int = 11
    method: str = "matrix"

    def field(self, cloud):
        return build_field(cloud, self.spec, self.grid)

    def diagram(self, cloud):
        return persistence(build_complex(self.field(cloud)), p=self.p, method=self.method)


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 100
    alpha: float = 0.05
    seed: int = 0
    mode: str = "subsample"
    dim: int = 1

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be at least 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


@dataclass
class BootstrapResult:
    radius: float
    distances: np.ndarray
    config: BootstrapConfig
    reseeded_replicates: int = 0
    grid: GridSpec = field(default=None, repr=False)

    def to_dict(self):
        return {
            "radius": float(self.radius),
            "alpha": self.config.alpha,
            "B": self.config.B,
            "dim": self.config.dim,
            "mode": self.config.mode,
            "seed": self.config.seed,
            "distances": [float(d) for d in self.distances],
            "reseeded_replicates": int(self.reseeded_replicates),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, obj):
        cfg = BootstrapConfig(
            B=obj["B"], alpha=obj["alpha"], seed=obj.get("seed", 0), mode=obj.get("mode", "subsample"), dim=obj["dim"]
        )
        return cls(obj["radius"], np.asarray(obj["distances"], dtype=float), cfg, obj.get("reseeded_replicates", 0))


def quantile_radius(distances, alpha):
    """Order statistic of rank ceil((1 - alpha) B) among the B sorted distances."""
    d = np.sort(np.asarray(distances, dtype=float))
    if d.size == 0:
        raise ValueError("no distances")
    rank = int(math.ceil((1.0 - alpha) * d.size - 1e-9))
    return float(d[min(max(rank, 1), d.size) - 1])


def replicate_rng(seed, b, attempt=0):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b, attempt)))


def _run_replicates(draw, reference, pipeline, cfg, n_jobs):
    """``draw(rng) -> PointCloud``; returns (distances, number of redraws)."""
    redraws = np.zeros(cfg.B, dtype=np.int64)

    def one(b):
        for attempt in range(MAX_REDRAWS):
            sample = draw(replicate_rng(cfg.seed, b, attempt))
            try:
                dgm = pipeline.diagram(sample)
            except DuplicateOverload:
                redraws[b] += 1
                continue
            return bottleneck(reference, dgm, cfg.dim)
        raise DuplicateOverload(f"replicate {b} hit duplicate overload {MAX_REDRAWS} times")

    if n_jobs is None or n_jobs == 1:
        distances = [one(b) for b in range(cfg.B)]
    else:
        workers = None if n_jobs in (-1, 0) else int(n_jobs)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            distances = list(pool.map(one, range(cfg.B)))
    return np.asarray(distances, dtype=float), int(np.count_nonzero(redraws))


def subsample_bootstrap(cloud, pipeline, cfg, reference=None, resample=None, n_jobs=1):
    """Resample N points with replacement B times and return the confidence radius.

    Parameters
    ----------
    cloud : PointCloud or array-like
    pipeline : Pipeline
        Its grid is shared by the observed sample and every replicate.
    cfg : BootstrapConfig
    reference : PersistenceDiagram, optional
        Diagram of ``cloud``; computed when omitted.
    resample : callable, optional
        ``resample(rng, n) -> indices``; defaults to n draws with replacement.
    """
    if cfg.mode != "subsample":
        raise ValueError("config mode must be 'subsample'")
    cloud = as_cloud(cloud)
    if reference is None:
        reference = pipeline.diagram(cloud)
    n = len(cloud)
    if resample is None:
        def resample(rng, n):
            return rng.integers(0, n, size=n)

    def draw(rng):
        return cloud.take(resample(rng, n))

    distances, redraws = _run_replicates(draw, reference, pipeline, cfg, n_jobs)
    return BootstrapResult(quantile_radius(distances, cfg.alpha), distances, cfg, redraws, pipeline.grid)


def oracle_bootstrap(sampler, n, pipeline, cfg, observed=None, reference=None, n_jobs=1):
    """Confidence radius from fresh size-``n`` samples of the generating model.

    ``sampler(n, rng) -> PointCloud`` must include any corruption applied to
    the observed data. When ``observed`` is omitted it is drawn from the
    sampler with replicate index -1.
    """
    if cfg.mode != "oracle":
        raise ValueError("config mode must be 'oracle'")
    if reference is None:
        if observed is None:
            observed = sampler(n, replicate_rng(cfg.seed, 2**32))
        reference = pipeline.diagram(as_cloud(observed))

    def draw(rng):
        return sampler(n, rng)

    distances, redraws = _run_replicates(draw, reference, pipeline, cfg, n_jobs)
    return BootstrapResult(quantile_radius(distances, cfg.alpha), distances, cfg, redraws, pipeline.grid)


def exact_size_sampler(generator):
    """Adapt ``generator(rng) -> PointCloud`` with variable output size to ``sampler(n, rng)``.

    Draws are pooled until at least n points exist, then n of them are kept
    uniformly at random.
    """

    def sampler(n, rng):
        pool = generator(rng)
        while len(pool) < n:
            pool = pool.concat(generator(rng))
        return pool.take(np.sort(rng.choice(len(pool), size=n, replace=False)))

    return sampler


class BootstrapSignificance(BaseEstimator):
    """Persistence diagram of a sample plus its bootstrap significance threshold.

    Parameters
    ----------
    kind, k_dtm, k_den, m_dtm
        Filtration parameters, see :class:`~rdad.filtration.DensityAwareDistance`.
    delta_x : float
        Grid spacing; ignored when ``grid`` is given.
    padding : float
        Fraction of each bounding-box side added on every side of the grid.
    grid : GridSpec, optional
    p : int
        Coefficient field characteristic.
    n_bootstrap, alpha, dim
        Replicate count, significance level and homology dimension.
    mode : {'subsample', 'oracle'}
    sampler : callable, optional
        ``sampler(n, rng) -> PointCloud``; required for ``mode='oracle'``.
    random_state : int
    n_jobs : int

    Attributes
    ----------
    grid_ : GridSpec
    diagram_ : PersistenceDiagram
    result_ : BootstrapResult
    radius_ : float
    significant_ : list of PersistencePoint
    """

    def __init__(
        self,
        kind="rdad",
        k_dtm=None,
        k_den=None,
        m_dtm=DEFAULT_M_DTM,
        delta_x=0.02,
        padding=0.05,
        grid=None,
        p=11,
        n_bootstrap=100,
        alpha=0.05,
        dim=1,
        mode="subsample",
        sampler=None,
        random_state=0,
        n_jobs=1,
    ):
        self.kind = kind
        self.k_dtm = k_dtm
        self.k_den = k_den
        self.m_dtm = m_dtm
        self.delta_x = delta_x
        self.padding = padding
        self.grid = grid
        self.p = p
        self.n_bootstrap = n_bootstrap
        self.alpha = alpha
        self.dim = dim
        self.mode = mode
        self.sampler = sampler
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        cloud = X if isinstance(X, PointCloud) else PointCloud(X)
        grid = self.grid if self.grid is not None else make_grid(cloud, self.delta_x, self.padding)
        pipeline = Pipeline(FiltrationSpec(self.kind, self.k_dtm, self.k_den, self.m_dtm), grid, self.p)
        cfg = BootstrapConfig(self.n_bootstrap, self.alpha, int(self.random_state), self.mode, self.dim)
        self.grid_ = grid
        self.field_ = pipeline.field(cloud)
        self.diagram_ = persistence(build_complex(self.field_), p=self.p)
        if self.mode == "subsample":
            self.result_ = subsample_bootstrap(cloud, pipeline, cfg, reference=self.diagram_, n_jobs=self.n_jobs)
        else:
            if self.sampler is None:
                raise ValueError("mode='oracle' needs a sampler")
            self.result_ = oracle_bootstrap(
                self.sampler, len(cloud), pipeline, cfg, reference=self.diagram_, n_jobs=self.n_jobs
            )
        self.radius_ = self.result_.radius
        self.significant_ = significant_points(self.diagram_, self.dim, self.radius_)
        return self

    def significant_count(self):
        check_is_fitted(self, "result_")
        return len(self.significant_)


def config_dict(cfg):
    return asdict(cfg)
