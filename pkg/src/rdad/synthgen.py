"""Seeded generators for the two-square and Voronoi datasets.

Every generator takes a :class:`numpy.random.Generator` (or anything accepted
by :func:`numpy.random.default_rng`) and is a pure function of its parameters
and that stream.
"""
from dataclasses import asdict, dataclass, field, replace
import csv

import numpy as np
from scipy.spatial import Delaunay, QhullError

from .neighbors import PointCloud

OUTLIER_PADDING = 0.05
_MAX_SITE_RETRIES = 10


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


@dataclass(frozen=True)
class TwoSquareParams:
    """Two square annuli. Radii are half side lengths of the inner and outer squares."""

    centers: tuple = ((0.0, 0.0), (4.0, 0.0))
    masses: tuple = (0.5, 0.5)
    inner: tuple = (1.0, 1.0 / 3.0)
    outer: tuple = (1.4, 1.4 / 3.0)
    sigmas: tuple = None
    n_outliers: int = 0
    n: int = 5000

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float)
        if len(self.centers) != len(masses) or len(self.inner) != len(masses) or len(self.outer) != len(masses):
            raise ValueError("centers, masses and radii must have equal length")
        if np.any(masses < 0) or not np.isclose(masses.sum(), 1.0):
            raise ValueError("masses must be non-negative and sum to 1")
        for r, R in zip(self.inner, self.outer):
            if not 0 < r < R:
                raise ValueError(f"need 0 < r < R, got r={r}, R={R}")
        if self.sigmas is not None:
            if len(self.sigmas) != len(masses) or any(s < 0 for s in self.sigmas):
                raise ValueError("sigmas must be non-negative, one per annulus")
        if self.n_outliers < 0 or self.n < 1:
            raise ValueError("n must be positive and n_outliers non-negative")


@dataclass(frozen=True)
class VoronoiParams:
    """Voronoi edge sample; ``crop`` is the half-widths (x0, y0) of the kept rectangle."""

    n_sites: int = 200
    n_super: int = 20000
    p_outlier: float = 0.002
    scale: float = 1.0
    y_plus: float = 2.0
    sigma_0: float = 0.01
    crop: tuple = (3.0, 1.0)

    def __post_init__(self):
        if not 0 <= self.p_outlier < 1:
            raise ValueError("p_outlier must lie in [0, 1)")
        if self.scale <= 0 or self.y_plus <= 0 or self.sigma_0 < 0 or min(self.crop) <= 0:
            raise ValueError("scales must be positive")
        if self.n_sites < 3 or self.n_super < 1:
            raise ValueError("need at least 3 sites and 1 sample point")

    @property
    def crop_rectangle(self):
        x0, y0 = self.crop
        return (-x0, -y0), (x0, y0)


TWO_SQUARE_PRESETS = {
    "david-goliath": TwoSquareParams(masses=(0.4, 0.6), inner=(1.0, 0.1), outer=(1.1, 0.12), n=500),
    "antman": TwoSquareParams(),
    "antman-noisy": TwoSquareParams(sigmas=(0.15, 0.05)),
    "antman-outliers": TwoSquareParams(n_outliers=8),
}

VORONOI_PRESETS = {
    "voronoi-noisy": VoronoiParams(),
    "voronoi-full": VoronoiParams(),
}

# grid spacing used with each preset
PRESET_DELTA_X = {
    "david-goliath": 0.02,
    "antman": 0.02,
    "antman-noisy": 0.02,
    "antman-outliers": 0.02,
    "voronoi-noisy": 0.01,
    "voronoi-full": 0.01,
    "towers": 0.26,
}

TOWER_RECTANGLE = ((-126.0, 23.9), (-65.8, 50.0))


def sample_square_annulus(center, r, R, n, rng=None):
    """``n`` points uniform (by area) on max(|x - cx|, |y - cy|) in [r, R]."""
    if not 0 < r < R:
        raise ValueError(f"need 0 < r < R, got r={r}, R={R}")
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = _rng(rng)
    center = np.asarray(center, dtype=float)
    out = np.empty((0, 2))
    accept_rate = 1.0 - (r / R) ** 2
    while len(out) < n:
        batch = int((n - len(out)) / accept_rate * 1.1) + 16
        cand = rng.uniform(-R, R, size=(batch, 2))
        cand = cand[np.max(np.abs(cand), axis=1) >= r]
        out = np.vstack([out, cand])
    return PointCloud(out[:n] + center, np.full(n, "signal", dtype=object))


def _padded_box(points, padding=OUTLIER_PADDING):
    lo, hi = points.min(axis=0), points.max(axis=0)
    side = hi - lo
    return lo - padding * side, hi + padding * side


def add_outliers(cloud, n_out, region, rng=None):
    """Append ``n_out`` points uniform on the rectangle ``region = (lower, upper)``."""
    if n_out < 0:
        raise ValueError("n_out must be non-negative")
    lower, upper = (np.asarray(v, dtype=float) for v in region)
    if np.any(upper <= lower):
        raise ValueError("outlier region is empty")
    if n_out == 0:
        return cloud
    rng = _rng(rng)
    pts = rng.uniform(lower, upper, size=(n_out, len(lower)))
    return cloud.concat(PointCloud(pts, np.full(n_out, "outlier", dtype=object)))


def gen_two_square(params, rng=None):
    """Two-square dataset: multinomial split, uniform annuli, optional noise and outliers.

    Outliers are uniform on the bounding box of the annulus sample padded by 5%
    per side, and are added on top of the ``n`` annulus points.
    """
    rng = _rng(rng)
    counts = rng.multinomial(params.n, params.masses)
    parts = []
    for k, count in enumerate(counts):
        part = sample_square_annulus(params.centers[k], params.inner[k], params.outer[k], int(count), rng)
        pts = part.points
        if params.sigmas is not None and params.sigmas[k] > 0:
            pts = pts + rng.normal(scale=params.sigmas[k], size=pts.shape)
        parts.append(pts)
    pts = np.vstack(parts)
    cloud = PointCloud(pts, np.full(len(pts), "signal", dtype=object))
    if params.n_outliers:
        cloud = add_outliers(cloud, params.n_outliers, _padded_box(pts), rng)
    return cloud


# ---------------------------------------------------------------------------
# Voronoi


def _clip(poly, normal, offset):
    """Clip a convex polygon to {x : normal . x <= offset}."""
    if len(poly) == 0:
        return poly
    s = poly @ normal - offset
    out = []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        sa, sb = s[i], s[(i + 1) % n]
        if sa <= 0:
            out.append(a)
        if (sa < 0 < sb) or (sb < 0 < sa):
            out.append(a + (b - a) * (sa / (sa - sb)))
    return np.array(out) if out else np.empty((0, 2))


def voronoi_cells(sites, box):
    """Voronoi cells of ``sites`` intersected with the rectangle ``box``.

    Each cell is the box clipped by the bisector half-planes of the site's
    Delaunay neighbors. Returns a list of (k, 2) counter-clockwise polygons.
    """
    sites = np.asarray(sites, dtype=float)
    (x_lo, y_lo), (x_hi, y_hi) = box
    rect = np.array([[x_lo, y_lo], [x_hi, y_lo], [x_hi, y_hi], [x_lo, y_hi]])
    tri = Delaunay(sites)
    indptr, indices = tri.vertex_neighbor_vertices
    cells = []
    for i, s in enumerate(sites):
        poly = rect
        for j in indices[indptr[i]:indptr[i + 1]]:
            normal = sites[j] - s
            offset = 0.5 * (sites[j] @ sites[j] - s @ s)
            poly = _clip(poly, normal, offset)
        cells.append(poly)
    return cells


def _perimeter_sample(poly, u):
    """Points at arc-length fractions ``u`` along the closed polygon boundary."""
    edges = np.roll(poly, -1, axis=0) - poly
    lengths = np.sqrt(np.sum(edges * edges, axis=1))
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    s = u * cum[-1]
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(poly) - 1)
    t = (s - cum[k]) / np.where(lengths[k] > 0, lengths[k], 1.0)
    return poly[k] + t[:, None] * edges[k]


@dataclass
class VoronoiSample:
    cloud: PointCloud
    sites: np.ndarray
    cells: list = field(repr=False)
    n_replaced: int = 0


def _draw_sites(params, rng):
    x = rng.laplace(0.0, params.scale, size=params.n_sites)
    y = rng.uniform(-params.y_plus, params.y_plus, size=params.n_sites)
    return np.column_stack([x, y])


def gen_voronoi_sample(params, rng=None):
    """Like :func:`gen_voronoi` but also returns the sites and clipped cells."""
    rng = _rng(rng)
    for attempt in range(_MAX_SITE_RETRIES):
        sites = _draw_sites(params, rng)
        box = (
            (sites[:, 0].min() - 4 * params.scale, -params.y_plus),
            (sites[:, 0].max() + 4 * params.scale, params.y_plus),
        )
        try:
            cells = voronoi_cells(sites, box)
        except QhullError:
            # degenerate sites; redraw from a child stream
            rng = np.random.default_rng(rng.integers(2**63))
            continue
        if all(len(c) >= 3 for c in cells):
            break
        rng = np.random.default_rng(rng.integers(2**63))
    else:
        raise RuntimeError("could not draw non-degenerate Voronoi sites")

    which = rng.integers(0, len(cells), size=params.n_super)
    u = rng.uniform(0.0, 1.0, size=params.n_super)
    pts = np.empty((params.n_super, 2))
    for c in np.unique(which):
        sel = which == c
        pts[sel] = _perimeter_sample(cells[c], u[sel])
    if params.sigma_0 > 0:
        sigma = params.sigma_0 * np.exp(np.abs(pts[:, 0]) / params.scale)
        pts = pts + rng.normal(size=pts.shape) * sigma[:, None]
    labels = np.full(params.n_super, "signal", dtype=object)
    n_out = int(np.floor(params.p_outlier * params.n_super))
    lower, upper = params.crop_rectangle
    if n_out:
        idx = rng.choice(params.n_super, size=n_out, replace=False)
        pts[idx] = rng.uniform(lower, upper, size=(n_out, 2))
        labels[idx] = "outlier"
    keep = np.all((pts >= lower) & (pts <= upper), axis=1)
    return VoronoiSample(PointCloud(pts[keep], labels[keep]), sites, cells, n_out)


def gen_voronoi(params, rng=None):
    """Noisy sample of Voronoi cell boundaries cropped to a rectangle.

    Sites have Laplace(scale) x-coordinates and uniform y in [-y_plus, y_plus].
    Each super-sample point picks a cell uniformly and a uniform point on its
    clipped boundary, then gets Gaussian noise with standard deviation
    ``sigma_0 * exp(|x| / scale)``. A ``p_outlier`` fraction is replaced by
    uniform points in the crop rectangle before cropping.
    """
    return gen_voronoi_sample(params, rng).cloud


def generate(preset, rng=None, **overrides):
    """Generate a dataset by preset name, with optional parameter overrides."""
    if preset in TWO_SQUARE_PRESETS:
        return gen_two_square(replace(TWO_SQUARE_PRESETS[preset], **overrides), rng)
    if preset in VORONOI_PRESETS:
        return gen_voronoi(replace(VORONOI_PRESETS[preset], **overrides), rng)
    raise KeyError(f"unknown preset {preset!r}")


def preset_params(preset, **overrides):
    if preset in TWO_SQUARE_PRESETS:
        return replace(TWO_SQUARE_PRESETS[preset], **overrides)
    if preset in VORONOI_PRESETS:
        return replace(VORONOI_PRESETS[preset], **overrides)
    raise KeyError(f"unknown preset {preset!r}")


def params_dict(params):
    return {"generator": type(params).__name__, **asdict(params)}


def write_points_csv(cloud, path):
    """Write ``x,y,label`` rows."""
    labels = cloud.label_array()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "label"])
        for (x, y), lab in zip(cloud.points, labels):
            writer.writerow([repr(float(x)), repr(float(y)), lab])


def read_points_csv(path, x_col="x", y_col="y", label_col="label"):
    """Read a points CSV; the label column is optional."""
    xs, ys, labels = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for col in (x_col, y_col):
            if col not in fields:
                raise KeyError(f"column {col!r} not found in {path}")
        has_label = label_col in fields
        for row in reader:
            xs.append(float(row[x_col]))
            ys.append(float(row[y_col]))
            labels.append(row[label_col] if has_label else "signal")
    if not xs:
        return None
    return PointCloud(np.column_stack([xs, ys]), np.array(labels, dtype=object))


def preset_sampler(preset, **overrides):
    """``sampler(n, rng)`` drawing fresh data of total size n from a preset.

    For two-square presets the outliers count toward n. Voronoi samples have a
    random size after cropping; draws are pooled and subsampled to exactly n.
    """
    params = preset_params(preset, **overrides)
    if isinstance(params, TwoSquareParams):
        def sampler(n, rng):
            return gen_two_square(replace(params, n=n - params.n_outliers), rng)

        return sampler

    from .inference import exact_size_sampler

    return exact_size_sampler(lambda rng: gen_voronoi(params, rng))
