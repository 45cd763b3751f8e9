"""Sublevel persistent homology of 2-D pixel fields via cubical complexes.

Pixels are the top-dimensional cells and carry the field values; every edge
and vertex carries the minimum over the pixels that contain it. Cells live on
the interleaved grid of shape ``(2 n_x + 1, 2 n_y + 1)``: cell ``(a, b)`` has
dimension ``(a % 2) + (b % 2)`` and pixel ``(i, j)`` is cell ``(2i+1, 2j+1)``.

Two exact algorithms are provided:

``"matrix"``
    Column reduction of the boundary matrix over Z/pZ with clearing. The
    column that kills a 1-cycle is a pixel, which gives the death pixel.
``"union_find"``
    Elder-rule union-find on 8-connected pixels for dimension 0, and on the
    4-connected complement processed from the top down for dimension 1
    (planar duality). Coefficient-free; used as a fast path and as a cross
    check of the reduction.

Cells are ordered by (value, dimension, linear cell index). Diagrams do not
depend on how ties are broken; death pixels may.
"""
from dataclasses import dataclass
import csv
import math

import numba
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import is_prime
from .filtration import GridSpec, ScalarField

METHODS = ("matrix", "union_find")


@dataclass(frozen=True)
class PersistencePoint:
    dim: int
    birth: float
    death: float
    death_cell: tuple = None

    @property
    def persistence(self):
        return self.death - self.birth


class PersistenceDiagram:
    """Multiset of persistence points, stored column-wise.

    Parameters
    ----------
    dims, births, deaths : array-like
    death_cells : array-like of shape (n, 2), optional
        Pixel indices of the killing pixel, ``-1`` where undefined.
    field_char : int
    grid : GridSpec, optional
        Used to report death pixels in data coordinates.
    """

    def __init__(self, dims, births, deaths, death_cells=None, field_char=11, grid=None):
        self.dims = np.asarray(dims, dtype=np.int64).reshape(-1)
        self.births = np.asarray(births, dtype=np.float64).reshape(-1)
        self.deaths = np.asarray(deaths, dtype=np.float64).reshape(-1)
        n = self.dims.shape[0]
        if death_cells is None:
            death_cells = np.full((n, 2), -1, dtype=np.int64)
        self.death_cells = np.asarray(death_cells, dtype=np.int64).reshape(n, -1)
        self.field_char = field_char
        self.grid = grid

    @classmethod
    def from_points(cls, points, field_char=11, grid=None):
        points = list(points)
        dims = [p.dim for p in points]
        births = [p.birth for p in points]
        deaths = [p.death for p in points]
        cells = [p.death_cell if p.death_cell is not None else (-1, -1) for p in points]
        return cls(dims, births, deaths, np.array(cells, dtype=np.int64).reshape(-1, 2), field_char, grid)

    def __len__(self):
        return self.dims.shape[0]

    @property
    def points(self):
        out = []
        for d, b, e, c in zip(self.dims, self.births, self.deaths, self.death_cells):
            cell = tuple(int(v) for v in c) if c[0] >= 0 else None
            out.append(PersistencePoint(int(d), float(b), float(e), cell))
        return out

    def in_dim(self, dim):
        """(birth, death) pairs of dimension ``dim`` as an (m, 2) array."""
        mask = self.dims == dim
        return np.column_stack([self.births[mask], self.deaths[mask]])

    def restrict(self, dim):
        mask = self.dims == dim
        return PersistenceDiagram(
            self.dims[mask], self.births[mask], self.deaths[mask], self.death_cells[mask], self.field_char, self.grid
        )

    def persistences(self, dim):
        pairs = self.in_dim(dim)
        return pairs[:, 1] - pairs[:, 0]

    def death_positions(self):
        """Death-pixel centers in data coordinates; NaN where there is no death pixel."""
        pos = np.full((len(self), 2), np.nan)
        if self.grid is None:
            return pos
        has = self.death_cells[:, 0] >= 0
        lower = np.asarray(self.grid.lower)
        pos[has] = lower + (self.death_cells[has] + 0.5) * self.grid.delta_x
        return pos

    def sorted(self):
        order = np.lexsort((self.deaths, self.births, self.dims))
        return PersistenceDiagram(
            self.dims[order], self.births[order], self.deaths[order], self.death_cells[order], self.field_char, self.grid
        )

    def same_pairs(self, other):
        """True when both diagrams hold the same multiset of (dim, birth, death)."""
        a, b = self.sorted(), other.sorted()
        return (
            len(a) == len(b)
            and np.array_equal(a.dims, b.dims)
            and np.array_equal(a.births, b.births)
            and np.array_equal(a.deaths, b.deaths)
        )

    def __repr__(self):
        counts = {int(d): int(np.sum(self.dims == d)) for d in np.unique(self.dims)}
        return f"PersistenceDiagram(points_per_dim={counts}, field_char={self.field_char})"

    def to_csv(self, path, include_indices=False):
        """Write ``dim,birth,death,death_x,death_y`` rows; ``inf`` marks essential classes."""
        pos = self.death_positions()
        header = ["dim", "birth", "death", "death_x", "death_y"]
        if include_indices:
            header += ["death_i", "death_j"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for k in range(len(self)):
                has_cell = self.death_cells[k, 0] >= 0
                row = [int(self.dims[k]), repr(float(self.births[k])), _fmt_death(self.deaths[k])]
                row += [repr(float(v)) for v in pos[k]] if has_cell and self.grid is not None else ["", ""]
                if include_indices:
                    row += [int(v) for v in self.death_cells[k]] if has_cell else ["", ""]
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path, grid=None, field_char=11):
        dims, births, deaths, cells = [], [], [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                dims.append(int(row["dim"]))
                births.append(float(row["birth"]))
                deaths.append(float(row["death"]))
                if row.get("death_i"):
                    cells.append((int(row["death_i"]), int(row["death_j"])))
                elif row.get("death_x") and grid is not None:
                    x, y = float(row["death_x"]), float(row["death_y"])
                    cells.append(
                        (
                            int(math.floor((x - grid.lower[0]) / grid.delta_x)),
                            int(math.floor((y - grid.lower[1]) / grid.delta_x)),
                        )
                    )
                else:
                    cells.append((-1, -1))
        return cls(dims, births, deaths, np.array(cells, dtype=np.int64).reshape(-1, 2), field_char, grid)


def _fmt_death(d):
    return "inf" if np.isinf(d) else repr(float(d))


@dataclass(frozen=True, eq=False)
class CubicalComplex:
    """Top-cell cubical complex; ``cell_values`` has shape (2 n_x + 1, 2 n_y + 1)."""

    grid: GridSpec
    cell_values: np.ndarray

    @property
    def shape(self):
        return self.cell_values.shape

    @property
    def n_cells(self):
        return self.cell_values.size

    @property
    def pixel_values(self):
        return self.cell_values[1::2, 1::2]

    def cell_dims(self):
        a = np.arange(self.shape[0]) % 2
        b = np.arange(self.shape[1]) % 2
        return a[:, None] + b[None, :]


def _as_field(field):
    if isinstance(field, ScalarField):
        return field
    values = np.asarray(field, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("cubical persistence requires a 2-D field")
    return ScalarField(GridSpec((0.0, 0.0), 1.0, values.shape), values)


def build_complex(field):
    """Cubical complex whose pixels carry the field values.

    Each vertex and edge takes the minimum over its incident pixels.
    """
    field = _as_field(field)
    if field.grid.dim != 2:
        raise ValueError("cubical persistence requires a 2-D field")
    v = field.values
    nx, ny = v.shape
    padded = np.full((nx + 2, ny + 2), np.inf)
    padded[1:-1, 1:-1] = v
    cells = np.empty((2 * nx + 1, 2 * ny + 1))
    cells[1::2, 1::2] = v
    # vertex (2i, 2j) touches pixels (i-1..i, j-1..j)
    cells[0::2, 0::2] = np.minimum(
        np.minimum(padded[:-1, :-1], padded[1:, :-1]), np.minimum(padded[:-1, 1:], padded[1:, 1:])
    )
    # edge (2i+1, 2j) touches pixels (i, j-1) and (i, j)
    cells[1::2, 0::2] = np.minimum(padded[1:-1, :-1], padded[1:-1, 1:])
    # edge (2i, 2j+1) touches pixels (i-1, j) and (i, j)
    cells[0::2, 1::2] = np.minimum(padded[:-1, 1:-1], padded[1:, 1:-1])
    return CubicalComplex(field.grid, cells)


# ---------------------------------------------------------------------------
# boundary matrix reduction


@numba.njit(cache=True)
def _heap_push(heap, size, x):
    heap[size] = x
    i = size
    while i > 0:
        parent = (i - 1) >> 1
        if heap[parent] >= heap[i]:
            break
        heap[parent], heap[i] = heap[i], heap[parent]
        i = parent
    return size + 1


@numba.njit(cache=True)
def _heap_pop(heap, size):
    top = heap[0]
    size -= 1
    heap[0] = heap[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        child = left
        if left + 1 < size and heap[left + 1] > heap[left]:
            child = left + 1
        if heap[i] >= heap[child]:
            break
        heap[i], heap[child] = heap[child], heap[i]
        i = child
    return top, size


@numba.njit(cache=True)
def _boundary(cell, rows, cols, out_idx, out_coef):
    """Faces of cell (linear index on the interleaved grid) with orientation signs."""
    a = cell // cols
    b = cell % cols
    n = 0
    if a % 2 == 1 and b % 2 == 1:
        out_idx[0] = (a + 1) * cols + b
        out_coef[0] = 1
        out_idx[1] = (a - 1) * cols + b
        out_coef[1] = -1
        out_idx[2] = a * cols + b + 1
        out_coef[2] = -1
        out_idx[3] = a * cols + b - 1
        out_coef[3] = 1
        n = 4
    elif a % 2 == 1:
        out_idx[0] = (a + 1) * cols + b
        out_coef[0] = 1
        out_idx[1] = (a - 1) * cols + b
        out_coef[1] = -1
        n = 2
    elif b % 2 == 1:
        out_idx[0] = a * cols + b + 1
        out_coef[0] = 1
        out_idx[1] = a * cols + b - 1
        out_coef[1] = -1
        n = 2
    return n


@numba.njit(cache=True)
def _inverse_mod(x, p):
    # Fermat: x^(p-2) mod p
    result = 1
    base = x % p
    e = p - 2
    while e > 0:
        if e & 1:
            result = result * base % p
        base = base * base % p
        e >>= 1
    return result


@numba.njit(cache=True)
def _reduce(order, cell_dim, rows, cols, p):
    """Twist reduction of the filtered boundary matrix over Z/pZ.

    ``order[r]`` is the linear cell index at filtration position r. Returns
    ``pivot_of`` (position -> killing column position or -1) and ``positive``
    flags by position.
    """
    n = order.shape[0]
    pos_of = np.empty(n, dtype=np.int64)
    for r in range(n):
        pos_of[order[r]] = r
    owner = np.full(n, -1, dtype=np.int64)  # row position -> column position
    pivot_of = np.full(n, -1, dtype=np.int64)
    cleared = np.zeros(n, dtype=np.bool_)

    # reduced columns stored in a flat pool
    pool_idx = np.empty(1 << 16, dtype=np.int64)
    pool_coef = np.empty(1 << 16, dtype=np.int64)
    pool_start = np.full(n, -1, dtype=np.int64)
    pool_len = np.zeros(n, dtype=np.int64)
    pool_used = 0

    work = np.zeros(n, dtype=np.int64)
    in_heap = np.zeros(n, dtype=np.bool_)
    heap = np.empty(n, dtype=np.int64)
    face_idx = np.empty(4, dtype=np.int64)
    face_coef = np.empty(4, dtype=np.int64)

    for d in (2, 1):
        for j in range(n):
            cell = order[j]
            if cell_dim[cell] != d or cleared[j]:
                continue
            size = 0
            nf = _boundary(cell, rows, cols, face_idx, face_coef)
            for f in range(nf):
                r = pos_of[face_idx[f]]
                work[r] = (work[r] + face_coef[f]) % p
                if not in_heap[r]:
                    in_heap[r] = True
                    size = _heap_push(heap, size, r)
            pivot = -1
            while True:
                # discard zero entries from the top
                while size > 0 and work[heap[0]] == 0:
                    top, size = _heap_pop(heap, size)
                    in_heap[top] = False
                if size == 0:
                    pivot = -1
                    break
                pivot = heap[0]
                other = owner[pivot]
                if other < 0:
                    break
                start = pool_start[other]
                length = pool_len[other]
                # the stored column's pivot coefficient is its first entry
                factor = work[pivot] * _inverse_mod(pool_coef[start], p) % p
                for t in range(length):
                    r = pool_idx[start + t]
                    work[r] = (work[r] - factor * pool_coef[start + t]) % p
                    if not in_heap[r]:
                        in_heap[r] = True
                        size = _heap_push(heap, size, r)
            if pivot < 0:
                continue
            # drain the heap into a sorted (descending) column
            start = pool_used
            count = 0
            while size > 0:
                top, size = _heap_pop(heap, size)
                in_heap[top] = False
                if work[top] != 0:
                    if pool_used + count >= pool_idx.shape[0]:
                        grow = pool_idx.shape[0] * 2
                        new_idx = np.empty(grow, dtype=np.int64)
                        new_coef = np.empty(grow, dtype=np.int64)
                        new_idx[: pool_used + count] = pool_idx[: pool_used + count]
                        new_coef[: pool_used + count] = pool_coef[: pool_used + count]
                        pool_idx = new_idx
                        pool_coef = new_coef
                    pool_idx[start + count] = top
                    pool_coef[start + count] = work[top]
                    count += 1
                    work[top] = 0
            pool_start[j] = start
            pool_len[j] = count
            pool_used += count
            owner[pivot] = j
            pivot_of[pivot] = j
            cleared[pivot] = True
    return pivot_of, cleared


def _filtration_order(complex_):
    vals = complex_.cell_values.ravel()
    dims = complex_.cell_dims().ravel()
    lin = np.arange(vals.size)
    order = np.lexsort((lin, dims, vals))
    return order.astype(np.int64), dims.astype(np.int64)


def _pairs_by_matrix(complex_, p):
    order, dims = _filtration_order(complex_)
    rows, cols = complex_.shape
    pivot_of, _ = _reduce(order, dims, rows, cols, p)
    vals = complex_.cell_values.ravel()
    births_pos = np.flatnonzero(pivot_of >= 0)
    deaths_pos = pivot_of[births_pos]
    birth_cells = order[births_pos]
    death_cells = order[deaths_pos]
    pair_dims = dims[birth_cells]
    births = vals[birth_cells]
    deaths = vals[death_cells]
    # essential classes: positive cells that are never paired
    paired = np.zeros(order.size, dtype=bool)
    paired[births_pos] = True
    paired[deaths_pos] = True
    essential = order[~paired]
    return pair_dims, births, deaths, death_cells, dims[essential], vals[essential]


# ---------------------------------------------------------------------------
# union-find on pixels


@numba.njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@numba.njit(cache=True)
def _elder_sweep(order, nx, ny, eight, outside):
    """Elder-rule sweep adding pixels in ``order``.

    Returns (first pixel of the dying component, pixel that caused the merge)
    for every merge. Roots are always the earliest pixel of their component.
    With ``outside`` set, border pixels also touch a virtual component that is
    older than every pixel.
    """
    n = nx * ny
    parent = np.arange(n + 1)
    sweep_pos = np.empty(n + 1, dtype=np.int64)
    sweep_pos[n] = -1
    added = np.zeros(n + 1, dtype=np.bool_)
    added[n] = outside
    dying = np.empty(n, dtype=np.int64)
    killer = np.empty(n, dtype=np.int64)
    n_events = 0
    for pos in range(n):
        px = order[pos]
        i = px // ny
        j = px % ny
        added[px] = True
        sweep_pos[px] = pos
        for di in range(-1, 2):
            for dj in range(-1, 2):
                if di == 0 and dj == 0:
                    continue
                if not eight and di != 0 and dj != 0:
                    continue
                a = i + di
                b = j + dj
                if a < 0 or a >= nx or b < 0 or b >= ny:
                    if not outside:
                        continue
                    q = n
                else:
                    q = a * ny + b
                if not added[q]:
                    continue
                ra = _find(parent, px)
                rb = _find(parent, q)
                if ra == rb:
                    continue
                if sweep_pos[ra] < sweep_pos[rb]:
                    ra, rb = rb, ra
                dying[n_events] = ra
                killer[n_events] = px
                n_events += 1
                parent[ra] = rb
    return dying[:n_events], killer[:n_events]


def _pairs_by_union_find(complex_):
    v = complex_.pixel_values
    nx, ny = v.shape
    flat = v.ravel()
    lin = np.arange(flat.size)
    # ascending sweep, 8-connected: dimension 0
    up = np.lexsort((lin, flat)).astype(np.int64)
    born, killed = _elder_sweep(up, nx, ny, True, False)
    d0_b = flat[born]
    d0_d = flat[killed]
    # descending sweep of the complement, 4-connected, outside eldest: dimension 1
    down = np.lexsort((-lin, -flat)).astype(np.int64)
    hole_top, filler = _elder_sweep(down, nx, ny, False, True)
    d1_b = flat[filler]
    d1_d = flat[hole_top]
    d1_cells = hole_top
    root_val = flat[up[0]]
    return d0_b, d0_d, d1_b, d1_d, d1_cells, root_val


def persistence(complex_, p=11, method="matrix"):
    """Sublevel persistence diagram (dimensions 0 and 1) of a 2-D cubical complex.

    Parameters
    ----------
    complex_ : CubicalComplex or ScalarField or 2-D array
    p : int
        Prime characteristic of the coefficient field.
    method : {'matrix', 'union_find'}

    Returns
    -------
    PersistenceDiagram
        Zero-persistence pairs are dropped. Every dimension-1 point carries the
        pixel whose insertion fills the hole.
    """
    if not is_prime(p):
        raise ValueError(f"p must be prime, got {p!r}")
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if not isinstance(complex_, CubicalComplex):
        complex_ = build_complex(complex_)
    cols = complex_.shape[1]
    dims, births, deaths, cells = [], [], [], []

    if method == "matrix":
        pdims, pb, pd, pcells, edims, evals = _pairs_by_matrix(complex_, int(p))
        keep = pd > pb
        dims.append(pdims[keep])
        births.append(pb[keep])
        deaths.append(pd[keep])
        a, b = pcells[keep] // cols, pcells[keep] % cols
        is_pixel = (a % 2 == 1) & (b % 2 == 1)
        cell = np.where(is_pixel[:, None], np.column_stack([(a - 1) // 2, (b - 1) // 2]), -1)
        cell[pdims[keep] != 1] = -1
        cells.append(cell)
        dims.append(edims)
        births.append(evals)
        deaths.append(np.full(evals.shape, np.inf))
        cells.append(np.full((evals.size, 2), -1))
    else:
        d0_b, d0_d, d1_b, d1_d, d1_cells, root_val = _pairs_by_union_find(complex_)
        ny = complex_.pixel_values.shape[1]
        keep0 = d0_d > d0_b
        keep1 = d1_d > d1_b
        dims += [np.zeros(keep0.sum(), dtype=np.int64), np.ones(keep1.sum(), dtype=np.int64), np.zeros(1, dtype=np.int64)]
        births += [d0_b[keep0], d1_b[keep1], np.array([root_val])]
        deaths += [d0_d[keep0], d1_d[keep1], np.array([np.inf])]
        c1 = d1_cells[keep1]
        cells += [
            np.full((keep0.sum(), 2), -1),
            np.column_stack([c1 // ny, c1 % ny]),
            np.full((1, 2), -1),
        ]
    return PersistenceDiagram(
        np.concatenate(dims),
        np.concatenate(births),
        np.concatenate(deaths),
        np.concatenate(cells).astype(np.int64),
        field_char=int(p),
        grid=complex_.grid,
    )


def field_persistence(field, p=11, method="matrix"):
    return persistence(build_complex(field), p=p, method=method)


# ---------------------------------------------------------------------------
# brute-force oracle


def betti_at(field, t):
    """(beta_0, beta_1) of the sublevel complex {cells with value <= t}.

    beta_0 comes from union-find over vertices joined by edges in the
    sublevel set; beta_1 = beta_0 - (V - E + F).
    """
    cx = build_complex(field)
    vals = cx.cell_values
    rows, cols = vals.shape
    present = vals <= t
    dims = cx.cell_dims()
    n_v = int(np.sum(present & (dims == 0)))
    n_e = int(np.sum(present & (dims == 1)))
    n_f = int(np.sum(present & (dims == 2)))
    parent = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a in range(0, rows, 2):
        for b in range(0, cols, 2):
            if present[a, b]:
                parent[(a, b)] = (a, b)
    for a in range(rows):
        for b in range(cols):
            if dims[a, b] != 1 or not present[a, b]:
                continue
            ends = [(a - 1, b), (a + 1, b)] if a % 2 else [(a, b - 1), (a, b + 1)]
            ra, rb = find(ends[0]), find(ends[1])
            if ra != rb:
                parent[ra] = rb
    beta0 = len({find(v) for v in parent})
    chi = n_v - n_e + n_f
    return beta0, beta0 - chi


class CubicalPersistence(TransformerMixin, BaseEstimator):
    """Transform scalar fields into persistence diagrams.

    Parameters
    ----------
    p : int, default=11
        Coefficient field characteristic.
    method : {'matrix', 'union_find'}
    """

    def __init__(self, p=11, method="matrix"):
        self.p = p
        self.method = method

    def fit(self, X=None, y=None):
        if not is_prime(self.p):
            raise ValueError(f"p must be prime, got {self.p!r}")
        return self

    def transform(self, X):
        """Diagram for a single field, or a list of diagrams for a list of fields."""
        if isinstance(X, (list, tuple)):
            return [persistence(build_complex(f), self.p, self.method) for f in X]
        return persistence(build_complex(X), self.p, self.method)
