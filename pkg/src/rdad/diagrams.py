"""Bottleneck distance between persistence diagrams and the significance rule."""
from dataclasses import dataclass
import csv
import itertools

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .cubical import PersistenceDiagram

BRUTE_FORCE_MAX_POINTS = 8


def _as_pairs(diagram, dim):
    if isinstance(diagram, PersistenceDiagram):
        pairs = diagram.in_dim(dim)
    else:
        pairs = np.asarray(diagram, dtype=np.float64).reshape(-1, 2)
    # diagonal points carry no information
    return pairs[pairs[:, 1] > pairs[:, 0]]


def _split_essential(pairs):
    inf = np.isinf(pairs[:, 1])
    return pairs[~inf], np.sort(pairs[inf, 0])


def _essential_cost(a, b):
    """Sorted matching of births of infinite points (optimal on a line)."""
    if a.size != b.size:
        return np.inf
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)))


def _sup_dist(P, Q):
    return np.maximum(np.abs(P[:, None, 0] - Q[None, :, 0]), np.abs(P[:, None, 1] - Q[None, :, 1]))


def _covers(adj, rows):
    """True when the bipartite graph restricted to ``rows`` matches every one of them."""
    if rows.size == 0:
        return True
    sub = csr_matrix(adj[rows])
    match = maximum_bipartite_matching(sub, perm_type="column")
    return bool(np.all(match >= 0))


def _feasible(dist, half_p, half_q, delta):
    """Is there a matching of cost <= delta?

    Points whose half-persistence exceeds ``delta`` must be matched off the
    diagonal. A matching covering both such sets exists iff one covers each
    (Mendelsohn-Dulmage).
    """
    adj = dist <= delta
    big_p = np.flatnonzero(half_p > delta)
    big_q = np.flatnonzero(half_q > delta)
    return _covers(adj, big_p) and _covers(adj.T, big_q)


def _finite_bottleneck(P, Q):
    if P.size == 0 and Q.size == 0:
        return 0.0
    half_p = (P[:, 1] - P[:, 0]) / 2
    half_q = (Q[:, 1] - Q[:, 0]) / 2
    if P.size == 0:
        return float(half_q.max())
    if Q.size == 0:
        return float(half_p.max())
    dist = _sup_dist(P, Q)
    # pairs farther apart than both diagonal costs never determine the optimum
    useful = dist <= np.maximum(half_p[:, None], half_q[None, :])
    candidates = np.unique(np.concatenate([[0.0], half_p, half_q, dist[useful]]))
    lo, hi = 0, len(candidates) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _feasible(dist, half_p, half_q, candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])


def bottleneck(P, Q, dim=1):
    """Exact bottleneck distance between the dimension-``dim`` parts of two diagrams.

    ``P`` and ``Q`` may be :class:`PersistenceDiagram` objects or (n, 2) arrays
    of (birth, death). Infinite deaths follow inf - inf = 0 and inf - x = inf,
    so diagrams with different numbers of essential points are infinitely far
    apart.
    """
    P_fin, P_inf = _split_essential(_as_pairs(P, dim))
    Q_fin, Q_inf = _split_essential(_as_pairs(Q, dim))
    ess = _essential_cost(P_inf, Q_inf)
    if np.isinf(ess):
        return np.inf
    return max(ess, _finite_bottleneck(P_fin, Q_fin))


def _pair_cost(p, q):
    if np.isinf(p[1]) or np.isinf(q[1]):
        if np.isinf(p[1]) and np.isinf(q[1]):
            return abs(p[0] - q[0])
        return np.inf
    return max(abs(p[0] - q[0]), abs(p[1] - q[1]))


def brute_force_bottleneck(P, Q, dim=1):
    """Bottleneck distance by enumerating every partial matching.

    Intended as a test oracle; limited to 8 off-diagonal points in total.
    """
    P = _as_pairs(P, dim)
    Q = _as_pairs(Q, dim)
    if len(P) + len(Q) > BRUTE_FORCE_MAX_POINTS:
        raise ValueError(f"brute force is limited to {BRUTE_FORCE_MAX_POINTS} points, got {len(P) + len(Q)}")
    diag_p = [(p[1] - p[0]) / 2 for p in P]
    diag_q = [(q[1] - q[0]) / 2 for q in Q]
    best = np.inf
    n, m = len(P), len(Q)
    # for each P point choose a Q partner or the diagonal (None)
    for choice in itertools.product(*[[None] + list(range(m)) for _ in range(n)]):
        used = [c for c in choice if c is not None]
        if len(used) != len(set(used)):
            continue
        cost = 0.0
        for i, c in enumerate(choice):
            cost = max(cost, diag_p[i] if c is None else _pair_cost(P[i], Q[c]))
        for j in range(m):
            if j not in used:
                cost = max(cost, diag_q[j])
        best = min(best, cost)
    return float(best)


def significant_points(diagram, dim, r):
    """Points of dimension ``dim`` strictly above the line death = birth + 2r."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    pts = [p for p in diagram.points if p.dim == dim]
    return [p for p in pts if np.isinf(p.death) or p.death - p.birth > 2 * r]


def significance_mask(diagram, dim, r):
    pers = diagram.deaths - diagram.births
    return (diagram.dims == dim) & (pers > 2 * r)


@dataclass(frozen=True)
class SignificanceReport:
    diagram: PersistenceDiagram
    dim: int
    radius: float

    @property
    def mask(self):
        return significance_mask(self.diagram, self.dim, self.radius)

    def to_csv(self, path):
        """Write ``dim,birth,death,persistence,death_x,death_y`` rows."""
        d = self.diagram
        pos = d.death_positions()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dim", "birth", "death", "persistence", "death_x", "death_y"])
            for k in np.flatnonzero(self.mask):
                death = d.deaths[k]
                loc = ["", ""] if np.isnan(pos[k, 0]) else [repr(float(v)) for v in pos[k]]
                writer.writerow(
                    [
                        int(d.dims[k]),
                        repr(float(d.births[k])),
                        "inf" if np.isinf(death) else repr(float(death)),
                        "inf" if np.isinf(death) else repr(float(death - d.births[k])),
                        *loc,
                    ]
                )
