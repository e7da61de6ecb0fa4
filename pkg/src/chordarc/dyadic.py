"""Christ-David dyadic cubes on a sampled boundary.

Generation ``k`` cubes have length ``2^-k``. The top generation is a
Voronoi partition over a greedy ``2^-k``-separated net. Each finer
generation splits every parent on its own: the child centers are the
parent's center plus a greedy net over the parent's members that sit at
least ``margin * 2^-k`` away from every other cube, and members go to the
nearest child center. Nesting is therefore exact, and every cube contains
the surface ball of radius ``min(margin, 1/2) * 2^-k`` about its center.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .cloud import point_set_diameter
from .errors import ChordArcError, ScaleRangeError
from .geometry import Ball


class GridConstructionError(ChordArcError):
    pass


def sample_order(S):
    """Visiting order for net selection: heavier first, then lexicographic."""
    keys = [S.points[:, c] for c in reversed(range(S.dim))] + [-S.weights]
    return np.lexsort(keys)


def _nearest_center(points, centers, ids, tie_tol):
    """Index into ``ids`` of the nearest center; ties go to the smaller id."""
    if len(centers) == 1:
        return np.zeros(len(points), dtype=np.int64)
    k = min(2, len(centers))
    tree = cKDTree(centers)
    d, j = tree.query(points, k=k)
    best = j[:, 0].copy()
    tie = np.abs(d[:, 1] - d[:, 0]) <= tie_tol
    if tie.any():
        a, b = j[tie, 0], j[tie, 1]
        best[tie] = np.where(ids[a] <= ids[b], a, b)
    return best


def distance_to_complement(S, labels, cap):
    """For every sample, distance to the nearest sample with another label.

    Values are capped: anything ``>= cap`` comes back as ``inf``.
    """
    out = np.full(len(S), np.inf)
    P = S.points
    order = np.argsort(labels, kind="stable")
    cuts = np.flatnonzero(np.diff(labels[order])) + 1
    for M in np.split(order, cuts):
        lab = labels[M[0]]
        lo, hi = P[M].min(axis=0), P[M].max(axis=0)
        mid = 0.5 * (lo + hi)
        rad = 0.5 * float(np.linalg.norm(hi - lo)) + cap
        near = np.asarray(S.tree.query_ball_point(mid, rad), dtype=np.int64)
        others = near[labels[near] != lab] if len(near) else near
        if len(others) == 0:
            continue
        d, _ = cKDTree(P[others]).query(P[M], distance_upper_bound=cap)
        out[M] = d
    return out


@dataclass(frozen=True, eq=False)
class DyadicCube:
    grid: "DyadicGrid"
    k: int
    id: int

    @property
    def ell(self):
        return 2.0 ** (-self.k)

    @property
    def center_index(self):
        return int(self.grid._gen(self.k)["centers"][self.id])

    @property
    def center(self):
        return self.grid.S.points[self.center_index]

    @property
    def r(self):
        """``r_Q`` with ``Δ(x_Q, 2 r_Q) ⊂ Q``."""
        return self.ell * self.grid.a0 / 2

    @property
    def members(self):
        return self.grid.members(self.k, self.id)

    @property
    def sigma(self):
        return float(self.grid._gen(self.k)["sigma"][self.id])

    @property
    def parent(self):
        if self.k == self.grid.k_min:
            return None
        return DyadicCube(self.grid, self.k - 1, int(self.grid._gen(self.k)["parent"][self.id]))

    @property
    def children(self):
        if self.k == self.grid.k_max:
            return []
        kids = self.grid._gen(self.k + 1)["children_of"][self.id]
        return [DyadicCube(self.grid, self.k + 1, int(c)) for c in kids]

    def descendants(self):
        """All cubes of the grid contained in this one, this one included."""
        out = [self]
        frontier = [self]
        while frontier:
            nxt = [c for q in frontier for c in q.children]
            out.extend(nxt)
            frontier = nxt
        return out

    def surface_ball_members(self, radius=None):
        """Member samples in ``Δ(x_Q, radius)`` (default ``r_Q``)."""
        radius = self.r if radius is None else radius
        idx = self.grid.S.in_ball(self.center, radius)
        lab = self.grid._gen(self.k)["labels"]
        return idx[lab[idx] == self.id]

    def __repr__(self):
        return f"DyadicCube(k={self.k}, id={self.id}, sigma={self.sigma:.4g})"


class DyadicGrid:
    def __init__(self, S, k_min, k_max, gens, margin):
        self.S = S
        self.k_min = k_min
        self.k_max = k_max
        self.gens = gens
        self.margin = margin
        self._members = {}
        self._a0 = None

    def _gen(self, k):
        return self.gens[k - self.k_min]

    def generations(self):
        return range(self.k_min, self.k_max + 1)

    def cubes(self, k):
        return [DyadicCube(self, k, j) for j in range(len(self._gen(k)["centers"]))]

    def all_cubes(self):
        return [q for k in self.generations() for q in self.cubes(k)]

    def top_cubes(self):
        return self.cubes(self.k_min)

    def labels(self, k):
        return self._gen(k)["labels"]

    def members(self, k, j):
        key = k
        if key not in self._members:
            lab = self._gen(k)["labels"]
            order = np.argsort(lab, kind="stable")
            cuts = np.searchsorted(lab[order], np.arange(len(self._gen(k)["centers"]) + 1))
            self._members[key] = (order, cuts)
        order, cuts = self._members[key]
        return order[cuts[j]:cuts[j + 1]]

    @property
    def a0(self):
        """Measured surface-ball constant: every cube holds ``Δ(x_Q, a0 ℓ(Q))``."""
        if self._a0 is None:
            self._a0 = measure_a0(self)
        return self._a0

    def cube_count(self):
        return sum(len(g["centers"]) for g in self.gens)


def measure_a0(G):
    """min over cubes of dist(x_Q, non-member samples) / ℓ(Q)."""
    best = math.inf
    S = G.S
    for k in G.generations():
        g = G._gen(k)
        ell = 2.0 ** (-k)
        lab = g["labels"]
        for j, c in enumerate(g["centers"]):
            x = S.points[c]
            idx = S.in_ball(x, 2 * ell)
            if len(idx) == 0:
                continue
            other = idx[lab[idx] != j]
            if len(other) == 0:
                continue
            d = np.linalg.norm(S.points[other] - x, axis=1).min()
            best = min(best, d / ell)
    return best if math.isfinite(best) else 1.0


def build_grid(S, k_min, k_max, margin=0.4, backend=None):
    """Nested dyadic partitions of the samples for generations ``k_min..k_max``."""
    if k_min > k_max:
        raise ScaleRangeError("k_min must not exceed k_max")
    if 2.0 ** (-k_max) < 10 * S.h * (1 - 1e-12):
        raise ScaleRangeError(f"2^-{k_max} is below the trusted scale 10h = {10 * S.h:g}")
    if 2.0 ** (-k_min) > S.diam * (1 + 1e-12):
        raise ScaleRangeError(f"2^-{k_min} exceeds the boundary diameter {S.diam:g}")
    if not 0 < margin <= 0.5:
        raise ScaleRangeError("margin must lie in (0, 1/2]")
    P = S.points
    N = len(S)
    order = sample_order(S)
    rank = np.empty(N, dtype=np.int64)
    rank[order] = np.arange(N)
    gens = []

    ell = 2.0 ** (-k_min)
    centers = kernels.greedy_net(P, order, np.empty(0, dtype=np.int64), ell, backend=backend)
    ids = np.arange(len(centers))
    labels = ids[_nearest_center(P, P[centers], ids, 1e-12 * ell)]
    gens.append(_finish_gen(S, centers, labels, None))

    for k in range(k_min + 1, k_max + 1):
        ell = 2.0 ** (-k)
        prev = gens[-1]
        plab = prev["labels"]
        dcomp = distance_to_complement(S, plab, margin * ell)
        eligible = dcomp >= margin * ell
        new_centers, parent, labels = [], [], np.empty(N, dtype=np.int64)
        porder = np.argsort(plab, kind="stable")
        cuts = np.searchsorted(plab[porder], np.arange(len(prev["centers"]) + 1))
        for pid, pc in enumerate(prev["centers"]):
            M = porder[cuts[pid]:cuts[pid + 1]]
            cand = M[eligible[M]]
            cand = cand[np.argsort(rank[cand], kind="stable")]
            kids = kernels.greedy_net(P, cand, np.array([pc]), ell, backend=backend)
            base = len(new_centers)
            kid_ids = base + np.arange(len(kids))
            new_centers.extend(kids.tolist())
            parent.extend([pid] * len(kids))
            labels[M] = kid_ids[_nearest_center(P[M], P[kids], kid_ids, 1e-12 * ell)]
        gens.append(_finish_gen(S, np.array(new_centers, dtype=np.int64), labels,
                                np.array(parent, dtype=np.int64)))
    return DyadicGrid(S, k_min, k_max, gens, margin)


def _finish_gen(S, centers, labels, parent):
    n = len(centers)
    sigma = np.bincount(labels, weights=S.weights, minlength=n)
    g = {"centers": centers, "labels": labels, "sigma": sigma, "parent": parent}
    if parent is not None:
        children_of = {}
        for cid, pid in enumerate(parent.tolist()):
            children_of.setdefault(pid, []).append(cid)
        g["children_of"] = children_of
    return g


@dataclass
class GridReport:
    partition: bool
    nesting: bool
    unique_ancestor: bool
    C1: float
    a0: float
    thin_fractions: dict
    eta: float
    cube_counts: dict

    def as_dict(self):
        return {
            "partition": self.partition, "nesting": self.nesting,
            "unique_ancestor": self.unique_ancestor, "C1": self.C1, "a0": self.a0,
            "thin_fractions": {repr(k): v for k, v in self.thin_fractions.items()},
            "eta": self.eta, "cube_counts": {str(k): v for k, v in self.cube_counts.items()},
        }


def verify_grid(G):
    """Check properties (i)-(iii) exactly and measure (iv)-(vi)."""
    S = G.S
    N = len(S)
    total = S.total_weight
    partition = True
    for k in G.generations():
        g = G._gen(k)
        lab = g["labels"]
        if lab.shape != (N,) or lab.min() < 0 or lab.max() >= len(g["centers"]):
            partition = False
        if np.any(np.bincount(lab, minlength=len(g["centers"])) == 0):
            partition = False
        if not math.isclose(g["sigma"].sum(), total, rel_tol=1e-12):
            partition = False
    nesting = unique = True
    for k in range(G.k_min + 1, G.k_max + 1):
        g, pg = G._gen(k), G._gen(k - 1)
        if not np.array_equal(g["parent"][g["labels"]], pg["labels"]):
            nesting = False
        kids_sigma = np.bincount(g["parent"], weights=g["sigma"], minlength=len(pg["centers"]))
        if not np.allclose(kids_sigma, pg["sigma"], rtol=1e-12, atol=0):
            nesting = False
        if np.any((g["parent"] < 0) | (g["parent"] >= len(pg["centers"]))):
            unique = False
    if not (partition and nesting and unique):
        raise GridConstructionError(
            f"grid invariants violated: partition={partition} nesting={nesting} unique={unique}")

    C1 = 0.0
    for k in G.generations():
        ell = 2.0 ** (-k)
        for j in range(len(G._gen(k)["centers"])):
            C1 = max(C1, point_set_diameter(S.points[G.members(k, j)]) / ell)

    a0 = G.a0
    taus = (a0 / 2, a0 / 4, a0 / 8)
    num = dict.fromkeys(taus, 0.0)
    den = 0.0
    for k in G.generations():
        ell = 2.0 ** (-k)
        lab = G.labels(k)
        if len(G._gen(k)["centers"]) < 2:
            continue
        dc = distance_to_complement(S, lab, taus[0] * ell * (1 + 1e-9))
        den += total
        for t in taus:
            num[t] += float(S.weights[dc <= t * ell].sum())
    fr = {t: (num[t] / den if den else 0.0) for t in taus}
    xs = np.log(np.array(taus))
    ys = np.array([fr[t] for t in taus])
    if np.all(ys > 0):
        eta = float(np.polyfit(xs, np.log(ys), 1)[0])
    else:
        eta = math.nan
    counts = {k: len(G._gen(k)["centers"]) for k in G.generations()}
    return GridReport(partition, nesting, unique, C1, a0, fr, eta, counts)


def cube_window(Q, A=1.0):
    """``B(x_Q, A ℓ(Q))``."""
    if A < 1:
        raise ScaleRangeError("dilation must be >= 1")
    return Ball(Q.center, A * Q.ell)


def export_grid(G, path_or_fh):
    """One line per cube: ``k id parent x_Q... sigma n_members``."""
    own = isinstance(path_or_fh, (str, bytes)) or hasattr(path_or_fh, "__fspath__")
    fh = open(path_or_fh, "w", encoding="utf-8") if own else path_or_fh
    try:
        fh.write("# k id parent " + " ".join(f"x{i + 1}" for i in range(G.S.dim)) + " sigma n_members\n")
        for k in G.generations():
            g = G._gen(k)
            for j, c in enumerate(g["centers"]):
                par = -1 if g["parent"] is None else int(g["parent"][j])
                xs = " ".join(repr(float(v)) for v in G.S.points[c])
                n = len(G.members(k, j))
                fh.write(f"{k} {j} {par} {xs} {float(g['sigma'][j])!r} {n}\n")
    finally:
        if own:
            fh.close()
