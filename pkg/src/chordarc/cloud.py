"""Weighted boundary samples and the point-cloud text format.

File layout::

    # optional comments
    dim=2 h=0.0009765625
    x1 x2 weight
    ...

Floats are written with ``repr`` so a save/load round trip is exact.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import ConvexHull, cKDTree
from scipy.spatial._qhull import QhullError

from .errors import CloudParseError, DimensionMismatchError, ResolutionError


def point_set_diameter(points):
    P = np.asarray(points)
    if len(P) < 2:
        return 0.0
    try:
        idx = ConvexHull(P, qhull_options="QJ").vertices
        H = P[np.unique(idx)]
    except (QhullError, ValueError):
        H = P
    if len(H) > 4000:
        H = H[np.linspace(0, len(H) - 1, 4000).astype(int)]
    best = 0.0
    for i in range(len(H)):
        best = max(best, float(np.max(np.linalg.norm(H[i:] - H[i], axis=1))))
    return best


@dataclass(eq=False)
class SampledBoundary:
    points: np.ndarray
    weights: np.ndarray
    h: float
    diam: float = None
    # (axes, half_width) of the sampled window for unbounded boundaries
    window: tuple = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] not in (2, 3):
            raise ValueError("points must be an (N, 2) or (N, 3) array")
        if self.weights.shape != (len(self.points),):
            raise ValueError("one weight per point")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if self.diam is None:
            self.diam = point_set_diameter(self.points)

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return len(self.points)

    @cached_property
    def tree(self):
        return cKDTree(self.points)

    @property
    def total_weight(self):
        return float(self.weights.sum())

    @property
    def scale_cap(self):
        return self.diam

    def in_ball(self, x, r):
        """Sorted indices of samples in the open ball ``B(x, r)``."""
        idx = np.asarray(self.tree.query_ball_point(x, r), dtype=np.int64)
        idx.sort()
        if len(idx):
            keep = np.linalg.norm(self.points[idx] - x, axis=1) < r
            idx = idx[keep]
        return idx

    def surface_measure(self, x, r):
        return float(self.weights[self.in_ball(x, r)].sum())

    def distance(self, X):
        """Distance to the nearest sample."""
        return self.tree.query(X)[0]

    def fully_sampled(self, r):
        """Mask of samples ``p`` whose ball ``B(p, r)`` lies over the sampled window."""
        if self.window is None:
            return np.ones(len(self), dtype=bool)
        axes, half = self.window
        inner = np.abs(self.points[:, list(axes)]) + r <= half + 1e-12
        return inner.all(axis=1)


def sample_boundary(domain, h):
    """``h``-net of the domain boundary with exact arclength/area weights."""
    pts, w = domain.sample(h)
    diam = domain.diameter if np.isfinite(domain.diameter) else None
    S = SampledBoundary(pts, w, float(h), diam=diam, window=domain.window,
                        meta={"domain": domain.describe()})
    if S.diam is None or not np.isfinite(S.diam):  # pragma: no cover
        raise ResolutionError("could not determine boundary diameter")
    return S


def save_cloud(S, path_or_fh):
    own = not hasattr(path_or_fh, "write")
    fh = open(path_or_fh, "w", encoding="utf-8") if own else path_or_fh
    try:
        fh.write("# chordarc point cloud: coordinates then weight\n")
        fh.write(f"dim={S.dim} h={S.h!r}\n")
        for p, w in zip(S.points.tolist(), S.weights.tolist()):
            fh.write(" ".join(repr(v) for v in p) + f" {w!r}\n")
    finally:
        if own:
            fh.close()


def _parse_header(line, lineno):
    kv = {}
    for tok in line.split():
        if "=" not in tok:
            raise CloudParseError(f"bad header token {tok!r}", lineno)
        k, v = tok.split("=", 1)
        kv[k] = v
    try:
        dim = int(kv["dim"])
        h = float(kv["h"])
    except (KeyError, ValueError) as exc:
        raise CloudParseError("header must be 'dim=<d> h=<h>'", lineno) from exc
    if dim not in (2, 3):
        raise CloudParseError(f"unsupported dimension {dim}", lineno)
    if not h > 0:
        raise CloudParseError("h must be positive", lineno)
    return dim, h


def load_cloud(path, dim=None):
    """Read a cloud file. ``dim`` (if given) must match the header."""
    header = None
    rows, wts = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if header is None:
                header = _parse_header(line, lineno)
                if dim is not None and header[0] != dim:
                    raise DimensionMismatchError(
                        f"cloud has dimension {header[0]}, expected {dim}", lineno)
                continue
            parts = line.split()
            if len(parts) != header[0] + 1:
                raise CloudParseError(
                    f"expected {header[0] + 1} fields, got {len(parts)}", lineno)
            try:
                vals = [float(v) for v in parts]
            except ValueError as exc:
                raise CloudParseError(f"non-numeric field in {line!r}", lineno) from exc
            if not np.all(np.isfinite(vals)):
                raise CloudParseError("non-finite value", lineno)
            if vals[-1] <= 0:
                raise CloudParseError(f"nonpositive weight {vals[-1]!r}", lineno)
            rows.append(vals[:-1])
            wts.append(vals[-1])
    if header is None:
        raise CloudParseError("missing header line")
    if not rows:
        raise CloudParseError("cloud has no points")
    return SampledBoundary(np.array(rows), np.array(wts), header[1])
