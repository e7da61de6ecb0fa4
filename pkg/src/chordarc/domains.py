"""Domain oracles and the test corpus.

Each domain answers two questions about an ambient point: is it in the
(open) domain, and how far is it from the boundary. Generators also know
how to lay an ``h``-net on their boundary with arclength/area weights.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from . import kernels
from .errors import ResolutionError, SpecError

INSIDE = "inside"
OUTSIDE = "outside"


def _rows(X):
    X = np.asarray(X, dtype=np.float64)
    return X[None, :] if X.ndim == 1 else X


def _squeeze(X, val):
    return val[0] if np.asarray(X).ndim == 1 else val


class Domain:
    """Queryable domain. Subclasses implement ``_distance``/``_inside``.

    ``inside`` means strictly inside the open set. ``outside`` means in the
    exterior of its closure. Boundary points are neither.
    """

    dim = 2
    kind = "domain"
    diameter = math.inf  # diameter of the boundary
    feature_size = math.inf  # smallest boundary detail a sampling must resolve
    has_nearest = True
    # along-boundary coordinate box for windowed (unbounded) boundaries
    window = None

    def __init__(self, tol=1e-12):
        self.tol = tol

    # public, accepts a point or an (m, d) array
    def distance(self, X):
        return _squeeze(X, self._distance(_rows(X)))

    def inside(self, X):
        R = _rows(X)
        return _squeeze(X, self._inside(R) & (self._distance(R) > self.tol))

    def outside(self, X):
        R = _rows(X)
        return _squeeze(X, ~self._inside(R) & (self._distance(R) > self.tol))

    def classify(self, X):
        R = _rows(X)
        d = self._distance(R)
        ins = self._inside(R)
        lab = np.where(d <= self.tol, "boundary", np.where(ins, INSIDE, OUTSIDE))
        return _squeeze(X, lab)

    def nearest_boundary(self, X):
        return _squeeze(X, self._nearest(_rows(X)))

    @property
    def scale_cap(self):
        """Largest scale an analysis may use."""
        if math.isfinite(self.diameter):
            return self.diameter
        return 2.0 * self.window[1]

    def sample(self, h):
        """Return ``(points, weights)`` of an ``h``-net of the boundary."""
        if not h > 0:
            raise ResolutionError("h must be positive")
        if h > self.scale_cap / 100:
            raise ResolutionError(f"h={h} too coarse: need h <= {self.scale_cap / 100:g}")
        return self._sample(h)

    def describe(self):
        return {"kind": self.kind}


# ---------------------------------------------------------------------------
# arclength sampling helpers


def _sample_interval(a, b, h):
    """Points spaced ``<= h`` on [a, b] with trapezoid (Voronoi) weights."""
    n = max(1, math.ceil((b - a) / h))
    t = a + (b - a) * np.arange(n + 1) / n
    w = np.full(n + 1, (b - a) / n)
    w[0] = w[-1] = (b - a) / (2 * n)
    return t, w


def sample_polyline(V, h, closed):
    V = np.asarray(V, dtype=np.float64)
    if closed:
        V = np.vstack([V, V[:1]])
    seg = np.linalg.norm(np.diff(V, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    L = cum[-1]
    n = max(1, math.ceil(L / h))
    if closed:
        s = L * np.arange(n) / n
        w = np.full(n, L / n)
    else:
        s, w = _sample_interval(0.0, L, h)
    pts = np.column_stack([np.interp(s, cum, V[:, c]) for c in range(V.shape[1])])
    return pts, w


def _sample_box_perimeters(lo, hi, h):
    pts, wts = [], []
    for a, b in zip(lo, hi):
        side = b[0] - a[0]
        m = max(1, math.ceil(side / h))
        t = side * np.arange(m) / m
        corners = [(a[0], a[1], 1, 0), (b[0], a[1], 0, 1), (b[0], b[1], -1, 0), (a[0], b[1], 0, -1)]
        for x0, y0, dx, dy in corners:
            pts.append(np.column_stack([x0 + dx * t, y0 + dy * t]))
            wts.append(np.full(m, side / m))
    return np.vstack(pts), np.concatenate(wts)


# ---------------------------------------------------------------------------
# exact distance queries against many boundary pieces


def _tiled_query(X, lo, hi, kernel, tile_points=256):
    """Run ``kernel(P, keep)`` tile by tile, keeping only pieces that can be nearest.

    ``lo``/``hi`` are per-piece bounding boxes. A piece is dropped from a
    tile when its box is farther than ``d0 + diam(tile)``, where ``d0`` is
    the exact distance from one tile point; this never changes the answer.
    """
    K, m = len(lo), len(X)
    everything = np.ones(K, dtype=bool)
    if K <= 32 or m <= 16:
        return kernel(X, everything)
    blo, bhi = X.min(axis=0), X.max(axis=0)
    n = max(1, int(math.ceil((m / tile_points) ** (1.0 / X.shape[1]))))
    cell = np.maximum((bhi - blo) / n, 1e-300)
    key = np.minimum(((X - blo) / cell).astype(np.int64), n - 1)
    flat = np.ravel_multi_index(key.T, (n,) * X.shape[1])
    order = np.argsort(flat, kind="stable")
    cuts = np.flatnonzero(np.diff(flat[order])) + 1
    outs = None
    for rows in np.split(order, cuts):
        P = X[rows]
        d0 = kernel(P[:1], everything)[0][0]
        tlo, thi = P.min(axis=0), P.max(axis=0)
        reach = d0 + float(np.linalg.norm(thi - tlo))
        gap = np.maximum(np.maximum(lo - thi, tlo - hi), 0.0)
        keep = np.einsum("kd,kd->k", gap, gap) <= reach * reach * (1 + 1e-12) + 1e-300
        res = kernel(P, keep)
        if outs is None:
            outs = [np.empty((m,) + np.shape(r)[1:], dtype=np.asarray(r).dtype) for r in res]
        for o, r in zip(outs, res):
            o[rows] = r
    return tuple(outs)


# ---------------------------------------------------------------------------
# concrete domains


class HalfSpace(Domain):
    """``{x_d > 0}``, boundary sampled on the window ``[-W, W]^(d-1)``."""

    kind = "halfspace"

    def __init__(self, dim=2, window=1.0):
        super().__init__()
        if dim not in (2, 3):
            raise SpecError("half-space dimension must be 2 or 3")
        if not window > 0:
            raise SpecError("window half-width must be positive")
        self.dim = dim
        self.window = (tuple(range(dim - 1)), float(window))

    def _distance(self, X):
        return np.abs(X[:, -1])

    def _inside(self, X):
        return X[:, -1] > 0

    def _nearest(self, X):
        Y = X.copy()
        Y[:, -1] = 0.0
        return Y

    def chord_sup(self, x, r, v, t):
        """Exact ``sup dist / r`` over ``{x + r z : z.v = t, |z| <= 1}``.

        The distance ``|X_d|`` is affine on the chord up to a sign, so the
        sup sits on the rim.
        """
        v = np.asarray(v, dtype=np.float64)
        rho2 = 1.0 - t * t
        if rho2 < 0:
            return 0.0
        e = np.zeros(self.dim)
        e[-1] = 1.0
        tang = e - (e @ v) * v
        mid = x[-1] / r + t * v[-1]
        return float(abs(mid) + math.sqrt(rho2) * np.linalg.norm(tang))

    def _sample(self, h):
        W = self.window[1]
        t, w = _sample_interval(-W, W, h)
        if self.dim == 2:
            return np.column_stack([t, np.zeros_like(t)]), w
        gx, gy = np.meshgrid(t, t, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
        return pts, np.outer(w, w).ravel()

    def describe(self):
        return {"kind": self.kind, "dim": self.dim, "window": self.window[1]}


class BallDomain(Domain):
    kind = "ball"

    def __init__(self, radius=1.0, dim=2):
        super().__init__()
        if not radius > 0:
            raise SpecError("ball radius must be positive")
        if dim not in (2, 3):
            raise SpecError("ball dimension must be 2 or 3")
        self.R = float(radius)
        self.dim = dim
        self.diameter = 2 * self.R

    def _distance(self, X):
        return np.abs(self.R - np.linalg.norm(X, axis=1))

    def _inside(self, X):
        return np.linalg.norm(X, axis=1) < self.R

    def _nearest(self, X):
        n = np.linalg.norm(X, axis=1)
        U = np.where(n[:, None] > 0, X / np.where(n > 0, n, 1)[:, None], np.eye(self.dim)[0])
        return self.R * U

    def _sample(self, h):
        R = self.R
        if self.dim == 2:
            n = math.ceil(2 * math.pi * R / h)
            a = 2 * math.pi * np.arange(n) / n
            return R * np.column_stack([np.cos(a), np.sin(a)]), np.full(n, 2 * math.pi * R / n)
        area = 4 * math.pi * R * R
        n = math.ceil(area / (h * h))
        i = np.arange(n) + 0.5
        z = 1 - 2 * i / n
        phi = math.pi * (1 + 5 ** 0.5) * i
        rho = np.sqrt(1 - z * z)
        pts = R * np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
        return pts, np.full(n, area / n)

    def describe(self):
        return {"kind": self.kind, "dim": self.dim, "radius": self.R}


class BoxUnion(Domain):
    """Base for domains whose boundary is the boundary of disjoint squares."""

    def __init__(self, lo, hi, complement):
        super().__init__()
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        self.complement = complement
        ext = np.vstack([self.lo, self.hi])
        self.diameter = float(np.linalg.norm(ext.max(axis=0) - ext.min(axis=0)))

    def _query(self, X):
        return _tiled_query(X, self.lo, self.hi,
                            lambda P, keep: kernels.boxes_distance(P, self.lo[keep], self.hi[keep]))

    def _distance(self, X):
        return self._query(X)[0]

    def _inside(self, X):
        in_box = self._query(X)[2]
        return ~in_box if self.complement else in_box

    def _nearest(self, X):
        return self._query(X)[1]

    def _sample(self, h):
        return _sample_box_perimeters(self.lo, self.hi, h)


class Square(BoxUnion):
    kind = "square"

    def __init__(self, side=1.0):
        if not side > 0:
            raise SpecError("square side must be positive")
        self.side = float(side)
        super().__init__([[0.0, 0.0]], [[side, side]], complement=False)

    def describe(self):
        return {"kind": self.kind, "side": self.side}


def cantor_squares(level):
    """Lower-left corners and side of the 4^level squares of the 4-corners set."""
    corners = np.zeros((1, 2))
    side = 1.0
    for _ in range(level):
        side /= 4
        off = np.array([[0, 0], [3, 0], [0, 3], [3, 3]], dtype=np.float64) * side
        corners = (corners[:, None, :] + off[None, :, :]).reshape(-1, 2)
    return corners, side


class CantorComplement(BoxUnion):
    """Complement of the level-``k`` 4-corners Cantor squares in the plane."""

    kind = "cantor"

    def __init__(self, level):
        if int(level) != level or level < 1:
            raise SpecError("Cantor level must be an integer >= 1")
        self.level = int(level)
        lo, side = cantor_squares(self.level)
        self.side = side
        super().__init__(lo, lo + side, complement=True)
        self.feature_size = side

    def describe(self):
        return {"kind": self.kind, "level": self.level}


class SegmentDomain(Domain):
    """Planar domain whose boundary is a finite union of segments."""

    def _set_segments(self, A, B):
        self.A = np.ascontiguousarray(A, dtype=np.float64)
        self.B = np.ascontiguousarray(B, dtype=np.float64)

    def _query(self, X):
        if not hasattr(self, "_bb"):
            self._bb = (np.minimum(self.A, self.B), np.maximum(self.A, self.B))
        return _tiled_query(X, *self._bb,
                            lambda P, keep: kernels.segments_distance(P, self.A[keep], self.B[keep]))

    def _distance(self, X):
        return self._query(X)[0]

    def _nearest(self, X):
        return self._query(X)[1]


class LipschitzGraph(SegmentDomain):
    """``{y > g(x)}`` with ``g`` piecewise linear, constant outside its breakpoints."""

    kind = "lipschitz"

    def __init__(self, breakpoints=None, slope=0.5, seed=0, far=1e4):
        super().__init__()
        if breakpoints is None:
            rng = np.random.default_rng(seed)
            xs = np.linspace(-1.0, 1.0, 9)
            s = rng.uniform(-slope, slope, len(xs) - 1)
            ys = np.concatenate([[0.0], np.cumsum(s * np.diff(xs))])
            breakpoints = np.column_stack([xs, ys - ys.mean()])
        bp = np.asarray(breakpoints, dtype=np.float64)
        if bp.ndim != 2 or bp.shape[1] != 2 or len(bp) < 2 or np.any(np.diff(bp[:, 0]) <= 0):
            raise SpecError("breakpoints must be (x, y) rows with increasing x")
        sl = np.diff(bp[:, 1]) / np.diff(bp[:, 0])
        if np.any(np.abs(sl) > slope + 1e-12):
            raise SpecError(f"graph slope {np.abs(sl).max():g} exceeds bound {slope}")
        self.bp = bp
        self.slope = float(slope)
        self.seed = seed
        V = np.vstack([[bp[0, 0] - far, bp[0, 1]], bp, [bp[-1, 0] + far, bp[-1, 1]]])
        self._set_segments(V[:-1], V[1:])
        half = 0.5 * (bp[-1, 0] - bp[0, 0])
        self.center_x = 0.5 * (bp[-1, 0] + bp[0, 0])
        self.window = ((0,), half)

    def g(self, x):
        return np.interp(x, self.bp[:, 0], self.bp[:, 1])

    def _inside(self, X):
        return X[:, 1] > self.g(X[:, 0])

    def _sample(self, h):
        return sample_polyline(self.bp, h, closed=False)

    def describe(self):
        return {"kind": self.kind, "slope": self.slope, "seed": self.seed,
                "breakpoints": self.bp.tolist()}


class Cusp(SegmentDomain):
    """Outward cusp ``{0 < x < 1, |y| < x^alpha}`` with its tip at the origin."""

    kind = "cusp"

    def __init__(self, alpha=2.0, resolution=500):
        super().__init__()
        if not alpha > 1:
            raise SpecError("cusp exponent must exceed 1")
        self.alpha = float(alpha)
        u = (np.arange(resolution + 1) / resolution) ** 2
        upper = np.column_stack([u, u ** self.alpha])
        lower = upper[::-1] * [1, -1]
        # tip -> (1, 1) -> (1, -1) -> tip
        V = np.vstack([upper, lower[:-1]])
        self.polygon = V
        self._set_segments(V, np.roll(V, -1, axis=0))
        self.diameter = 2.0

    def _inside(self, X):
        x, y = X[:, 0], X[:, 1]
        return (x > 0) & (x < 1) & (np.abs(y) < np.abs(x) ** self.alpha)

    def _sample(self, h):
        return sample_polyline(self.polygon, h, closed=True)

    def describe(self):
        return {"kind": self.kind, "alpha": self.alpha}


class SlitDisk(SegmentDomain):
    """Open disk of radius ``R`` minus the radial segment ``[R - L, R] x {0}``."""

    kind = "slit"

    def __init__(self, radius=1.0, slit=0.5):
        super().__init__()
        if not radius > 0 or not 0 < slit < radius:
            raise SpecError("need 0 < slit length < radius")
        self.R = float(radius)
        self.L = float(slit)
        self._set_segments([[self.R - self.L, 0.0]], [[self.R, 0.0]])
        self.diameter = 2 * self.R

    def _parts(self, X):
        n = np.linalg.norm(X, axis=1)
        dc = np.abs(self.R - n)
        ds, ns = kernels.segments_distance(X, self.A, self.B)
        return n, dc, ds, ns

    def _distance(self, X):
        _, dc, ds, _ = self._parts(X)
        return np.minimum(dc, ds)

    def _inside(self, X):
        return np.linalg.norm(X, axis=1) < self.R

    def _nearest(self, X):
        n, dc, ds, ns = self._parts(X)
        U = np.where(n[:, None] > 0, X / np.where(n > 0, n, 1)[:, None], [1.0, 0.0])
        return np.where((dc <= ds)[:, None], self.R * U, ns)

    def _sample(self, h):
        R, L = self.R, self.L
        n = math.ceil(2 * math.pi * R / h)
        a = 2 * math.pi * np.arange(n) / n
        circ = R * np.column_stack([np.cos(a), np.sin(a)])
        wc = np.full(n, 2 * math.pi * R / n)
        t, ws = _sample_interval(R - L, R, h)
        # the outer slit endpoint is circle sample 0; merge its weight there
        wc[0] += ws[-1]
        seg = np.column_stack([t[:-1], np.zeros(len(t) - 1)])
        return np.vstack([circ, seg]), np.concatenate([wc, ws[:-1]])

    def describe(self):
        return {"kind": self.kind, "radius": self.R, "slit": self.L}


# ---------------------------------------------------------------------------
# corpus specs


@dataclass(frozen=True)
class CorpusSpec:
    kind: str
    params: tuple = ()
    placement: tuple = field(default=(), compare=True)  # (dx, dy, angle) for d=2

    def label(self):
        if not self.params:
            return self.kind
        return self.kind + ":" + ":".join(f"{p:g}" if isinstance(p, float) else str(p) for p in self.params)


_ALIASES = {
    "line": "halfspace", "halfspace": "halfspace", "halfplane": "halfspace",
    "halfspace3": "halfspace3", "disk": "disk", "ball": "disk", "ball3": "ball3",
    "sphere": "ball3", "square": "square", "lipschitz": "lipschitz", "graph": "lipschitz",
    "cantor": "cantor", "cusp": "cusp", "slit": "slit",
}


def parse_spec(text):
    """Parse ``kind[:p1[:p2]]``, e.g. ``disk``, ``cantor:4``, ``cusp:2``."""
    if isinstance(text, CorpusSpec):
        return text
    parts = str(text).strip().split(":")
    kind = _ALIASES.get(parts[0].lower())
    if kind is None:
        raise SpecError(f"unknown corpus kind {parts[0]!r}")
    try:
        params = tuple(int(p) if p.lstrip("-").isdigit() else float(p) for p in parts[1:] if p)
    except ValueError as exc:
        raise SpecError(f"bad parameter in {text!r}") from exc
    return CorpusSpec(kind, params)


def make_domain(spec):
    """Build the oracle for a corpus spec (string or :class:`CorpusSpec`)."""
    spec = parse_spec(spec)
    p = spec.params
    k = spec.kind
    try:
        if k == "halfspace":
            dom = HalfSpace(2, *p)
        elif k == "halfspace3":
            dom = HalfSpace(3, *p)
        elif k == "disk":
            dom = BallDomain(*(p or (1.0,)), dim=2)
        elif k == "ball3":
            dom = BallDomain(*(p or (1.0,)), dim=3)
        elif k == "square":
            dom = Square(*p)
        elif k == "lipschitz":
            dom = LipschitzGraph(slope=p[0] if p else 0.5, seed=int(p[1]) if len(p) > 1 else 0)
        elif k == "cantor":
            if len(p) != 1:
                raise SpecError("cantor needs a level, e.g. cantor:4")
            dom = CantorComplement(p[0])
        elif k == "cusp":
            dom = Cusp(*p)
        elif k == "slit":
            dom = SlitDisk(*p)
        else:  # pragma: no cover
            raise SpecError(k)
    except TypeError as exc:
        raise SpecError(f"wrong number of parameters for {k}") from exc
    if spec.placement:
        dom = Placed(dom, *spec.placement)
    dom.spec = spec
    return dom


class Placed(Domain):
    """Rigid motion of a planar domain: ``X -> R(angle) X + shift``."""

    def __init__(self, base, dx=0.0, dy=0.0, angle=0.0):
        super().__init__(base.tol)
        if base.dim != 2:
            raise SpecError("placement transforms are planar")
        self.base = base
        self.kind = base.kind
        self.dim = 2
        self.diameter = base.diameter
        self.shift = np.array([dx, dy], dtype=np.float64)
        c, s = math.cos(angle), math.sin(angle)
        self.rot = np.array([[c, -s], [s, c]])
        if base.window is not None and (dx or dy or angle):
            # the sampling window is axis-aligned in scene coordinates
            raise SpecError("windowed boundaries cannot be moved")
        self.window = base.window
        self.feature_size = base.feature_size
        self.has_nearest = base.has_nearest

    def _pull(self, X):
        return (X - self.shift) @ self.rot

    def _push(self, Y):
        return Y @ self.rot.T + self.shift

    def _distance(self, X):
        return self.base._distance(self._pull(X))

    def _inside(self, X):
        return self.base._inside(self._pull(X))

    def _nearest(self, X):
        return self._push(self.base._nearest(self._pull(X)))

    def _sample(self, h):
        pts, w = self.base._sample(h)
        return self._push(pts), w

    def describe(self):
        d = self.base.describe()
        d["placement"] = [*self.shift.tolist(), math.atan2(self.rot[1, 0], self.rot[0, 0])]
        return d
