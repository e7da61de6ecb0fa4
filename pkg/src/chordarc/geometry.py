"""Points, balls, hyperplanes and polylines in R^2 and R^3."""
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFitError, EmptyRegionError, PreconditionError

SUPPORTED_DIMS = (2, 3)


def as_point(x):
    p = np.asarray(x, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] not in SUPPORTED_DIMS:
        raise PreconditionError(f"expected a point in R^2 or R^3, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise PreconditionError("point has non-finite coordinates")
    return p


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not self.radius > 0:
            raise PreconditionError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.shape[0]

    def contains(self, pts, strict=True):
        pts = np.atleast_2d(pts)
        dist = np.linalg.norm(pts - self.center, axis=1)
        return dist < self.radius if strict else dist <= self.radius

    def contains_ball(self, other, tol=0.0):
        gap = np.linalg.norm(other.center - self.center) + other.radius
        return gap <= self.radius + tol

    def sample(self, n, rng):
        """Uniform random points in the ball."""
        d = self.dim
        g = rng.standard_normal((n, d))
        g /= np.linalg.norm(g, axis=1)[:, None]
        rad = self.radius * rng.random(n) ** (1.0 / d)
        return self.center + g * rad[:, None]


@dataclass(frozen=True, eq=False)
class Hyperplane:
    base: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        b = as_point(self.base)
        v = np.asarray(self.normal, dtype=np.float64)
        if v.shape != b.shape:
            raise PreconditionError("normal and base dimensions differ")
        nv = np.linalg.norm(v)
        if nv == 0 or not np.isfinite(nv):
            raise PreconditionError("hyperplane normal must be a nonzero finite vector")
        if abs(nv - 1.0) > 1e-12:
            v = v / nv
        object.__setattr__(self, "base", b)
        object.__setattr__(self, "normal", v)

    @property
    def dim(self):
        return self.base.shape[0]

    @property
    def offset(self):
        """``t`` with ``P = {y : y . normal = t}``."""
        return float(self.base @ self.normal)

    def project(self, y):
        y = np.asarray(y, dtype=np.float64)
        return y - np.multiply.outer(plane_offset(self, y), self.normal)


def plane_offset(P, y):
    """Signed distance ``(y - base) . normal``; works row-wise on arrays."""
    y = np.asarray(y, dtype=np.float64)
    return (y - P.base) @ P.normal


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def inscribed_halfball(B, v, eps):
    """Largest ball inside ``B(x, r) ∩ {(y - x) . v > eps r}``."""
    if eps < 0:
        raise PreconditionError("eps must be nonnegative")
    if eps >= 1:
        raise EmptyRegionError(f"half-ball with eps={eps} >= 1 is empty")
    v = unit(v)
    r = B.radius
    return Ball(B.center + v * (r * (1 + eps) / 2), r * (1 - eps) / 2)


def canonical_normal(basis, tol=1e-12):
    """Lexicographically smallest unit vector in ``span(basis)`` with its
    first nonzero coordinate positive.

    ``basis`` is ``(d, m)`` with orthonormal columns.
    """
    U = np.array(basis, dtype=np.float64)
    d = U.shape[0]
    for c in range(d):
        if U.shape[1] == 1:
            break
        row = U[c]
        if np.linalg.norm(row) <= tol:
            continue
        # orthonormal basis of {a : row . a = 0}
        _, _, vt = np.linalg.svd(row[None, :])
        U = U @ vt[1:].T
    n = U[:, 0]
    n = n / np.linalg.norm(n)
    nz = np.flatnonzero(np.abs(n) > tol)
    if len(nz) and n[nz[0]] < 0:
        n = -n
    n[np.abs(n) <= tol] = 0.0
    return n / np.linalg.norm(n)


def fit_plane(points, weights=None, return_residual=False):
    """Weighted total-least-squares hyperplane.

    The base is the weighted centroid and the normal is an eigenvector of
    the smallest eigenvalue of the weighted scatter matrix. Degenerate
    eigenspaces are resolved by :func:`canonical_normal`.
    """
    X = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n, d = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if n < d:
        raise DegenerateFitError(min(n - 1, d), d - 1)
    if w.shape != (n,) or np.any(w < 0) or w.sum() <= 0:
        raise PreconditionError("weights must be nonnegative with positive sum")
    c = (w[:, None] * X).sum(axis=0) / w.sum()
    Y = X - c
    M = (Y * w[:, None]).T @ Y
    evals, evecs = np.linalg.eigh(M)
    scale = max(abs(evals[-1]), 1e-300)
    rank = int(np.sum(evals > 1e-12 * scale)) if evals[-1] > 0 else 0
    if rank < d - 1:
        raise DegenerateFitError(rank, d - 1)
    tie = np.abs(evals - evals[0]) <= 1e-12 * scale
    normal = canonical_normal(evecs[:, tie])
    P = Hyperplane(c, normal)
    if return_residual:
        return P, float(w @ (Y @ normal) ** 2)
    return P


@dataclass(frozen=True, eq=False)
class Polyline:
    vertices: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=np.float64)
        if V.ndim != 2 or V.shape[0] < 2:
            raise PreconditionError("a polyline needs at least two vertices")
        if not np.all(np.isfinite(V)):
            raise PreconditionError("polyline has non-finite vertices")
        object.__setattr__(self, "vertices", V)

    @property
    def segment_lengths(self):
        return np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)

    @property
    def length(self):
        return float(self.segment_lengths.sum())

    def densify(self, per_segment=64):
        """Points along the curve, ``per_segment`` per segment plus the last vertex."""
        V = self.vertices
        t = np.arange(per_segment) / per_segment
        pts = V[:-1, None, :] + t[None, :, None] * (V[1:] - V[:-1])[:, None, :]
        return np.vstack([pts.reshape(-1, V.shape[1]), V[-1:]])

    def concat(self, other):
        V, W = self.vertices, other.vertices
        if np.allclose(V[-1], W[0], atol=0, rtol=0):
            W = W[1:]
        return Polyline(np.vstack([V, W]))
