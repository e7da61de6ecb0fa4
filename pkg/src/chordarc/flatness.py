"""Bilateral beta numbers, bad cubes and their Carleson packing.

All plane searches run in the normalized frame ``y -> (y - x) / r`` where
the window is the unit ball and a plane is ``{z : z . v = t}``.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from . import kernels
from .errors import InsufficientDataError, PreconditionError
from .geometry import Hyperplane, fit_plane, DegenerateFitError

OFFSET_STEPS = 32
CHORD_FRACTION = 256
RASTER_CELLS = 64


@dataclass
class BetaRecord:
    center: np.ndarray
    radius: float
    value: float
    plane: Hyperplane
    term_E_to_P: float
    term_P_to_E: float
    lower_bound: float
    n_samples: int
    theta: float
    early_exit: bool = False


# ---------------------------------------------------------------------------
# candidate planes


def direction_net(dim, theta):
    """Unit normals covering the projective sphere at angular step ``theta``."""
    if dim == 2:
        n = max(1, math.ceil(math.pi / theta))
        a = math.pi * np.arange(n) / n
        return np.column_stack([np.cos(a), np.sin(a)])
    out = [np.array([0.0, 0.0, 1.0])]
    npol = max(1, math.ceil((math.pi / 2) / theta))
    for i in range(1, npol + 1):
        pol = (math.pi / 2) * i / npol
        naz = max(1, math.ceil(2 * math.pi * math.sin(pol) / theta))
        # the equator only needs half the circle
        span = math.pi if i == npol else 2 * math.pi
        naz = max(1, math.ceil(naz * span / (2 * math.pi)))
        az = span * np.arange(naz) / naz
        out.append(np.column_stack([np.sin(pol) * np.cos(az), np.sin(pol) * np.sin(az),
                                    np.full(naz, np.cos(pol))]))
    return np.vstack(out)


def _tangent_basis(v):
    d = len(v)
    if d == 2:
        return np.array([[-v[1], v[0]]])
    a = np.eye(3)[np.argmin(np.abs(v))]
    u1 = np.cross(v, a)
    u1 /= np.linalg.norm(u1)
    return np.array([u1, np.cross(v, u1)])


def _chord_points(v, t, step):
    """Sample ``{z . v = t} ∩ closed unit ball`` at spacing ``step``."""
    rho2 = 1.0 - t * t
    if rho2 < 0:
        return np.empty((0, len(v)))
    rho = math.sqrt(rho2)
    n = max(1, math.ceil(2 * rho / step))
    s = np.linspace(-rho, rho, n + 1)
    U = _tangent_basis(v)
    if len(v) == 2:
        return t * v + s[:, None] * U[0]
    a, b = np.meshgrid(s, s, indexing="ij")
    keep = a * a + b * b <= rho2 * (1 + 1e-12)
    return t * v + a[keep][:, None] * U[0] + b[keep][:, None] * U[1]


class _Window:
    """Evaluates the two sup terms for one (x, r) window."""

    def __init__(self, S, x, r, oracle):
        self.S = S
        self.x = np.asarray(x, dtype=np.float64)
        self.r = float(r)
        self.oracle = oracle
        idx = S.in_ball(self.x, self.r)
        self.idx = idx
        self.Y = (S.points[idx] - self.x) / self.r
        spacing = min(S.h, self.r / CHORD_FRACTION)
        self.step = spacing / self.r
        # sup over the continuous chord is within half a step of the sampled sup
        self.slack = 0.5 * self.step
        self.evals = 0

    def term1(self, v, t):
        if len(self.Y) == 0:
            return 0.0
        p = self.Y @ v
        return float(max(p.max() - t, t - p.min()))

    def term2(self, v, t):
        exact = getattr(self.oracle, "chord_sup", None)
        if exact is not None:
            self.evals += 1
            return exact(self.x, self.r, v, t)
        Z = _chord_points(v, t, self.step)
        if len(Z) == 0:
            return 0.0
        self.evals += 1
        X = self.x + self.r * Z
        if self.oracle is not None:
            d = self.oracle.distance(X)
        else:
            d = self.S.distance(X)
        return float(np.max(d)) / self.r + self.slack

    def value(self, v, t):
        a = self.term1(v, t)
        b = self.term2(v, t)
        return a + b, a, b

    def term2_lower(self, V, offsets, cells=RASTER_CELLS):
        """Cheap lower bounds for the second term over the whole net (planar only).

        Distances are rastered once on a grid of spacing ``g`` over the unit
        square; a chord point is at most ``g / sqrt(2)`` from a grid node and
        the distance function is 1-Lipschitz.
        """
        nt = len(offsets)
        if len(V[0]) != 2:
            return np.zeros((len(V), nt))
        g = 2.0 / cells
        ax = np.linspace(-1.0, 1.0, cells + 1)
        gx, gy = np.meshgrid(ax, ax, indexing="ij")
        Z = self.x + self.r * np.column_stack([gx.ravel(), gy.ravel()])
        if self.oracle is not None:
            D = self.oracle.distance(Z)
        else:
            D = self.S.distance(Z)
        D = D.reshape(gx.shape) / self.r
        out = kernels.chord_raster_max(D, V, offsets)
        out = out - g / math.sqrt(2.0)
        return np.maximum(out, 0.0)


def _net_search(W, V, offsets, stop_below=None, cheap_evals=24):
    """Exact minimum of the window value over the net ``V x offsets``.

    Branch and bound: first on the first term alone, which settles flat
    windows after a handful of exact evaluations; if that stalls, on the
    first term plus a rastered bound for the second.
    """
    P = W.Y @ V.T if len(W.Y) else np.zeros((1, len(V)))
    pmax, pmin = P.max(axis=0), P.min(axis=0)
    T1 = np.maximum(pmax[:, None] - offsets[None, :], offsets[None, :] - pmin[:, None])
    flat = T1.ravel()
    nt = len(offsets)
    state = {"best": (math.inf, None, None, None), "early": False, "done": set()}

    def run(bound, limit):
        order = np.argsort(bound, kind="stable")
        n = 0
        for o in order:
            lb = float(bound[o])
            best = state["best"]
            if lb >= best[0] or (stop_below is not None and lb >= stop_below):
                return True, float(bound[order[0]])
            if o in state["done"]:
                continue
            if limit is not None and n >= limit:
                return False, float(bound[order[0]])
            n += 1
            state["done"].add(o)
            t1 = float(flat[o])
            v = V[o // nt]
            t = float(offsets[o % nt])
            t2 = W.term2(v, t)
            if t1 + t2 < best[0]:
                state["best"] = (t1 + t2, (v, t), t1, t2)
                if stop_below is not None and t1 + t2 < stop_below:
                    state["early"] = True
                    return True, float(bound[order[0]])
        return True, float(bound[order[0]])

    finished, low = run(flat, cheap_evals)
    if not finished:
        bound = (T1 + W.term2_lower(V, offsets)).ravel()
        _, low = run(bound, None)
    return state["best"], low, state["early"]


def _rotate(v, U, angles):
    w = v * math.cos(np.linalg.norm(angles))
    nrm = np.linalg.norm(angles)
    if nrm > 0:
        w = w + math.sin(nrm) * (angles @ U) / nrm
    return w / np.linalg.norm(w)


def _refine(W, v, t, theta, rounds=3):
    """Local pattern search around a net plane; never returns worse."""
    best = W.value(v, t)
    bv, bt = v, t
    da, dt = theta, 1.0 / OFFSET_STEPS
    U = _tangent_basis(v)
    for _ in range(rounds):
        improved = True
        while improved:
            improved = False
            U = _tangent_basis(bv)
            moves = [(np.zeros(len(U)), s * dt) for s in (-1, 1)]
            for i in range(len(U)):
                for s in (-1, 1):
                    e = np.zeros(len(U))
                    e[i] = s * da
                    moves.append((e, 0.0))
            for ang, dtt in moves:
                nv = _rotate(bv, U, ang) if np.any(ang) else bv
                nt = bt + dtt
                if abs(nt) > 1:
                    continue
                val = W.value(nv, nt)
                if val[0] < best[0] - 1e-15:
                    best, bv, bt, improved = val, nv, nt, True
        da /= 4
        dt /= 4
    return best, bv, bt


def bbeta(S, x, r, oracle=None, eps=None, theta=None, extra_planes=(), stop_below=None,
          refine=True):
    """Upper bound (and certified lower bound) for the bilateral beta number.

    ``oracle`` supplies exact boundary distances for the plane-to-boundary
    term; without it distances are measured to the samples. ``stop_below``
    turns the search into a decision: it returns as soon as a plane with
    value below the threshold is found.
    """
    x = np.asarray(x, dtype=np.float64)
    if r < 10 * S.h * (1 - 1e-12):
        raise PreconditionError(f"r={r:g} below the trusted scale 10h={10 * S.h:g}")
    W = _Window(S, x, r, oracle)
    d = S.dim
    if len(W.idx) < d:
        raise InsufficientDataError(f"only {len(W.idx)} samples in B(x, {r:g})")
    if theta is None:
        theta = eps / 8 if eps is not None else math.pi / 180
    V = direction_net(d, theta)
    offsets = np.linspace(-1.0, 1.0, 2 * OFFSET_STEPS + 1)
    try:
        fit = fit_plane(W.Y, S.weights[W.idx])
        vf = fit.normal
        V = np.vstack([V, vf])
    except DegenerateFitError:
        fit = None
    (val, arg, t1, t2), min_t1, early = _net_search(W, V, offsets, stop_below)
    cover = 2 * theta + 1.0 / OFFSET_STEPS + 2 * S.h / r
    if arg is None:
        # every net plane has first term >= stop_below
        lower = max(0.0, min_t1 - cover)
        return BetaRecord(x, r, math.inf, None, math.inf, math.inf, lower,
                          len(W.idx), theta, early_exit=True)
    net_min = val
    v, t = arg
    if fit is not None and not early:
        tf = float(fit.base @ vf)
        cand = W.value(vf, tf)
        if cand[0] < val:
            val, t1, t2 = cand
            v, t = vf, tf
    if refine and not early:
        (val, t1, t2), v, t = _refine(W, v, t, theta)
    for P in extra_planes:
        nv = P.normal
        nt = float((P.base - x) @ nv) / r
        cand = W.value(nv, nt)
        if cand[0] < val:
            val, t1, t2 = cand
            v, t = nv, nt
    if early:
        lower = max(0.0, min_t1 - cover)
    else:
        lower = max(0.0, net_min - cover)
    lower = min(lower, val)
    plane = Hyperplane(x + r * t * v, v)
    return BetaRecord(x, r, float(val), plane, float(t1), float(t2), float(lower),
                      len(W.idx), theta, early_exit=early)


# ---------------------------------------------------------------------------
# bad cubes and Carleson packing


@dataclass
class BadSet:
    eps: float
    A: float
    flags: dict  # (k, id) -> True / False / None (untested)
    values: dict  # (k, id) -> beta upper bound or None

    def flagged(self):
        return [key for key, f in self.flags.items() if f]

    def untested(self):
        return [key for key, f in self.flags.items() if f is None]


def bad_set(G, S, oracle, eps, A=2.0, parallel_map=map, values=None):
    """Flag every cube with ``bbeta(x_Q, A ℓ(Q)) >= eps`` (on the upper bound).

    ``values`` may carry upper bounds from an earlier run at a smaller
    ``eps``; they are reused instead of recomputed.
    """
    if not eps > 0:
        raise PreconditionError("eps must be positive")
    if values is not None:
        flags = {key: None if v is None else bool(v >= eps) for key, v in values.items()}
        return BadSet(eps, A, flags, dict(values))
    cubes = G.all_cubes()

    def one(q):
        try:
            rec = bbeta(S, q.center, A * q.ell, oracle, eps=eps)
        except InsufficientDataError:
            return (q.k, q.id), None
        return (q.k, q.id), rec.value

    flags, values = {}, {}
    for key, val in parallel_map(one, cubes):
        values[key] = val
        flags[key] = None if val is None else bool(val >= eps)
    return BadSet(eps, A, flags, values)


@dataclass
class CarlesonReport:
    eps: float
    A: float
    ratios: dict  # top cube id -> ratio
    norm: float
    bad_counts: dict = field(default_factory=dict)
    untested: int = 0

    def as_dict(self):
        return {"eps": self.eps, "A": self.A, "norm": self.norm,
                "ratios": {str(k): v for k, v in self.ratios.items()},
                "bad_counts": {str(k): v for k, v in self.bad_counts.items()},
                "untested": self.untested}


def carleson_norm(G, bad, k_max=None):
    """``ln 2 * sum of flagged σ(Q') / σ(Q)`` over descendants of each top cube.

    ``k_max`` truncates the sum, giving the norm of the coarser grid.
    """
    k_max = G.k_max if k_max is None else k_max
    flagged = {key for key, f in bad.flags.items() if f and key[0] <= k_max}
    ratios = {}
    for Q in G.top_cubes():
        tot = sum(q.sigma for q in Q.descendants() if (q.k, q.id) in flagged)
        ratios[Q.id] = math.log(2) * tot / Q.sigma
    counts = {k: sum(1 for (kk, _) in flagged if kk == k) for k in G.generations()}
    norm = max(ratios.values()) if ratios else 0.0
    return CarlesonReport(bad.eps, bad.A, ratios, norm, counts, len(bad.untested()))


def beta_csv_rows(G, bad):
    """Rows ``k, ell, x_Q..., bbeta_value, flagged`` for plotting."""
    rows = []
    for q in G.all_cubes():
        val = bad.values.get((q.k, q.id))
        flag = bad.flags.get((q.k, q.id))
        rows.append([q.k, q.ell, *q.center.tolist(),
                     "" if val is None else val,
                     "untested" if flag is None else int(flag)])
    return rows


# ---------------------------------------------------------------------------
# scale scan for a flat sub-window


def _spread(S, idx, x, spacing):
    """Greedy ``spacing``-net of ``idx``, visiting samples nearest ``x`` first."""
    if len(idx) == 0:
        return idx
    d = np.linalg.norm(S.points[idx] - x, axis=1)
    idx = idx[np.lexsort((idx, d))]
    chosen = []
    pts = S.points
    for i in idx:
        if chosen and np.min(np.linalg.norm(pts[chosen] - pts[i], axis=1)) < spacing:
            continue
        chosen.append(i)
    return np.asarray(chosen, dtype=np.int64)


def low_beta_window(S, oracle, x, r, eps, spacing_fraction=0.25, min_scale=None):
    """Largest dyadic ``s <= r/4`` with a flat window ``B(y, s) ⊂ B(x, r)``.

    Returns ``(y, s, record)`` or ``None`` when every tested window is bad.
    """
    x = np.asarray(x, dtype=np.float64)
    if r < 40 * S.h * (1 - 1e-12):
        raise PreconditionError(f"r={r:g} below 40h={40 * S.h:g}")
    floor = 10 * S.h if min_scale is None else max(min_scale, 10 * S.h)
    base = S.in_ball(x, r / 2)
    s = r / 4
    while s >= floor * (1 - 1e-12):
        mask = S.fully_sampled(s)[base]
        ys = _spread(S, base[mask], x, spacing_fraction * s)
        for i in ys:
            y = S.points[i]
            if np.linalg.norm(y - x) + s > r:
                continue
            try:
                rec = bbeta(S, y, s, oracle, eps=eps, stop_below=eps)
            except InsufficientDataError:
                continue
            if rec.value < eps:
                return y.copy(), s, rec
        s /= 2
    return None
