"""Corkscrew balls, Harnack chains and good curves.

Every search here is a deterministic lattice search anchored at a given
point. Results come back as small certificate objects that can be
re-checked against the oracle independently of the search that made them.
"""
from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .errors import GoodCurveFailure, PreconditionError
from .geometry import Ball, Polyline

INTERIOR = "Interior"
EXTERIOR = "Exterior"
C0_EXTERIOR = "C0Exterior"

WHITNEY_RATIO = 8.0  # a level-m node keeps delta >= WHITNEY_RATIO * spacing
CURVE_SAMPLES = 64


def _side_mask(oracle, X, kind):
    return oracle.outside(X) if kind != INTERIOR else oracle.inside(X)


# ---------------------------------------------------------------------------
# corkscrews


@dataclass(frozen=True, eq=False)
class CorkscrewCert:
    anchor: np.ndarray
    scale: float
    point: np.ndarray
    radius: float
    kind: str
    witness: np.ndarray = None

    @property
    def constant(self):
        return self.radius / self.scale

    @property
    def ball(self):
        return Ball(self.point, self.radius)

    def as_dict(self):
        out = {"kind": self.kind, "anchor": self.anchor.tolist(), "scale": self.scale,
               "point": self.point.tolist(), "radius": self.radius,
               "constant": self.constant}
        if self.witness is not None:
            out["witness"] = self.witness.tolist()
        return out


def cert_problems(oracle, cert, n=1000, seed=0, tol=1e-9, r_quarter=None):
    """List what is wrong with ``cert``; an empty list means it checks out."""
    bad = []
    X, rad = cert.point, cert.radius
    if not 0 < cert.constant < 1:
        bad.append(f"constant {cert.constant:g} outside (0, 1)")
    if oracle.distance(X) < rad - tol:
        bad.append("ball reaches the boundary")
    if np.linalg.norm(X - cert.anchor) + rad > cert.scale * (1 + 1e-12) + tol:
        bad.append("ball leaves B(x, r)")
    if cert.kind == C0_EXTERIOR and r_quarter is not None:
        if np.linalg.norm(X - cert.witness) + rad > r_quarter + tol:
            bad.append("ball leaves B(z_Q, r_Q/4)")
    pts = Ball(X, rad).sample(n, np.random.default_rng(seed))
    side = _side_mask(oracle, np.vstack([X, pts]), cert.kind)
    if not side.all():
        bad.append("ball meets the wrong side")
    return bad


def _lattice(x, r, step):
    m = int(math.floor(r / step))
    g = np.arange(-m, m + 1) * step
    G = np.stack(np.meshgrid(*([g] * len(x)), indexing="ij"), axis=-1).reshape(-1, len(x))
    G = G[np.linalg.norm(G, axis=1) < r]
    return x + G


def _objective(oracle, X, x, r, kind):
    X = np.atleast_2d(X)
    f = np.minimum(oracle.distance(X), r - np.linalg.norm(X - x, axis=1))
    return np.where(_side_mask(oracle, X, kind), f, -np.inf)


def _descend(oracle, X, fX, x, r, step, kind, rounds=3, max_moves=64):
    d = len(x)
    moves = np.vstack([np.eye(d), -np.eye(d)])
    h = step
    for _ in range(rounds):
        h /= 2
        for _ in range(max_moves):
            cand = X + h * moves
            fc = _objective(oracle, cand, x, r, kind)
            j = int(np.argmax(fc))
            if fc[j] <= fX:
                break
            X, fX = cand[j], float(fc[j])
    return X, fX


def _corkscrew(oracle, x, r, step, kind):
    x = np.asarray(x, dtype=np.float64)
    if not r > 0:
        raise PreconditionError("r must be positive")
    if not 0 < step <= r / 20 * (1 + 1e-12):
        raise PreconditionError(f"step must be in (0, r/20], got {step:g}")
    best = None
    s = step
    # coarser dyadic lattices are searched too, so halving step never loses
    while s <= r / 20 * (1 + 1e-12):
        G = _lattice(x, r, s)
        f = _objective(oracle, G, x, r, kind)
        i = int(np.argmax(f))
        if np.isfinite(f[i]) and f[i] > 0:
            X, fX = _descend(oracle, G[i], float(f[i]), x, r, s, kind)
            if best is None or fX > best[1]:
                best = (X, fX)
        s *= 2
    if best is None:
        return None
    return CorkscrewCert(x.copy(), float(r), np.array(best[0]), best[1], kind)


def interior_corkscrew(oracle, x, r, step=None):
    """Best interior corkscrew ball for ``B(x, r)``, or ``None``."""
    return _corkscrew(oracle, x, r, r / 20 if step is None else step, INTERIOR)


def exterior_corkscrew(oracle, x, r, step=None):
    """Best ball in ``B(x, r)`` minus the closure of the domain, or ``None``."""
    return _corkscrew(oracle, x, r, r / 20 if step is None else step, EXTERIOR)


def _candidate_anchors(points, spacing):
    keep = []
    for i in range(len(points)):
        if keep and np.min(np.linalg.norm(points[keep] - points[i], axis=1)) < spacing:
            continue
        keep.append(i)
    return np.asarray(keep, dtype=np.int64)


@dataclass
class C0Result:
    passed: bool
    value: float  # best exterior radius found, in units of ell(Q)
    cert: CorkscrewCert = None


def c0_exterior_value(oracle, Q, step_fraction=1 / 10, spacing_fraction=1 / 2, refine=3,
                      batch=64):
    """Largest exterior radius found in some ``B(z, r_Q/4)``, ``z`` in ``Q``.

    Returns ``(radius / ell(Q), cert or None)``. The anchors ``z`` are a
    net of the member samples at spacing ``r_Q/4 * spacing_fraction``.
    """
    S = Q.grid.S
    rho = Q.r / 4
    step = rho * step_fraction
    pts = S.points[Q.members]
    pts = pts[np.lexsort(pts.T[::-1])]
    Z = pts[_candidate_anchors(pts, rho * spacing_fraction)]
    offsets = _lattice(np.zeros(S.dim), rho, step)
    scores = np.full(len(Z), -np.inf)
    hits = np.zeros((len(Z), S.dim))
    for b0 in range(0, len(Z), batch):
        zb = Z[b0:b0 + batch]
        X = (zb[:, None, :] + offsets[None, :, :]).reshape(-1, S.dim)
        f = _objective_many(oracle, X, zb, rho, len(offsets))
        j = np.argmax(f, axis=1)
        scores[b0:b0 + len(zb)] = f[np.arange(len(zb)), j]
        hits[b0:b0 + len(zb)] = X.reshape(len(zb), -1, S.dim)[np.arange(len(zb)), j]
    order = np.argsort(-scores, kind="stable")[:refine]
    best, cert = 0.0, None
    for i in order:
        if not np.isfinite(scores[i]) or scores[i] <= 0:
            continue
        X, fX = _descend(oracle, hits[i], float(scores[i]), Z[i], rho, step, EXTERIOR)
        if fX > best:
            best = fX
            cert = CorkscrewCert(Z[i].copy(), rho, np.array(X), fX, C0_EXTERIOR, Z[i].copy())
    return best / Q.ell, cert


def _objective_many(oracle, X, Z, rho, per):
    delta = oracle.distance(X)
    side = oracle.outside(X)
    zr = np.repeat(Z, per, axis=0)
    f = np.minimum(delta, rho - np.linalg.norm(X - zr, axis=1))
    return np.where(side, f, -np.inf).reshape(len(Z), per)


def c0_exterior_test(oracle, Q, c0, **kw):
    """Pass iff a ball of radius ``c0 ℓ(Q)`` sits in ``B(z_Q, r_Q/4)`` outside the closure."""
    if not 0 < c0 < 1 / 8:
        raise PreconditionError("c0 must lie in (0, 1/8)")
    value, cert = c0_exterior_value(oracle, Q, **kw)
    ok = value >= c0
    return C0Result(ok, value, cert if ok else None)


# ---------------------------------------------------------------------------
# Harnack chains on a lattice-aligned Whitney cover


@dataclass(frozen=True, eq=False)
class HarnackChain:
    centers: np.ndarray
    radii: np.ndarray
    X: np.ndarray
    Xp: np.ndarray

    @property
    def N(self):
        return len(self.radii)

    def problems(self, oracle, tol=1e-12):
        bad = []
        C, R = self.centers, self.radii
        if np.linalg.norm(self.X - C[0]) >= R[0]:
            bad.append("X not in the first ball")
        if np.linalg.norm(self.Xp - C[-1]) >= R[-1]:
            bad.append("X' not in the last ball")
        gaps = np.linalg.norm(np.diff(C, axis=0), axis=1)
        if np.any(gaps >= R[:-1] + R[1:]):
            bad.append("consecutive balls do not meet")
        delta = oracle.distance(C)
        diam = 2 * R
        lo, hi = delta - R, delta
        if np.any(diam / 4 > lo * (1 + tol)) or np.any(hi > 4 * diam * (1 + tol)):
            bad.append("Whitney bound violated")
        if not oracle.inside(C).all():
            bad.append("center outside the domain")
        return bad


def whitney_nodes(oracle, lo, hi, origin, step, floor, cone=None):
    """Inside lattice points forming a dyadic Whitney cover of ``[lo, hi]``.

    Level ``m`` uses spacing ``s = floor * 2^m`` on the lattice through
    ``origin``; a point is kept when ``delta >= WHITNEY_RATIO * s`` or, at
    the finest level, when ``delta > floor``. With ``cone = (kappa, ends)``
    cells where every point has ``delta < kappa * dist(., ends)`` are skipped.
    """
    d = len(origin)
    span = float(np.max(hi - lo))
    top = floor
    while top < span / 4:
        top *= 2
    i0 = np.floor((lo - origin) / top).astype(int)
    i1 = np.ceil((hi - origin) / top).astype(int)
    axes = [np.arange(a, b + 1) for a, b in zip(i0, i1)]
    P = origin + top * np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    kids = np.stack(np.meshgrid(*([np.array([0, 1])] * d), indexing="ij"), -1).reshape(-1, d)
    out, dout = [], []
    s = top
    while len(P):
        delta = oracle.distance(P)
        inside = oracle.inside(P)
        finest = s <= floor * (1 + 1e-9)
        if finest:
            keep = inside & (delta > max(floor, step) * (1 - 1e-12))
            out.append(P[keep]), dout.append(delta[keep])
            break
        keep = inside & (delta >= WHITNEY_RATIO * s)
        out.append(P[keep]), dout.append(delta[keep])
        # the cell [p, p + s) needs splitting only if it may hold unkept inside points
        split = ~keep & ((delta <= WHITNEY_RATIO * s + s * math.sqrt(d)) | inside)
        split &= np.all((P >= lo - s) & (P <= hi + s), axis=1)
        if cone is not None:
            kappa, ends = cone
            diag = s * math.sqrt(d)
            reach = np.min(np.linalg.norm(P[:, None, :] - ends[None], axis=2), axis=1)
            split &= delta + diag >= kappa * (reach - diag)
        s /= 2
        P = (P[split][:, None, :] + s * kids[None]).reshape(-1, d)
    Z = np.vstack(out) if out else np.zeros((0, d))
    D = np.concatenate(dout) if dout else np.zeros(0)
    order = np.lexsort(Z.T[::-1])
    return Z[order], D[order]


def _chain_graph(Z, D, scale):
    # intersecting Whitney balls have depth ratio below 3, so only nearby
    # dyadic depth classes need comparing
    g = np.floor(np.log2(D)).astype(np.int64)
    groups = {v: np.flatnonzero(g == v) for v in np.unique(g)}
    trees = {v: cKDTree(Z[idx]) for v, idx in groups.items()}
    rows, cols, w = [], [], []
    for a in groups:
        for b in groups:
            if b < a or b > a + 2:
                continue
            reach = (2.0 ** (a + 1) + 2.0 ** (b + 1)) / 2
            m = trees[a].sparse_distance_matrix(trees[b], reach, output_type="ndarray")
            i, j, gap = groups[a][m["i"]], groups[b][m["j"]], m["v"]
            ok = (gap < (D[i] + D[j]) / 2) & (i != j)
            i, j, gap = i[ok], j[ok], gap[ok]
            wt = 1.0 + gap / (1e3 * scale)
            rows.append(i), cols.append(j), w.append(wt)
            if a != b:
                rows.append(j), cols.append(i), w.append(wt)
    n = len(Z)
    G = csr_matrix((np.concatenate(w), (np.concatenate(rows), np.concatenate(cols))),
                   shape=(n, n))
    return G


def harnack_chain(oracle, X, Xp, lattice_step, margin=0.75, floor=None, cone=1 / 16):
    """Fewest-ball chain of Whitney balls ``B(Z, δ(Z)/2)`` from ``X`` to ``X'``.

    Ties in ball count are broken by total center-to-center length. Returns
    ``None`` when no chain exists in the search box. The first passes only
    refine cells with ``δ >= cone * dist(., {X, X'})``; the last pass drops
    that restriction.
    """
    X = np.asarray(X, dtype=np.float64)
    Xp = np.asarray(Xp, dtype=np.float64)
    dX, dXp = float(oracle.distance(X)), float(oracle.distance(Xp))
    if not (oracle.inside(X) and oracle.inside(Xp)):
        raise PreconditionError("chain endpoints must lie inside the domain")
    if np.array_equal(X, Xp):
        return HarnackChain(X[None].copy(), np.array([dX / 2]), X.copy(), Xp.copy())
    sep = float(np.linalg.norm(X - Xp))
    pad = margin * sep + max(dX, dXp)
    lo, hi = np.minimum(X, Xp) - pad, np.maximum(X, Xp) + pad
    base = lattice_step if floor is None else max(floor, lattice_step)
    # start coarse near the endpoint depth and refine only if disconnected
    s = lattice_step
    while s * 16 <= min(dX, dXp):
        s *= 2
    s = max(s, base)
    ends = np.vstack([X, Xp])
    passes = []
    while True:
        passes.append(s)
        if s <= base * (1 + 1e-9):
            break
        s = max(s / 4, base)
    plan = [(s, (cone, ends)) for s in passes] if cone else []
    plan.append((base, None))
    for s, cn in plan:
        Z, D = whitney_nodes(oracle, lo, hi, X, lattice_step, s, cn)
        Z = np.vstack([X, Xp, Z])
        D = np.concatenate([[dX, dXp], D])
        G = _chain_graph(Z, D, sep + max(dX, dXp))
        dist, pred = dijkstra(G, indices=0, return_predecessors=True)
        if np.isfinite(dist[1]):
            path = [1]
            while path[-1] != 0:
                path.append(int(pred[path[-1]]))
            path = path[::-1]
            return HarnackChain(Z[path], D[path] / 2, X.copy(), Xp.copy())
    return None


def chain_to_curve(chain, X=None, Xp=None):
    """Polyline ``X``, ball centers in order, ``X'``."""
    X = chain.X if X is None else np.asarray(X, dtype=np.float64)
    Xp = chain.Xp if Xp is None else np.asarray(Xp, dtype=np.float64)
    return Polyline(np.vstack([X, chain.centers, Xp]))


# ---------------------------------------------------------------------------
# good curves


def curve_constants(oracle, curve, X, Y, per_segment=CURVE_SAMPLES):
    """``(ℓ(γ)/|X-Y|, min δ(Z)/dist(Z, {X, Y}))`` over densified samples."""
    pts = curve.densify(per_segment)
    to_end = np.minimum(np.linalg.norm(pts - X, axis=1), np.linalg.norm(pts - Y, axis=1))
    delta = oracle.distance(pts)
    inside = oracle.inside(pts)
    live = to_end > 0
    if np.any(live & ~inside):
        c = 0.0
    else:
        c = float(np.min(delta[live] / to_end[live])) if live.any() else math.inf
    return curve.length / float(np.linalg.norm(X - Y)), c


@dataclass
class GoodCurve:
    curve: Polyline
    C_meas: float
    c_meas: float
    case_trace: list
    ladder: dict = field(default_factory=dict)

    def sidecar(self):
        return {"C_meas": self.C_meas, "c_meas": self.c_meas, "case_trace": list(self.case_trace)}


def save_curve(gc, path):
    """Write the polyline in the cloud line format plus a ``.json`` sidecar."""
    V = gc.curve.vertices
    seg = np.linalg.norm(np.diff(V, axis=0), axis=1)
    # longest segment stands in for the sampling spacing
    h = float(seg.max()) if len(seg) and seg.max() > 0 else 1.0
    with open(path, "w") as fh:
        fh.write("# good curve vertices\n")
        fh.write(f"dim={V.shape[1]} h={h!r}\n")
        for v in V:
            fh.write(" ".join(repr(float(c)) for c in v) + " 1.0\n")
    with open(str(path) + ".json", "w") as fh:
        json.dump(gc.sidecar(), fh, indent=2)
        fh.write("\n")


def _dyadic_exp(t):
    return int(math.floor(math.log2(t)))


def _ladder(oracle, P, q, j, k, corkscrew_fraction):
    """Corkscrew points ``P_i`` for ``B(q, 2^i)``, ``j+2 <= i <= k``, with ``P_{j+2} = P``."""
    pts, consts = {}, {}
    i0 = j + 2
    dP = float(oracle.distance(P))
    R = 2.0 ** i0
    pts[i0] = P
    consts[i0] = min(dP, R - np.linalg.norm(P - q)) / R
    for i in range(i0 + 1, k + 1):
        R = 2.0 ** i
        cert = interior_corkscrew(oracle, q, R, R * corkscrew_fraction)
        if cert is None:
            raise GoodCurveFailure(f"corkscrew 2^{i}", "no interior lattice point")
        pts[i], consts[i] = cert.point, cert.constant
    return pts, consts


def _check_ladder(oracle, pts, consts):
    c = min(consts.values())
    idx = sorted(pts)
    for a, b in zip(idx, idx[1:]):
        if np.linalg.norm(pts[a] - pts[b]) > 2.0 ** (a + 2) * (1 + 1e-12):
            raise GoodCurveFailure(f"ladder {a}", "consecutive corkscrews too far apart")
        low = min(oracle.distance(pts[a]), oracle.distance(pts[b]))
        if low < c * 2.0 ** a * (1 - 1e-12):
            raise GoodCurveFailure(f"ladder {a}", "corkscrew depth below c 2^i")
    return c


def _chain_curve(oracle, A, B, lattice_step, stage):
    step = min(lattice_step, min(oracle.distance(A), oracle.distance(B)) / 4)
    ch = harnack_chain(oracle, A, B, step)
    if ch is None:
        raise GoodCurveFailure(stage, "endpoints not joined by a Harnack chain")
    return chain_to_curve(ch)


def good_curve(oracle, X, Y, lattice_step=1 / 64, corkscrew_fraction=1 / 40):
    """Good curve from ``X`` to ``Y`` following the three-case construction."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if not (oracle.inside(X) and oracle.inside(Y)):
        raise PreconditionError("good_curve endpoints must lie inside the domain")
    if not oracle.has_nearest:
        raise PreconditionError("good_curve needs nearest boundary points")
    sep = float(np.linalg.norm(X - Y))
    if sep == 0:
        raise PreconditionError("endpoints coincide")
    dX, dY = float(oracle.distance(X)), float(oracle.distance(Y))
    if sep <= 0.5 * min(dX, dY):
        gc = Polyline(np.vstack([X, Y]))
        C, c = curve_constants(oracle, gc, X, Y)
        return GoodCurve(gc, C, c, ["case1"])
    k, jX, jY = _dyadic_exp(sep), _dyadic_exp(dX), _dyadic_exp(dY)
    if k <= min(jX + 2, jY + 2):
        gc = _chain_curve(oracle, X, Y, lattice_step, "case2 chain")
        C, c = curve_constants(oracle, gc, X, Y)
        return GoodCurve(gc, C, c, ["case2"])
    flip = jY < jX
    if flip:
        X, Y, dX, dY, jX, jY = Y, X, dY, dX, jY, jX
    trace = ["case3"]
    qX = oracle.nearest_boundary(X)
    xs, cx = _ladder(oracle, X, qX, jX, k, corkscrew_fraction)
    ladders = {"X": (xs, cx, _check_ladder(oracle, xs, cx))}
    pieces = []
    idx = sorted(xs)
    for a, b in zip(idx, idx[1:]):
        pieces.append(_chain_curve(oracle, xs[a], xs[b], lattice_step, f"ladder X {a}"))
    if jY + 2 <= k:
        trace.append("ladder Y")
        qY = oracle.nearest_boundary(Y)
        ys, cy = _ladder(oracle, Y, qY, jY, k, corkscrew_fraction)
        ladders["Y"] = (ys, cy, _check_ladder(oracle, ys, cy))
        pieces.append(_chain_curve(oracle, xs[k], ys[k], lattice_step, "top chain"))
        idy = sorted(ys)[::-1]
        for a, b in zip(idy, idy[1:]):
            pieces.append(_chain_curve(oracle, ys[a], ys[b], lattice_step, f"ladder Y {b}"))
    else:
        trace.append("top to Y")
        pieces.append(_chain_curve(oracle, xs[k], Y, lattice_step, "top chain"))
    curve = pieces[0]
    for p in pieces[1:]:
        curve = curve.concat(p)
    if flip:
        curve = Polyline(curve.vertices[::-1].copy())
        X, Y = Y, X
    C, c = curve_constants(oracle, curve, X, Y)
    ladder = {name: {"points": {i: p.tolist() for i, p in v[0].items()}, "c": v[2]}
              for name, v in ladders.items()}
    return GoodCurve(curve, C, c, trace, ladder)
