"""Hot inner loops.

Every kernel has a numba version (``*_nb``) and a vectorized numpy version
(``*_np``). The public wrappers pick one according to :mod:`chordarc._accel`;
pass ``backend="numpy"`` or ``backend="numba"`` to force a path (used by the
tests and the benchmark to compare both).
"""
import numpy as np

from . import _accel
from ._accel import njit, prange

_CHUNK = 1 << 21


def _pick(backend):
    if backend is None:
        return "numba" if _accel.USE_NUMBA else "numpy"
    if backend == "numba" and not _accel.HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is unavailable")
    return backend


# ---------------------------------------------------------------------------
# distance to a set of segments (polyline boundaries)


@njit(cache=True, parallel=True, nogil=True)
def _segments_distance_nb(P, A, B):
    m, d = P.shape
    S = A.shape[0]
    dist = np.empty(m)
    near = np.empty((m, d))
    for i in prange(m):
        best = np.inf
        bj = 0
        bt = 0.0
        for j in range(S):
            dd = 0.0
            ll = 0.0
            for c in range(d):
                e = B[j, c] - A[j, c]
                dd += (P[i, c] - A[j, c]) * e
                ll += e * e
            t = 0.0
            if ll > 0.0:
                t = dd / ll
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
            s = 0.0
            for c in range(d):
                q = A[j, c] + t * (B[j, c] - A[j, c]) - P[i, c]
                s += q * q
            if s < best:
                best = s
                bj = j
                bt = t
        dist[i] = np.sqrt(best)
        for c in range(d):
            near[i, c] = A[bj, c] + bt * (B[bj, c] - A[bj, c])
    return dist, near


def _segments_distance_np(P, A, B):
    m, d = P.shape
    S = A.shape[0]
    E = B - A
    ll = np.einsum("ij,ij->i", E, E)
    safe = np.where(ll > 0, ll, 1.0)
    dist = np.empty(m)
    near = np.empty((m, d))
    step = max(1, _CHUNK // max(S, 1))
    for s0 in range(0, m, step):
        Q = P[s0:s0 + step]
        rel = Q[:, None, :] - A[None, :, :]
        t = np.einsum("msd,sd->ms", rel, E) / safe
        t = np.where(ll > 0, np.clip(t, 0.0, 1.0), 0.0)
        foot = A[None, :, :] + t[:, :, None] * E[None, :, :]
        sq = np.einsum("msd,msd->ms", foot - Q[:, None, :], foot - Q[:, None, :])
        j = np.argmin(sq, axis=1)
        rows = np.arange(len(Q))
        dist[s0:s0 + step] = np.sqrt(sq[rows, j])
        near[s0:s0 + step] = foot[rows, j]
    return dist, near


def segments_distance(P, A, B, backend=None):
    """Distance from each row of ``P`` to the union of segments ``[A_j, B_j]``.

    Returns ``(dist, nearest_point)``.
    """
    P = np.ascontiguousarray(P, dtype=np.float64)
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    if _pick(backend) == "numba":
        return _segments_distance_nb(P, A, B)
    return _segments_distance_np(P, A, B)


# ---------------------------------------------------------------------------
# distance to the boundary of a union of disjoint closed boxes


@njit(cache=True, parallel=True, nogil=True)
def _boxes_distance_nb(P, lo, hi):
    m, d = P.shape
    K = lo.shape[0]
    dist = np.empty(m)
    near = np.empty((m, d))
    inside = np.zeros(m, dtype=np.bool_)
    for i in prange(m):
        best = np.inf
        bk = 0
        bin_ = False
        for k in range(K):
            out2 = 0.0
            depth = np.inf
            for c in range(d):
                x = P[i, c]
                if x < lo[k, c]:
                    out2 += (lo[k, c] - x) ** 2
                elif x > hi[k, c]:
                    out2 += (x - hi[k, c]) ** 2
                else:
                    a = x - lo[k, c]
                    b = hi[k, c] - x
                    depth = min(depth, min(a, b))
            if out2 > 0.0:
                s = np.sqrt(out2)
                isin = False
            else:
                s = depth
                isin = True
            if s < best:
                best = s
                bk = k
                bin_ = isin
            if isin:
                inside[i] = True
        dist[i] = best
        # nearest point on the boundary of box bk
        if bin_:
            bc = 0
            bv = np.inf
            hiside = False
            for c in range(d):
                a = P[i, c] - lo[bk, c]
                b = hi[bk, c] - P[i, c]
                if a < bv:
                    bv = a
                    bc = c
                    hiside = False
                if b < bv:
                    bv = b
                    bc = c
                    hiside = True
            for c in range(d):
                near[i, c] = P[i, c]
            near[i, bc] = hi[bk, bc] if hiside else lo[bk, bc]
        else:
            for c in range(d):
                near[i, c] = min(max(P[i, c], lo[bk, c]), hi[bk, c])
    return dist, near, inside


def _boxes_distance_np(P, lo, hi):
    m, d = P.shape
    K = lo.shape[0]
    dist = np.empty(m)
    near = np.empty((m, d))
    inside = np.zeros(m, dtype=bool)
    step = max(1, _CHUNK // max(K * d, 1))
    for s0 in range(0, m, step):
        Q = P[s0:s0 + step]
        below = lo[None] - Q[:, None, :]
        above = Q[:, None, :] - hi[None]
        gap = np.maximum(np.maximum(below, above), 0.0)
        out = np.sqrt(np.einsum("mkd,mkd->mk", gap, gap))
        isin = out == 0.0
        depth = np.min(np.minimum(-below, -above), axis=2)
        s = np.where(isin, depth, out)
        k = np.argmin(s, axis=1)
        rows = np.arange(len(Q))
        dist[s0:s0 + step] = s[rows, k]
        inside[s0:s0 + step] = isin.any(axis=1)
        lk, hk = lo[k], hi[k]
        nr = np.clip(Q, lk, hk)
        hit = isin[rows, k]
        if hit.any():
            faces = np.concatenate([Q[hit] - lk[hit], hk[hit] - Q[hit]], axis=1)
            f = np.argmin(faces, axis=1)
            c = f % d
            side = f >= d
            sub = Q[hit].copy()
            r2 = np.arange(len(sub))
            sub[r2, c] = np.where(side, hk[hit][r2, c], lk[hit][r2, c])
            nr[hit] = sub
        near[s0:s0 + step] = nr
    return dist, near, inside


def boxes_distance(P, lo, hi, backend=None):
    """Distance to the boundary of a union of disjoint closed boxes.

    Returns ``(dist, nearest_boundary_point, inside_some_box)``.
    """
    P = np.ascontiguousarray(P, dtype=np.float64)
    lo = np.ascontiguousarray(lo, dtype=np.float64)
    hi = np.ascontiguousarray(hi, dtype=np.float64)
    if _pick(backend) == "numba":
        return _boxes_distance_nb(P, lo, hi)
    return _boxes_distance_np(P, lo, hi)


# ---------------------------------------------------------------------------
# greedy separated nets


@njit(cache=True, nogil=True)
def _greedy_net_nb(points, order, init, sep):
    n = order.shape[0]
    d = points.shape[1]
    cap = init.shape[0] + n
    chosen = np.empty(cap, dtype=np.int64)
    cnt = 0
    for i in range(init.shape[0]):
        chosen[cnt] = init[i]
        cnt += 1
    sep2 = sep * sep
    for a in range(n):
        idx = order[a]
        ok = True
        for b in range(cnt):
            j = chosen[b]
            if j == idx:
                ok = False
                break
            s = 0.0
            for c in range(d):
                t = points[idx, c] - points[j, c]
                s += t * t
            if s < sep2:
                ok = False
                break
        if ok:
            chosen[cnt] = idx
            cnt += 1
    return chosen[:cnt].copy()


def _greedy_net_np(points, order, init, sep):
    chosen = list(init)
    C = points[init] if len(init) else np.empty((0, points.shape[1]))
    taken = set(int(i) for i in init)
    sep2 = sep * sep
    for idx in order:
        if int(idx) in taken:
            continue
        p = points[idx]
        if len(C) and np.min(np.einsum("ij,ij->i", C - p, C - p)) < sep2:
            continue
        chosen.append(int(idx))
        taken.add(int(idx))
        C = np.vstack([C, p[None]])
    return np.asarray(chosen, dtype=np.int64)


def greedy_net(points, order, init, sep, backend=None):
    """Extend the centers ``init`` to a maximal ``sep``-separated net.

    Candidates are visited in ``order``; returns indices, ``init`` first.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    order = np.ascontiguousarray(order, dtype=np.int64)
    init = np.ascontiguousarray(init, dtype=np.int64)
    if _pick(backend) == "numba":
        return _greedy_net_nb(points, order, init, float(sep))
    return _greedy_net_np(points, order, init, float(sep))


# ---------------------------------------------------------------------------
# single layer potential Hessian


@njit(cache=True, parallel=True, nogil=True)
def _layer_hessian_sq_nb(X, P, w):
    m, d = X.shape
    N = P.shape[0]
    out = np.empty(m)
    for i in prange(m):
        H = np.zeros((d, d))
        for j in range(N):
            r2 = 0.0
            for c in range(d):
                t = X[i, c] - P[j, c]
                r2 += t * t
            if d == 2:
                # K = log|x| / (2 pi)
                inv2 = 1.0 / r2
                f = w[j] / (2.0 * np.pi)
                for a in range(d):
                    ta = X[i, a] - P[j, a]
                    for b in range(d):
                        tb = X[i, b] - P[j, b]
                        v = -2.0 * ta * tb * inv2 * inv2
                        if a == b:
                            v += inv2
                        H[a, b] += f * v
            else:
                # K = -1 / (4 pi |x|)
                r = np.sqrt(r2)
                inv5 = 1.0 / (r2 * r2 * r)
                f = -w[j] / (4.0 * np.pi)
                for a in range(d):
                    ta = X[i, a] - P[j, a]
                    for b in range(d):
                        tb = X[i, b] - P[j, b]
                        v = 3.0 * ta * tb * inv5
                        if a == b:
                            v -= r2 * inv5
                        H[a, b] += f * v
        s = 0.0
        for a in range(d):
            for b in range(d):
                s += H[a, b] * H[a, b]
        out[i] = s
    return out


def _layer_hessian_sq_np(X, P, w):
    m, d = X.shape
    N = P.shape[0]
    out = np.empty(m)
    eye = np.eye(d)
    step = max(1, _CHUNK // max(N * d, 1))
    for s0 in range(0, m, step):
        D = X[s0:s0 + step, None, :] - P[None, :, :]
        r2 = np.einsum("mnd,mnd->mn", D, D)
        outer = D[..., :, None] * D[..., None, :]
        if d == 2:
            inv2 = 1.0 / r2
            Hs = (eye * inv2[..., None, None] - 2.0 * outer * (inv2 * inv2)[..., None, None])
            H = np.einsum("n,mnab->mab", w / (2.0 * np.pi), Hs)
        else:
            r = np.sqrt(r2)
            inv5 = 1.0 / (r2 * r2 * r)
            Hs = 3.0 * outer * inv5[..., None, None] - eye * (r2 * inv5)[..., None, None]
            H = np.einsum("n,mnab->mab", -w / (4.0 * np.pi), Hs)
        out[s0:s0 + step] = np.einsum("mab,mab->m", H, H)
    return out


def layer_hessian_sq(X, P, w, backend=None):
    """``|sum_j w_j Hess K(X_i - P_j)|_F^2`` for every row ``X_i``.

    ``K`` is the Laplace fundamental solution: logarithmic in the plane,
    ``-1/(4 pi |x|)`` in space.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    P = np.ascontiguousarray(P, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if X.shape[1] not in (2, 3):
        raise ValueError("layer potential Hessian is implemented for d = 2, 3")
    if _pick(backend) == "numba":
        return _layer_hessian_sq_nb(X, P, w)
    return _layer_hessian_sq_np(X, P, w)


# ---------------------------------------------------------------------------
# raster lookups along chords of the unit disk


@njit(cache=True, nogil=True)
def _chord_raster_max_nb(D, V, offsets):
    cells = D.shape[0] - 1
    g = 2.0 / cells
    nv = V.shape[0]
    nt = offsets.shape[0]
    out = np.full((nv, nt), -np.inf)
    for a in range(nv):
        vx, vy = V[a, 0], V[a, 1]
        ux, uy = -vy, vx
        for b in range(nt):
            t = offsets[b]
            lim = 1.0 - t * t
            best = -np.inf
            for c in range(cells + 1):
                s = -1.0 + c * g
                if s * s > lim:
                    continue
                px = t * vx + s * ux
                py = t * vy + s * uy
                i = int(np.rint((px + 1.0) / g))
                j = int(np.rint((py + 1.0) / g))
                i = min(max(i, 0), cells)
                j = min(max(j, 0), cells)
                if D[i, j] > best:
                    best = D[i, j]
            out[a, b] = best
    return out


def _chord_raster_max_np(D, V, offsets):
    cells = D.shape[0] - 1
    g = 2.0 / cells
    s = np.linspace(-1.0, 1.0, cells + 1)
    out = np.empty((len(V), len(offsets)))
    U = np.column_stack([-V[:, 1], V[:, 0]])
    for a in range(0, len(V), 64):
        v = V[a:a + 64]
        u = U[a:a + 64]
        pts = (offsets[None, :, None, None] * v[:, None, None, :]
               + s[None, None, :, None] * u[:, None, None, :])
        ok = (s[None, :] ** 2 <= 1.0 - offsets[:, None] ** 2)[None]
        ij = np.clip(np.rint((pts + 1.0) / g).astype(np.int64), 0, cells)
        vals = np.where(ok, D[ij[..., 0], ij[..., 1]], -np.inf)
        out[a:a + 64] = vals.max(axis=2)
    return out


def chord_raster_max(D, V, offsets, backend=None):
    """Max of the raster ``D`` (nodes on ``[-1, 1]^2``) along every chord
    ``{z . v = t} ∩ unit disk``, read at the nearest node."""
    D = np.ascontiguousarray(D, dtype=np.float64)
    V = np.ascontiguousarray(V, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.float64)
    if _pick(backend) == "numba":
        return _chord_raster_max_nb(D, V, offsets)
    return _chord_raster_max_np(D, V, offsets)
