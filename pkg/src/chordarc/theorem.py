"""Flatness to exterior access, packing and square-function diagnostics."""
from dataclasses import dataclass
import logging
import math

import numpy as np

from . import kernels
from .accessibility import EXTERIOR, CorkscrewCert, c0_exterior_value, cert_problems
from .errors import (ChordArcError, FlatnessViolation, OracleInconsistency, PreconditionError,
                     ResolutionError)
from .flatness import low_beta_window
from .geometry import Ball, Hyperplane, inscribed_halfball, plane_offset

log = logging.getLogger(__name__)


class HalfBallNotClear(PreconditionError):
    """A boundary sample sits in a half-ball that flatness says is empty."""


def side_constant(c, C):
    """``(k, ck/4)``: probe depth and the flatness threshold it allows."""
    if not (c > 0 and C >= 1):
        raise PreconditionError("need c > 0 and C >= 1")
    k = 1.0 / (2 * C + 1)
    return k, c * k / 4


@dataclass
class SideClassification:
    exterior_side: str  # "+" or "-"
    interior_side: str
    X_plus: np.ndarray
    X_minus: np.ndarray
    k: float
    c: float
    C: float
    eps: float
    plane: Hyperplane
    corkscrew: Ball

    def as_dict(self):
        return {"exterior_side": self.exterior_side, "interior_side": self.interior_side,
                "X_plus": self.X_plus.tolist(), "X_minus": self.X_minus.tolist(),
                "k": self.k, "c": self.c, "C": self.C, "eps": self.eps,
                "corkscrew": {"center": self.corkscrew.center.tolist(),
                              "radius": self.corkscrew.radius}}


def side_classify(oracle, S, x, r, P, c, C, eps, check_samples=True):
    """Decide which side of ``P`` near ``x`` is exterior.

    The probes are ``X± = x ± k r v / 2`` with ``k = 1/(2C+1)``. Exactly one
    of them must be outside the closure. The returned corkscrew is the
    largest ball in ``B(x, r)`` on the exterior side of the slab
    ``|offset from P| <= eps r``; when ``P`` passes through ``x`` its radius
    is ``r(1 - eps)/2``.
    """
    x = np.asarray(x, dtype=np.float64)
    k, limit = side_constant(c, C)
    if not 0 <= eps < limit:
        raise PreconditionError(f"eps={eps:g} must be below ck/4={limit:g}")
    if S.distance(x) > S.h * (1 + 1e-9):
        raise PreconditionError("x is not within h of the sampled boundary")
    v = P.normal
    Xp, Xm = x + k * r * v / 2, x - k * r * v / 2
    out = oracle.outside(np.vstack([Xp, Xm]))
    inn = oracle.inside(np.vstack([Xp, Xm]))
    if out.all():
        raise OracleInconsistency("both probes are outside the closure")
    if inn.all():
        log.warning("both probes inside at x=%s r=%g eps=%g c=%g C=%g",
                    x.tolist(), r, eps, c, C)
        raise FlatnessViolation(f"both probes inside at x={x.tolist()}, r={r:g}")
    if not out.any():
        raise OracleInconsistency("neither probe is outside the closure")
    sign = 1.0 if out[0] else -1.0
    if check_samples:
        idx = S.in_ball(x, r)
        off = plane_offset(P, S.points[idx])
        if np.any(np.abs(off) > eps * r):
            raise HalfBallNotClear(
                f"{int(np.sum(np.abs(off) > eps * r))} samples outside the eps-slab")
    t = float(plane_offset(P, x))
    # the slab is centered on P, which may sit up to eps r away from x
    eff = max(0.0, eps - sign * t / r)
    ball = inscribed_halfball(Ball(x, r), sign * v, eff)
    ext = "+" if sign > 0 else "-"
    return SideClassification(ext, "-" if sign > 0 else "+", Xp, Xm, k, c, C, eps, P, ball)


@dataclass
class FlatnessOutcome:
    ok: bool
    stage: str  # "done", "rho-scan" or "classification"
    cert: CorkscrewCert = None
    window: tuple = None  # (x1, r1, beta)
    side: SideClassification = None
    detail: str = ""

    def as_dict(self):
        out = {"ok": self.ok, "stage": self.stage, "detail": self.detail}
        if self.window is not None:
            out["window"] = {"x": self.window[0].tolist(), "r": self.window[1],
                             "beta": self.window[2]}
        if self.cert is not None:
            out["cert"] = self.cert.as_dict()
        return out


def exterior_corkscrew_via_flatness(oracle, S, x, r, eps, c, C, validate=True):
    """Exterior corkscrew for ``B(x, r)`` from a flat sub-window.

    A flat window ``B(x1, r1)`` inside ``B(x, r)`` is located by a dyadic
    scale scan, its best plane is classified, and the exterior half-ball
    becomes the certificate relative to ``B(x, r)``.
    """
    x = np.asarray(x, dtype=np.float64)
    _, limit = side_constant(c, C)
    if not eps < limit:
        raise PreconditionError(f"eps={eps:g} must be below ck/4={limit:g}")
    found = low_beta_window(S, oracle, x, r, eps)
    if found is None:
        return FlatnessOutcome(False, "rho-scan", detail="no window with bbeta < eps")
    x1, r1, rec = found
    window = (x1, r1, rec.value)
    try:
        side = side_classify(oracle, S, x1, r1, rec.plane, c, C, eps)
    except ChordArcError as err:
        return FlatnessOutcome(False, "classification", window=window,
                               detail=f"{type(err).__name__}: {err}")
    ball = side.corkscrew
    cert = CorkscrewCert(x.copy(), float(r), ball.center, ball.radius, EXTERIOR)
    if validate:
        bad = cert_problems(oracle, cert)
        if bad:
            return FlatnessOutcome(False, "classification", cert, window, side, "; ".join(bad))
    return FlatnessOutcome(True, "done", cert, window, side)


# ---------------------------------------------------------------------------
# packing of cubes without exterior access


def c0_values(G, oracle, cubes=None, parallel_map=map):
    """Best exterior corkscrew radius over ``ℓ(Q)`` for every cube."""
    cubes = G.all_cubes() if cubes is None else cubes
    vals = parallel_map(lambda q: ((q.k, q.id), c0_exterior_value(oracle, q)[0]), cubes)
    return dict(vals)


def packing_ratio(G, oracle, Q, c0, values=None):
    """``Σ σ(Q')/σ(Q)`` over descendants ``Q'`` failing the ``c0`` exterior test."""
    if not 0 < c0 < 1 / 8:
        raise PreconditionError("c0 must lie in (0, 1/8)")
    desc = Q.descendants()
    if values is None:
        values = c0_values(G, oracle, desc)
    bad = sum(q.sigma for q in desc if values[(q.k, q.id)] < c0)
    return bad / Q.sigma


# ---------------------------------------------------------------------------
# single layer square function


def layer_energy(S, B, kappa=3.0, oracle=None, split=False, spacing=None, backend=None):
    """Normalized ``∫_B |∇²𝒮1|² δ dX`` over a lattice, away from a collar.

    The lattice has spacing ``r/64``; points with ``δ_S <= κh`` are dropped.
    With ``split=True`` (needs ``oracle``) returns ``(total, inside, outside)``.
    """
    if S.dim not in (2, 3):
        raise PreconditionError("layer energy needs d = 2 or 3")
    if kappa < 3:
        raise PreconditionError("collar factor kappa must be at least 3")
    r = B.radius
    step = r / 64 if spacing is None else spacing
    m = int(math.floor(r / step))
    g = np.arange(-m, m + 1) * step
    L = np.stack(np.meshgrid(*([g] * S.dim), indexing="ij"), axis=-1).reshape(-1, S.dim)
    L = B.center + L[np.linalg.norm(L, axis=1) < r]
    dS = S.distance(L)
    keep = dS > kappa * S.h
    if not keep.any():
        raise ResolutionError("no lattice point left outside the collar")
    L, dS = L[keep], dS[keep]
    H2 = kernels.layer_hessian_sq(L, S.points, S.weights, backend=backend)
    n = S.dim - 1
    e = H2 * dS * step ** S.dim / r ** n
    total = float(e.sum())
    if not split:
        return total
    if oracle is None:
        raise PreconditionError("split energy needs a domain oracle")
    ins = oracle.inside(L)
    return total, float(e[ins].sum()), float(e[~ins].sum())


# ---------------------------------------------------------------------------
# Ahlfors regularity


@dataclass
class ADREstimate:
    C_low: float
    C_high: float
    used: int
    excluded: int

    def as_dict(self):
        return {"C_low": self.C_low, "C_high": self.C_high, "used": self.used,
                "excluded": self.excluded}


def adr_estimate(S, windows):
    """Extreme values of ``σ(Δ(x, r)) / r^n`` over ``(x, r)`` windows."""
    n = S.dim - 1
    ratios, excluded = [], 0
    for x, r in windows:
        if r < 10 * S.h * (1 - 1e-12):
            raise PreconditionError(f"window radius {r:g} below 10h")
        x = np.asarray(x, dtype=np.float64)
        idx = S.in_ball(x, r)
        if len(idx) == 0 or not _window_covered(S, x, r):
            excluded += 1
            continue
        ratios.append(S.weights[idx].sum() / r ** n)
    if not ratios:
        return ADREstimate(math.nan, math.nan, 0, excluded)
    return ADREstimate(float(min(ratios)), float(max(ratios)), len(ratios), excluded)


def _window_covered(S, x, r):
    if S.window is None:
        return True
    axes, half = S.window
    return bool(np.all(np.abs(x[list(axes)]) + r <= half + 1e-12))
