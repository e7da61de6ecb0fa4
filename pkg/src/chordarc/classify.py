"""Domain classifier: sweep every diagnostic and bundle the verdicts.

Verdicts are qualified by the scales actually tested. Nothing here claims an
asymptotic property.
"""
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
import json
import math

import numpy as np

from . import __version__
from ._accel import backend
from .accessibility import exterior_corkscrew, good_curve, interior_corkscrew
from .cloud import sample_boundary
from .domains import make_domain, parse_spec
from .dyadic import build_grid
from .errors import (ChordArcError, GoodCurveFailure, PreconditionError, ResolutionError,
                     ScaleRangeError)
from .flatness import bad_set, carleson_norm
from .geometry import Ball
from .theorem import (adr_estimate, c0_values, exterior_corkscrew_via_flatness, layer_energy,
                      side_constant)

SCHEMA_VERSION = "1.0"
PASS, FAIL, UNTESTED = "pass", "fail", "untested"


@dataclass
class AnalysisConfig:
    h: float = None
    r_min: float = None
    r_max: float = None
    k_max: int = None
    n_windows: int = 50
    n_pairs: int = 20
    lambda_max: float = 64.0
    eps_grid: tuple = (0.05, 0.1, 0.2)
    ur_eps: float = 0.1
    c0_grid: tuple = (0.01, 0.05)
    beta_A: float = 2.0
    corkscrew_fraction: float = 1 / 40
    lattice_step: float = None
    energy_windows: int = 3
    energy_kappa: float = 3.0
    flatness_check: bool = True
    corkscrew_min: float = 0.1
    exterior_min: float = 0.05
    curve_C_max: float = 8.0
    curve_c_min: float = 0.05
    adr_max: float = 16.0
    ur_slope_max: float = 0.35
    seed: int = 0
    threads: int = 1

    @classmethod
    def from_mapping(cls, data):
        known = {f.name: f for f in fields(cls)}
        out = {}
        for key, val in data.items():
            key = key.replace("-", "_")
            if key not in known:
                raise PreconditionError(f"unknown config key {key!r}")
            out[key] = _coerce(known[key], val)
        return cls(**out)


def _coerce(f, val):
    if val is None or not isinstance(val, str):
        return tuple(val) if isinstance(val, list) else val
    if f.name.endswith("_grid"):
        return tuple(float(v) for v in val.replace(",", " ").split())
    if f.name in ("n_windows", "n_pairs", "k_max", "energy_windows", "seed", "threads"):
        return int(val)
    if f.name == "flatness_check":
        return val.strip().lower() in ("1", "true", "yes", "on")
    return float(val)


def resolve(config, dom):
    """Fill unset scale parameters from the domain."""
    cap = dom.scale_cap
    c = AnalysisConfig(**asdict(config))
    if c.h is None:
        c.h = min(cap / 1000, dom.feature_size / 16)
    if c.r_min is None:
        c.r_min = 10 * c.h
    if c.r_max is None:
        c.r_max = cap / 8
    if c.r_min < 10 * c.h * (1 - 1e-12):
        raise ResolutionError(f"r_min={c.r_min:g} is below 10h={10 * c.h:g}")
    if c.r_max < c.r_min:
        raise ResolutionError(f"scale range [{c.r_min:g}, {c.r_max:g}] is empty at h={c.h:g}")
    if c.k_max is None:
        c.k_max = max(2, min(12, int(math.floor(math.log2(1 / (10 * c.h))))))
    if c.lattice_step is None:
        c.lattice_step = cap / 128
    if not c.eps_grid or not c.c0_grid:
        raise PreconditionError("eps and c0 grids must be nonempty")
    return c


@contextmanager
def _mapper(threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            yield pool.map
    else:
        yield map


def _windows(S, cfg, rng):
    """Centers in farthest-point order from a seeded start; radii log-spaced."""
    order = _spread_order(S, int(rng.integers(len(S))), min(len(S), 4 * cfg.n_windows))
    used = set()
    out = []
    lo, hi = math.log(cfg.r_min), math.log(cfg.r_max)
    for i in range(cfg.n_windows):
        t = i / max(1, cfg.n_windows - 1)
        r = float(math.exp(lo + t * (hi - lo)))
        ok = S.fully_sampled(r)
        j = next((j for j in order if ok[j] and j not in used), None)
        if j is None:
            cand = np.flatnonzero(ok)
            if len(cand) == 0:
                continue
            j = int(rng.choice(cand))
        used.add(j)
        out.append((S.points[j].copy(), r))
    return out


def _spread_order(S, start, n):
    """Farthest-point order over the samples; extreme points come early."""
    pts = S.points
    chosen = [start]
    d = np.linalg.norm(pts - pts[start], axis=1)
    for _ in range(n - 1):
        j = int(np.argmax(d))
        chosen.append(j)
        d = np.minimum(d, np.linalg.norm(pts - pts[j], axis=1))
    return chosen


def _stat(v):
    if v is None:
        return None
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


# ---------------------------------------------------------------------------
# stages


def _stage_corkscrews(dom, windows, cfg, pmap):
    def one(w):
        x, r = w
        step = r * cfg.corkscrew_fraction
        ci = interior_corkscrew(dom, x, r, step)
        ce = exterior_corkscrew(dom, x, r, step)
        return (0.0 if ci is None else ci.constant, 0.0 if ce is None else ce.constant)

    vals = list(pmap(one, windows))
    inner = [v[0] for v in vals]
    outer = [v[1] for v in vals]
    fail_scales = sorted({w[1] for w, v in zip(windows, outer) if v < cfg.exterior_min})
    worst_i = int(np.argmin(inner))
    worst_e = int(np.argmin(outer))
    return {
        "windows": len(windows),
        "interior_min": _stat(min(inner)),
        "interior_worst": {"x": windows[worst_i][0].tolist(), "r": windows[worst_i][1]},
        "exterior_min": _stat(min(outer)),
        "exterior_worst": {"x": windows[worst_e][0].tolist(), "r": windows[worst_e][1]},
        "exterior_failure_scales": [_stat(r) for r in fail_scales],
    }


def _pairs(dom, S, cfg, rng):
    """Endpoints with ``|X - Y| / δ(X)`` spread over ``[1, lambda_max]``.

    Short pairs step off a deep point. Long pairs join a deep point to a
    shallow corkscrew point near a farthest-point anchor, so extreme
    boundary points (tips, corners) are probed first.
    """
    n = cfg.n_pairs
    anchors = _spread_order(S, int(rng.integers(len(S))), min(len(S), 2 * n))
    out = []
    j = 0
    for i in range(n):
        lam = cfg.lambda_max ** (i / max(1, n - 1))
        qa = S.points[anchors[(n + i) % len(anchors)]]
        deep = interior_corkscrew(dom, qa, cfg.r_max, cfg.r_max * cfg.corkscrew_fraction)
        if deep is None:
            continue
        X = deep.point
        if lam < 4:
            # step off X by lam * δ(X) along the first direction that stays inside
            dX = float(dom.distance(X))
            turn = float(rng.uniform(0, 2 * math.pi))
            for a in turn + 2 * math.pi * np.arange(16) / 16:
                u = np.zeros(S.dim)
                u[0], u[1] = math.cos(a), math.sin(a)
                Y = X + lam * dX * u
                if dom.inside(Y):
                    out.append((X, Y))
                    break
            continue
        qb = S.points[anchors[j % len(anchors)]]
        j += 1
        rho = 2 * float(np.linalg.norm(X - qb)) / lam
        rho = min(cfg.r_max, max(rho, cfg.r_min))
        near = interior_corkscrew(dom, qb, rho, rho * cfg.corkscrew_fraction)
        if near is None or np.allclose(near.point, X):
            continue
        out.append((X, near.point))
    return out + _mirror_pairs(dom, S, cfg, anchors)


def _mirror_pairs(dom, S, cfg, anchors, limit=None):
    """Pairs reflected across the boundary where both sides are interior (slits)."""
    if not dom.has_nearest:
        return []
    limit = max(1, cfg.n_pairs // 4) if limit is None else limit
    out = []
    for i, a in enumerate(anchors):
        t = (i % 4) / 3
        rho = math.exp(math.log(cfg.r_min) + t * (math.log(cfg.r_max) - math.log(cfg.r_min)))
        cert = interior_corkscrew(dom, S.points[a], rho, rho * cfg.corkscrew_fraction)
        if cert is None:
            continue
        X = cert.point
        Y = 2 * dom.nearest_boundary(X) - X
        if dom.inside(Y) and not np.allclose(X, Y):
            out.append((X, Y))
            if len(out) >= limit:
                break
    return out


def _stage_curves(dom, pairs, cfg, pmap):
    def one(p):
        X, Y = p
        lam = float(np.linalg.norm(X - Y) / min(dom.distance(X), dom.distance(Y)))
        try:
            g = good_curve(dom, X, Y, cfg.lattice_step, cfg.corkscrew_fraction)
        except GoodCurveFailure as err:
            return {"lambda": lam, "ok": False, "stage": err.stage}
        return {"lambda": lam, "ok": True, "C": g.C_meas, "c": g.c_meas,
                "cases": "+".join(g.case_trace)}

    runs = list(pmap(one, pairs))
    good = [r for r in runs if r["ok"]]
    return {
        "pairs": len(runs),
        "failures": sum(1 for r in runs if not r["ok"]),
        "failed_stages": sorted({r["stage"] for r in runs if not r["ok"]}),
        "lambda_min": _stat(min((r["lambda"] for r in runs), default=math.nan)),
        "lambda_max": _stat(max((r["lambda"] for r in runs), default=math.nan)),
        "C_max": _stat(max((r["C"] for r in good), default=math.nan)),
        "c_min": _stat(min((r["c"] for r in good), default=math.nan)),
        "runs": [{k: _stat(v) if isinstance(v, float) else v for k, v in r.items()}
                 for r in runs],
    }


def _slope(xs, ys):
    if len(xs) < 2:
        return math.nan
    return float(np.polyfit(np.asarray(xs, float), np.asarray(ys, float), 1)[0])


def _stage_bwgl(G, S, dom, cfg, pmap):
    base = bad_set(G, S, dom, min(cfg.eps_grid), cfg.beta_A, pmap)
    out = {"A": cfg.beta_A, "k_max": G.k_max, "grid": []}
    ks = [k for k in range(max(G.k_min, G.k_max - 2), G.k_max + 1)]
    for eps in cfg.eps_grid:
        bad = bad_set(G, S, dom, eps, cfg.beta_A, values=base.values)
        norms = [carleson_norm(G, bad, k).norm for k in ks]
        rep = carleson_norm(G, bad)
        out["grid"].append({"eps": eps, "norm": rep.norm, "norms_by_kmax": dict(zip(map(str, ks), norms)),
                            "slope_per_generation": _stat(_slope(ks[-2:], norms[-2:])),
                            "bad_counts": {str(k): v for k, v in rep.bad_counts.items()},
                            "untested": rep.untested})
    return out


def _stage_packing(G, dom, cfg, pmap):
    vals = c0_values(G, dom, parallel_map=pmap)
    out = {"a0": G.a0, "c0_cap": G.a0 / 16, "grid": []}
    for c0 in cfg.c0_grid:
        ratios = {}
        for Q in G.top_cubes():
            bad = sum(q.sigma for q in Q.descendants() if vals[(q.k, q.id)] < c0)
            ratios[str(Q.id)] = bad / Q.sigma
        out["grid"].append({"c0": c0, "sup_ratio": max(ratios.values()), "ratios": ratios})
    return out


def _stage_energy(S, dom, windows, cfg):
    picks = sorted(windows, key=lambda w: -w[1])[:cfg.energy_windows]
    rows = []
    for x, r in picks:
        e = layer_energy(S, Ball(x, r), cfg.energy_kappa)
        rows.append({"x": x.tolist(), "r": r, "energy": e})
    return {"kappa": cfg.energy_kappa, "collar": cfg.energy_kappa * S.h, "windows": rows}


def _stage_theorem(dom, S, windows, cfg, c, C, pmap):
    k, limit = side_constant(c, C)
    eps = 0.9 * limit
    use = [w for w in windows if w[1] >= 40 * S.h]

    def one(w):
        o = exterior_corkscrew_via_flatness(dom, S, w[0], w[1], eps, c, C)
        return (o.ok, o.cert.constant if o.ok else 0.0, o.stage)

    res = list(pmap(one, use))
    ok = [r for r in res if r[0]]
    return {"c": c, "C": C, "k": k, "eps": eps, "windows": len(use), "succeeded": len(ok),
            "constant_min": _stat(min((r[1] for r in ok), default=math.nan)),
            "stages": sorted({r[2] for r in res if not r[0]})}


# ---------------------------------------------------------------------------
# verdicts


def _verdict(status, statistic, threshold):
    return {"status": status, "statistic": statistic, "threshold": threshold}


def _combine(*states):
    if FAIL in states:
        return FAIL
    if UNTESTED in states:
        return UNTESTED
    return PASS


def _verdicts(rep, cfg):
    v = {}
    adr = rep["adr"]
    if adr is None or not adr.get("used"):
        v["ADR"] = _verdict(UNTESTED, None, cfg.adr_max)
    else:
        C = max(adr["C_high"], 1 / adr["C_low"])
        v["ADR"] = _verdict(PASS if C <= cfg.adr_max else FAIL, C, cfg.adr_max)
    bw = rep["bwgl"]
    row = None if bw is None else next((g for g in bw["grid"] if g["eps"] == cfg.ur_eps), None)
    if row is None or not isinstance(row["slope_per_generation"], float):
        v["UR-diag"] = _verdict(UNTESTED, None, cfg.ur_slope_max)
    else:
        s = row["slope_per_generation"]
        v["UR-diag"] = _verdict(PASS if s <= cfg.ur_slope_max else FAIL, s, cfg.ur_slope_max)
    ck, cv = rep["corkscrews"], rep["curves"]
    if ck is None or cv is None or cv["pairs"] == 0:
        v["Uniform"] = _verdict(UNTESTED, None, None)
    else:
        ok = (ck["interior_min"] >= cfg.corkscrew_min and cv["failures"] == 0
              and cv["C_max"] <= cfg.curve_C_max and cv["c_min"] >= cfg.curve_c_min)
        v["Uniform"] = _verdict(PASS if ok else FAIL,
                                {"interior_min": ck["interior_min"], "C_max": cv["C_max"],
                                 "c_min": cv["c_min"], "failures": cv["failures"]},
                                {"interior_min": cfg.corkscrew_min, "C_max": cfg.curve_C_max,
                                 "c_min": cfg.curve_c_min})
    if ck is None:
        ext = UNTESTED
    else:
        ext = PASS if ck["exterior_min"] >= cfg.exterior_min else FAIL
    v["NTA"] = _verdict(_combine(v["Uniform"]["status"], ext),
                        None if ck is None else ck["exterior_min"], cfg.exterior_min)
    v["ChordArc"] = _verdict(_combine(v["NTA"]["status"], v["ADR"]["status"]), None, None)
    return v


# ---------------------------------------------------------------------------


def classify_domain(spec, config=None):
    """Run every stage on a corpus domain and return the report as a dict."""
    config = AnalysisConfig() if config is None else config
    spec = parse_spec(spec)
    dom = make_domain(spec)
    cfg = resolve(config, dom)
    rng = np.random.default_rng(cfg.seed)
    S = sample_boundary(dom, cfg.h)
    windows = _windows(S, cfg, rng)
    if not windows:
        raise ResolutionError("no analysis window fits the sampled boundary")
    rep = {"schema_version": SCHEMA_VERSION, "spec": spec.label(), "domain": dom.describe(),
           "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()},
           "scale_range": [cfg.r_min, cfg.r_max]}
    untested = {}
    with _mapper(cfg.threads) as pmap:
        adr = adr_estimate(S, windows)
        rep["adr"] = adr.as_dict()
        rep["corkscrews"] = _stage_corkscrews(dom, windows, cfg, pmap)
        rep["curves"] = _stage_curves(dom, _pairs(dom, S, cfg, rng), cfg, pmap)
        try:
            G = build_grid(S, 0, cfg.k_max)
            rep["bwgl"] = _stage_bwgl(G, S, dom, cfg, pmap)
            rep["packing"] = _stage_packing(G, dom, cfg, pmap)
        except (ResolutionError, ScaleRangeError) as err:
            G = None
            untested["bwgl"] = untested["packing"] = str(err)
            rep["bwgl"] = rep["packing"] = None
        try:
            rep["layer_energy"] = _stage_energy(S, dom, windows, cfg)
        except ResolutionError as err:
            untested["layer_energy"] = str(err)
            rep["layer_energy"] = None
        verdicts = _verdicts(rep, cfg)
        theorem = None
        if (cfg.flatness_check and verdicts["Uniform"]["status"] == PASS
                and verdicts["UR-diag"]["status"] == PASS):
            c = min(rep["corkscrews"]["interior_min"], 0.5)
            C = max(1.0, rep["curves"]["C_max"])
            try:
                theorem = _stage_theorem(dom, S, windows, cfg, c, C, pmap)
            except ChordArcError as err:
                untested["theorem_check"] = str(err)
    rep["theorem_check"] = theorem
    rep["verdicts"] = verdicts
    rep["untested"] = untested
    rep["provenance"] = {"seed": cfg.seed, "h": cfg.h, "samples": len(S),
                         "versions": _versions(), "backend": backend()}
    return _ordered(rep)


FIELD_ORDER = ("schema_version", "spec", "domain", "config", "scale_range", "adr", "corkscrews",
               "curves", "bwgl", "packing", "layer_energy", "theorem_check", "verdicts",
               "untested", "provenance")


def _ordered(rep):
    return {k: rep[k] for k in FIELD_ORDER}


def _versions():
    import scipy
    out = {"chordarc": __version__, "numpy": np.__version__, "scipy": scipy.__version__}
    try:
        import numba
        out["numba"] = numba.__version__
    except ImportError:  # pragma: no cover
        pass
    return out


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _stat(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def report_json(rep):
    """Serialize with stable key order and float formatting."""
    return json.dumps(_clean(rep), indent=2, allow_nan=False) + "\n"


def validate_report(rep):
    """Check a report dict against the published layout; returns a list of problems."""
    bad = []
    if rep.get("schema_version") != SCHEMA_VERSION:
        bad.append("schema_version mismatch")
    for key in FIELD_ORDER:
        if key not in rep:
            bad.append(f"missing {key}")
    if list(rep)[:len(FIELD_ORDER)] != list(FIELD_ORDER):
        bad.append("field order differs")
    for name in ("ADR", "UR-diag", "Uniform", "NTA", "ChordArc"):
        st = rep.get("verdicts", {}).get(name, {}).get("status")
        if st not in (PASS, FAIL, UNTESTED):
            bad.append(f"verdict {name} has status {st!r}")
    for key in ("seed", "h", "versions"):
        if key not in rep.get("provenance", {}):
            bad.append(f"provenance lacks {key}")
    return bad
