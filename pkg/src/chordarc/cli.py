"""Command line front end.

Settings come from three layers: built-in defaults, then a flat
``key = value`` config file given with ``--config``, then flags. Config keys
are the flag names without leading dashes (``n-windows`` or ``n_windows``).
"""
import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import fields

import numpy as np

from . import __version__
from .accessibility import (EXTERIOR, INTERIOR, exterior_corkscrew, good_curve,
                            interior_corkscrew, save_curve)
from .classify import (FAIL, PASS, AnalysisConfig, _mapper, classify_domain, report_json,
                       validate_report)
from .cloud import load_cloud, sample_boundary, save_cloud
from .domains import make_domain, parse_spec
from .dyadic import build_grid, export_grid, verify_grid
from .errors import ChordArcError, CloudParseError, PreconditionError
from .flatness import bad_set, beta_csv_rows, carleson_norm
from .geometry import Ball
from .theorem import c0_values, exterior_corkscrew_via_flatness, layer_energy

EXIT_OK, EXIT_ERROR, EXIT_PRECONDITION, EXIT_ASSERT, EXIT_USAGE = 0, 1, 2, 3, 64

# names accepted by --assert
VERDICT_NAMES = {"adr": "ADR", "ur": "UR-diag", "urdiag": "UR-diag", "ur-diag": "UR-diag",
                 "uniform": "Uniform", "nta": "NTA", "ntachk": "NTA", "chordarc": "ChordArc",
                 "chord-arc": "ChordArc"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# config handling


def read_config(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = val
    return out


def _settings(args, parser, defaults):
    """Defaults < config file < flags."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        conf = read_config(args.config)
        actions = {a.dest: a for a in parser._actions}
        for key, val in conf.items():
            a = actions.get(key)
            if a is None or key in ("config", "help"):
                raise UsageError(f"unknown config key {key!r}")
            try:
                if a.const is True:
                    merged[key] = _flag(val)
                elif a.type is not None:
                    merged[key] = a.type(val)
                else:
                    merged[key] = val
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for {key}: {val!r}") from exc
    merged.update({k: v for k, v in vars(args).items() if v is not None})
    return argparse.Namespace(**merged)


def _point(text):
    vals = [float(v) for v in text.replace(",", " ").split()]
    if len(vals) not in (2, 3):
        raise ValueError("a point needs 2 or 3 coordinates")
    return np.array(vals)


def _floats(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _flag(text):
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


# ---------------------------------------------------------------------------
# shared inputs


def _domain(args):
    if not args.spec:
        raise PreconditionError("this command needs --spec (a domain oracle)")
    return make_domain(parse_spec(args.spec))


def _boundary(args, dom=None):
    """The sampled boundary: ``--cloud`` if given, else sampled from ``--spec``."""
    if args.cloud:
        return load_cloud(args.cloud)
    dom = _domain(args) if dom is None else dom
    h = args.h if args.h is not None else min(dom.scale_cap / 1000, dom.feature_size / 16)
    return sample_boundary(dom, h)


def _k_max(args, S):
    if args.k_max is not None:
        return args.k_max
    return max(2, min(12, int(math.floor(math.log2(1 / (10 * S.h))))))


def _emit(args, text):
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(obj):
    return report_json(obj)


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args):
    dom = _domain(args)
    S = _boundary(args, dom)
    save_cloud(S, args.out or sys.stdout)
    if args.out:
        info = {"samples": len(S), "h": S.h, "dim": S.dim, "out": args.out}
        sys.stderr.write(_dump(info) if args.json else f"{len(S)} samples at h={S.h:g}\n")
    return EXIT_OK


def cmd_grid(args):
    S = _boundary(args)
    G = build_grid(S, args.k_min, _k_max(args, S))
    if args.out:
        export_grid(G, args.out)
    rep = verify_grid(G).as_dict()
    if args.json or not args.out:
        sys.stdout.write(_dump(rep))
    else:
        ok = rep["partition"] and rep["nesting"] and rep["unique_ancestor"]
        sys.stdout.write(f"grid k=[{G.k_min}, {G.k_max}] cubes={G.cube_count()} "
                         f"properties={'ok' if ok else 'violated'} a0={rep['a0']:.4g}\n")
    return EXIT_OK


def cmd_beta(args):
    S = _boundary(args)
    dom = _domain(args) if args.spec else None
    G = build_grid(S, args.k_min, _k_max(args, S))
    with _mapper(args.threads) as pmap:
        bad = bad_set(G, S, dom, args.eps, args.A, pmap)
    rows = beta_csv_rows(G, bad)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "ell"] + [f"x{i + 1}" for i in range(S.dim)] + ["bbeta", "flagged"])
    w.writerows(rows)
    if args.json:
        rep = carleson_norm(G, bad).as_dict()
        if args.out:
            _emit(args, buf.getvalue())
        sys.stdout.write(_dump(rep))
    else:
        _emit(args, buf.getvalue())
    return EXIT_OK


def cmd_corkscrew(args):
    dom = _domain(args)
    x, r = args.x, args.r
    step = args.step if args.step is not None else r / 200
    certs = []
    kinds = ("interior", "exterior") if args.kind == "both" else (args.kind,)
    for kind in kinds:
        if kind == "flatness":
            S = _boundary(args, dom)
            o = exterior_corkscrew_via_flatness(dom, S, x, r, args.eps, args.c, args.C)
            certs.append({"kind": "flatness", **o.as_dict()})
            continue
        fn = interior_corkscrew if kind == "interior" else exterior_corkscrew
        cert = fn(dom, x, r, step)
        certs.append({"kind": INTERIOR if kind == "interior" else EXTERIOR, "found": False}
                     if cert is None else cert.as_dict())
    _emit(args, _dump({"x": x.tolist(), "r": r, "certs": certs}))
    return EXIT_OK


def cmd_curve(args):
    dom = _domain(args)
    gc = good_curve(dom, args.X, args.Y, args.lattice_step, args.corkscrew_fraction)
    side = gc.sidecar()
    side["vertices"] = len(gc.curve.vertices)
    if args.out:
        save_curve(gc, args.out)
        sys.stdout.write(_dump(side) if args.json else
                         f"C={gc.C_meas:.4g} c={gc.c_meas:.4g} cases={'+'.join(gc.case_trace)}\n")
    else:
        side["curve"] = gc.curve.vertices.tolist()
        sys.stdout.write(_dump(side))
    return EXIT_OK


def cmd_pack(args):
    dom = _domain(args)
    S = _boundary(args, dom)
    G = build_grid(S, args.k_min, _k_max(args, S))
    with _mapper(args.threads) as pmap:
        vals = c0_values(G, dom, parallel_map=pmap)
    out = {"a0": G.a0, "c0_cap": G.a0 / 16, "grid": []}
    for c0 in args.c0:
        if not 0 < c0 < 1 / 8:
            raise PreconditionError("c0 must lie in (0, 1/8)")
        ratios = {}
        for Q in G.top_cubes():
            bad = sum(q.sigma for q in Q.descendants() if vals[(q.k, q.id)] < c0)
            ratios[str(Q.id)] = bad / Q.sigma
        out["grid"].append({"c0": c0, "sup_ratio": max(ratios.values()), "ratios": ratios})
    _emit(args, _dump(out))
    return EXIT_OK


def cmd_energy(args):
    dom = _domain(args) if args.spec else None
    S = _boundary(args, dom)
    if args.x is None or args.r is None:
        raise PreconditionError("energy needs --x and --r")
    B = Ball(args.x, args.r)
    if dom is not None:
        tot, ins, outs = layer_energy(S, B, args.kappa, oracle=dom, split=True)
        rep = {"x": args.x.tolist(), "r": args.r, "kappa": args.kappa, "energy": tot,
               "inside": ins, "outside": outs}
    else:
        rep = {"x": args.x.tolist(), "r": args.r, "kappa": args.kappa,
               "energy": layer_energy(S, B, args.kappa)}
    _emit(args, _dump(rep))
    return EXIT_OK


def _config_from(args):
    data = {}
    for f in fields(AnalysisConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            data[f.name] = val
    return AnalysisConfig.from_mapping(data)


def cmd_classify(args):
    if args.cloud:
        raise PreconditionError("classify needs a corpus --spec; a bare cloud has no oracle")
    rep = classify_domain(args.spec, _config_from(args))
    text = report_json(rep)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text if args.json else digest(rep))
    return _check_asserts(rep, args.asserts)


def cmd_report(args):
    with open(args.report, encoding="utf-8") as fh:
        rep = json.load(fh)
    problems = validate_report(rep)
    if problems:
        raise PreconditionError("invalid report: " + "; ".join(problems))
    sys.stdout.write(_dump(rep["verdicts"]) if args.json else digest(rep))
    return _check_asserts(rep, args.asserts)


def _check_asserts(rep, names):
    if not names:
        return EXIT_OK
    failed = [n for n in names if rep["verdicts"][n]["status"] != PASS]
    if failed:
        sys.stderr.write("assertion failed: " + ", ".join(failed) + "\n")
        return EXIT_ASSERT
    return EXIT_OK


def _asserts(text):
    out = []
    for tok in str(text).replace(",", " ").split():
        name = VERDICT_NAMES.get(tok.lower())
        if name is None:
            raise ValueError(f"unknown verdict {tok!r}")
        out.append(name)
    return out


_MARK = {PASS: "✓", FAIL: "✗"}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, dict):
        return ", ".join(f"{k}={_fmt(x)}" for k, x in v.items())
    return "-" if v is None else str(v)


def digest(rep):
    """Short human-readable summary of a classification report."""
    lo, hi = rep["scale_range"]
    lines = [f"{rep['spec']}  scales [{_fmt(lo)}, {_fmt(hi)}]  h={_fmt(rep['provenance']['h'])}"
             f"  samples={rep['provenance']['samples']}"]
    for name, v in rep["verdicts"].items():
        mark = _MARK.get(v["status"], "?")
        lines.append(f"  {name:<9} {mark} {v['status']:<8} {_fmt(v['statistic'])}"
                     + (f"  (threshold {_fmt(v['threshold'])})" if v["threshold"] is not None else ""))
    ck = rep["corkscrews"]
    if ck and ck["exterior_failure_scales"]:
        sc = ck["exterior_failure_scales"]
        lines.append(f"  exterior corkscrew fails at {len(sc)} scale(s) in "
                     f"[{_fmt(min(sc))}, {_fmt(max(sc))}]")
    th = rep.get("theorem_check")
    if th:
        lines.append(f"  flatness check: {th['succeeded']}/{th['windows']} windows, "
                     f"min constant {_fmt(th['constant_min'])}")
    for key, why in rep.get("untested", {}).items():
        lines.append(f"  untested {key}: {why}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# parser


def _common(p, oracle=True):
    g = p.add_argument_group("input")
    g.add_argument("--spec", type=str, help="corpus domain, e.g. disk, cantor:4, cusp:2")
    g.add_argument("--cloud", type=str, help="boundary samples from a cloud file")
    g.add_argument("--h", type=float, help="sample spacing (default: scale cap / 1000)")
    p.add_argument("--config", type=str, help="flat key = value file; flags override it")
    p.add_argument("--out", type=str, help="output path (default: stdout)")
    p.add_argument("--json", action="store_const", const=True, help="machine output on stdout")
    p.add_argument("--threads", type=int, help="worker pool size", default=1)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    top = _Parser(prog="chordarc", description=__doc__.splitlines()[0])
    top.add_argument("--version", action="version", version=f"chordarc {__version__}")
    top.add_argument("-v", "--verbose", action="store_true")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="sample a corpus boundary into a cloud file")
    _common(p)
    p.set_defaults(func=cmd_generate)

    for name, fn, text in (("grid", cmd_grid, "build and verify the dyadic grid"),
                           ("beta", cmd_beta, "bilateral beta per cube as CSV"),
                           ("pack", cmd_pack, "packing of cubes without exterior access")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--k-min", type=int, default=0)
        p.add_argument("--k-max", type=int)
        if name == "beta":
            p.add_argument("--eps", type=float, default=0.1)
            p.add_argument("--A", type=float, default=2.0)
        if name == "pack":
            p.add_argument("--c0", type=_floats, default=(0.01,))
        p.set_defaults(func=fn)

    p = sub.add_parser("corkscrew", help="corkscrew certificates for one window")
    _common(p)
    p.add_argument("--x", type=_point, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--kind", choices=("interior", "exterior", "both", "flatness"), default="both")
    p.add_argument("--step", type=float)
    p.add_argument("--eps", type=float, default=0.02)
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--C", type=float, default=2.0)
    p.set_defaults(func=cmd_corkscrew)

    p = sub.add_parser("curve", help="good curve between two interior points")
    _common(p)
    p.add_argument("--X", type=_point, required=True)
    p.add_argument("--Y", type=_point, required=True)
    p.add_argument("--lattice-step", type=float, default=1 / 64)
    p.add_argument("--corkscrew-fraction", type=float, default=1 / 40)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("energy", help="single layer square function energy")
    _common(p)
    p.add_argument("--x", type=_point)
    p.add_argument("--r", type=float)
    p.add_argument("--kappa", type=float, default=3.0)
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("classify", help="full classification report")
    _common(p)
    skip = {"h", "seed", "threads"}
    for f in fields(AnalysisConfig):
        if f.name in skip:
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.name.endswith("_grid"):
            p.add_argument(flag, type=_floats)
        elif f.name == "flatness_check":
            p.add_argument(flag, type=_flag)
        elif f.name in ("n_windows", "n_pairs", "k_max", "energy_windows"):
            p.add_argument(flag, type=int)
        else:
            p.add_argument(flag, type=float)
    p.add_argument("--assert", dest="asserts", type=_asserts,
                   help="verdicts that must pass, e.g. chordarc or nta,adr (exit 3 otherwise)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("report", help="digest of a saved report JSON")
    p.add_argument("report")
    p.add_argument("--json", action="store_const", const=True)
    p.add_argument("--assert", dest="asserts", type=_asserts)
    p.add_argument("--config", type=str)
    p.set_defaults(func=cmd_report)
    return top


def _strip_defaults(top):
    """Move subcommand defaults aside so unset flags parse as ``None``."""
    out = {}
    for a in top._actions:
        if isinstance(a, argparse._SubParsersAction):
            for name, sub in a.choices.items():
                out[name] = (sub, {})
                for b in sub._actions:
                    if b.dest == "help":
                        continue
                    out[name][1][b.dest] = b.default
                    b.default = None
    return out


def main(argv=None):
    """Run the CLI and return its exit code."""
    top = build_parser()
    subs = _strip_defaults(top)
    try:
        raw = top.parse_args(argv)
        sub, defaults = subs[raw.command]
        args = _settings(raw, sub, defaults)
    except UsageError as err:
        sys.stderr.write(f"{err}\n")
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as err:
        sys.stderr.write(f"chordarc: {err}\n")
        return EXIT_USAGE
    except (PreconditionError, CloudParseError, FileNotFoundError) as err:
        sys.stderr.write(f"chordarc: {type(err).__name__}: {err}\n")
        return EXIT_PRECONDITION
    except ChordArcError as err:
        sys.stderr.write(f"chordarc: {type(err).__name__}: {err}\n")
        return EXIT_ERROR


def run():  # console script entry point
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    run()
