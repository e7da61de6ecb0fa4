#!/usr/bin/env python3
"""Time every kernel on its numba and numpy paths and check they agree.

    python benchmarks/bench_kernels.py [--repeat N] [--scale S]

``--scale`` multiplies the problem sizes. The first numba call compiles
(or loads the on-disk cache); it is timed separately as "warmup".
"""
import argparse
import time

import numpy as np

from chordarc import _accel, kernels


def _problems(scale, rng):
    n = int(20000 * scale)
    m = int(2000 * scale)
    P = rng.uniform(-1, 1, (n, 2))
    # closed polygon through m points on a wobbly circle
    a = np.sort(rng.uniform(0, 2 * np.pi, m))
    V = np.column_stack([np.cos(a), np.sin(a)]) * (1 + 0.1 * np.sin(7 * a))[:, None]
    A, B = V, np.roll(V, -1, axis=0)
    # disjoint boxes on a jittered grid
    g = np.arange(-1, 1, 0.08)
    lo = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    lo = lo + rng.uniform(0, 0.02, lo.shape)
    hi = lo + rng.uniform(0.01, 0.05, lo.shape)
    pts = rng.uniform(-1, 1, (n, 2))
    order = np.argsort(rng.random(n))
    X = rng.uniform(-0.5, 0.5, (int(4000 * scale), 2)) + np.array([0.0, 2.0])
    w = np.full(m, 2 * np.pi / m)
    D = rng.random((257, 257))
    ang = np.linspace(0, np.pi, int(500 * scale), endpoint=False)
    dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    offs = np.linspace(-1, 1, 65)
    return {
        "segments_distance": lambda b: kernels.segments_distance(P, A, B, backend=b),
        "boxes_distance": lambda b: kernels.boxes_distance(P, lo, hi, backend=b),
        "greedy_net": lambda b: kernels.greedy_net(pts, order, np.empty(0, np.int64), 0.02,
                                                   backend=b),
        "layer_hessian_sq": lambda b: kernels.layer_hessian_sq(X, V, w, backend=b),
        "chord_raster_max": lambda b: kernels.chord_raster_max(D, dirs, offs, backend=b),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype.kind in "iu":
        return np.array_equal(a, b)
    return np.allclose(a, b, rtol=1e-10, atol=1e-12)


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; only the numpy path can run")
    rng = np.random.default_rng(args.seed)
    probs = _problems(args.scale, rng)
    print(f"{'kernel':<20} {'numpy s':>10} {'numba s':>10} {'warmup s':>10} {'speedup':>8}  agree")
    for name, run in probs.items():
        t_np, out_np = _best(lambda: run("numpy"), args.repeat)
        if not _accel.HAVE_NUMBA:
            print(f"{name:<20} {t_np:>10.4f} {'-':>10} {'-':>10} {'-':>8}  -")
            continue
        t0 = time.perf_counter()
        run("numba")
        warm = time.perf_counter() - t0
        t_nb, out_nb = _best(lambda: run("numba"), args.repeat)
        print(f"{name:<20} {t_np:>10.4f} {t_nb:>10.4f} {warm:>10.3f} {t_np / t_nb:>7.1f}x  "
              f"{'yes' if _same(out_np, out_nb) else 'NO'}")


if __name__ == "__main__":
    main()
