import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from chordarc import _accel, kernels

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
pts2 = arrays(float, st.tuples(st.integers(1, 40), st.just(2)),
              elements=st.floats(-3, 3, allow_nan=False))


def _agree(a, b):
    if isinstance(a, tuple):
        for x, y in zip(a, b):
            _agree(x, y)
        return
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype == bool or a.dtype.kind in "iu":
        assert np.array_equal(a, b)
    else:
        assert np.allclose(a, b, rtol=1e-10, atol=1e-12)


@needs_numba
@given(pts2, pts2, st.integers(0, 2**31))
def test_segments_distance_parity(P, A, seed):
    rng = np.random.default_rng(seed)
    B = A + rng.normal(size=A.shape)
    _agree(kernels.segments_distance(P, A, B, backend="numpy"),
           kernels.segments_distance(P, A, B, backend="numba"))


def test_segments_distance_values():
    P = np.array([[0.5, 1.0], [2.0, 0.0], [-1.0, -1.0]])
    A = np.array([[0.0, 0.0]])
    B = np.array([[1.0, 0.0]])
    d, near = kernels.segments_distance(P, A, B, backend="numpy")
    assert np.allclose(d, [1.0, 1.0, np.sqrt(2)])
    assert np.allclose(near, [[0.5, 0.0], [1.0, 0.0], [0.0, 0.0]])


@needs_numba
@given(pts2, st.integers(0, 2**31))
def test_boxes_distance_parity(P, seed):
    rng = np.random.default_rng(seed)
    g = np.arange(-2, 2, 0.5)
    lo = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    lo = lo + rng.uniform(0, 0.1, lo.shape)
    hi = lo + rng.uniform(0.05, 0.3, lo.shape)
    _agree(kernels.boxes_distance(P, lo, hi, backend="numpy"),
           kernels.boxes_distance(P, lo, hi, backend="numba"))


def test_boxes_distance_inside_and_out():
    lo, hi = np.array([[0.0, 0.0]]), np.array([[1.0, 1.0]])
    d, near, ins = kernels.boxes_distance(np.array([[0.5, 0.4], [2.0, 0.5]]), lo, hi,
                                          backend="numpy")
    assert np.allclose(d, [0.4, 1.0]) and list(ins) == [True, False]
    assert np.allclose(near, [[0.5, 0.0], [1.0, 0.5]])


@needs_numba
@given(st.integers(2, 300), st.floats(0.01, 0.5), st.integers(0, 2**31))
def test_greedy_net_parity(n, sep, seed):
    rng = np.random.default_rng(seed)
    P = rng.uniform(0, 1, (n, 2))
    order = rng.permutation(n)
    init = order[:1]
    a = kernels.greedy_net(P, order, init, sep, backend="numpy")
    b = kernels.greedy_net(P, order, init, sep, backend="numba")
    assert np.array_equal(a, b)


@given(st.integers(2, 300), st.floats(0.01, 0.5), st.integers(0, 2**31))
def test_greedy_net_is_maximal_and_separated(n, sep, seed):
    rng = np.random.default_rng(seed)
    P = rng.uniform(0, 1, (n, 2))
    net = kernels.greedy_net(P, rng.permutation(n), np.empty(0, np.int64), sep)
    C = P[net]
    D = np.linalg.norm(C[:, None] - C[None], axis=2) + np.eye(len(C)) * 10
    assert D.min() >= sep
    assert np.linalg.norm(P[:, None] - C[None], axis=2).min(axis=1).max() < sep


@needs_numba
@pytest.mark.parametrize("d", [2, 3])
def test_layer_hessian_parity(d):
    rng = np.random.default_rng(d)
    X = rng.normal(size=(50, d)) + 3
    P = rng.normal(size=(200, d))
    w = rng.uniform(0.1, 1, 200)
    _agree(kernels.layer_hessian_sq(X, P, w, backend="numpy"),
           kernels.layer_hessian_sq(X, P, w, backend="numba"))


def test_layer_hessian_single_charge_closed_form():
    # Hess log|x| / (2 pi) has Frobenius norm sqrt(2) / (2 pi |x|^2)
    X = np.array([[2.0, 0.0], [0.0, 0.5]])
    out = kernels.layer_hessian_sq(X, np.zeros((1, 2)), np.ones(1), backend="numpy")
    r = np.linalg.norm(X, axis=1)
    assert np.allclose(out, 2 / (2 * np.pi * r ** 2) ** 2)


@needs_numba
def test_chord_raster_parity():
    rng = np.random.default_rng(0)
    D = rng.random((65, 65))
    a = np.linspace(0, np.pi, 37, endpoint=False)
    V = np.column_stack([np.cos(a), np.sin(a)])
    T = np.linspace(-1, 1, 17)
    _agree(kernels.chord_raster_max(D, V, T, backend="numpy"),
           kernels.chord_raster_max(D, V, T, backend="numba"))


def test_env_switch_selects_numpy():
    env = dict(os.environ, CHORDARC_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "import chordarc; print(chordarc.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
