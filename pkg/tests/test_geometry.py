import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from chordarc.errors import DegenerateFitError, EmptyRegionError, PreconditionError
from chordarc.geometry import (Ball, Hyperplane, Polyline, canonical_normal, fit_plane,
                               inscribed_halfball, plane_offset, unit)

coord = st.floats(-10, 10, allow_nan=False)


def test_plane_offset_axis_aligned():
    P = Hyperplane([0.0, 0.0], [0.0, 1.0])
    assert plane_offset(P, [3.0, 5.0]) == 5.0
    assert plane_offset(P, [7.0, 0.0]) == 0.0


def test_plane_offset_diagonal():
    P = Hyperplane([1.0, 1.0], np.array([1.0, 1.0]) / math.sqrt(2))
    assert plane_offset(P, [2.0, 2.0]) == pytest.approx(math.sqrt(2), rel=1e-15)


@given(arrays(float, 2, elements=coord), arrays(float, 2, elements=coord),
       st.floats(0, 2 * math.pi))
def test_offset_and_projection_split_the_distance(b, y, a):
    P = Hyperplane(b, [math.cos(a), math.sin(a)])
    t = plane_offset(P, y)
    inplane = np.linalg.norm(P.project(y) - P.base)
    assert np.isclose(t * t + inplane ** 2, np.sum((y - b) ** 2), rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("r,eps,offset,radius", [
    (1.0, 0.0, 0.5, 0.5),
    (1.0, 1 / 3, 2 / 3, 1 / 3),
    (2.0, 0.1, 1.1, 0.9),
])
def test_inscribed_halfball_closed_form(r, eps, offset, radius):
    x = np.array([0.3, -0.2])
    v = np.array([0.0, 1.0])
    B = inscribed_halfball(Ball(x, r), v, eps)
    assert B.radius == pytest.approx(radius)
    assert np.allclose(B.center, x + offset * v)


def test_inscribed_halfball_rejects_eps_one():
    with pytest.raises(EmptyRegionError):
        inscribed_halfball(Ball([0.0, 0.0], 1.0), [1.0, 0.0], 1.0)


@given(st.floats(0, 0.95), st.floats(0.1, 5), st.floats(0, 2 * math.pi), st.integers(0, 2**31))
def test_inscribed_halfball_stays_inside(eps, r, a, seed):
    x = np.array([1.0, -2.0])
    v = np.array([math.cos(a), math.sin(a)])
    Bp = inscribed_halfball(Ball(x, r), v, eps)
    pts = Bp.sample(10_000, np.random.default_rng(seed))
    assert np.all((pts - x) @ v > eps * r - 1e-12)
    assert np.all(np.linalg.norm(pts - x, axis=1) < r + 1e-12)


def test_fit_collinear_points_exact():
    pts = np.array([[0.0, 1.0], [1.0, 3.0], [2.0, 5.0], [-1.0, -1.0]])
    P, res = fit_plane(pts, return_residual=True)
    assert res == pytest.approx(0.0, abs=1e-20)
    assert np.allclose(plane_offset(P, pts), 0.0, atol=1e-12)


def test_fit_square_corners_tie_break():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    P, res = fit_plane(pts, return_residual=True)
    assert res == pytest.approx(1.0)
    assert np.allclose(P.base, [0.5, 0.5])
    # the whole plane is optimal; the lexicographically smallest normal is e2
    assert np.allclose(P.normal, [0.0, 1.0])


def test_fit_symmetric_points_normal_e2():
    rng = np.random.default_rng(3)
    top = np.column_stack([rng.uniform(-3, 3, 20), rng.uniform(0, 0.2, 20)])
    pts = np.vstack([top, top * [1, -1]])
    w = np.tile(rng.uniform(0.5, 2, 20), 2)
    P = fit_plane(pts, w)
    assert abs(abs(P.normal[1]) - 1) < 1e-12


def test_fit_degenerate_reports_rank():
    with pytest.raises(DegenerateFitError) as info:
        fit_plane(np.ones((5, 3)))
    assert info.value.rank == 0


def test_fit_rejects_bad_weights():
    with pytest.raises(PreconditionError):
        fit_plane(np.eye(3), [1.0, -1.0, 1.0])


@pytest.mark.parametrize("d", [2, 3])
def test_fit_beats_rotated_planes(d):
    rng = np.random.default_rng(d)
    for _ in range(100):
        X = rng.normal(size=(30, d)) * rng.uniform(0.1, 2, d)
        w = rng.uniform(0.1, 1, 30)
        P, res = fit_plane(X, w, return_residual=True)
        Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
        v = Q @ P.normal
        other = float(w @ ((X - P.base) @ v) ** 2)
        assert res <= other * (1 + 1e-12) + 1e-12


def test_canonical_normal_sign_and_order():
    basis = np.eye(3)[:, [1, 2]]
    assert np.allclose(canonical_normal(basis), [0.0, 0.0, 1.0])
    assert np.allclose(canonical_normal(-np.eye(2)[:, [0]]), [1.0, 0.0])


def test_ball_and_plane_validation():
    with pytest.raises(PreconditionError):
        Ball([0.0, 0.0], 0.0)
    with pytest.raises(PreconditionError):
        Hyperplane([0.0, 0.0], [0.0, 0.0])
    with pytest.raises(PreconditionError):
        Ball([0.0, 0.0, 0.0, 0.0], 1.0)
    assert np.allclose(Hyperplane([0.0, 0.0], [3.0, 4.0]).normal, [0.6, 0.8])


def test_polyline_length_and_concat():
    a = Polyline([[0.0, 0.0], [3.0, 4.0]])
    b = Polyline([[3.0, 4.0], [3.0, 5.0]])
    c = a.concat(b)
    assert c.length == pytest.approx(6.0)
    assert len(c.vertices) == 3
    assert np.allclose(c.densify(4)[-1], [3.0, 5.0])


@given(arrays(float, (6, 2), elements=coord))
def test_polyline_length_is_sum_of_segments(V):
    L = Polyline(V)
    assert L.length == pytest.approx(sum(np.linalg.norm(V[i + 1] - V[i]) for i in range(5)))
    assert L.length >= np.linalg.norm(V[-1] - V[0]) - 1e-9


def test_unit():
    assert np.allclose(unit([0.0, 2.0]), [0.0, 1.0])
