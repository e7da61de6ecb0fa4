import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chordarc import (build_grid, c0_exterior_test, chain_to_curve, exterior_corkscrew,
                      good_curve, harnack_chain, interior_corkscrew)
from chordarc.accessibility import cert_problems, curve_constants, save_curve
from chordarc.errors import PreconditionError

from conftest import cloud, domain


def _fine_oracle(oracle, x, r, kind, step):
    """Brute-force lattice maximum of min(delta, r - |X - x|) on one side."""
    g = np.arange(-r, r + step / 2, step)
    X = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2) + np.asarray(x)
    room = r - np.linalg.norm(X - x, axis=1)
    side = oracle.inside(X) if kind == "in" else oracle.outside(X)
    f = np.where(side & (room > 0), np.minimum(oracle.distance(X), room), -np.inf)
    return f.max() / r


@pytest.mark.parametrize("fn", [interior_corkscrew, exterior_corkscrew])
def test_halfspace_half(fn):
    oracle = domain("line")
    cert = fn(oracle, (0.0, 0.0), 1.0, step=1 / 200)
    assert cert.constant == pytest.approx(0.5, rel=0.05)
    assert cert_problems(oracle, cert) == []


def test_disk_matches_fine_lattice():
    oracle = domain("disk")
    for fn, kind in ((interior_corkscrew, "in"), (exterior_corkscrew, "out")):
        cert = fn(oracle, (1.0, 0.0), 0.5, step=0.5 / 200)
        ref = _fine_oracle(oracle, (1.0, 0.0), 0.5, kind, 0.5 / 400)
        assert cert.constant == pytest.approx(ref, rel=0.05)
        assert cert.constant >= ref - 1e-9 or cert.constant == pytest.approx(ref, rel=0.01)


def test_slit_keeps_interior_corkscrews_on_both_sides():
    oracle = domain("slit")
    x, r = np.array([0.75, 0.0]), 0.1
    cert = interior_corkscrew(oracle, x, r, step=r / 200)
    assert cert.constant == pytest.approx(0.5, rel=0.05)
    # mirror image is also a corkscrew ball
    mirror = cert.point * [1, -1]
    assert oracle.distance(mirror) >= cert.radius - 1e-9
    assert oracle.inside(mirror)


def test_cantor_exterior_tracks_square_size():
    oracle = domain("cantor:3")
    side = 4.0 ** -3
    for j in (1, 2):
        r = 4.0 ** -j
        # anchor on the corner of the bottom-left square
        cert = exterior_corkscrew(oracle, (0.0, 0.0), r, step=r / 200)
        want = side / 2 / r
        assert cert.constant == pytest.approx(want, rel=0.1)
        assert cert_problems(oracle, cert) == []


def test_corkscrew_preconditions():
    oracle = domain("disk")
    with pytest.raises(PreconditionError):
        interior_corkscrew(oracle, (1.0, 0.0), 0.0)
    with pytest.raises(PreconditionError):
        interior_corkscrew(oracle, (1.0, 0.0), 0.2, step=0.2 / 10)


def test_not_found_when_side_is_empty():
    oracle = domain("disk")
    assert exterior_corkscrew(oracle, (0.0, 0.0), 0.5) is None


@settings(max_examples=20)
@given(a=st.floats(0, 2 * math.pi), r=st.floats(0.05, 0.8))
def test_refining_step_never_hurts(a, r):
    oracle = domain("disk")
    x = np.array([math.cos(a), math.sin(a)])
    coarse = interior_corkscrew(oracle, x, r, step=r / 20)
    fine = interior_corkscrew(oracle, x, r, step=r / 40)
    assert fine.constant >= coarse.constant - 1e-12
    assert cert_problems(oracle, fine) == []


def test_cert_checker_catches_bad_ball():
    oracle = domain("line")
    cert = interior_corkscrew(oracle, (0.0, 0.0), 1.0)
    assert cert_problems(oracle, dataclasses.replace(cert, radius=cert.radius * 1.5))


@pytest.fixture(scope="module")
def disk_cubes():
    S = cloud("disk", 2.0 ** -9)
    return build_grid(S, 0, 5)


def test_c0_disk_passes_below_cap(disk_cubes):
    oracle = domain("disk")
    for q in disk_cubes.cubes(3)[::3]:
        res = c0_exterior_test(oracle, q, 0.01)
        assert res.passed
        assert cert_problems(oracle, res.cert, r_quarter=q.r / 4) == []


def test_c0_geometric_cap(disk_cubes):
    # a ball inside B(z, r_Q/4) has radius at most a0 ell / 16
    oracle = domain("disk")
    G = disk_cubes
    for q in G.cubes(2):
        assert not c0_exterior_test(oracle, q, min(0.124, G.a0 / 16 * 1.001)).passed


def test_c0_halfspace():
    S = cloud("line", 2.0 ** -9)
    G = build_grid(S, 0, 4)
    oracle = domain("line")
    for q in G.cubes(3):
        assert c0_exterior_test(oracle, q, G.a0 / 32).passed


def test_c0_cantor_fails():
    S = cloud("cantor:5", 4.0 ** -5 / 4)
    G = build_grid(S, 0, 2)
    oracle = domain("cantor:5")
    for q in G.cubes(2)[:4]:
        assert not c0_exterior_test(oracle, q, 0.05).passed


def test_c0_range():
    G = build_grid(cloud("line", 0.01), 0, 2)
    with pytest.raises(PreconditionError):
        c0_exterior_test(domain("line"), G.cubes(1)[0], 0.125)


def test_single_ball_chain():
    oracle = domain("line")
    X = np.array([0.0, 1.0])
    ch = harnack_chain(oracle, X, X, 1 / 64)
    assert ch.N == 1 and ch.problems(oracle) == []
    curve = chain_to_curve(ch)
    assert np.allclose(curve.vertices, [X, X, X])


@pytest.mark.parametrize("lam", [2, 4, 16])
def test_halfspace_chain_length(lam):
    oracle = domain("line")
    ch = harnack_chain(oracle, (0.0, 1.0), (float(lam), 1.0), 1 / 16)
    assert ch.problems(oracle) == []
    assert ch.N <= 4 * lam
    curve = chain_to_curve(ch)
    bound = 2 * ch.radii.sum() * 2 + 2 * ch.radii[0] + 2 * ch.radii[-1]
    assert curve.length <= bound
    _, c = curve_constants(oracle, curve, ch.X, ch.Xp)
    assert c >= 1 / 8


def test_chain_whitney_bound_per_ball():
    oracle = domain("disk")
    ch = harnack_chain(oracle, (0.0, 0.9), (0.0, -0.9), 1 / 64)
    d = oracle.distance(ch.centers)
    diam = 2 * ch.radii
    assert np.all(diam / 4 <= d - ch.radii + 1e-12)
    assert np.all(d <= 4 * diam + 1e-12)


def test_cusp_chain_grows_toward_tip():
    oracle = domain("cusp:2")
    X = np.array([0.8, 0.0])
    Ns = [harnack_chain(oracle, X, (t, 0.0), 1 / 512).N for t in (0.2, 0.1, 0.05)]
    assert Ns[0] < Ns[1] < Ns[2]


def test_chain_endpoints_inside():
    with pytest.raises(PreconditionError):
        harnack_chain(domain("line"), (0.0, -1.0), (0.0, 1.0), 1 / 16)


def test_good_curve_case1():
    oracle = domain("line")
    gc = good_curve(oracle, (0.0, 2.0), (0.5, 2.0))
    assert gc.case_trace == ["case1"]
    assert gc.C_meas == pytest.approx(1.0)
    assert gc.c_meas >= 4


def test_good_curve_case2():
    oracle = domain("line")
    gc = good_curve(oracle, (0.0, 1.0), (2.0, 1.0))
    assert gc.case_trace == ["case2"]
    assert 1 <= gc.C_meas <= 8
    assert gc.c_meas > 0


def test_good_curve_case3_both_ladders():
    oracle = domain("line")
    gc = good_curve(oracle, (0.0, 1.0), (16.0, 1.0), lattice_step=1 / 64)
    assert gc.case_trace[:2] == ["case3", "ladder Y"]
    assert gc.C_meas <= 6
    assert gc.c_meas >= 0.05
    V = gc.curve.vertices
    assert np.allclose(V[0], [0, 1]) and np.allclose(V[-1], [16, 1])
    for side in gc.ladder.values():
        pts = {int(i): np.array(p) for i, p in side["points"].items()}
        idx = sorted(pts)
        for a, b in zip(idx, idx[1:]):
            assert np.linalg.norm(pts[a] - pts[b]) <= 2.0 ** (a + 2)
            assert min(oracle.distance(pts[a]), oracle.distance(pts[b])) >= side["c"] * 2.0 ** a


def test_good_curve_cusp_tip_decays():
    oracle = domain("cusp:2")
    cs = [good_curve(oracle, (0.8, 0.0), (t, 0.0), lattice_step=1 / 512).c_meas
          for t in (0.2, 0.1, 0.05)]
    assert cs[0] > cs[1] > cs[2]


def test_good_curve_preconditions():
    oracle = domain("line")
    with pytest.raises(PreconditionError):
        good_curve(oracle, (0.0, -1.0), (0.0, 1.0))
    with pytest.raises(PreconditionError):
        good_curve(oracle, (0.0, 1.0), (0.0, 1.0))


def test_save_curve(tmp_path):
    from chordarc import load_cloud
    oracle = domain("line")
    gc = good_curve(oracle, (0.0, 1.0), (2.0, 1.0))
    path = tmp_path / "curve.txt"
    save_curve(gc, path)
    back = load_cloud(path)
    assert np.allclose(back.points, gc.curve.vertices)
    side = json.loads((tmp_path / "curve.txt.json").read_text())
    assert side["case_trace"] == ["case2"]
    assert side["C_meas"] == pytest.approx(gc.C_meas)
