from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial import cKDTree

from mintime.eikonal import solve_min_time
from mintime.geometry import (decode_mask, detect_characteristic_points, encode_mask,
                              extract_boundary, limiting_normal_fan, petrov_margin,
                              proximal_normal_fan, slab_region)
from mintime.grid import TargetSet, UniformGrid
from mintime.systems import registry_lookup

E = registry_lookup("euclidean2")
ACS3 = registry_lookup("acs3")
# x3 + 4 x2^3 >= 0: the singular line {x1 = 0, x3 = 0} meets the boundary at a characteristic point
CUBIC = TargetSet({"kind": "sublevel", "poly": [{"coeff": "-1", "powers": [0, 0, 1]},
                                                {"coeff": "-4", "powers": [0, 3, 0]}]})

G2 = UniformGrid.from_box([-1, -1], [1, 1], 201)


def _angle(a, b):
    return np.degrees(np.arccos(np.clip(np.dot(a, b), -1, 1)))


def _fan_at(fans, grid, x):
    idx = grid.nearest_index(x)
    return next(f for f in fans if f.index == idx)


def test_disc_boundary_count():
    X = G2.coords()
    b = extract_boundary(np.hypot(X[0], X[1]) <= 0.7)
    expect = 2 * np.pi * 0.7 / G2.h
    assert abs(len(b) - expect) <= 0.2 * expect


def test_singleton_and_half_space_boundary():
    m = np.zeros((9, 9), bool)
    m[4, 2] = True
    assert extract_boundary(m).tolist() == [[4, 2]]
    half = np.zeros((9, 9), bool)
    half[:5] = True
    assert set(map(tuple, extract_boundary(half))) == {(4, j) for j in range(9)}


def test_degenerate_masks_rejected():
    with pytest.raises(ValueError):
        extract_boundary(np.zeros((4, 4), bool))
    with pytest.raises(ValueError):
        extract_boundary(np.ones((4, 4), bool))


def test_disc_normal():
    X = G2.coords()
    fans = proximal_normal_fan(np.hypot(X[0], X[1]) <= 0.7, G2)
    f = _fan_at(fans, G2, [0.7, 0.0])
    assert np.linalg.norm(f.principal - [1, 0]) <= 0.05


def test_square_corner_fan():
    mask = TargetSet.box([-0.3, -0.3], [0.3, 0.3]).mask(G2)
    f = _fan_at(proximal_normal_fan(mask, G2), G2, [0.3, 0.3])
    angles = sorted(np.degrees(np.arctan2(f.normals[:, 1], f.normals[:, 0])))
    assert angles[0] == pytest.approx(0, abs=5) and angles[-1] == pytest.approx(90, abs=5)
    assert len(angles) >= 3  # interior directions of the quarter circle too


def test_half_space_normal():
    X = G2.coords()
    fans = proximal_normal_fan(X[0] <= 0, G2)
    inner = [f for f in fans if abs(f.point[1]) < 0.9]
    assert inner and all(len(f) == 1 and np.allclose(f.normals[0], [1, 0]) for f in inner)


def test_limiting_fan_smooth_disc():
    # sub-cell boundary from the distance function; bare masks carry staircase directions
    X = G2.coords()
    dist = np.hypot(X[0], X[1])
    prox = proximal_normal_fan(dist <= 0.7, G2, values=dist, level=0.7)
    lim = limiting_normal_fan(prox, 3 * G2.h)
    for p, q in zip(prox, lim):
        assert len(p) == 1
        assert max(_angle(n, p.normals[0]) for n in q.normals) <= 5


def test_limiting_fan_reentrant_corner():
    L = TargetSet.union([TargetSet.box([-0.5, -0.5], [0.0, 0.5]),
                         TargetSet.box([-0.5, -0.5], [0.5, 0.0])])
    mask = L.mask(G2)
    lim = limiting_normal_fan(proximal_normal_fan(mask, G2), 3 * G2.h)
    f = _fan_at(lim, G2, [0.01, 0.0])
    assert any(_angle(n, [1, 0]) < 5 for n in f.normals)
    assert any(_angle(n, [0, 1]) < 5 for n in f.normals)


def test_zero_radius_limiting_equals_proximal():
    X = G2.coords()
    prox = proximal_normal_fan(np.hypot(X[0] - 0.1, X[1]) <= 0.4, G2)
    for p, q in zip(prox, limiting_normal_fan(prox, 0.0)):
        assert np.array_equal(p.normals, q.normals)


def test_fan_argument_checks():
    X = G2.coords()
    with pytest.raises(ValueError):
        proximal_normal_fan(X[0] <= 0, G2, band_width=G2.h)
    with pytest.raises(ValueError):
        limiting_normal_fan([], -1.0)


@settings(max_examples=15)
@given(st.floats(0.2, 0.6), st.floats(-0.2, 0.2), st.floats(-0.2, 0.2))
def test_ball_normals_accurate(R, cx, cy):
    grid = UniformGrid.from_box([-1, -1], [1, 1], 101)
    X = grid.coords()
    dist = np.hypot(X[0] - cx, X[1] - cy)
    fans = proximal_normal_fan(dist <= R, grid, values=dist, level=R)
    bound = np.degrees(2 * grid.h / R) + 5
    for f in fans:
        radial = (f.point - [cx, cy]) / np.linalg.norm(f.point - [cx, cy])
        for n in f.normals:
            assert _angle(n, radial) <= bound


blobs = arrays(bool, (12, 12), elements=st.booleans()).filter(lambda m: 0 < m.sum() < m.size)


@settings(max_examples=30)
@given(blobs, st.floats(0, 4))
def test_fan_inclusion(mask, r):
    prox = proximal_normal_fan(mask, band_width=3.0)
    for p, q in zip(prox, limiting_normal_fan(prox, r)):
        for n in p.normals:
            assert any(np.allclose(n, k) for k in q.normals)


@given(arrays(bool, st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6))))
def test_rle_round_trip(mask):
    assert np.array_equal(decode_mask(encode_mask(mask)), mask)


@pytest.fixture(scope="module")
def euclid_field():
    grid = UniformGrid.from_box([-1, -1], [1, 1], 101)
    return solve_min_time(E, TargetSet.ball([0, 0], 0.2), grid)


@pytest.mark.parametrize("tau", [0.1, 0.3, 0.5])
def test_euclidean_has_no_characteristic_points(euclid_field, tau):
    assert detect_characteristic_points(E, euclid_field, tau) == []


def test_euclidean_petrov(euclid_field):
    assert petrov_margin(E, euclid_field, 0.3).mu == pytest.approx(1, abs=0.05)
    rep = petrov_margin(E, euclid_field, 0.3, slab_region(0, 0.1))
    assert rep.mu == pytest.approx(1, abs=0.05)
    assert rep.to_json()["region"]["kind"] == "slab"


def test_detection_argument_checks(euclid_field):
    with pytest.raises(ValueError):
        detect_characteristic_points(E, euclid_field, 0.0)
    with pytest.raises(ValueError):
        detect_characteristic_points(E, euclid_field, 50.0)
    with pytest.raises(ValueError, match="misses the boundary"):
        petrov_margin(E, euclid_field, 0.3, slab_region(0, 0.6, complement=True))


def test_heisenberg_petrov_positive(heisenberg_field):
    rep = petrov_margin(registry_lookup("heisenberg"), heisenberg_field, 0.3)
    assert rep.mu > 0


@pytest.fixture(scope="module")
def acs3_field():
    grid = UniformGrid.from_box([-0.6] * 3, [0.6] * 3, 81)
    return solve_min_time(ACS3, TargetSet.ball_complement([0, 0, 0], 0.5), grid)


def test_acs3_records_near_plane(acs3_field):
    h = acs3_field.grid.h
    recs = detect_characteristic_points(ACS3, acs3_field, 0.3)
    assert all(abs(r.x[0]) <= 3 * h for r in recs)
    assert all(r.residual < 5 * h for r in recs)


def test_detections_stable_under_refinement():
    coarse_grid = UniformGrid.from_box([-0.6] * 3, [0.6] * 3, 41)
    eps = 5 * coarse_grid.h
    pts = []
    for g in (coarse_grid, coarse_grid.refine(2)):
        vf = solve_min_time(ACS3, CUBIC, g)
        recs = detect_characteristic_points(ACS3, vf, 0.1, eps_char=eps)
        pts.append(np.array([r.x for r in recs]))
    assert len(pts[0]) and len(pts[1])
    d, _ = cKDTree(pts[1]).query(pts[0])
    assert d.max() <= 4 * coarse_grid.h
