import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from santalo_lab import geometry as geo
from santalo_lab import santalo as sa
from santalo_lab.errors import PointOutside
from santalo_lab.ledger import EQUALITY, HOLDS
from santalo_lab.rng import ShiftRegisterRNG

TRIANGLE = geo.VPolytope([[-1, 0], [1, 0], [0, 1]])


def test_functional_matches_polar_volume_of_translate():
    k = geo.cube(2)
    z = np.array([0.3, 0.0])
    direct = k.translate(-z).polar().volume()
    np.testing.assert_allclose(sa.santalo_functional(k, z), direct, rtol=1e-8)


def test_functional_matches_sphere_quadrature():
    k = geo.cube(2)
    z = np.array([0.3, -0.2])
    np.testing.assert_allclose(sa.polar_volume_quadrature(k, z, 8192),
                               sa.santalo_functional(k, z), rtol=1e-6)


def test_functional_outside_raises():
    with pytest.raises(PointOutside):
        sa.polar_volume_quadrature(geo.cube(2), [2.0, 0.0])


def test_santalo_point_of_triangle_is_stationary():
    res = sa.santalo_point(TRIANGLE, 1e-12)
    assert np.linalg.norm(sa.polar_barycenter(TRIANGLE, res.point)) <= 1e-10
    assert abs(res.point[0]) <= 1e-12


def test_santalo_point_brute_force_on_coarse_grid():
    res = sa.santalo_point(TRIANGLE, 1e-12)
    xs = np.linspace(-0.2, 0.2, 81)
    ys = np.linspace(0.2, 0.6, 81)
    pts = np.array([[x, y] for x in xs for y in ys])
    best = pts[np.argmin(sa.santalo_functional(TRIANGLE, pts))]
    assert np.all(np.abs(best - res.point) <= xs[1] - xs[0])


def test_mahler_square_is_eight():
    led = sa.mahler_check(geo.cube(2))
    np.testing.assert_allclose(led.rhs, 8.0, rtol=1e-12)
    assert led.verdict == EQUALITY


def test_bs_cube_closed_form():
    led = sa.bs_check(geo.cube(2))
    np.testing.assert_allclose([led.lhs, led.rhs], [8.0, math.pi ** 2], rtol=1e-10)
    assert led.verdict == HOLDS


def test_bs_ellipsoid_equality():
    led = sa.bs_check(geo.Ellipsoid(np.array([[3.0, 1.0], [1.0, 1.0]])))
    assert led.verdict == EQUALITY


def test_bs_shifted_triangle_correction_exceeds_one():
    led = sa.bs_check(geo.VPolytope([[-1, -0.3], [1, -0.3], [0, 0.7]]))
    assert led.verdict == HOLDS
    assert led.details["correction"] > 1.0


def test_random_symmetric_hexagon_sandwich():
    rng = ShiftRegisterRNG(4)
    hexagon = geo.random_polytope(rng, 2, 3, symmetric=True)
    vp = sa.volume_product(hexagon)
    assert 8.0 - 1e-9 <= vp <= math.pi ** 2


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 32))
def test_santalo_point_is_affine_equivariant(seed):
    rng = ShiftRegisterRNG(seed)
    body = geo.random_polytope(rng, 2, 8)
    a = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    b = rng.normal(size=2)
    moved = body.linear_image(a).translate(b)
    z1 = sa.santalo_point(body, 1e-12).point
    z2 = sa.santalo_point(moved, 1e-12).point
    np.testing.assert_allclose(z2, a @ z1 + b, atol=1e-7 * (1 + np.abs(z2).max()))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 32))
def test_santalo_point_minimises_functional(seed):
    rng = ShiftRegisterRNG(seed)
    body = geo.random_polytope(rng, 3, 10)
    res = sa.santalo_point(body, 1e-12)
    probe = res.point + 1e-3 * rng.unit_vectors(20, 3) * body.diameter
    inside = np.all(probe @ body.normals.T < body.offsets, axis=1)
    assert np.all(sa.santalo_functional(body, probe[inside]) >= res.value - 1e-12 * res.value)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 32))
def test_volume_product_at_santalo_point_below_ball(seed):
    rng = ShiftRegisterRNG(seed)
    body = geo.random_polytope(rng, 2, 7)
    assert sa.volume_product(body, sa.AT_SANTALO) <= math.pi ** 2 * (1 + 1e-9)
