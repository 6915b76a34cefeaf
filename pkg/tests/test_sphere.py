import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from santalo_lab import geometry as geo
from santalo_lab import sphere as sp
from santalo_lab.errors import EmptySet, NotConcentrated, NotSymmetric, NotUnitVolume
from santalo_lab.ledger import EQUALITY, HOLDS, SKIPPED
from santalo_lab.rng import ShiftRegisterRNG

SQUARE = sp.normalized(geo.cube(2))
CROSS = sp.normalized(geo.cross_polytope(2))


@pytest.mark.parametrize("grid", [sp.SphereGrid.circle(64), sp.SphereGrid.icosahedral(4)])
def test_grid_moments(grid):
    u1 = grid.nodes[:, 0]
    second = 1 / (grid.dim)
    fourth = 3 / (grid.dim * (grid.dim + 2))
    np.testing.assert_allclose(grid.integrate(np.ones(grid.size)), 1.0, rtol=1e-14)
    np.testing.assert_allclose(grid.integrate(u1 ** 2), second, rtol=1e-12)
    np.testing.assert_allclose(grid.integrate(u1 ** 4), fourth, rtol=1e-12)


def test_icosahedral_size_and_symmetry():
    grid = sp.SphereGrid.icosahedral(5)
    assert grid.size == 10 * 25 + 2
    assert grid.is_even(grid.nodes[:, 2] ** 2)


def test_grid_json_round_trip():
    grid = sp.SphereGrid.icosahedral(2)
    back = sp.SphereGrid.from_json(grid.to_json())
    np.testing.assert_allclose(back.nodes, grid.nodes)
    np.testing.assert_allclose(back.weights, grid.weights)


@pytest.mark.parametrize("body, mass", [(SQUARE, 0.25), (CROSS, 0.25),
                                        (sp.normalized(geo.cube(3)), 1 / 6)])
def test_cone_measure_masses(body, mass):
    nu = sp.cone_measure(body)
    np.testing.assert_allclose(nu.masses, mass, rtol=1e-14)


def test_cone_measure_requires_unit_volume_and_symmetry():
    with pytest.raises(NotUnitVolume):
        sp.cone_measure(geo.cube(2))
    with pytest.raises(NotSymmetric):
        sp.cone_measure(sp.normalized(geo.VPolytope([[-1, -0.3], [1, -0.3], [0, 0.7]])))


def test_cone_measure_monte_carlo():
    mc = sp.cone_measure_mc(CROSS, 100_000, seed=3)
    assert np.max(np.abs(mc.masses - 0.25) / mc.stderr) <= 3.0


def test_subspace_concentration_cases():
    square = sp.subspace_concentration_check(sp.cone_measure(SQUARE))
    assert square.verdict == sp.EQUALITY_CASE and square.complementary
    th = np.array([0.1, 0.9, 1.7, 2.6])
    pts = np.column_stack([np.cos(th), np.sin(th)])
    generic = sp.SphericalMeasure(np.vstack([pts, -pts]), np.ones(8))
    assert sp.subspace_concentration_check(generic).verdict == sp.STRICT
    bad = sp.SphericalMeasure([[1, 0], [-1, 0], [0, 1], [0, -1]], [0.3, 0.3, 0.2, 0.2])
    assert sp.subspace_concentration_check(bad).verdict == sp.SC_VIOLATED
    with pytest.raises(NotConcentrated):
        sp.log_minkowski_solve(bad)


def test_phi_of_cross_against_square_measure():
    np.testing.assert_allclose(sp.phi_nu(sp.cone_measure(SQUARE), CROSS), -0.5 * math.log(2),
                               rtol=1e-12)


def test_log_minkowski_recovers_hexagon():
    body = sp.normalized(geo.VPolytope([[2, 0], [1, 1.3], [-0.7, 1.1], [-2, 0], [-1, -1.3],
                                        [0.7, -1.1]]))
    res = sp.log_minkowski_solve(sp.cone_measure(body), tol=1e-9)
    assert res.residual <= 1e-9
    np.testing.assert_allclose(np.sort(res.support_numbers), np.sort(body.offsets), rtol=1e-6)


def test_log_minkowski_square_warns_equality_case():
    with pytest.warns(RuntimeWarning):
        res = sp.log_minkowski_solve(sp.cone_measure(SQUARE))
    assert res.residual <= 1e-6


def test_k_functional_bounds():
    nu = sp.cone_measure(SQUARE)
    rep = sp.k_functional(nu, [SQUARE, CROSS, geo.Ball(1.0, 2)], grid=sp.SphereGrid.circle(1024))
    assert rep.best_body == 0 and rep.consistent
    np.testing.assert_allclose(rep.upper, -math.log(2), rtol=1e-12)


def test_cap_example_infeasible_with_finite_entropy():
    grid = sp.SphereGrid.circle(256)
    rep = sp.nonsymmetric_cap_example(grid, [1.0, 0.0], 1.0)
    assert rep.infeasible
    np.testing.assert_allclose(rep.entropy, -math.log(rep.cap_mass), rtol=1e-12)


def test_kolesnikov_uniform_equality():
    sigma = sp.SphericalMeasure.uniform(sp.SphereGrid.circle(64))
    assert sp.kolesnikov_check(sigma, sigma).verdict == EQUALITY


def test_kolesnikov_nonsymmetric_skipped():
    grid = sp.SphereGrid.circle(64)
    nu = sp.SphericalMeasure.from_density(grid, np.exp(grid.nodes[:, 0]))
    assert sp.kolesnikov_check(nu, sp.SphericalMeasure.uniform(grid)).verdict == SKIPPED


def test_kolesnikov_coordinate_weights():
    grid = sp.SphereGrid.circle(128)
    a = sp.SphericalMeasure.from_density(grid, np.abs(grid.nodes[:, 0]))
    b = sp.SphericalMeasure.from_density(grid, np.abs(grid.nodes[:, 1]))
    led = sp.kolesnikov_check(a, b)
    assert led.verdict == HOLDS and led.gap > 0


def test_mahler_identity_cube_cross():
    ident = sp.mahler_identity(geo.cube(2))
    np.testing.assert_allclose([ident.transport_term, ident.support_term, ident.radial_term],
                               [math.log(2), -2 * math.log(2), -math.log(2)], atol=1e-12)
    assert abs(ident.value) <= 1e-9
    assert sp.improved_mahler_check(geo.cube(2)).verdict == EQUALITY


def test_lsi_equality_and_strict():
    grid = sp.SphereGrid.circle(2048)
    assert sp.lsi_unconditional_check(SQUARE, CROSS, grid).verdict == EQUALITY
    led = sp.lsi_unconditional_check(SQUARE, SQUARE, grid)
    assert led.verdict == HOLDS and led.details["transport"] == 0.0


def test_lsi_random_boxes_hold():
    grid = sp.SphereGrid.circle(2048)
    a = sp.normalized(geo.cube(2).linear_image(np.diag([2.0, 0.5])))
    b = sp.normalized(geo.cube(2).linear_image(np.diag([0.7, 1.3])))
    assert sp.lsi_unconditional_check(a, b, grid).verdict in (HOLDS, EQUALITY)


def test_concentration_closed_forms():
    grid = sp.SphereGrid.circle(512)
    A = sp.symmetric_cap(grid, [1, 0], math.pi / 8)
    B = sp.symmetric_cap(grid, [0, 1], math.pi / 8)
    led = sp.concentration_ab_check(grid, A, B)
    np.testing.assert_allclose([led.lhs, led.rhs], [1 / 16, 0.5], rtol=1e-12)
    half = sp.symmetric_cap(grid, [1, 0], math.pi / 4)
    led = sp.concentration_enlargement_check(grid, half, math.pi / 3)
    assert led.verdict == HOLDS and led.details["mass_A"] == 0.5
    with pytest.raises(EmptySet):
        sp.concentration_ab_check(grid, np.zeros(grid.size, bool), B)


@pytest.mark.parametrize("grid, ratio", [(sp.SphereGrid.circle(1024), 4.0),
                                         (sp.SphereGrid.icosahedral(12), 6.0)])
def test_sphere_poincare_sharp(grid, ratio):
    led = sp.sphere_poincare_check(lambda u: u[:, 0] ** 2, grid)
    assert led.verdict == EQUALITY
    np.testing.assert_allclose(led.details["ratio"], ratio, rtol=1e-3)
    strict = sp.sphere_poincare_check(lambda u: u[:, 0] ** 4, grid)
    assert strict.verdict == HOLDS


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 32))
def test_kolesnikov_random_pairs(seed):
    rng = ShiftRegisterRNG(seed)
    grid = sp.SphereGrid.circle(64)
    a = sp.SphericalMeasure.from_density(grid, sp.random_even_density(rng, grid, 1.5))
    b = sp.SphericalMeasure.from_density(grid, sp.random_even_density(rng, grid, 1.5))
    assert sp.kolesnikov_check(a, b).ok


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 32))
def test_improved_mahler_random_boxes(seed):
    rng = ShiftRegisterRNG(seed)
    pts = rng.uniform(0.1, 1.0, size=(3, 2))
    body = geo.VPolytope(np.vstack([pts * s for s in ([1, 1], [-1, 1], [1, -1], [-1, -1])]))
    assert sp.improved_mahler_check(body).ok


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 32))
def test_cone_measure_is_probability_and_even(seed):
    rng = ShiftRegisterRNG(seed)
    body = sp.normalized(geo.random_polytope(rng, 2, 5, symmetric=True))
    nu = sp.cone_measure(body)
    np.testing.assert_allclose(nu.masses.sum(), 1.0, rtol=1e-12)
    assert nu.is_symmetric(1e-9)
    assert sp.subspace_concentration_check(nu).verdict != sp.SC_VIOLATED


@settings(max_examples=15, deadline=None)
@given(c=st.floats(0, 2 * math.pi), w=st.floats(0.05, 1.2), r=st.floats(0.05, 1.0))
def test_concentration_inequalities_hold(c, w, r):
    grid = sp.SphereGrid.circle(256)
    center = [math.cos(c), math.sin(c)]
    A = sp.symmetric_cap(grid, center, w)
    B = sp.symmetric_cap(grid, [-center[1], center[0]], 0.2)
    assert sp.concentration_ab_check(grid, A, B).ok
    assert sp.concentration_enlargement_check(grid, A, r).ok
