import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from santalo_lab import linearize as lin
from santalo_lab import measures as ms
from santalo_lab.errors import NotEven, NotStrictlyConvex
from santalo_lab.grid import Grid
from santalo_lab.ledger import EQUALITY, HOLDS

GAUSS = ms.WeightFunction.gaussian()
GRID = Grid.symmetric(8.0, 401)


@settings(max_examples=30, deadline=None)
@given(y=st.lists(st.floats(-3, 3), min_size=2, max_size=2).filter(lambda v: any(v)))
def test_gaussian_h_is_identity(y):
    np.testing.assert_allclose(lin.h_rho_matrix(GAUSS, y).matrix, np.eye(2), atol=1e-14)


@pytest.mark.parametrize("beta", [1.0, 2.0, 3.0])
def test_cauchy_h_at_unit_radius(beta):
    h = lin.h_rho_matrix(ms.WeightFunction.cauchy(beta), [1.0]).matrix
    np.testing.assert_allclose(h, [[beta / 2]], rtol=1e-12)


def test_barenblatt_outside_support_raises():
    with pytest.raises(NotStrictlyConvex):
        lin.h_rho_matrix(ms.WeightFunction.barenblatt(0.5), [2.0, 0.0])


def test_directional_quadratic_form():
    w = ms.WeightFunction.cauchy(2.0)
    y = np.array([0.6, 0.8])
    h = lin.h_rho_matrix(w, y).matrix
    along, across = y, np.array([-0.8, 0.6])
    for d in (along, across):
        step = 1e-4 * d
        val, _ = lin.omega_increment(w, y, step[None, :])
        np.testing.assert_allclose(val[0] / 1e-8, 0.5 * d @ h @ d, rtol=1e-3)


def test_taylor_gaussian_and_cauchy():
    g = lin.taylor_check(GAUSS, [1.0, 0.0])
    assert g.monotone and g.residuals[-1] <= 1e-2
    c = lin.taylor_check(ms.WeightFunction.cauchy(1.0), [0.0, 1.0])
    assert c.monotone and 0.8 <= c.order <= 1.2


def test_weighted_poincare_equality_for_quadratic():
    led = lin.weighted_poincare_check(GAUSS, GRID, lambda x: x[:, 0] ** 2 - 1)
    assert led.verdict == EQUALITY
    np.testing.assert_allclose([led.lhs, led.rhs], [2.0, 2.0], rtol=1e-3)


def test_weighted_poincare_strict_for_quartic():
    led = lin.weighted_poincare_check(GAUSS, GRID, lambda x: x[:, 0] ** 4 - 3)
    assert led.verdict == HOLDS
    np.testing.assert_allclose([led.lhs, led.rhs], [96.0, 120.0], rtol=1e-2)


def test_weighted_poincare_cauchy():
    grid = Grid.symmetric(30.0, 401)
    led = lin.weighted_poincare_check(ms.WeightFunction.cauchy(2.0), grid,
                                      lambda x: x[:, 0] ** 2 * np.exp(-x[:, 0] ** 2 / 50))
    assert led.verdict == HOLDS


def test_odd_function_rejected():
    with pytest.raises(NotEven):
        lin.weighted_poincare_check(GAUSS, GRID, lambda x: x[:, 0])


def test_hopf_lax_lower_bound():
    grid = Grid.symmetric(3.0, 121)
    f = lambda x: np.cos(x[:, 0])
    eps = 1e-2
    r = lin.hopf_lax(f, eps, GAUSS, grid)
    x = grid.nodes[:, 0]
    assert np.all(r <= eps * np.cos(x) + 1e-15)
    assert np.all(r >= eps * np.cos(x) - 0.5 * eps ** 2 * np.sin(x) ** 2 - 2 * eps * grid.h ** 2)


def test_entropy_expansion_matches_variance():
    mu = ms.mu_rho(GAUSS, GRID)
    f = GRID.nodes[:, 0] ** 2
    f = f - mu.flat @ f
    np.testing.assert_allclose(lin.entropy_expansion(mu, f, 1e-3), mu.flat @ f ** 2, rtol=1e-3)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(0.2, 1.5))
def test_weighted_poincare_random_even(a, b, c):
    if abs(a) + abs(b) < 1e-3:
        return
    f = lambda x: a * x[:, 0] ** 2 + b * np.cos(c * x[:, 0])
    assert lin.weighted_poincare_check(GAUSS, GRID, f).ok
