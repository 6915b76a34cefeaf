import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from santalo_lab import sconcave as sc
from santalo_lab.errors import InadmissibleS, NonPositive, NotUnconditional
from santalo_lab.grid import Grid, GridFunction
from santalo_lab.ledger import EQUALITY, HOLDS


def barenblatt_profile(grid):
    return GridFunction.from_callable(grid, lambda x: np.maximum(1 - 0.5 * (x ** 2).sum(axis=1), 0))


def test_regimes():
    assert sc.regime(0.0, 2) == "Zero"
    assert sc.regime(0.5, 2) == "Positive"
    assert sc.regime(-0.3, 2) == "NegativeAdmissible"
    with pytest.raises(InadmissibleS):
        sc.regime(-0.5, 2)


def test_cs_constant_values():
    np.testing.assert_allclose(sc.cs_constant(0.0, 2), (2 * math.pi) ** 2, rtol=1e-14)
    np.testing.assert_allclose(sc.cs_constant(0.5, 1), 32 / 9, rtol=1e-14)


@pytest.mark.parametrize("s", [0.0, 0.25, 0.5, 1.0])
@pytest.mark.parametrize("n", [1, 2])
def test_cs_constant_against_quadrature(s, n):
    np.testing.assert_allclose(sc.cs_constant(s, n), sc.cs_constant_quadrature(s, n), rtol=1e-6)


def test_dual_of_indicator_is_tent():
    grid = Grid.symmetric(1.0, 401)
    dual = sc.ls_transform(GridFunction(grid, np.ones(401)), 1.0)
    tent = np.maximum(1 - np.abs(grid.nodes[:, 0]), 0)
    assert np.abs(dual.flat - tent).max() <= grid.h


def test_barenblatt_profile_is_self_dual():
    grid = Grid.symmetric(math.sqrt(2), 401)
    g = barenblatt_profile(grid)
    dual = sc.ls_transform(g, 0.5)
    assert np.abs(dual.flat - g.flat).max() <= 2 * grid.h


def test_functional_bs_equality_on_self_dual_profile():
    led = sc.bs_functional_check(barenblatt_profile(Grid.symmetric(math.sqrt(2), 401)), 0.5)
    assert led.verdict == EQUALITY
    np.testing.assert_allclose(led.details["int_f"], 4 * math.sqrt(2) / 3, rtol=1e-3)


def test_functional_bs_noncentred_log_concave():
    grid = Grid.symmetric(3.0, 601)
    f = GridFunction.from_callable(grid, lambda x: np.exp(-np.abs(x[:, 0] - 0.5) - 0.3 * x[:, 0] ** 2))
    led = sc.bs_functional_check(f, 0.0, Grid.symmetric(6.0, 601))
    assert led.verdict == HOLDS
    assert led.details["correction"] >= 1.0


def test_s_santalo_point_against_scan():
    grid = Grid([(-1, 1)], [401])
    f = GridFunction.from_callable(grid, lambda x: np.where(
        (x[:, 0] >= -0.2) & (x[:, 0] <= 1), np.maximum(1 - x[:, 0], 0), 0))
    dual = sc.ls_transform(f, 0.5, Grid([(-11, 3)], [1401]))
    z = sc.s_santalo_point(f, 0.5, dual=dual)
    zs = np.linspace(-0.2, 1.0, 2001)
    scan = zs[np.argmin(sc.s_santalo_functional(dual, 0.5, zs[:, None]))]
    assert abs(z[0] - scan) <= zs[1] - zs[0]


def test_m_transform_of_box_gauge():
    grid = Grid.symmetric(3.0, 601)
    f = GridFunction.from_callable(grid, lambda x: np.maximum(np.abs(x[:, 0]), 1))
    y = grid.nodes[:, 0]
    brute = np.array([np.max((1 + grid.nodes[:, 0] * t) / f.flat) for t in y])
    np.testing.assert_allclose(sc.m_transform(f).flat, brute, rtol=1e-14)
    np.testing.assert_allclose(brute, 1 + np.abs(y), rtol=1e-14)


def test_m_transform_of_euclidean_gauge_is_self_dual():
    grid = Grid.symmetric(3.0, 601)
    f = GridFunction.from_callable(grid, lambda x: np.sqrt(1 + x[:, 0] ** 2))
    assert np.abs(sc.m_transform(f).flat - f.flat).max() <= 2 * grid.h


def test_m_transform_needs_positive():
    grid = Grid.symmetric(1.0, 11)
    with pytest.raises(NonPositive):
        sc.m_transform(GridFunction(grid, np.zeros(11)))


@pytest.mark.parametrize("func, m, exact", [
    (lambda x: np.maximum(np.abs(x[:, 0]), 1), 2, 3.0),
    (lambda x: np.sqrt(1 + x[:, 0] ** 2), 1, math.pi),
])
def test_weighted_moment_identity(func, m, exact):
    f = GridFunction.from_callable(Grid.symmetric(20.0, 2001), func)
    led = sc.weighted_moment_identity(f, m)
    assert led.verdict == EQUALITY
    np.testing.assert_allclose(led.rhs, exact, rtol=1e-3)


def test_ps_requires_unconditional():
    grid = Grid([(-1, 2)], [31])
    g = GridFunction.from_callable(grid, lambda x: np.exp(-np.abs(x[:, 0])))
    with pytest.raises(NotUnconditional):
        sc.ps_functional(g, 0.0)


def test_ps_segment_at_s_one():
    grid = Grid.symmetric(1.0, 401)
    g = GridFunction.from_callable(grid, lambda x: np.maximum(1 - np.abs(x[:, 0]), 0))
    value, led = sc.ps_functional(g, 1.0)
    np.testing.assert_allclose(value, 2.0, rtol=5e-3)
    assert led.verdict == EQUALITY


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.3, 3.0), b=st.floats(-0.5, 0.5), s=st.sampled_from([0.0, 0.5, 1.0]))
def test_triple_dual_idempotent(a, b, s):
    grid = Grid.symmetric(1.0, 81)
    g = GridFunction.from_callable(grid, lambda x: np.exp(-a * x[:, 0] ** 2 + b * x[:, 0]))
    once = sc.ls_transform(g, s)
    thrice = sc.ls_transform(sc.ls_transform(once, s), s)
    assert np.abs(thrice.flat - once.flat).max() <= 2 * once.lipschitz() * grid.h


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.3, 3.0), c=st.floats(0.5, 2.0))
def test_dual_is_order_reversing(a, c):
    grid = Grid.symmetric(1.0, 61)
    g = GridFunction.from_callable(grid, lambda x: np.exp(-a * x[:, 0] ** 2))
    bigger = g.scaled(c + 1.0)
    assert np.all(sc.ls_transform(bigger, 0.5).flat <= sc.ls_transform(g, 0.5).flat + 1e-15)
