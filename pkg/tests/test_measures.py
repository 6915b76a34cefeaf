import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from santalo_lab import measures as ms
from santalo_lab.errors import EquatorPoint, GridMismatch, NotAdmissible
from santalo_lab.grid import Grid

GAUSS = ms.WeightFunction.gaussian()


def test_normalisations():
    np.testing.assert_allclose(ms.WeightFunction.cauchy(1.0).normalization(1), math.pi, rtol=1e-14)
    np.testing.assert_allclose(ms.WeightFunction.barenblatt(0.5).normalization(1),
                               4 * math.sqrt(2) / 3, rtol=1e-14)
    np.testing.assert_allclose(GAUSS.normalization(2), 2 * math.pi, rtol=1e-14)
    assert ms.WeightFunction.cauchy(0.5).normalization(1) == math.inf


def test_histogram_captures_normalisation():
    mu = ms.mu_rho(ms.WeightFunction.barenblatt(0.5), Grid.symmetric(1.5, 301))
    np.testing.assert_allclose(mu.meta["Z_grid"], mu.meta["Z"], rtol=1e-4)
    np.testing.assert_allclose(mu.flat.sum(), 1.0, rtol=1e-14)


def test_cauchy_needs_integrability():
    with pytest.raises(NotAdmissible):
        ms.mu_rho(ms.WeightFunction.cauchy(0.4), Grid.symmetric(5.0, 11))


def test_entropy_of_half_gaussian():
    grid = Grid.symmetric(8.0, 1600)
    mu = ms.mu_rho(GAUSS, grid)
    half = ms.GridMeasure(grid, np.where(grid.nodes[:, 0] > 0, mu.flat, 0.0))
    np.testing.assert_allclose(ms.relative_entropy(half, mu), math.log(2), atol=1e-3)


def test_entropy_infinite_off_support():
    grid = Grid.symmetric(1.0, 5)
    p = ms.GridMeasure(grid, [1, 0, 0, 0, 0])
    q = ms.GridMeasure(grid, [0, 1, 1, 1, 1])
    assert ms.relative_entropy(p, q) == math.inf


def test_entropy_grid_mismatch():
    with pytest.raises(GridMismatch):
        ms.relative_entropy(ms.mu_rho(GAUSS, Grid.symmetric(1.0, 5)),
                            ms.mu_rho(GAUSS, Grid.symmetric(2.0, 5)))


def test_cauchy_pushes_to_half_circle():
    grid = Grid.symmetric(2000.0, 40001)
    mu = ms.mu_rho(ms.WeightFunction.cauchy(1.0), grid)
    x = grid.nodes[:, 0]
    lo = ms.gnomonic(np.maximum(x - grid.h / 2, -2000.0)[:, None])
    hi = ms.gnomonic(np.minimum(x + grid.h / 2, 2000.0)[:, None])
    arcs = np.arctan2(lo[:, 1], lo[:, 0]) - np.arctan2(hi[:, 1], hi[:, 0])
    assert ms.total_variation(mu.flat, arcs / arcs.sum()) <= 1e-3


def test_gnomonic_round_trip_and_equator():
    x = np.array([[0.3, -2.0], [0.0, 0.0]])
    np.testing.assert_allclose(ms.gnomonic_inverse(ms.gnomonic(x)), x, atol=1e-15)
    with pytest.raises(EquatorPoint):
        ms.gnomonic_inverse([[1.0, 0.0]])


def test_barenblatt_approaches_gaussian():
    grid = Grid.symmetric(5.0, 201)
    g = ms.mu_rho(GAUSS, grid)
    tv = [ms.total_variation(ms.mu_rho(ms.WeightFunction.barenblatt(s), grid), g)
          for s in (0.5, 0.1, 0.02)]
    assert tv[0] > tv[1] > tv[2]


def test_weight_json_round_trip():
    for w in (GAUSS, ms.WeightFunction.barenblatt(0.25), ms.WeightFunction.cauchy(2.0)):
        back = ms.WeightFunction.from_json(w.to_json())
        np.testing.assert_allclose(back.log_rho(np.array([0.0, 1.0, 2.0])),
                                   w.log_rho(np.array([0.0, 1.0, 2.0])))


@settings(max_examples=40, deadline=None)
@given(t0=st.floats(0.0, 1.5), d=st.floats(-0.5, 0.4),
       kind=st.sampled_from(["gaussian", "barenblatt", "cauchy"]))
def test_log_rho_increment_matches_difference(t0, d, kind):
    w = {"gaussian": GAUSS, "barenblatt": ms.WeightFunction.barenblatt(0.25),
         "cauchy": ms.WeightFunction.cauchy(1.5)}[kind]
    if t0 + d < 0:
        return
    direct = w.log_rho(np.array([t0 + d])) - w.log_rho(np.array([t0]))
    np.testing.assert_allclose(w.log_rho_increment(t0, np.array([d])), direct, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(a=st.lists(st.floats(0.01, 1.0), min_size=9, max_size=9),
       b=st.lists(st.floats(0.01, 1.0), min_size=9, max_size=9))
def test_entropy_nonnegative(a, b):
    grid = Grid.symmetric(1.0, 9)
    p, q = ms.GridMeasure(grid, a), ms.GridMeasure(grid, b)
    assert ms.relative_entropy(p, q) >= -1e-15
    assert ms.relative_entropy(p, p) == 0.0


@settings(max_examples=40, deadline=None)
@given(a=st.lists(st.floats(0.0, 1.0), min_size=7, max_size=7).filter(lambda v: sum(v) > 0))
def test_symmetrize_is_idempotent_and_symmetric(a):
    m = ms.symmetrize(ms.GridMeasure(Grid.symmetric(1.0, 7), a))
    assert m.is_symmetric()
    np.testing.assert_allclose(ms.symmetrize(m).flat, m.flat, atol=1e-15)
