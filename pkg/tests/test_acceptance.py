"""Acceptance suite: one test per criterion, each printing a pass/fail line."""

import functools
import math
import time

import pytest

from santalo_lab import geometry as geo
from santalo_lab import harness
from santalo_lab import sconcave as sc
from santalo_lab.grid import GridFunction
from santalo_lab.ledger import EQUALITY, HOLDS, SKIPPED

from conftest import record_acceptance


@functools.lru_cache(maxsize=None)
def run(name):
    _, ledgers, _ = harness.run_experiment(harness.BUILTIN[name])
    return tuple(ledgers)


def select(ledgers, fragment):
    return [led for led in ledgers if fragment in led.name]


def no_violation(ledgers):
    return all(led.verdict in (HOLDS, EQUALITY) for led in ledgers) and len(ledgers) > 0


def test_criterion_01_mahler_hanner():
    leds = run("mahler-hanner")
    floats = select(leds, "mahler[")
    exact = select(leds, "mahler-exact[")
    counts = {n: len(geo.hanner_trees(n)) for n in (2, 3, 4)}
    ok = (len(floats) == sum(counts.values())
          and all(led.verdict == EQUALITY for led in floats)
          and max(abs(led.lhs - led.rhs) / led.lhs for led in floats) <= 1e-9
          and all(led.details["exact_equal"] and led.gap == 0 for led in exact))
    record_acceptance(1, "Mahler equality on Hanner polytopes, n = 2, 3, 4", ok,
                      f"{len(floats)} trees, exact path error 0")
    assert ok


def test_criterion_02_blaschke_santalo():
    rand = run("bs-random")
    ell = select(run("bs-ellipsoid"), "bs-ellipsoid[")
    rel = max(abs(led.lhs - led.rhs) / led.rhs for led in ell)
    ok = (len(rand) == 100 and no_violation(rand)
          and all(led.verdict == EQUALITY for led in ell) and rel <= 1e-6)
    record_acceptance(2, "Blaschke-Santalo with correction", ok,
                      f"100 random bodies, ellipsoid relative error {rel:.1e}")
    assert ok


def test_criterion_03_santalo_point():
    leds = run("santalo-point-triangle")
    resid = select(leds, "residual")[0]
    brute = select(leds, "brute-force")[0]
    ok = resid.lhs <= 1e-6 and brute.lhs <= 1.0
    record_acceptance(3, "Santalo point of the triangle", ok,
                      f"residual {resid.lhs:.1e}, grid offset {brute.lhs:.2f} spacings")
    assert ok


def test_criterion_04_cs_constants():
    leds = run("cs-constants")
    worst = max(abs(led.lhs - led.rhs) / abs(led.rhs) for led in leds)
    ok = worst <= 1e-6 and sc.cs_constant(0.5, 1) == pytest.approx(32 / 9, rel=1e-14)
    record_acceptance(4, "c_s closed form against quadrature", ok, f"worst relative {worst:.1e}")
    assert ok


def _ps_ledger(index):
    s, grid, func, dual_grid = harness.ps_fixtures()[index]
    _, led = sc.ps_functional(GridFunction.from_callable(grid, func), s, dual_grid, 5e-3)
    return s, led


@pytest.mark.parametrize("index", [0, 1])
def test_criterion_05_s_concave_mahler(index):
    s, led = _ps_ledger(index)
    ok = led.verdict == EQUALITY
    record_acceptance(5, f"s-concave Mahler equality, s = {s:g}", ok,
                      f"P_s = {led.rhs:.5f}, bound {led.lhs:.5f}")
    assert ok


@pytest.mark.xfail(strict=True, reason="s = -1/3 fixture: P_s is about 9.02 against the bound 6; "
                                       "the equality statement covers s >= 0 only")
def test_criterion_05_s_concave_mahler_negative_s():
    s, led = _ps_ledger(2)
    ok = led.verdict == EQUALITY
    record_acceptance(5, "s-concave Mahler equality, s = -1/3", ok,
                      f"P_s = {led.rhs:.4f}, bound {led.lhs:.4f}")
    assert ok


def test_criterion_06_triple_dual():
    leds = run("triple-dual")
    ok = len(leds) == 30 and no_violation(leds)
    record_acceptance(6, "L_s L_s L_s = L_s within 2 Lip h", ok, f"{len(leds)} random functions")
    assert ok


def test_criterion_07_exact_vs_sinkhorn():
    leds = run("exact-vs-sinkhorn")
    diffs = [led for led in select(leds, "sinkhorn-vs-exact") if "max]" not in led.name]
    gaps = select(leds, "dual-gap")
    ok = (len(diffs) == 20 and all(led.lhs <= 1e-3 for led in diffs)
          and all(led.lhs <= 1e-8 for led in gaps))
    record_acceptance(7, "exact against Sinkhorn transport", ok,
                      f"worst difference {max(led.lhs for led in diffs):.1e}, "
                      f"worst dual gap {max(led.lhs for led in gaps):.1e}")
    assert ok


def test_criterion_08_talagrand_equality():
    leds = run("talagrand-equality")
    ok = len(leds) == 3 and all(led.lhs == 0.0 and led.rhs == 0.0 for led in leds)
    record_acceptance(8, "Talagrand equality at nu1 = nu2 = mu_rho", ok,
                      "Gaussian, Barenblatt(1/2), Cauchy(1)")
    assert ok


def test_criterion_09_talagrand_random():
    leds = run("talagrand-random")
    ok = len(leds) == 150 and no_violation(leds)
    ok = ok and all("slack" in led.details for led in leds)
    record_acceptance(9, "symmetrised Talagrand on random histogram pairs", ok,
                      "50 pairs per weight family")
    assert ok


def test_criterion_10_barenblatt_centered():
    leds = run("barenblatt-centered")
    ok = len(leds) == 30 and no_violation(leds)
    record_acceptance(10, "Barenblatt centred variant", ok, "30 random pairs")
    assert ok


def test_criterion_11_nonsymmetric_cap():
    leds = run("nonsymmetric-cap")
    ent = select(leds, "cap-entropy")[0]
    kol = select(leds, "kolesnikov")[0]
    ok = (ent.details["infeasible"] and math.isfinite(ent.lhs) and ent.verdict == EQUALITY
          and kol.verdict == SKIPPED and "infeasible" in kol.note)
    record_acceptance(11, "cap against sigma: infeasible transport, finite entropy", ok,
                      f"H = {ent.lhs:.6f} = -log sigma(A)")
    assert ok


def test_criterion_12_kolesnikov():
    leds = run("kolesnikov")
    sigma = select(leds, "sigma]")
    ok = len(leds) == 62 and no_violation(leds) and all(led.verdict == EQUALITY for led in sigma)
    record_acceptance(12, "improved Kolesnikov on S^1 and S^2", ok, "30 pairs each, sigma equality")
    assert ok


def test_criterion_13_sphere_poincare():
    leds = select(run("sphere-poincare"), "u1^2")
    ratios = [led.details["ratio"] for led in leds]
    ok = (abs(ratios[0] - 4) <= 4e-3 and abs(ratios[1] - 6) <= 6e-3
          and all(led.verdict == EQUALITY for led in leds))
    record_acceptance(13, "sphere Poincare sharpness", ok,
                      f"ratios {ratios[0]:.5f} and {ratios[1]:.5f}")
    assert ok


def test_criterion_14_weighted_poincare():
    leds = run("weighted-poincare")
    quad = select(leds, "x^2-1")[0]
    rand = select(leds, "weighted-poincare[")
    rand = [led for led in rand if "x^2-1" not in led.name]
    ok = (select(leds, "H-identity")[0].lhs <= 1e-12 and quad.verdict == EQUALITY
          and abs(quad.lhs - 2) <= 1e-2 and len(rand) == 20 and no_violation(rand))
    record_acceptance(14, "weighted Poincare for the Gaussian weight", ok,
                      f"x^2-1: lhs {quad.lhs:.5f}, rhs {quad.rhs:.5f}")
    assert ok


def test_criterion_15_taylor():
    leds = select(run("taylor"), "taylor-decay")
    ok = len(leds) == 2 and no_violation(leds)
    record_acceptance(15, "Taylor residual decreases over radii 1e-1, 1e-2, 1e-3", ok,
                      "Gaussian and Cauchy")
    assert ok


def test_criterion_16_cone_measures():
    start = time.perf_counter()
    leds = run("cone-measures")
    exact = select(leds, "cone-measure[")
    mc = select(leds, "cone-measure-mc")
    ok = (all(led.lhs == 0.0 or led.lhs <= 1e-15 for led in exact)
          and all(led.lhs <= 3.0 for led in mc) and time.perf_counter() - start <= 300)
    record_acceptance(16, "cone measures: closed form and Monte Carlo", ok,
                      f"largest z-score {max(led.lhs for led in mc):.2f}")
    assert ok


def test_criterion_17_log_minkowski():
    leds = run("log-minkowski")
    fits = [led for led in leds if "masses" not in led.name]
    names = {led.name.split("[")[1].rstrip("]") for led in fits}
    ok = {"square", "cross", "rectangle"} <= names and all(led.lhs <= 1e-5 for led in fits)
    record_acceptance(17, "log-Minkowski recovery of cube, cross, rectangle", ok,
                      f"worst TV residual {max(led.lhs for led in fits):.1e}")
    assert ok


def test_criterion_18_lsi_equality():
    leds = run("lsi-unconditional")
    main = select(leds, "lsi[cube, cross]")[0]
    chain = select(leds, "chain[")
    ok = main.verdict == EQUALITY and all(led.verdict == EQUALITY for led in chain)
    record_acceptance(18, "unconditional LSI equality for cube and cross", ok,
                      f"lhs {main.lhs:.6f}, rhs {main.rhs:.6f}")
    assert ok


def test_criterion_19_improved_mahler():
    leds = run("improved-mahler")
    ok = len(leds) == 20 and all(led.lhs - 1e-6 <= led.rhs for led in leds) and no_violation(leds)
    record_acceptance(19, "improved Mahler on unconditional planar bodies", ok, "20 bodies")
    assert ok


def test_criterion_20_concentration():
    leds = run("concentration")
    counts = [len(select(leds, f"S^{n},")) for n in (1, 2)]
    ok = counts == [100, 100] and no_violation(leds)
    record_acceptance(20, "concentration on cap families", ok,
                      "50 geometries each on S^1 and S^2, both inequalities")
    assert ok
