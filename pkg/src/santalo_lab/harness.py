"""Batch runner: experiment configurations, curated suites and the ``santalo-lab`` CLI.

An experiment configuration is a JSON object::

    {"name": "mahler-hanner-n3", "operation": "santalo.mahler_hanner",
     "params": {"dims": [3]}, "seed": 0, "_note": "free text"}

A file may also hold ``{"experiments": [...]}``.  Keys starting with ``_``
are comments.  Randomised operations require a ``seed``; the environment
variable ``SANTALO_LAB_SEED`` overrides it for fuzzing runs.

Every run writes ``report.json``, ``ledgers.csv``, ``ledgers.jsonl`` and one
two-column ``plots/<name>.dat`` file per plot series into the output
directory.  The exit status is 0 when no ledger is ``Violated``, 2 otherwise
and 3 for configuration errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import geometry as geo
from . import linearize as lin
from . import measures as ms
from . import santalo as sa
from . import sconcave as sc
from . import sphere as sp
from . import transport as tr
from .errors import ConfigInvalid, NotConcentrated, SantaloLabError, UnknownSuite
from .grid import Grid, GridFunction
from .ledger import SKIPPED, VIOLATED, Ledger, ledgers_to_csv, ledgers_to_jsonl
from .rng import ShiftRegisterRNG, resolve_seed

EXIT_OK = 0
EXIT_VIOLATED = 2
EXIT_CONFIG = 3


# ---------------------------------------------------------------------------
# Configurations and reports
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """One experiment: a named binding of an operation to its parameters."""

    name: str
    operation: str
    params: dict = field(default_factory=dict)
    seed: int | None = None
    out: str | None = None

    def to_json(self):
        d = {"name": self.name, "operation": self.operation, "params": self.params}
        if self.seed is not None:
            d["seed"] = self.seed
        return d

    def digest(self):
        text = json.dumps(self.to_json(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class RunReport:
    """Ledgers of a run with the configurations that produced them."""

    configs: list
    ledgers: list
    wall_clock: float
    plots: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)
    input_hashes: dict = field(default_factory=dict)

    @property
    def violated(self):
        return any(led.verdict == VIOLATED for led in self.ledgers)

    @property
    def exit_code(self):
        return EXIT_VIOLATED if self.violated else EXIT_OK

    def summary(self):
        counts = {}
        for led in self.ledgers:
            counts[led.verdict] = counts.get(led.verdict, 0) + 1
        return counts

    def to_json(self):
        return {"configs": [c.to_json() for c in self.configs],
                "ledgers": [led.to_dict() for led in self.ledgers],
                "summary": self.summary(), "wall_clock": self.wall_clock,
                "versions": self.versions, "input_hashes": self.input_hashes}

    def table(self):
        width = max([len(led.name) for led in self.ledgers] + [4])
        lines = [f"{'name':<{width}}  {'verdict':<8}  {'lhs':>14}  {'rhs':>14}  {'gap':>11}"]
        for led in self.ledgers:
            lines.append(f"{led.name:<{width}}  {led.verdict:<8}  {led.lhs:>14.8g}  "
                         f"{led.rhs:>14.8g}  {led.gap:>11.3e}")
        lines.append("summary: " + ", ".join(f"{k}={v}" for k, v in sorted(self.summary().items())))
        return "\n".join(lines)

    def write(self, out_dir):
        out = Path(out_dir)
        (out / "plots").mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
        (out / "ledgers.csv").write_text(ledgers_to_csv(self.ledgers))
        (out / "ledgers.jsonl").write_text(ledgers_to_jsonl(self.ledgers))
        for name, rows in sorted(self.plots.items()):
            text = "".join(f"{float(x)!r} {float(y)!r}\n" for x, y in rows)
            (out / "plots" / f"{name}.dat").write_text(text)


def _versions():
    import scipy
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "santalo_lab": _package_version()}


def _package_version():
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "unknown"


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

OPERATIONS = {}
RANDOMIZED = set()


def operation(name, randomized=False):
    def deco(func):
        OPERATIONS[name] = func
        if randomized:
            RANDOMIZED.add(name)
        return func
    return deco


def _quantity(name, value, bound, provenance, note="", details=None):
    """Ledger for ``value <= bound`` with zero tolerance."""
    return Ledger.compare(name, value, bound, 0.0, provenance, note=note, details=details)


@operation("santalo.mahler_hanner")
def op_mahler_hanner(p, rng):
    out = []
    for n in p.get("dims", [2, 3, 4]):
        target = Fraction(4 ** n, math.factorial(n))
        for tree in geo.hanner_trees(n):
            body = tree.realize()
            led = sa.mahler_check(body, p.get("tol", 1e-9))
            led.name = f"mahler[{tree.canonical()}]"
            out.append(led)
            exact = geo.exact_volume_product(body)
            out.append(Ledger.compare(f"mahler-exact[{tree.canonical()}]", float(target),
                                      float(exact), 0.0, sa.PROV_MAHLER,
                                      details={"exact_equal": exact == target}))
    return out, {}


@operation("santalo.bs_random", randomized=True)
def op_bs_random(p, rng):
    out = []
    for n in p.get("dims", [2, 3]):
        for k in range(p.get("count", 50)):
            count = int(rng.integers(n + 2, 4 * n + 6))
            body = None
            while body is None or not body.contains_origin_interior(1e-3):
                center = rng.normal(size=n) * 0.2
                body = geo.random_polytope(rng, n, count, center=center)
            led = sa.bs_check(body, p.get("tol", 1e-6))
            led.name = f"bs-random[n={n}, {k}]"
            out.append(led)
    return out, {}


@operation("santalo.bs_ellipsoid", randomized=True)
def op_bs_ellipsoid(p, rng):
    out = []
    for n in p.get("dims", [2, 3]):
        for k in range(p.get("count", 5)):
            a = rng.normal(size=(n, n))
            led = sa.bs_check(geo.Ellipsoid(a @ a.T + 0.5 * np.eye(n)), p.get("tol", 1e-6))
            led.name = f"bs-ellipsoid[n={n}, {k}]"
            out.append(led)
    for name, body in (("cube", geo.cube(2)), ("triangle", geo.VPolytope([[-1, -0.3], [1, -0.3], [0, 0.7]]))):
        led = sa.bs_check(body, p.get("tol", 1e-6))
        led.name = f"bs-{name}"
        out.append(led)
    return out, {}


TRIANGLE = [[-1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]


@operation("santalo.santalo_point")
def op_santalo_point(p, rng):
    body = geo.VPolytope(p.get("vertices", TRIANGLE))
    res = sa.santalo_point(body, 1e-12)
    resid = float(np.linalg.norm(sa.polar_barycenter(body, res.point)))
    count = p.get("count", 401)
    lo, hi = body.vertices.min(axis=0), body.vertices.max(axis=0)
    axes = [np.linspace(a, b, count) for a, b in zip(lo, hi)]
    h = np.array([ax[1] - ax[0] for ax in axes])
    pts = np.column_stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")])
    inside = np.all(pts @ body.normals.T < body.offsets - 1e-9, axis=1)
    vals = sa.santalo_functional(body, pts[inside])
    zgrid = pts[inside][int(np.argmin(vals))]
    err = np.abs(zgrid - res.point) / h
    return [_quantity("santalo-point-residual", resid, p.get("tol", 1e-6),
                      "first-order condition bar((K - z)°) = 0", details={"point": res.point}),
            _quantity("santalo-point-brute-force", float(err.max()), 1.0,
                      "grid minimiser within one spacing of San(K)",
                      details={"grid_point": zgrid, "spacing": h})], {}


@operation("sconcave.cs_constants")
def op_cs_constants(p, rng):
    out = []
    for s in p.get("s_values", [0.0, 0.25, 0.5, 1.0]):
        for n in p.get("dims", [1, 2]):
            out.append(Ledger.compare(f"c_s[s={s}, n={n}]", sc.cs_constant(s, n),
                                      sc.cs_constant_quadrature(s, n), p.get("tol", 1e-6),
                                      "closed form against radial quadrature", relative=True))
    out.append(Ledger.compare("c_s[s=0.5, n=1] = 32/9", sc.cs_constant(0.5, 1), 32 / 9, 1e-12,
                              "closed form", relative=True))
    return out, {}


def ps_fixtures():
    """The three one-dimensional fixtures generated by the segment (the one-dimensional Hanner polytope)."""
    return [
        (1.0, Grid([(-1, 1)], [401]), lambda x: np.maximum(1 - np.abs(x[:, 0]), 0), None),
        (0.0, Grid([(-1000, 1000)], [40001]), lambda x: np.exp(-np.abs(x[:, 0])),
         Grid([(-3, 3)], [601])),
        (-1 / 3, Grid([(-300, 300)], [6001]), lambda x: np.maximum(np.abs(x[:, 0]), 1) ** -3.0,
         Grid([(-600, 600)], [24001])),
    ]


@operation("sconcave.ps_hanner")
def op_ps_hanner(p, rng):
    out = []
    for s, grid, func, dual_grid in ps_fixtures():
        _, led = sc.ps_functional(GridFunction.from_callable(grid, func), s, dual_grid,
                                  p.get("tol", 5e-3))
        led.name = f"s-concave-mahler[s={s:.4g}]"
        out.append(led)
    return out, {}


@operation("sconcave.triple_dual", randomized=True)
def op_triple_dual(p, rng):
    out = []
    grid = Grid.symmetric(1.0, p.get("nodes", 41), p.get("dim", 2))
    X = grid.nodes
    for s in p.get("s_values", [0.0, 0.5, 1.0]):
        for k in range(p.get("count", 10)):
            A = rng.normal(size=(grid.dim, grid.dim))
            b = rng.normal(size=grid.dim)
            c = rng.uniform(0.5, 2.0)
            vals = np.exp(-0.5 * np.einsum("ij,jk,ik->i", X, A @ A.T, X) + X @ b * 0.3
                          + 0.2 * np.sin(c * X.sum(axis=1)))
            g = GridFunction(grid, vals)
            once = sc.ls_transform(g, s)
            thrice = sc.ls_transform(sc.ls_transform(once, s), s)
            err = float(np.abs(thrice.flat - once.flat).max())
            bound = 2 * once.lipschitz() * grid.h
            out.append(_quantity(f"triple-dual[s={s}, {k}]", err, bound,
                                 "L_s L_s L_s g = L_s g on the grid"))
    return out, {}


@operation("transport.exact_vs_sinkhorn", randomized=True)
def op_exact_vs_sinkhorn(p, rng):
    out, rows = [], []
    eps = p.get("eps", 1e-3)
    for k in range(p.get("count", 20)):
        m = int(rng.integers(5, 25))
        n = int(rng.integers(5, 25))
        C = rng.uniform(0, 1, size=(m, n))
        if k % 2 == 0:
            mask = rng.uniform(0, 1, size=(m, n)) < 0.3
            C[mask] = np.inf
            for i in range(m):
                C[i, i % n] = rng.uniform(0, 1)
            for j in range(n):
                C[j % m, j] = rng.uniform(0, 1)
        a = rng.uniform(0.1, 1, size=m)
        b = rng.uniform(0.1, 1, size=n)
        a, b = a / a.sum(), b / b.sum()
        plan, dual = tr.solve_exact(C, a, b)
        sk = tr.solve_sinkhorn(C, a, b, eps=eps)
        diff = abs(sk.objective - plan.objective)
        rows.append((k, diff))
        out.append(_quantity(f"sinkhorn-vs-exact[{k}]", diff, p.get("tol", 1e-3),
                             "entropic objective within 1e-3 of the exact optimum",
                             details={"exact": plan.objective, "sinkhorn": sk.objective}))
        out.append(_quantity(f"dual-gap[{k}]", abs(dual.gap), p.get("gap_tol", 1e-8),
                             "exact solve: primal minus dual objective"))
    worst = max(d for _, d in rows)
    out.append(_quantity("sinkhorn-vs-exact[max]", worst, p.get("tol", 1e-3),
                         "largest entropic-minus-exact difference over the instances"))
    return out, {"sinkhorn_vs_exact": rows}


def transport_family(name):
    """Weight and grid for one transport fixture family."""
    if name == "gaussian":
        return ms.WeightFunction.gaussian(), Grid.symmetric(5.0, 101)
    if name == "barenblatt":
        return ms.WeightFunction.barenblatt(0.5), Grid.symmetric(1.4, 101)
    if name == "cauchy":
        return ms.WeightFunction.cauchy(1.0), Grid.symmetric(10.0, 101)
    raise ConfigInvalid(f"field 'params.families': unknown family {name!r}")


def _random_even_reweight(rng, mu, scale):
    x = mu.grid.nodes[:, 0] / scale
    a = rng.normal(size=3)
    f = a[0] * np.cos(np.pi * x) + a[1] * x ** 2 + a[2] * np.cos(2 * np.pi * x)
    return ms.symmetrize(mu.reweighted(np.exp(f)))


@operation("transport.talagrand_equality")
def op_talagrand_equality(p, rng):
    out = []
    for fam in p.get("families", ["gaussian", "barenblatt", "cauchy"]):
        w, grid = transport_family(fam)
        mu = ms.mu_rho(w, grid)
        led = tr.talagrand_check(w, mu, mu, mu, tol=0.0, name=f"talagrand-equality[{fam}]")
        out.append(led)
    return out, {}


@operation("transport.talagrand_random", randomized=True)
def op_talagrand_random(p, rng):
    out, rows = [], []
    for fam in p.get("families", ["gaussian", "barenblatt", "cauchy"]):
        w, grid = transport_family(fam)
        mu = ms.mu_rho(w, grid)
        scale = grid.ranges[0][1]
        for k in range(p.get("count", 50)):
            n1 = _random_even_reweight(rng, mu, scale)
            n2 = _random_even_reweight(rng, mu, scale)
            led = tr.talagrand_check(w, n1, n2, mu, tol=p.get("tol", 1e-6),
                                     name=f"talagrand[{fam}, {k}]")
            out.append(led)
            rows.append((len(rows), led.gap))
    return out, {"talagrand_gaps": rows}


@operation("transport.barenblatt_centered", randomized=True)
def op_barenblatt_centered(p, rng):
    out = []
    w = ms.WeightFunction.barenblatt(p.get("s", 0.5))
    grid = Grid.symmetric(p.get("half_width", 1.4), p.get("nodes", 101))
    mu = ms.mu_rho(w, grid)
    x = grid.nodes[:, 0] / grid.ranges[0][1]
    for k in range(p.get("count", 30)):
        a = rng.normal(size=4)
        n1 = mu.reweighted(np.exp(a[0] * x + a[1] * x ** 2 + a[2] * np.sin(3 * x)))
        b = rng.normal(size=3)
        n2 = tr.center_by_tilt(mu.reweighted(np.exp(b[0] * x + b[1] * x ** 3 + b[2] * np.cos(2 * x))))
        out.append(tr.talagrand_check(w, n1, n2, mu, variant="Barenblatt", tol=p.get("tol", 1e-6),
                                      name=f"talagrand-barenblatt[{k}]"))
    return out, {}


@operation("sphere.nonsymmetric_cap")
def op_nonsymmetric_cap(p, rng):
    grid = sp.SphereGrid.circle(p.get("nodes", 256))
    rep = sp.nonsymmetric_cap_example(grid, p.get("center", [1.0, 0.0]), p.get("radius", 1.0))
    nu = sp.SphericalMeasure(grid.nodes, np.where(sp.cap_mask(grid, p.get("center", [1.0, 0.0]),
                                                              p.get("radius", 1.0)),
                                                  grid.weights, 0.0), grid)
    out = [Ledger.compare("cap-entropy", rep.entropy, rep.expected_entropy, 1e-12,
                          "H(sigma|_A / sigma(A) | sigma) = -log sigma(A)",
                          details={"infeasible": rep.infeasible, "cap_mass": rep.cap_mass}),
           sp.kolesnikov_check(nu, sp.SphericalMeasure.uniform(grid), name="kolesnikov[cap vs sigma]")]
    return out, {}


@operation("sphere.kolesnikov", randomized=True)
def op_kolesnikov(p, rng):
    out, rows = [], []
    for n, res in ((1, p.get("circle_nodes", 128)), (2, p.get("frequency", 5))):
        grid = sp.SphereGrid.make(n, res)
        sigma = sp.SphericalMeasure.uniform(grid)
        out.append(sp.kolesnikov_check(sigma, sigma, name=f"kolesnikov[S^{n}, sigma]"))
        for k in range(p.get("count", 30)):
            a = sp.SphericalMeasure.from_density(grid, sp.random_even_density(rng, grid, 1.5))
            b = sp.SphericalMeasure.from_density(grid, sp.random_even_density(rng, grid, 1.5))
            led = sp.kolesnikov_check(a, b, p.get("tol", 1e-6), name=f"kolesnikov[S^{n}, {k}]")
            out.append(led)
            rows.append((len(rows), led.gap))
    return out, {"kolesnikov_gaps": rows}


@operation("sphere.poincare")
def op_sphere_poincare(p, rng):
    out = []
    for n, res in ((1, p.get("circle_nodes", 2048)), (2, p.get("frequency", 20))):
        grid = sp.SphereGrid.make(n, res)
        out.append(sp.sphere_poincare_check(lambda u: u[:, 0] ** 2, grid, tol=p.get("tol", 1e-3),
                                            name=f"sphere-poincare[S^{n}, u1^2]"))
        out.append(sp.sphere_poincare_check(lambda u: u[:, 0] ** 4, grid, tol=p.get("tol", 1e-3),
                                            name=f"sphere-poincare[S^{n}, u1^4]"))
    return out, {}


@operation("linearize.weighted_poincare", randomized=True)
def op_weighted_poincare(p, rng):
    w = ms.WeightFunction.gaussian()
    grid = Grid.symmetric(p.get("half_width", 8.0), p.get("nodes", 401))
    ys = rng.normal(size=(10, 2)) * 2
    herr = max(float(np.abs(lin.h_rho_matrix(w, y).matrix - np.eye(2)).max()) for y in ys)
    out = [_quantity("gaussian-H-identity", herr, 1e-12, "H_rho = I for the Gaussian weight"),
           lin.weighted_poincare_check(w, grid, lambda x: x[:, 0] ** 2 - 1, tol=p.get("tol", 5e-3),
                                       name="weighted-poincare[x^2-1]")]
    for k in range(p.get("count", 20)):
        a = rng.normal(size=3)
        c = rng.uniform(0.3, 1.5)
        f = lambda x, a=a, c=c: a[0] * x[:, 0] ** 2 + a[1] * np.cos(c * x[:, 0]) + a[2] * x[:, 0] ** 4 / 10
        out.append(lin.weighted_poincare_check(w, grid, f, tol=p.get("tol", 5e-3),
                                               name=f"weighted-poincare[{k}]"))
    return out, {}


@operation("linearize.taylor")
def op_taylor(p, rng):
    out, plots = [], {}
    radii = p.get("radii", [1e-1, 1e-2, 1e-3])
    cases = [("gaussian", ms.WeightFunction.gaussian(), [1.0, 0.0]),
             ("cauchy", ms.WeightFunction.cauchy(1.0), [0.0, 1.0])]
    for name, w, y in cases:
        rep = lin.taylor_check(w, y, radii)
        res = rep.residuals[np.argsort(-rep.radii)]
        ratios = [res[k + 1] / res[k] if res[k] > 0 else 0.0 for k in range(len(res) - 1)]
        out.append(Ledger.compare(f"taylor-decay[{name}]", max(ratios), 1.0, 0.0,
                                  "normalised residual strictly decreasing (or zero)",
                                  details={"residuals": rep.residuals, "order": rep.order}))
        out.append(_quantity(f"taylor-residual[{name}, |h|=1e-3]",
                             float(rep.residuals[np.argmin(rep.radii)]), 1e-2,
                             "omega(y+h, y) = H h.h / 2 + o(|h|^2)"))
        plots[f"taylor_{name}"] = list(zip(rep.radii.tolist(), rep.residuals.tolist()))
    return out, plots


def _normalized_rectangle(a, b):
    return sp.normalized(geo.cube(2).linear_image(np.diag([a, b])))


def hexagon():
    return sp.normalized(geo.VPolytope([[2, 0], [1, 1.3], [-0.7, 1.1], [-2, 0], [-1, -1.3], [0.7, -1.1]]))


@operation("sphere.cone_measures", randomized=True)
def op_cone_measures(p, rng):
    out = []
    cases = [("square", sp.normalized(geo.cube(2)), 0.25),
             ("cross2", sp.normalized(geo.cross_polytope(2)), 0.25),
             ("cube3", sp.normalized(geo.cube(3)), 1 / 6)]
    samples = p.get("samples", 1_000_000)
    for name, body, mass in cases:
        nu = sp.cone_measure(body)
        out.append(Ledger.compare(f"cone-measure[{name}]", float(np.abs(nu.masses - mass).max()),
                                  0.0, 1e-15, "closed-form facet-cone masses"))
        mc = sp.cone_measure_mc(body, samples, seed=int(rng.integers(0, 2 ** 31)))
        z = float(np.max(np.abs(mc.masses - nu.masses) / mc.stderr))
        out.append(_quantity(f"cone-measure-mc[{name}]", z, 3.0,
                             "Gauss-map pushforward within 3 standard errors",
                             details={"accepted": mc.accepted}))
    return out, {}


@operation("sphere.log_minkowski", randomized=True)
def op_log_minkowski(p, rng):
    out = []
    tol = p.get("tol", 1e-5)
    fixtures = [("square", sp.normalized(geo.cube(2))),
                ("cross", sp.normalized(geo.cross_polytope(2))),
                ("rectangle", _normalized_rectangle(2.0, 0.5)),
                ("hexagon", hexagon())]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for name, body in fixtures:
            nu = sp.cone_measure(body)
            h0 = np.exp(rng.uniform(-0.3, 0.3, size=len(nu.masses)))
            pair = sp.cKDTree(nu.points).query(-nu.points)[1]
            h0 = np.sqrt(h0 * h0[pair])
            res = sp.log_minkowski_solve(nu, tol=tol * 0.1, h0=h0)
            out.append(_quantity(f"log-minkowski[{name}]", res.residual, tol,
                                 "cone measure of the solution equals nu",
                                 details={"iterations": res.iterations,
                                          "concentration": res.concentration.verdict}))
    bad = sp.SphericalMeasure([[1, 0], [-1, 0], [0, 1], [0, -1]], [0.3, 0.3, 0.2, 0.2])
    try:
        sp.log_minkowski_solve(bad)
        out.append(Ledger.compare("log-minkowski[masses 0.3/0.2]", 1.0, 0.0, 0.0,
                                  "subspace concentration must fail"))
    except NotConcentrated:
        rep = sp.subspace_concentration_check(bad)
        out.append(Ledger.compare("log-minkowski[masses 0.3/0.2]", rep.max_excess[1], 0.1, 1e-12,
                                  "nu(span e1) - 1/2 = 0.1: no solution",
                                  note="NotConcentrated raised"))
    return out, {}


@operation("sphere.lsi")
def op_lsi(p, rng):
    grid = sp.SphereGrid.circle(p.get("nodes", 2048))
    c1 = sp.normalized(geo.cube(2))
    c2 = sp.normalized(geo.cross_polytope(2))
    ident = sp.mahler_identity(geo.cube(2))
    log2 = math.log(2)
    out = [sp.lsi_unconditional_check(c1, c2, grid, p.get("tol", 5e-3), name="lsi[cube, cross]"),
           sp.lsi_unconditional_check(c1, c1, grid, p.get("tol", 5e-3), name="lsi[cube, cube]"),
           Ledger.compare("chain[(n+1) T]", ident.transport_term, log2, 1e-9, "closed form log 2"),
           Ledger.compare("chain[int log h^2 dnu1]", ident.support_term, -2 * log2, 1e-9,
                          "closed form -2 log 2"),
           Ledger.compare("chain[int log rho^2 dnu2]", ident.radial_term, -log2, 1e-9,
                          "closed form -log 2"),
           Ledger.compare("chain[identity]", ident.value, 0.0, 1e-9,
                          "(n+1) T + int log h^2 dnu1 - int log rho^2 dnu2 = 0")]
    return out, {}


def random_unconditional_polygon(rng, count):
    pts = rng.uniform(0.1, 1.0, size=(count, 2))
    allp = np.vstack([pts * s for s in ([1, 1], [-1, 1], [1, -1], [-1, -1])])
    return geo.VPolytope(allp)


@operation("sphere.improved_mahler", randomized=True)
def op_improved_mahler(p, rng):
    out = []
    bodies = [("cube", geo.cube(2)), ("cross", geo.cross_polytope(2))]
    for k in range(p.get("count", 20) - 2):
        bodies.append((f"random-{k}", random_unconditional_polygon(rng, int(rng.integers(1, 6)))))
    for name, body in bodies:
        out.append(sp.improved_mahler_check(body, p.get("tol", 1e-6), name=f"improved-mahler[{name}]"))
    return out, {}


@operation("sphere.concentration", randomized=True)
def op_concentration(p, rng):
    out = []
    for n, res in ((1, p.get("circle_nodes", 512)), (2, p.get("frequency", 12))):
        grid = sp.SphereGrid.make(n, res)
        half = math.pi / 3 + 0.05 if n == 2 else math.pi / 4
        for k in range(p.get("count", 50)):
            c1, c2 = rng.unit_vectors(2, grid.dim)
            w1, w2 = rng.uniform(0.05, 0.8, size=2)
            A = sp.symmetric_cap(grid, c1, w1)
            B = sp.symmetric_cap(grid, c2, w2)
            if A.any() and B.any():
                out.append(sp.concentration_ab_check(grid, A, B, name=f"concentration-AB[S^{n}, {k}]"))
            big = sp.symmetric_cap(grid, c1, max(w1, half))
            r = float(rng.uniform(0.05, 1.2))
            out.append(sp.concentration_enlargement_check(grid, big, r,
                                                          name=f"concentration-enlargement[S^{n}, {k}]"))
    return out, {}


# ---------------------------------------------------------------------------
# Built-in configurations and suites
# ---------------------------------------------------------------------------


def _cfg(name, op, params=None, seed=None):
    return ExperimentConfig(name, op, params or {}, seed)


BUILTIN = {c.name: c for c in [
    _cfg("mahler-hanner", "santalo.mahler_hanner", {"dims": [2, 3, 4]}),
    _cfg("mahler-hanner-n3", "santalo.mahler_hanner", {"dims": [3]}),
    _cfg("bs-random", "santalo.bs_random", {"dims": [2, 3], "count": 50}, seed=1),
    _cfg("bs-ellipsoid", "santalo.bs_ellipsoid", {"dims": [2, 3], "count": 5}, seed=2),
    _cfg("santalo-point-triangle", "santalo.santalo_point", {"count": 401}),
    _cfg("cs-constants", "sconcave.cs_constants"),
    _cfg("ps-hanner", "sconcave.ps_hanner"),
    _cfg("triple-dual", "sconcave.triple_dual", {"count": 10}, seed=3),
    _cfg("exact-vs-sinkhorn", "transport.exact_vs_sinkhorn", {"count": 20}, seed=7),
    _cfg("talagrand-equality", "transport.talagrand_equality"),
    _cfg("talagrand-random", "transport.talagrand_random", {"count": 50}, seed=4),
    _cfg("barenblatt-centered", "transport.barenblatt_centered", {"count": 30}, seed=5),
    _cfg("nonsymmetric-cap", "sphere.nonsymmetric_cap"),
    _cfg("kolesnikov-s1-suite", "sphere.kolesnikov", {"count": 10, "frequency": 3}, seed=6),
    _cfg("kolesnikov", "sphere.kolesnikov", {"count": 30}, seed=8),
    _cfg("sphere-poincare", "sphere.poincare"),
    _cfg("weighted-poincare", "linearize.weighted_poincare", {"count": 20}, seed=9),
    _cfg("taylor", "linearize.taylor"),
    _cfg("cone-measures", "sphere.cone_measures", {"samples": 1_000_000}, seed=10),
    _cfg("log-minkowski", "sphere.log_minkowski", seed=11),
    _cfg("lsi-unconditional", "sphere.lsi", {"nodes": 2048}),
    _cfg("improved-mahler", "sphere.improved_mahler", {"count": 20}, seed=12),
    _cfg("concentration", "sphere.concentration", {"count": 50}, seed=13),
]}

SUITES = {
    "direct-bs": ["mahler-hanner", "bs-random", "bs-ellipsoid", "santalo-point-triangle"],
    "s-concave": ["cs-constants", "ps-hanner", "triple-dual"],
    "transport": ["exact-vs-sinkhorn", "talagrand-equality", "talagrand-random",
                  "barenblatt-centered"],
    "sphere": ["nonsymmetric-cap", "kolesnikov", "sphere-poincare", "cone-measures",
               "log-minkowski", "lsi-unconditional", "improved-mahler", "concentration"],
    "linearize": ["weighted-poincare", "taylor"],
}
SUITES["all"] = [name for key in ("direct-bs", "s-concave", "transport", "sphere", "linearize")
                 for name in SUITES[key]]


# ---------------------------------------------------------------------------
# Parsing and execution
# ---------------------------------------------------------------------------


def _strip_comments(obj):
    if isinstance(obj, dict):
        return {k: _strip_comments(v) for k, v in obj.items() if not k.startswith("_")}
    if isinstance(obj, list):
        return [_strip_comments(v) for v in obj]
    return obj


def parse_config(data, where="config"):
    """Validate one experiment object; raises :class:`ConfigInvalid` naming the field."""
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{where}: expected a JSON object")
    data = _strip_comments(data)
    for key in ("name", "operation"):
        if key not in data:
            raise ConfigInvalid(f"{where}: field '{key}' is missing")
        if not isinstance(data[key], str):
            raise ConfigInvalid(f"{where}: field '{key}' must be a string")
    unknown = set(data) - {"name", "operation", "params", "seed", "out"}
    if unknown:
        raise ConfigInvalid(f"{where}: unknown field(s) {sorted(unknown)}")
    op = data["operation"]
    if op not in OPERATIONS:
        raise ConfigInvalid(f"{where}: field 'operation': unknown operation {op!r}")
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise ConfigInvalid(f"{where}: field 'params' must be an object")
    seed = data.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
        raise ConfigInvalid(f"{where}: field 'seed' must be an integer")
    if op in RANDOMIZED and seed is None:
        raise ConfigInvalid(f"{where}: field 'seed' is required for randomised operation {op!r}")
    return ExperimentConfig(data["name"], op, params, seed, data.get("out"))


def load_configs(source):
    """Configurations from a path, a JSON string, a dict, or the name of a built-in configuration."""
    if isinstance(source, ExperimentConfig):
        return [source]
    if isinstance(source, dict):
        data = source
    else:
        text = None
        path = Path(str(source))
        if path.exists():
            text = path.read_text()
        elif str(source) in BUILTIN:
            return [BUILTIN[str(source)]]
        elif str(source).lstrip().startswith("{"):
            text = str(source)
        else:
            raise ConfigInvalid(f"{source}: no such file or built-in configuration")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if isinstance(data, dict) and "experiments" in data:
        items = data["experiments"]
        if not isinstance(items, list):
            raise ConfigInvalid("field 'experiments' must be a list")
        return [parse_config(item, f"experiments[{i}]") for i, item in enumerate(items)]
    return [parse_config(data)]


def run_experiment(config):
    """Ledgers and plot data of one experiment; errors become ``Skipped`` rows."""
    seed = resolve_seed(config.seed) if config.seed is not None else 0
    rng = ShiftRegisterRNG(seed)
    try:
        ledgers, plots = OPERATIONS[config.operation](config.params, rng)
    except SantaloLabError as exc:
        ledgers = [Ledger.skipped(config.name, f"error: {type(exc).__name__}: {exc}")]
        plots = {}
    for led in ledgers:
        led.name = f"{config.name}/{led.name}"
    plots = {f"{config.name}_{k}": v for k, v in plots.items()}
    plots[f"{config.name}_gaps"] = [(i, led.gap) for i, led in enumerate(ledgers)
                                    if led.verdict != SKIPPED]
    return config.name, ledgers, plots


def execute(configs, jobs=1):
    """Run configurations (in parallel up to ``jobs``) and assemble a :class:`RunReport`."""
    start = time.perf_counter()
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_experiment, configs))
    else:
        results = [run_experiment(c) for c in configs]
    results.sort(key=lambda r: r[0])
    ledgers, plots = [], {}
    for _, leds, pl in results:
        ledgers.extend(leds)
        plots.update(pl)
    return RunReport(sorted(configs, key=lambda c: c.name), ledgers,
                     time.perf_counter() - start, plots, _versions(),
                     {c.name: c.digest() for c in configs})


def run(config, out=None, jobs=1):
    """Execute a configuration file (or built-in name) and write the outputs."""
    configs = load_configs(config)
    report = execute(configs, jobs)
    out = out or configs[0].out
    if out:
        report.write(out)
    return report


def suite(name, out=None, jobs=1):
    """Run a curated suite: ``direct-bs``, ``s-concave``, ``transport``, ``sphere``, ``linearize`` or ``all``."""
    if name not in SUITES:
        raise UnknownSuite(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    report = execute([BUILTIN[c] for c in SUITES[name]], jobs)
    if out:
        report.write(out)
    return report


def main(argv=None):
    parser = argparse.ArgumentParser(prog="santalo-lab",
                                     description="Run inequality experiments and write ledgers.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a JSON configuration or a built-in configuration name")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--jobs", type=int, default=1)
    p_suite = sub.add_parser("suite", help="run a curated suite")
    p_suite.add_argument("name")
    p_suite.add_argument("--out", default=None)
    p_suite.add_argument("--jobs", type=int, default=1)
    sub.add_parser("list", help="list built-in configurations and suites")
    args = parser.parse_args(argv)
    try:
        if args.command == "list":
            for name in sorted(SUITES):
                print(f"suite {name}: {', '.join(SUITES[name])}")
            for name, cfg in sorted(BUILTIN.items()):
                print(f"config {name}: {cfg.operation}")
            return EXIT_OK
        if args.command == "run":
            report = run(args.config, args.out, args.jobs)
        else:
            report = suite(args.name, args.out, args.jobs)
    except (ConfigInvalid, UnknownSuite) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(report.table())
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
