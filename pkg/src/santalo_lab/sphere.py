r"""Spherical discretisation, cone measures and the inequality ledgers on the sphere.

Notation: ``n`` is the dimension of the sphere ``S^n`` and ``d = n + 1`` the
dimension of the ambient space.  ``sigma`` is the uniform probability
measure and

.. math::

    \alpha(u, v) = -\log(u\cdot v) \ (u\cdot v > 0), \qquad +\infty \ \text{otherwise}.

For a centrally symmetric body ``C`` of volume one,
``eta_C = |B_2^d| rho_C^d sigma = e^{-V} sigma`` is a probability measure, and
the cone measure ``nu_C`` of a polytope has mass
``h_C(u_i) |F_i| / (d |C|)`` at the outer normal ``u_i`` of facet ``F_i``.

Node measures on a :class:`SphereGrid` are read as measures with constant
density on the Voronoi cell of each node.  Distances between node sets are
corrected by the cell radius so that the discrete concentration statements
are statements about genuine subsets of the sphere.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import SphericalVoronoi, cKDTree

from .errors import (EmptySet, Infeasible, MaxIterations, NotConcentrated, NotSymmetric,
                     NotUnitVolume, OriginNotInterior, SantaloLabError)
from .geometry import HPolytope, Polytope, is_symmetric, is_unconditional, unit_ball_volume
from .ledger import HOLDS, VIOLATED, Ledger
from .rng import ShiftRegisterRNG
from .transport import cost_alpha, solve_exact

ORTH_ANGLE = 1e-6
ORTH_TOL = math.sin(ORTH_ANGLE)

PROV_KOLESNIKOV = "(n+1) T_alpha(nu1, nu2) <= H(nu1|sigma) + H(nu2|sigma) for symmetric nu1, nu2"
PROV_LSI = ("H(eta_C1|sigma) + H(eta_C2|sigma) + (n+1) T_alpha(nu_C1, nu_C2) <= e_{n+1} "
            "+ sum_i (n+1)/2 int log(1 + |grad V_i|^2/(n+1)^2) e^{-V_i} dsigma, unconditional C_i")
PROV_AB = "sigma(A) sigma(B) <= cos^{n+1}(d(A, B)) for symmetric A, B"
PROV_ENLARGE = "sigma(S \\ A_r) <= 2 cos^{n+1}(r) for symmetric A with sigma(A) >= 1/2"
PROV_POINCARE = "2(n+1) Var_sigma(f) <= int |grad f|^2 dsigma for even f"
PROV_MAHLER = "|C||C°| >= 4^d/d! exp((n+1) T + int log h_C1^d dnu_C1 - int log rho_C1^d dnu_C2), unconditional C"
PROV_OLIKER = "int -log h_C dnu1 + int log rho_C dnu2 <= T_alpha(nu1, nu2)"
PROV_POLAR = "int rho_C^d dsigma * int h_C^{-d} dsigma <= 1 for symmetric C"


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------


class SphereGrid:
    """Nodes on ``S^n`` (``n`` in {1, 2}) with quadrature weights summing to one.

    Use :meth:`circle` or :meth:`icosahedral`.  Both are closed under
    ``u -> -u`` and under every coordinate reflection, and these maps are
    exact permutations of the nodes.
    """

    def __init__(self, nodes, weights, kind, resolution, cell_radius):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        w = np.asarray(weights, dtype=float)
        if np.any(w <= 0):
            raise ValueError("quadrature weights must be positive")
        self.weights = w / w.sum()
        self.kind = kind
        self.resolution = int(resolution)
        self.cell_radius = float(cell_radius)
        self._perms = {}

    # -- constructors --------------------------------------------------------
    @classmethod
    def circle(cls, count):
        """``count`` equally spaced angles ``(k + 1/2) 2 pi / count``; ``count`` divisible by 4."""
        count = int(count)
        if count < 4 or count % 4:
            raise ValueError("the circle grid needs a positive multiple of 4 nodes")
        q = count // 4
        th = (np.arange(q) + 0.5) * (2 * np.pi / count)
        c = np.cos(th)
        s = c[::-1].copy()
        quad = [np.column_stack([c, s]), np.column_stack([-s, c]),
                np.column_stack([-c, -s]), np.column_stack([s, -c])]
        nodes = np.vstack(quad)
        return cls(nodes, np.full(count, 1.0 / count), "circle", count, np.pi / count)

    @classmethod
    def icosahedral(cls, frequency):
        """Geodesic grid from the icosahedron, each face split into ``frequency^2`` triangles.

        The grid has ``10 frequency^2 + 2`` nodes.  Weights are the areas of the
        spherical Voronoi cells, averaged over coordinate reflections.
        """
        f = int(frequency)
        if f < 1:
            raise ValueError("frequency must be positive")
        phi = (1 + math.sqrt(5)) / 2
        base = []
        for s1 in (-1, 1):
            for s2 in (-1, 1):
                for k in range(3):
                    v = [0.0, s1 * 1.0, s2 * phi]
                    base.append(v[-k:] + v[:-k] if k else v)
        base = np.array(base)
        faces = [t for t in itertools.combinations(range(12), 3)
                 if all(abs(np.linalg.norm(base[a] - base[b]) - 2.0) < 1e-9
                        for a, b in itertools.combinations(t, 2))]
        pts = {}
        for a, b, c in faces:
            for i in range(f + 1):
                for j in range(f + 1 - i):
                    k = f - i - j
                    p = (i * base[a] + j * base[b] + k * base[c]) / f
                    p = p / np.linalg.norm(p)
                    pts.setdefault(tuple(np.round(p, 9)), p)
        raw = np.array(list(pts.values()))
        nodes = _snap_reflections(raw)
        sv = SphericalVoronoi(nodes, radius=1.0, threshold=1e-9)
        areas = _orbit_average(nodes, sv.calculate_areas())
        radius = 0.0
        for i, region in enumerate(sv.regions):
            cosines = np.clip(sv.vertices[region] @ nodes[i], -1.0, 1.0)
            radius = max(radius, float(np.arccos(cosines.min())))
        return cls(nodes, areas, "icosahedral", f, radius)

    @classmethod
    def make(cls, n, resolution):
        return cls.circle(resolution) if n == 1 else cls.icosahedral(resolution)

    # -- basic properties ----------------------------------------------------
    @property
    def n(self):
        return self.nodes.shape[1] - 1

    @property
    def dim(self):
        """Ambient dimension ``n + 1``."""
        return self.nodes.shape[1]

    @property
    def size(self):
        return len(self.nodes)

    def integrate(self, values):
        """``int f dsigma`` for node values ``f``."""
        return float(self.weights @ np.asarray(values, dtype=float))

    def _perm(self, key, mapped):
        if key not in self._perms:
            dist, idx = cKDTree(self.nodes).query(mapped)
            if dist.max() > 1e-12:
                raise NotSymmetric("grid is not closed under the requested map")
            self._perms[key] = idx
        return self._perms[key]

    def antipodal(self):
        """Index permutation of ``u -> -u``."""
        return self._perm("antipodal", -self.nodes)

    def reflection(self, axis=None):
        """Index permutation of the reflection flipping coordinate ``axis`` (default: the last)."""
        axis = self.dim - 1 if axis is None else axis
        m = self.nodes.copy()
        m[:, axis] = -m[:, axis]
        return self._perm(("reflect", axis), m)

    def is_even(self, values, tol=1e-12):
        v = np.asarray(values, dtype=float)
        return bool(np.abs(v - v[self.antipodal()]).max() <= tol * max(1.0, np.abs(v).max()))

    def geodesic(self, i, j):
        return float(np.arccos(np.clip(self.nodes[i] @ self.nodes[j], -1.0, 1.0)))

    # -- I/O -----------------------------------------------------------------
    def to_json(self):
        return {"kind": self.kind, "resolution": self.resolution, "n": self.n}

    @classmethod
    def from_json(cls, data):
        if data["kind"] == "circle":
            return cls.circle(data["resolution"])
        if data["kind"] == "icosahedral":
            return cls.icosahedral(data["resolution"])
        raise ValueError(f"unknown sphere grid kind {data['kind']!r}")

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"u{j + 1}" for j in range(self.dim)] + ["weight"])
        for node, w in zip(self.nodes, self.weights):
            writer.writerow([repr(float(c)) for c in node] + [repr(float(w))])
        return buf.getvalue()

    def __repr__(self):
        return f"SphereGrid({self.kind}, {self.resolution}, size={self.size})"


def _orbit_keys(nodes):
    return [tuple(np.round(np.abs(p), 9)) for p in nodes]


def _snap_reflections(nodes):
    """Make the point set exactly invariant under coordinate sign changes."""
    keys = _orbit_keys(nodes)
    groups = {}
    for k, p in zip(keys, nodes):
        groups.setdefault(k, []).append(np.abs(p))
    canon = {}
    for k, rows in groups.items():
        a = np.mean(rows, axis=0)
        a[a < 1e-12] = 0.0
        canon[k] = a / np.linalg.norm(a)
    out = np.array([np.sign(p) * canon[k] for k, p in zip(keys, nodes)])
    return out


def _orbit_average(nodes, values):
    keys = _orbit_keys(nodes)
    sums = {}
    for k, v in zip(keys, values):
        s, c = sums.get(k, (0.0, 0))
        sums[k] = (s + v, c + 1)
    return np.array([sums[k][0] / sums[k][1] for k in keys])


# ---------------------------------------------------------------------------
# Measures
# ---------------------------------------------------------------------------


class SphericalMeasure:
    """Probability measure on the sphere: atoms, or node masses on a :class:`SphereGrid`."""

    def __init__(self, points, masses, grid=None, normalize=True):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        m = np.asarray(masses, dtype=float).ravel()
        if len(m) != len(pts):
            raise ValueError("one mass per point is required")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValueError("masses must be finite and nonnegative")
        total = m.sum()
        if total <= 0:
            raise ValueError("measure has no mass")
        if np.abs(np.linalg.norm(pts, axis=1) - 1).max() > 1e-10:
            raise ValueError("atoms must lie on the unit sphere")
        self.points = pts
        self.masses = m / total if normalize else m
        self.grid = grid

    @classmethod
    def on_grid(cls, grid, masses):
        return cls(grid.nodes, masses, grid)

    @classmethod
    def from_density(cls, grid, density):
        """Node masses ``w_i g(u_i)`` for a density ``g`` (callable or node values) w.r.t. ``sigma``."""
        g = density(grid.nodes) if callable(density) else density
        g = np.asarray(g, dtype=float).ravel()
        return cls(grid.nodes, grid.weights * g, grid)

    @classmethod
    def uniform(cls, grid):
        return cls(grid.nodes, grid.weights.copy(), grid)

    @property
    def dim(self):
        return self.points.shape[1]

    def support(self, tol=0.0):
        keep = self.masses > tol
        return self.points[keep], self.masses[keep]

    def is_symmetric(self, tol=1e-12):
        if self.grid is not None:
            perm = self.grid.antipodal()
            return bool(np.abs(self.masses - self.masses[perm]).max() <= tol)
        pts, m = self.support()
        tree = cKDTree(pts)
        dist, idx = tree.query(-pts)
        return bool(dist.max() <= 1e-9 and np.abs(m - m[idx]).max() <= tol)

    def density(self):
        """Node density with respect to ``sigma`` (grid measures only)."""
        return self.masses / self.grid.weights

    def entropy(self):
        """``H(nu | sigma)`` of the cell-wise constant density (``inf`` for atoms)."""
        if self.grid is None:
            return math.inf
        m = self.masses
        pos = m > 0
        return float(np.sum(m[pos] * np.log(m[pos] / self.grid.weights[pos])))

    def integrate(self, values):
        return float(self.masses @ np.asarray(values, dtype=float))

    def symmetrized(self):
        if self.grid is not None:
            perm = self.grid.antipodal()
            return SphericalMeasure(self.points, 0.5 * (self.masses + self.masses[perm]), self.grid)
        pts = np.vstack([self.points, -self.points])
        return SphericalMeasure(pts, np.concatenate([self.masses, self.masses]) / 2)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"u{j + 1}" for j in range(self.dim)] + ["mass"])
        for p, m in zip(self.points, self.masses):
            writer.writerow([repr(float(c)) for c in p] + [repr(float(m))])
        return buf.getvalue()


def total_variation(a, b):
    """``(1/2) sum |a_i - b_i|`` for mass vectors on the same atoms."""
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())


# ---------------------------------------------------------------------------
# Cone measures
# ---------------------------------------------------------------------------


class ConeMeasure(SphericalMeasure):
    """Cone measure of a polytope: atoms at the facet normals."""

    def __init__(self, normals, masses, body=None):
        super().__init__(normals, masses, None, normalize=False)
        self.body = body

    @property
    def normals(self):
        return self.points


def normalized(body):
    """``body / |body|^{1/d}``."""
    return body.scale(body.volume() ** (-1.0 / body.dim))


def cone_measure(body, auto_rescale=False, tol=1e-9):
    """Cone probability measure of a symmetric polytope of volume one."""
    if not is_symmetric(body):
        raise NotSymmetric("cone measures are computed for centrally symmetric polytopes")
    vol = body.volume()
    if abs(vol - 1.0) > tol:
        if not auto_rescale:
            raise NotUnitVolume(f"volume {vol!r} differs from 1")
        body = normalized(body)
        vol = body.volume()
    d = body.dim
    raw = body.offsets * body.facet_areas() / (d * vol)
    return ConeMeasure(body.normals.copy(), raw / raw.sum(), body)


@dataclass
class MonteCarloCone:
    """Facet frequencies of the radial-projection/Gauss-map pushforward of uniform samples."""

    masses: np.ndarray
    stderr: np.ndarray
    samples: int
    accepted: int


def cone_measure_mc(body, samples=1_000_000, seed=0, block=65536):
    """Estimate the cone measure from ``samples`` uniform points of ``body``.

    Points are drawn uniformly in the bounding box with the package generator
    and kept when inside ``body``; each kept point is sent to the facet hit by
    its ray from the origin.
    """
    rng = ShiftRegisterRNG(seed)
    lo = body.vertices.min(axis=0)
    hi = body.vertices.max(axis=0)
    counts = np.zeros(len(body.normals), dtype=np.int64)
    accepted = 0
    drawn = 0
    while drawn < samples:
        size = min(block, samples - drawn)
        x = lo + (hi - lo) * rng.random((size, body.dim))
        drawn += size
        ratio = x @ body.normals.T / body.offsets
        inside = ratio.max(axis=1) <= 1.0
        facet = ratio[inside].argmax(axis=1)
        counts += np.bincount(facet, minlength=len(counts))
        accepted += int(inside.sum())
    p = counts / accepted
    return MonteCarloCone(p, np.sqrt(p * (1 - p) / accepted), samples, accepted)


# ---------------------------------------------------------------------------
# Subspace concentration
# ---------------------------------------------------------------------------

STRICT = "Strict"
EQUALITY_CASE = "Equality"
SC_VIOLATED = "Violated"


@dataclass
class SubspaceReport:
    """Outcome of the subspace concentration test."""

    verdict: str
    max_excess: dict
    worst: dict
    complementary: bool
    subspaces: int

    @property
    def strict(self):
        return self.verdict == STRICT

    @property
    def satisfied(self):
        return self.verdict != SC_VIOLATED


def _directions_mod_sign(points, masses, tol=1e-9):
    dirs, mass = [], []
    for p, m in zip(points, masses):
        if m <= 0:
            continue
        for k, q in enumerate(dirs):
            if abs(abs(p @ q) - 1.0) < tol:
                mass[k] += m
                break
        else:
            dirs.append(p / np.linalg.norm(p))
            mass.append(m)
    return np.array(dirs), np.array(mass)


def _subspaces(dirs, dim, tol=1e-9):
    """Orthonormal bases of every proper subspace spanned by some of ``dirs``, deduplicated."""
    found = {}
    for k in range(1, dim):
        for idx in itertools.combinations(range(len(dirs)), k):
            sub = dirs[list(idx)]
            u, s, _ = np.linalg.svd(sub.T, full_matrices=False)
            if s[-1] < tol:
                continue
            basis = u[:, :k]
            proj = basis @ basis.T
            key = tuple(np.round(proj.ravel(), 7))
            found.setdefault(key, (k, basis))
    return list(found.values())


def _mass_in(dirs, mass, basis, tol=1e-9):
    resid = np.linalg.norm(dirs - (dirs @ basis) @ basis.T, axis=1)
    inside = resid < tol
    return float(mass[inside].sum()), inside


def subspace_concentration_check(nu, tol=1e-12):
    """Test ``nu(S ∩ F) <= dim F / d`` over the subspaces spanned by atoms.

    At equality for some ``F`` the measure must be carried by ``F`` together
    with a complementary subspace ``F'`` (``F ∩ F' = {0}``,
    ``dim F + dim F' = d``); when that holds the verdict is ``Equality``.
    """
    dirs, mass = _directions_mod_sign(nu.points, nu.masses)
    d = nu.dim
    subs = _subspaces(dirs, d)
    max_excess = {k: -math.inf for k in range(1, d)}
    worst = {}
    equal = []
    violated = False
    for k, basis in subs:
        m, inside = _mass_in(dirs, mass, basis)
        excess = m - k / d
        if excess > max_excess[k]:
            max_excess[k] = excess
            worst[k] = basis
        if excess > tol:
            violated = True
        elif excess >= -tol:
            equal.append((k, basis, inside))
    if violated:
        return SubspaceReport(SC_VIOLATED, max_excess, worst, False, len(subs))
    if not equal:
        return SubspaceReport(STRICT, max_excess, worst, False, len(subs))
    complementary = True
    for k, basis, inside in equal:
        rest = dirs[~inside]
        if len(rest) == 0:
            complementary = False
            break
        rank = np.linalg.matrix_rank(rest, tol=1e-9)
        joint = np.linalg.matrix_rank(np.vstack([basis.T, rest]), tol=1e-9)
        if rank != d - k or joint != d:
            complementary = False
            break
    verdict = EQUALITY_CASE if complementary else SC_VIOLATED
    return SubspaceReport(verdict, max_excess, worst, complementary, len(subs))


# ---------------------------------------------------------------------------
# Log-Minkowski functional
# ---------------------------------------------------------------------------


def _positive_support(body, pts):
    if isinstance(body, Polytope):
        if not body.contains_origin_interior():
            raise OriginNotInterior("Phi needs the origin in the interior")
    h = np.asarray(body.support(pts), dtype=float)
    if np.any(h <= 0):
        raise OriginNotInterior("Phi needs the origin in the interior")
    return h


def phi_nu(nu, body):
    """``Phi_nu(C) = int log h_C dnu``."""
    pts, m = nu.support()
    return float(m @ np.log(_positive_support(body, pts)))


def _facet_areas_for(normals, h):
    """Volume and facet areas of ``{x : u_i . x <= h_i}`` aligned with ``normals`` (0 for absent facets)."""
    poly = HPolytope(normals, h)
    areas = np.zeros(len(normals))
    dots = normals @ poly.normals.T
    own = poly.facet_areas()
    for i in range(len(normals)):
        j = int(dots[i].argmax())
        if dots[i, j] > 1 - 1e-9 and abs(poly.offsets[j] - h[i]) <= 1e-9 * max(1.0, h[i]):
            areas[i] = own[j]
    return poly, poly.volume(), areas


@dataclass
class LogMinkowskiResult:
    """Solution of the discrete log-Minkowski problem."""

    body: HPolytope
    support_numbers: np.ndarray
    residual: float
    iterations: int
    concentration: SubspaceReport


def log_minkowski_solve(nu, tol=1e-6, max_iter=20000, h0=None):
    """Symmetric polytope of volume one whose cone measure is ``nu``.

    Minimises ``sum nu_i t_i - (1/d) log |P(e^t)|`` over support numbers
    ``h = e^t`` (``P(h) = {x : u_i . x <= h_i}``), whose gradient is
    ``nu_i - lambda_i(h)`` with ``lambda`` the cone measure of ``P(h)``.
    Gradient steps use Armijo backtracking; the body is rescaled to volume one
    after every step.  Stops when the total variation between ``nu`` and the
    cone measure is at most ``tol``.
    """
    report = subspace_concentration_check(nu)
    if report.verdict == SC_VIOLATED:
        raise NotConcentrated(f"subspace concentration fails (max excess {report.max_excess})")
    if report.verdict == EQUALITY_CASE:
        warnings.warn("nu satisfies subspace concentration with equality; the minimiser is not unique",
                      RuntimeWarning, stacklevel=2)
    if not nu.is_symmetric(1e-12):
        raise NotSymmetric("the log-Minkowski solver expects a symmetric measure")
    u, target = nu.support()
    d = nu.dim
    pair = cKDTree(u).query(-u)[1]
    t = np.zeros(len(u)) if h0 is None else np.log(np.asarray(h0, dtype=float))

    def evaluate(t):
        h = np.exp(t)
        poly, vol, areas = _facet_areas_for(u, h)
        lam = h * areas / (d * vol)
        value = float(target @ t - math.log(vol) / d)
        grad = target - lam
        grad = 0.5 * (grad + grad[pair])
        return value, grad, poly, vol, lam

    value, grad, poly, vol, lam = evaluate(t)
    step = 1.0
    for it in range(max_iter):
        res = total_variation(target, lam)
        if res <= tol:
            t = t - math.log(vol) / d
            body = HPolytope(u, np.exp(t))
            return LogMinkowskiResult(body, np.exp(t), res, it, report)
        g2 = float(grad @ grad)
        while True:
            trial = t - step * grad
            try:
                v_new, g_new, p_new, vol_new, lam_new = evaluate(trial)
            except SantaloLabError:
                v_new = math.inf
            if v_new <= value - 1e-4 * step * g2:
                break
            step *= 0.5
            if step < 1e-14:
                raise MaxIterations(it, HPolytope(u, np.exp(t)), "line search stalled")
        t = trial - math.log(vol_new) / d
        value, grad, poly, vol, lam = evaluate(t)
        step = min(step * 2.0, 1e3)
    raise MaxIterations(max_iter, HPolytope(u, np.exp(t)))


@dataclass
class KReport:
    """Bounds on ``K(nu) = inf { Phi_nu(C) : |C| = 1 }``."""

    upper: float
    lower: float
    best_body: int
    best_eta: int
    quadrature_slack: float
    consistent: bool
    unbounded: bool
    descent_slope: float
    details: dict = field(default_factory=dict)


def eta_body(body, grid):
    """``eta_C`` as node masses on ``grid`` (normalised by the quadrature)."""
    rho = np.asarray(body.radial(grid.nodes), dtype=float)
    g = unit_ball_volume(grid.dim) * rho ** grid.dim
    z = grid.integrate(g)
    return SphericalMeasure(grid.nodes, grid.weights * g, grid), z


def f_functional(nu, eta):
    """``F_nu(eta) = H(eta|sigma)/d - T_alpha(nu, eta)`` (``-inf`` when transport is infeasible)."""
    T = alpha_transport(nu, eta)
    if math.isinf(T):
        return -math.inf
    return eta.entropy() / nu.dim - T


def k_functional(nu, bodies, grid=None, etas=()):
    """Upper bound ``min Phi_nu`` over unit-volume ``bodies`` and ``min F_nu - log|B|/d`` over measures.

    The measures ``eta_C`` of the candidate bodies are always added when a
    grid is given, so that the lower value never exceeds the upper one by
    more than the quadrature error ``|log Z| / d`` of those measures.  When
    ``nu`` violates subspace concentration the functional is unbounded below:
    ``descent_slope = k - d nu(F) < 0`` is the rate at which ``Phi`` decreases
    when the worst subspace ``F`` is shrunk at fixed volume.
    """
    d = nu.dim
    logb = math.log(unit_ball_volume(d)) / d
    phis = [phi_nu(nu, normalized(b)) for b in bodies]
    upper = min(phis) if phis else math.inf
    cands = list(etas)
    slack = 0.0
    if grid is not None:
        for b in bodies:
            eta, z = eta_body(normalized(b), grid)
            cands.append(eta)
            slack = max(slack, abs(math.log(z)) / d)
    fs = [f_functional(nu, e) - logb for e in cands]
    lower = min(fs) if fs else -math.inf
    rep = subspace_concentration_check(nu)
    slope = 0.0
    if rep.verdict == SC_VIOLATED:
        k = max(rep.max_excess, key=lambda kk: rep.max_excess[kk])
        slope = k - d * (rep.max_excess[k] + k / d)
    consistent = bool(upper >= lower - 1e-9 - slack) if grid is not None else True
    return KReport(upper, lower, int(np.argmin(phis)) if phis else -1,
                   int(np.argmin(fs)) if fs else -1, slack, consistent, slope < 0, slope,
                   {"phi": phis, "F": fs})


# ---------------------------------------------------------------------------
# Transport on the sphere
# ---------------------------------------------------------------------------


def alpha_transport(nu1, nu2, return_plan=False):
    """``T_alpha(nu1, nu2)`` between atomic or node measures (``inf`` when infeasible).

    Pairs within angle ``1e-6`` of orthogonality get cost ``+inf``.  Identical
    node measures on the same grid are transported by the identity plan.
    """
    if (nu1.grid is not None and nu1.grid is nu2.grid
            and np.array_equal(nu1.masses, nu2.masses)):
        if return_plan:
            return 0.0, None, None
        return 0.0
    X, p = nu1.support()
    Y, q = nu2.support()
    c = cost_alpha(X, Y, orth_tol=ORTH_TOL)
    try:
        plan, dual = solve_exact(c, p, q)
    except Infeasible:
        return (math.inf, None, None) if return_plan else math.inf
    if return_plan:
        return plan.objective, plan, (X, Y)
    return plan.objective


def _alpha_slack(plan, pts, radius):
    """Plan-weighted change of ``alpha`` when both endpoints move by ``radius``."""
    if plan is None or radius == 0:
        return 0.0
    X, Y = pts
    P = plan.matrix
    i, j = np.nonzero(P > 0)
    ang = np.arccos(np.clip((X[i] * Y[j]).sum(axis=1), -1.0, 1.0))
    hi = ang + 2 * radius
    with np.errstate(divide="ignore", invalid="ignore"):
        osc = np.where(hi < np.pi / 2, -np.log(np.cos(hi)) + np.log(np.cos(ang)), np.inf)
    return float((P[i, j] * osc).sum())


def kolesnikov_check(nu1, nu2, tol=1e-6, name=None):
    """Ledger ``(n+1) T_alpha(nu1, nu2) <= H(nu1|sigma) + H(nu2|sigma)``.

    A deficit smaller than ``tol`` plus the plan-weighted cell slack is
    recorded as ``Holds`` with a note.  Non-symmetric inputs give a
    ``Skipped`` row naming the missing hypothesis.
    """
    name = name or "kolesnikov"
    d = nu1.dim
    T, plan, pts = alpha_transport(nu1, nu2, return_plan=True)
    lhs = d * T
    rhs = nu1.entropy() + nu2.entropy()
    details = {"transport": T, "slack": 0.0}
    if not (nu1.is_symmetric(1e-12) and nu2.is_symmetric(1e-12)):
        reason = "hypothesis: symmetric measures"
        if math.isinf(T):
            reason += "; transport infeasible"
        return Ledger.skipped(name, reason, PROV_KOLESNIKOV, lhs, rhs, details)
    radius = nu1.grid.cell_radius if nu1.grid is not None else 0.0
    slack = d * _alpha_slack(plan, pts, radius)
    details["slack"] = slack
    led = Ledger.compare(name, lhs, rhs, tol, PROV_KOLESNIKOV, details=details)
    if led.verdict == VIOLATED and led.gap >= -(tol + slack):
        led.verdict = HOLDS
        led.note = "deficit within the discretisation slack"
    return led


@dataclass
class CapReport:
    """Transport from a normalised cap measure to ``sigma``."""

    infeasible: bool
    transport: float
    entropy: float
    expected_entropy: float
    cap_mass: float


def cap_mask(grid, center, radius):
    """Nodes within geodesic distance ``radius`` of ``center`` (not symmetrised)."""
    c = np.asarray(center, dtype=float)
    c = c / np.linalg.norm(c)
    return grid.nodes @ c >= math.cos(radius)


def nonsymmetric_cap_example(grid, center, radius):
    """``nu = sigma|_A / sigma(A)`` for a cap ``A`` of angular radius below ``pi/2``.

    ``T_alpha(nu, sigma)`` is infinite although ``H(nu|sigma) = -log sigma(A)``
    is finite, so symmetry cannot be dropped.
    """
    mask = cap_mask(grid, center, radius)
    if not mask.any():
        raise EmptySet("the cap contains no node")
    nu = SphericalMeasure(grid.nodes, np.where(mask, grid.weights, 0.0), grid)
    sigma = SphericalMeasure.uniform(grid)
    T = alpha_transport(nu, sigma)
    mass = float(grid.weights[mask].sum())
    return CapReport(math.isinf(T), T, nu.entropy(), -math.log(mass), mass)


# ---------------------------------------------------------------------------
# Bodies on the sphere
# ---------------------------------------------------------------------------


def e_constant(d):
    """``log(d! |B_2^d|^2 / 4^d)``."""
    return math.log(math.factorial(d) * unit_ball_volume(d) ** 2 / 4 ** d)


def _facet_of(body, U):
    return (U @ body.normals.T / body.offsets).argmax(axis=1)


def _edge_mask(body, U, tol=1e-9):
    ratio = U @ body.normals.T / body.offsets
    top = np.sort(ratio, axis=1)
    return top[:, -1] - top[:, -2] <= tol * top[:, -1]


@dataclass
class LSITerms:
    """Pieces of the log-Sobolev type inequality for one body."""

    entropy: float
    gradient_term: float
    mass: float


def lsi_terms(body, grid):
    """``H(eta_C|sigma)`` and ``(d/2) int log(1 + |grad V|^2/d^2) deta_C`` by quadrature.

    On the cone over facet ``i`` (normal ``a_i``), ``rho_C(u) = b_i/(a_i.u)``
    and ``|grad V|/d = tan angle(a_i, u)``, so the gradient integrand is
    ``-d log(a_i . u)``.  Nodes on facet boundaries are left out.
    """
    d = grid.dim
    U = grid.nodes
    rho = np.asarray(body.radial(U), dtype=float)
    g = unit_ball_volume(d) * rho ** d
    w = grid.weights
    mass = float(w @ g)
    entropy = float(w @ (g * np.log(g)))
    keep = ~_edge_mask(body, U)
    facet = _facet_of(body, U)
    cosang = np.einsum("ij,ij->i", U, body.normals[facet])
    grad_term = float((w * g * keep) @ (-d * np.log(cosang)))
    return LSITerms(entropy, grad_term, mass)


def lsi_unconditional_check(body1, body2, grid, tol=5e-3, name=None):
    """Ledger of the log-Sobolev type inequality for unconditional bodies of volume one."""
    name = name or "lsi-unconditional"
    d = grid.dim
    for b in (body1, body2):
        if not is_unconditional(b):
            return Ledger.skipped(name, "hypothesis: unconditional bodies", PROV_LSI)
        if abs(b.volume() - 1.0) > 1e-9:
            return Ledger.skipped(name, "hypothesis: unit volume", PROV_LSI)
    nu1 = cone_measure(body1)
    nu2 = cone_measure(body2)
    T = alpha_transport(nu1, nu2)
    t1 = lsi_terms(body1, grid)
    t2 = lsi_terms(body2, grid)
    lhs = t1.entropy + t2.entropy + d * T
    rhs = e_constant(d) + t1.gradient_term + t2.gradient_term
    details = {"transport": T, "entropy1": t1.entropy, "entropy2": t2.entropy,
               "gradient1": t1.gradient_term, "gradient2": t2.gradient_term,
               "e": e_constant(d), "mass1": t1.mass, "mass2": t2.mass}
    return Ledger.compare(name, lhs, rhs, tol, PROV_LSI, details=details)


@dataclass
class MahlerIdentity:
    """Terms of the exponent in the improved reverse Santaló bound."""

    transport_term: float
    support_term: float
    radial_term: float

    @property
    def value(self):
        return self.transport_term + self.support_term - self.radial_term


def mahler_identity(body):
    """``(d T_alpha(nu_C1, nu_C2), int log h_C1^d dnu_C1, int log rho_C1^d dnu_C2)``.

    ``C1 = C/|C|^{1/d}`` and ``C2 = C°/|C°|^{1/d}``.
    """
    d = body.dim
    c1 = normalized(body)
    c2 = normalized(body.polar())
    nu1 = cone_measure(c1)
    nu2 = cone_measure(c2)
    T = alpha_transport(nu1, nu2)
    sup = float(nu1.masses @ (d * np.log(c1.support(nu1.points))))
    rad = float(nu2.masses @ (d * np.log(c1.radial(nu2.points))))
    return MahlerIdentity(d * T, sup, rad)


def improved_mahler_check(body, tol=1e-6, name=None):
    """Ledger ``4^d/d! exp(identity) <= |C||C°|`` for an unconditional polytope ``C``."""
    name = name or "improved-mahler"
    if not is_unconditional(body):
        return Ledger.skipped(name, "hypothesis: unconditional body", PROV_MAHLER)
    d = body.dim
    ident = mahler_identity(body)
    lhs = 4 ** d / math.factorial(d) * math.exp(ident.value)
    rhs = body.volume() * body.polar().volume()
    return Ledger.compare(name, lhs, rhs, tol, PROV_MAHLER,
                          details={"exponent": ident.value, "transport": ident.transport_term,
                                   "support": ident.support_term, "radial": ident.radial_term})


@dataclass
class OlikerBounds:
    """``dual <= T_alpha <= primal`` for one body and one feasible plan."""

    dual: float
    transport: float
    primal: float

    @property
    def ordered(self):
        return self.dual <= self.transport + 1e-9 and self.transport <= self.primal + 1e-9


def oliker_bounds(nu1, nu2, body, plan=None):
    """Dual value of ``(-log h_C, log rho_C)``, the optimal cost, and the cost of ``plan``.

    Without ``plan`` the product coupling is used (``inf`` if it meets an
    orthogonal pair).
    """
    X, p = nu1.support()
    Y, q = nu2.support()
    dual = float(p @ -np.log(_positive_support(body, X)) + q @ np.log(body.radial(Y)))
    T = alpha_transport(nu1, nu2)
    c = cost_alpha(X, Y, orth_tol=ORTH_TOL).values
    P = np.outer(p, q) if plan is None else np.asarray(plan)
    with np.errstate(invalid="ignore"):
        primal = float(np.where(P > 0, P * c, 0.0).sum())
    return OlikerBounds(dual, T, primal)


def polar_volume_product_sphere(body, grid):
    """``int rho_C^d dsigma * int h_C^{-d} dsigma`` by quadrature."""
    d = grid.dim
    rho = np.asarray(body.radial(grid.nodes), dtype=float)
    h = np.asarray(body.support(grid.nodes), dtype=float)
    return grid.integrate(rho ** d) * grid.integrate(h ** (-d))


def polar_volume_check(body, grid, tol=1e-6, name=None):
    """Ledger ``int rho_C^d dsigma int h_C^{-d} dsigma <= 1``."""
    val = polar_volume_product_sphere(body, grid)
    return Ledger.compare(name or "polar-volume-sphere", val, 1.0, tol, PROV_POLAR)


# ---------------------------------------------------------------------------
# Concentration
# ---------------------------------------------------------------------------


def symmetric_cap(grid, center, half_width):
    """Nodes within ``half_width`` of ``±center``."""
    c = np.asarray(center, dtype=float)
    c = c / np.linalg.norm(c)
    return np.abs(grid.nodes @ c) >= math.cos(half_width)


def _set_distance(grid, A, B):
    dots = np.clip(grid.nodes[A] @ grid.nodes[B].T, -1.0, 1.0)
    return float(np.arccos(dots.max()))


def _cell_correction(grid):
    return 2.0 * grid.cell_radius


def _check_set(grid, mask, label):
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptySet(f"{label} is empty")
    return mask, bool(np.array_equal(mask, mask[grid.antipodal()]))


def concentration_ab_check(grid, A, B, tol=1e-12, name=None):
    """Ledger ``sigma(A) sigma(B) <= cos^d(dist(A, B))`` for node sets ``A``, ``B``.

    ``A`` and ``B`` stand for the unions of their cells, whose distance is at
    least the node distance minus twice the cell radius.
    """
    name = name or "concentration-AB"
    A, symA = _check_set(grid, A, "A")
    B, symB = _check_set(grid, B, "B")
    if not (symA and symB):
        return Ledger.skipped(name, "hypothesis: symmetric sets", PROV_AB)
    dist_nodes = _set_distance(grid, A, B)
    dist = max(0.0, dist_nodes - _cell_correction(grid))
    lhs = float(grid.weights[A].sum() * grid.weights[B].sum())
    rhs = math.cos(min(dist, math.pi / 2)) ** grid.dim
    return Ledger.compare(name, lhs, rhs, tol, PROV_AB,
                          details={"node_distance": dist_nodes, "distance": dist})


def concentration_enlargement_check(grid, A, r, tol=1e-12, name=None):
    """Ledger ``sigma(S minus A_r) <= 2 cos^d(r')`` with ``r' = r - 2 * cell radius``.

    The left side is the mass of nodes farther than ``r`` from ``A``; their
    cells lie outside the ``r'``-enlargement of the union of the cells of ``A``.
    """
    name = name or "concentration-enlargement"
    A, sym = _check_set(grid, A, "A")
    mass = float(grid.weights[A].sum())
    if not sym:
        return Ledger.skipped(name, "hypothesis: symmetric set", PROV_ENLARGE)
    if mass < 0.5 - 1e-12:
        return Ledger.skipped(name, "hypothesis: sigma(A) >= 1/2", PROV_ENLARGE)
    dots = np.clip(grid.nodes @ grid.nodes[A].T, -1.0, 1.0)
    dist = np.arccos(dots.max(axis=1))
    lhs = float(grid.weights[dist > r].sum())
    reff = max(0.0, r - _cell_correction(grid))
    rhs = 2.0 * math.cos(min(reff, math.pi / 2)) ** grid.dim
    return Ledger.compare(name, lhs, rhs, tol, PROV_ENLARGE,
                          details={"r": r, "effective_r": reff, "mass_A": mass})


def concentration_check(grid, A, B=None, r=None, tol=1e-12):
    """Both concentration ledgers: the pair inequality for ``(A, B)`` and the enlargement one for ``(A, r)``."""
    out = []
    if B is not None:
        out.append(concentration_ab_check(grid, A, B, tol))
    if r is not None:
        out.append(concentration_enlargement_check(grid, A, r, tol))
    return out


# ---------------------------------------------------------------------------
# Poincaré inequality on the sphere
# ---------------------------------------------------------------------------


def _tangent_basis(U):
    d = U.shape[1]
    out = []
    axis = np.abs(U).argmin(axis=1)
    e = np.eye(d)[axis]
    t1 = e - (e * U).sum(axis=1, keepdims=True) * U
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    out.append(t1)
    if d == 3:
        out.append(np.cross(U, t1))
    return out


def tangential_gradient(f, grid, step=1e-5):
    """``|grad_S f|^2`` at the nodes by central differences along geodesics (``f`` callable)."""
    U = grid.nodes
    total = np.zeros(len(U))
    for t in _tangent_basis(U):
        plus = math.cos(step) * U + math.sin(step) * t
        minus = math.cos(step) * U - math.sin(step) * t
        dfdt = (np.asarray(f(plus), dtype=float) - np.asarray(f(minus), dtype=float)) / (2 * step)
        total += dfdt ** 2
    return total


def _grad_sq_from_values(grid, v):
    """``|grad f|^2`` from node values: periodic differences on the circle, local cubic fits in
    gnomonic coordinates (18 nearest neighbours) on the sphere."""
    if grid.n == 1:
        h = 2 * np.pi / grid.size
        return ((np.roll(v, -1) - np.roll(v, 1)) / (2 * h)) ** 2
    _, nb = cKDTree(grid.nodes).query(grid.nodes, k=19)
    out = np.empty(len(v))
    bases = _tangent_basis(grid.nodes)
    for i in range(len(v)):
        u = grid.nodes[i]
        P = grid.nodes[nb[i, 1:]]
        x, y = (P @ np.column_stack([b[i] for b in bases])).T / (P @ u)
        A = np.column_stack([x, y, x * x, x * y, y * y, x ** 3, x * x * y, x * y * y, y ** 3])
        coef = np.linalg.lstsq(A, v[nb[i, 1:]] - v[i], rcond=None)[0]
        out[i] = coef[0] ** 2 + coef[1] ** 2
    return out


def sphere_poincare_sides(f, grid, grad_sq=None):
    """``(2(n+1) Var_sigma(f), int |grad f|^2 dsigma)``."""
    v = np.asarray(f(grid.nodes) if callable(f) else f, dtype=float)
    if grad_sq is not None:
        g2 = np.asarray(grad_sq(grid.nodes) if callable(grad_sq) else grad_sq, dtype=float)
    elif callable(f):
        g2 = tangential_gradient(f, grid)
    else:
        g2 = _grad_sq_from_values(grid, v)
    mean = grid.integrate(v)
    var = grid.integrate((v - mean) ** 2)
    return 2 * grid.dim * var, grid.integrate(g2)


def sphere_poincare_check(f, grid, grad_sq=None, tol=1e-3, name=None):
    """Ledger ``2(n+1) Var_sigma(f) <= int |grad f|^2 dsigma`` for even ``f`` (relative ``tol``)."""
    name = name or "sphere-poincare"
    v = np.asarray(f(grid.nodes) if callable(f) else f, dtype=float)
    if not grid.is_even(v, 1e-9):
        return Ledger.skipped(name, "hypothesis: even function", PROV_POINCARE)
    lhs, rhs = sphere_poincare_sides(f, grid, grad_sq)
    led = Ledger.compare(name, lhs, rhs, tol, PROV_POINCARE, relative=True)
    led.details["ratio"] = rhs / lhs * 2 * grid.dim if lhs > 0 else math.inf
    return led


def random_even_density(rng, grid, strength=1.0):
    """``exp(u^T A u)`` with a random symmetric ``A``; an even positive density."""
    d = grid.dim
    M = rng.normal(size=(d, d)) * strength
    A = 0.5 * (M + M.T)
    return np.exp(np.einsum("ij,jk,ik->i", grid.nodes, A, grid.nodes))


def dumps_grid(grid):
    return json.dumps(grid.to_json(), sort_keys=True)
