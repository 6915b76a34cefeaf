r"""Convex bodies and the duality primitives used by the rest of the package.

Four kinds of bodies are supported:

* :class:`HPolytope` -- given by halfspaces ``a_i . x <= b_i``,
* :class:`VPolytope` -- given by a point cloud whose convex hull is the body,
* :class:`Ball` -- the centred Euclidean ball of a given radius,
* :class:`Ellipsoid` -- ``{x : x^T M x <= 1}`` for a positive-definite ``M``.

Both polytope classes carry the two representations (vertices and
irredundant facets).  The polar of a polytope is obtained by exchanging them:
a vertex ``v`` becomes the halfspace ``v . x <= 1`` and a facet
``a . x <= b`` becomes the vertex ``a / b``.

Volumes and barycentres of polytopes are computed by coning the facet
triangulation from an interior point.  An exact rational path
(``volume(body, exact=True)``) replays the same decomposition with
:class:`fractions.Fraction` arithmetic, which is exact for any float input
since binary floats are rationals.
"""

from __future__ import annotations

import itertools
import json
import math
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError
from scipy.special import gammaln

from .errors import DegenerateBody, OriginNotInterior

PRUNE_TOL = 1e-9


def unit_ball_volume(n):
    """Volume of the Euclidean unit ball of ``R^n``."""
    return math.exp(0.5 * n * math.log(math.pi) - gammaln(0.5 * n + 1.0))


# ---------------------------------------------------------------------------
# Bodies
# ---------------------------------------------------------------------------


class ConvexBody:
    """Common interface of all bodies; instances are treated as immutable."""

    dim: int

    def support(self, y):
        raise NotImplementedError

    def radial(self, u):
        raise NotImplementedError

    def polar(self):
        raise NotImplementedError

    def volume(self):
        raise NotImplementedError

    def barycenter(self):
        raise NotImplementedError

    def to_json(self):
        raise NotImplementedError


class Polytope(ConvexBody):
    """Polytope carrying its vertex list and irredundant facets.

    Attributes
    ----------
    vertices : (m, n) array
        Extreme points.
    normals : (k, n) array
        Unit outer facet normals.
    offsets : (k,) array
        Facet offsets, the body is ``{x : normals @ x <= offsets}``.
    """

    kind = "polytope"

    def _init_from_both(self, vertices, normals, offsets):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.normals = np.ascontiguousarray(normals, dtype=float)
        self.offsets = np.ascontiguousarray(offsets, dtype=float)
        self.dim = self.vertices.shape[1]
        self._cache = {}

    @classmethod
    def _from_both(cls, vertices, normals, offsets, source=None):
        obj = cls.__new__(cls)
        obj._init_from_both(vertices, normals, offsets)
        obj._source = source
        return obj

    # -- basic geometry ----------------------------------------------------
    @property
    def diameter(self):
        if "diam" not in self._cache:
            v = self.vertices
            d = np.sqrt(((v[:, None, :] - v[None, :, :]) ** 2).sum(-1)).max()
            self._cache["diam"] = float(d)
        return self._cache["diam"]

    def contains_origin_interior(self, tol=1e-12):
        return bool(np.all(self.offsets > tol * max(1.0, self.diameter)))

    def support(self, y):
        y = np.asarray(y, dtype=float)
        return (y @ self.vertices.T).max(axis=-1)

    def radial(self, u):
        if not self.contains_origin_interior():
            raise OriginNotInterior("radial function needs the origin in the interior")
        u = np.asarray(u, dtype=float)
        proj = u @ self.normals.T
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(proj > 0, self.offsets / proj, np.inf)
        return ratios.min(axis=-1)

    def gauge(self, x):
        """Minkowski functional ``||x||_K`` (origin must be interior)."""
        if not self.contains_origin_interior():
            raise OriginNotInterior("gauge needs the origin in the interior")
        x = np.asarray(x, dtype=float)
        return np.maximum((x @ self.normals.T / self.offsets).max(axis=-1), 0.0)

    def contains(self, x, tol=1e-12):
        x = np.asarray(x, dtype=float)
        return np.all(x @ self.normals.T <= self.offsets + tol, axis=-1)

    def polar(self):
        if not self.contains_origin_interior():
            raise OriginNotInterior("polar needs the origin in the interior")
        new_vertices = self.normals / self.offsets[:, None]
        norms = np.linalg.norm(self.vertices, axis=1)
        new_normals = self.vertices / norms[:, None]
        new_offsets = 1.0 / norms
        target = VPolytope if isinstance(self, HPolytope) else HPolytope
        return target._from_both(new_vertices, new_normals, new_offsets)

    def translate(self, z):
        z = np.asarray(z, dtype=float)
        out = type(self)._from_both(self.vertices + z, self.normals,
                                    self.offsets + self.normals @ z)
        return out

    def linear_image(self, matrix):
        """Image under an invertible linear map."""
        m = np.asarray(matrix, dtype=float)
        minv_t = np.linalg.inv(m).T
        normals = self.normals @ minv_t.T
        scale = np.linalg.norm(normals, axis=1)
        return type(self)._from_both(self.vertices @ m.T, normals / scale[:, None],
                                     self.offsets / scale)

    def scale(self, factor):
        f = float(factor)
        return type(self)._from_both(self.vertices * f, self.normals, self.offsets * f)

    # -- triangulations ----------------------------------------------------
    def boundary_simplices(self):
        """Facet triangulation as an ``(s, n)`` array of vertex indices."""
        if "simplices" not in self._cache:
            self._cache["simplices"] = _hull(self.vertices).simplices.copy()
        return self._cache["simplices"]

    def interior_point(self):
        return self.vertices.mean(axis=0)

    def _cones(self):
        """Simplices ``conv(c, F)`` with volumes and centroids."""
        if "cones" not in self._cache:
            c = self.interior_point()
            simp = self.vertices[self.boundary_simplices()] - c
            vols = np.abs(np.linalg.det(simp)) / math.factorial(self.dim)
            cents = c + simp.sum(axis=1) / (self.dim + 1)
            self._cache["cones"] = (vols, cents)
        return self._cache["cones"]

    def volume(self):
        vols, _ = self._cones()
        return float(vols.sum())

    def barycenter(self):
        vols, cents = self._cones()
        return (vols[:, None] * cents).sum(axis=0) / vols.sum()

    def facet_areas(self):
        """(n-1)-volume of every facet, aligned with ``normals``."""
        if "areas" not in self._cache:
            n = self.dim
            areas = np.zeros(len(self.normals))
            simp = self.boundary_simplices()
            facet_of = self.facet_index_of_simplices()
            for s_idx, f_idx in zip(simp, facet_of):
                pts = self.vertices[s_idx]
                edges = pts[1:] - pts[0]
                gram = edges @ edges.T
                areas[f_idx] += math.sqrt(max(np.linalg.det(gram), 0.0)) / math.factorial(n - 1)
            self._cache["areas"] = areas
        return self._cache["areas"]

    def facet_index_of_simplices(self):
        simp = self.boundary_simplices()
        cent = self.vertices[simp].mean(axis=1)
        resid = np.abs(cent @ self.normals.T - self.offsets)
        return resid.argmin(axis=1)

    def to_json(self):
        raise NotImplementedError


class HPolytope(Polytope):
    """Polytope given by halfspaces ``a_i . x <= b_i``.

    Parameters
    ----------
    normals : (k, n) array_like
    offsets : (k,) array_like
    """

    kind = "hpolytope"

    def __init__(self, normals, offsets):
        a = np.asarray(normals, dtype=float)
        b = np.asarray(offsets, dtype=float)
        if a.ndim != 2 or b.shape != (a.shape[0],):
            raise ValueError("normals must be (k, n) and offsets (k,)")
        vertices, keep = _vertices_from_halfspaces(a, b)
        scale = np.linalg.norm(a[keep], axis=1)
        self._init_from_both(vertices, a[keep] / scale[:, None], b[keep] / scale)
        self._source = np.column_stack([a, b])

    @property
    def halfspaces(self):
        return np.column_stack([self.normals, self.offsets])

    def to_json(self):
        src = self._source if self._source is not None else self.halfspaces
        return {"kind": "hpolytope", "dim": int(self.dim),
                "halfspaces": [[float(x) for x in row] for row in src]}


class VPolytope(Polytope):
    """Convex hull of a finite point set (redundant points are pruned)."""

    kind = "vpolytope"

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2:
            raise ValueError("vertices must be an (m, n) array")
        hull = _hull(v)
        ext = v[np.sort(hull.vertices)]
        normals, offsets = _facets_from_hull(hull)
        self._init_from_both(ext, normals, offsets)
        self._source = v

    def to_json(self):
        src = self._source if self._source is not None else self.vertices
        return {"kind": "vpolytope", "dim": int(self.dim),
                "vertices": [[float(x) for x in row] for row in src]}


class Ball(ConvexBody):
    """Centred Euclidean ball ``{|x| <= radius}`` in ``R^dim``."""

    kind = "ball"

    def __init__(self, radius, dim):
        if radius <= 0 or int(dim) < 1:
            raise DegenerateBody("ball needs a positive radius and dimension")
        self.radius = float(radius)
        self.dim = int(dim)

    def support(self, y):
        return self.radius * np.linalg.norm(np.asarray(y, dtype=float), axis=-1)

    def radial(self, u):
        return self.radius / np.linalg.norm(np.asarray(u, dtype=float), axis=-1)

    def gauge(self, x):
        return np.linalg.norm(np.asarray(x, dtype=float), axis=-1) / self.radius

    def polar(self):
        return Ball(1.0 / self.radius, self.dim)

    def volume(self):
        return unit_ball_volume(self.dim) * self.radius ** self.dim

    def barycenter(self):
        return np.zeros(self.dim)

    def scale(self, factor):
        return Ball(self.radius * factor, self.dim)

    def as_ellipsoid(self):
        return Ellipsoid(np.eye(self.dim) / self.radius ** 2)

    def to_json(self):
        return {"kind": "ball", "dim": self.dim, "radius": self.radius}


class Ellipsoid(ConvexBody):
    """Centred ellipsoid ``{x : x^T M x <= 1}``."""

    kind = "ellipsoid"

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        if not np.allclose(m, m.T, rtol=0, atol=1e-12 * np.abs(m).max()):
            raise ValueError("matrix must be symmetric")
        eig = np.linalg.eigvalsh(m)
        if eig.min() <= 0:
            raise DegenerateBody("ellipsoid matrix must be positive definite")
        self.matrix = m
        self.dim = m.shape[0]
        self._inv = np.linalg.inv(m)

    def scale(self, factor):
        return Ellipsoid(self.matrix / factor ** 2)

    def support(self, y):
        y = np.asarray(y, dtype=float)
        return np.sqrt(np.einsum("...i,ij,...j->...", y, self._inv, y))

    def radial(self, u):
        u = np.asarray(u, dtype=float)
        return 1.0 / np.sqrt(np.einsum("...i,ij,...j->...", u, self.matrix, u))

    def gauge(self, x):
        x = np.asarray(x, dtype=float)
        return np.sqrt(np.einsum("...i,ij,...j->...", x, self.matrix, x))

    def polar(self):
        return Ellipsoid(self._inv)

    def volume(self):
        return unit_ball_volume(self.dim) / math.sqrt(np.linalg.det(self.matrix))

    def barycenter(self):
        return np.zeros(self.dim)

    def to_json(self):
        return {"kind": "ellipsoid", "dim": self.dim,
                "matrix": [[float(x) for x in row] for row in self.matrix]}


# ---------------------------------------------------------------------------
# Hull helpers
# ---------------------------------------------------------------------------


def _hull(points):
    pts = np.asarray(points, dtype=float)
    n = pts.shape[1]
    if pts.shape[0] < n + 1:
        raise DegenerateBody("fewer than n+1 points")
    if n < 2:
        raise DegenerateBody("polytopes must have dimension at least 2")
    try:
        return ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateBody(f"body has empty interior: {exc}") from None


def _facets_from_hull(hull):
    eq = hull.equations
    normals = eq[:, :-1]
    offsets = -eq[:, -1]
    scale = max(1.0, float(np.abs(hull.points).max()))
    keep_n, keep_b = [], []
    for a, b in zip(normals, offsets):
        dup = False
        for a2, b2 in zip(keep_n, keep_b):
            if np.abs(a - a2).max() < PRUNE_TOL and abs(b - b2) < PRUNE_TOL * scale:
                dup = True
                break
        if not dup:
            keep_n.append(a)
            keep_b.append(b)
    return np.array(keep_n), np.array(keep_b)


def _chebyshev_center(a, b):
    norms = np.linalg.norm(a, axis=1)
    n = a.shape[1]
    c = np.zeros(n + 1)
    c[-1] = -1.0
    a_ub = np.column_stack([a, norms])
    bounds = [(None, None)] * n + [(0, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b, bounds=bounds, method="highs")
    if res.status == 3:
        raise DegenerateBody("halfspace system is unbounded")
    if res.status != 0 or res.x[-1] <= 1e-12:
        raise DegenerateBody("halfspace system has empty interior")
    return res.x[:n]


def _vertices_from_halfspaces(a, b):
    if a.shape[1] < 2:
        raise DegenerateBody("polytopes must have dimension at least 2")
    c = _chebyshev_center(a, b)
    slack = b - a @ c
    dual_pts = a / slack[:, None]
    hull = _hull(dual_pts)
    if np.any(hull.equations[:, -1] >= -1e-12):
        raise DegenerateBody("halfspace system is unbounded")
    normals, offsets = _facets_from_hull(hull)
    vertices = c + normals / offsets[:, None]
    keep = np.sort(hull.vertices)
    return vertices, keep


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------


def support_function(body, y):
    """``h_K(y) = sup_{x in K} x . y`` (vectorised over leading axes of ``y``)."""
    return body.support(y)


def radial_function(body, u):
    """``rho_K(u) = sup{t : t u in K}``; needs the origin in the interior."""
    return body.radial(u)


def polar(body):
    """Polar body with respect to the origin."""
    return body.polar()


def volume(body, exact=False):
    """Lebesgue volume; ``exact=True`` returns a :class:`~fractions.Fraction` for polytopes."""
    if exact:
        if not isinstance(body, Polytope):
            raise TypeError("exact volume is only available for polytopes")
        return exact_volume(body)
    vol = body.volume()
    if not vol > 0:
        raise DegenerateBody("zero volume")
    return vol


def barycenter(body):
    """Centre of mass."""
    return body.barycenter()


def translate(body, z):
    """``body + z`` (polytopes only; balls and ellipsoids are kept centred)."""
    if not isinstance(body, Polytope):
        raise TypeError("only polytopes can be translated")
    return body.translate(z)


def is_unconditional(body, tol=1e-9):
    """True iff the body is invariant under every coordinate reflection."""
    if isinstance(body, Ball):
        return True
    if isinstance(body, Ellipsoid):
        m = body.matrix
        off = m - np.diag(np.diag(m))
        return bool(np.abs(off).max() <= tol * np.abs(m).max())
    v = body.vertices
    scale = tol * max(1.0, body.diameter)
    for i in range(body.dim):
        flipped = v.copy()
        flipped[:, i] *= -1
        if not _same_point_set(flipped, v, scale):
            return False
    return True


def is_symmetric(body, tol=1e-9):
    """True iff ``body = -body``."""
    if isinstance(body, (Ball, Ellipsoid)):
        return True
    return _same_point_set(-body.vertices, body.vertices, tol * max(1.0, body.diameter))


def _same_point_set(p, q, tol):
    if len(p) != len(q):
        return False
    d = np.sqrt(((p[:, None, :] - q[None, :, :]) ** 2).sum(-1))
    return bool(np.all(d.min(axis=1) <= tol) and np.all(d.min(axis=0) <= tol))


def hausdorff_vertices(p, q):
    """Symmetric Hausdorff distance between two finite point sets."""
    d = np.sqrt(((p[:, None, :] - q[None, :, :]) ** 2).sum(-1))
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


# ---------------------------------------------------------------------------
# Exact rational path
# ---------------------------------------------------------------------------


def _frac_det(rows):
    m = [list(r) for r in rows]
    n = len(m)
    det = Fraction(1)
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r][col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
            det = -det
        det *= m[col][col]
        inv = 1 / m[col][col]
        for r in range(col + 1, n):
            if m[r][col] != 0:
                f = m[r][col] * inv
                m[r] = [x - f * y for x, y in zip(m[r], m[col])]
    return det


def _frac_solve(mat, rhs):
    n = len(mat)
    m = [list(r) + [v] for r, v in zip(mat, rhs)]
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r][col] != 0), None)
        if piv is None:
            raise DegenerateBody("singular facet system")
        m[col], m[piv] = m[piv], m[col]
        inv = 1 / m[col][col]
        m[col] = [x * inv for x in m[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                m[r] = [x - f * y for x, y in zip(m[r], m[col])]
    return [m[r][n] for r in range(n)]


def _as_fractions(points):
    return [[Fraction(float(x)) for x in row] for row in np.asarray(points, dtype=float)]


def exact_volume(poly, vertices=None):
    """Exact volume of a polytope from its (float or Fraction) vertices."""
    verts = vertices if vertices is not None else _as_fractions(poly.vertices)
    n = poly.dim
    m = len(verts)
    apex = [sum(v[i] for v in verts) / m for i in range(n)]
    total = Fraction(0)
    for simplex in poly.boundary_simplices():
        rows = [[verts[j][i] - apex[i] for i in range(n)] for j in simplex]
        total += abs(_frac_det(rows))
    return total / math.factorial(n)


def exact_polar_vertices(poly, vertices=None):
    """Exact vertices of the polar, one per facet, as Fractions.

    Each facet hyperplane ``{x : a . x = 1}`` is recovered by solving the
    linear system through ``n`` affinely independent facet vertices.
    """
    verts = vertices if vertices is not None else _as_fractions(poly.vertices)
    n = poly.dim
    out = []
    v_float = poly.vertices
    for a, b in zip(poly.normals, poly.offsets):
        on_facet = np.flatnonzero(np.abs(v_float @ a - b) <= 1e-9 * max(1.0, poly.diameter))
        chosen = None
        for combo in itertools.combinations(on_facet, n):
            rows = [verts[j] for j in combo]
            if _frac_det(rows) != 0:
                chosen = rows
                break
        if chosen is None:
            raise DegenerateBody("facet without n independent vertices")
        out.append(_frac_solve(chosen, [Fraction(1)] * n))
    return out


def exact_volume_product(poly):
    """``|K| |K°|`` in exact rational arithmetic (origin must be interior)."""
    if not poly.contains_origin_interior():
        raise OriginNotInterior("volume product needs the origin in the interior")
    verts = _as_fractions(poly.vertices)
    pol = poly.polar()
    # the polar lists one vertex per facet, in facet order
    aligned = exact_polar_vertices(poly, verts)
    return exact_volume(poly, verts) * exact_volume(pol, aligned)


# ---------------------------------------------------------------------------
# Hanner polytopes
# ---------------------------------------------------------------------------

LEAF = "I"
L1 = "l1"
LINF = "linf"


class HannerSpec:
    """Binary tree of segments joined by l1-sums or l-infinity sums.

    ``tree`` is either the leaf ``"I"`` (the segment ``[-1, 1]``) or a tuple
    ``(tag, left, right)`` with ``tag`` in ``{"l1", "linf"}``.
    """

    def __init__(self, tree):
        self.tree = tree
        self.dim = _tree_dim(tree)

    def swapped(self):
        """Tree with every l1 tag exchanged with l-infinity."""
        return HannerSpec(_swap(self.tree))

    def vertex_array(self):
        return np.array(_tree_vertices(self.tree), dtype=float)

    def realize(self):
        """The Hanner polytope as a :class:`VPolytope`."""
        return VPolytope(self.vertex_array())

    def canonical(self):
        return _canon(self.tree)

    def __repr__(self):
        return f"HannerSpec({self.canonical()})"


def _tree_dim(t):
    if t == LEAF:
        return 1
    return _tree_dim(t[1]) + _tree_dim(t[2])


def _swap(t):
    if t == LEAF:
        return t
    return (L1 if t[0] == LINF else LINF, _swap(t[1]), _swap(t[2]))


def _tree_vertices(t):
    if t == LEAF:
        return [(-1,), (1,)]
    left, right = _tree_vertices(t[1]), _tree_vertices(t[2])
    if t[0] == LINF:
        return [a + b for a in left for b in right]
    zl, zr = (0,) * len(left[0]), (0,) * len(right[0])
    return [a + zr for a in left] + [zl + b for b in right]


def _canon(t):
    if t == LEAF:
        return LEAF
    a, b = sorted([_canon(t[1]), _canon(t[2])])
    return f"{t[0]}({a},{b})"


def hanner_trees(n):
    """All Hanner trees with ``n`` leaves, up to commutativity of the sums."""
    if n == 1:
        return [HannerSpec(LEAF)]
    seen = {}
    for k in range(1, n):
        for left in hanner_trees(k):
            for right in hanner_trees(n - k):
                for tag in (L1, LINF):
                    tree_spec = HannerSpec((tag, left.tree, right.tree))
                    seen.setdefault(tree_spec.canonical(), tree_spec)
    return [seen[k] for k in sorted(seen)]


def cube(n, half_width=1.0):
    """``[-h, h]^n`` as an :class:`HPolytope`."""
    eye = np.eye(n)
    return HPolytope(np.vstack([eye, -eye]), np.full(2 * n, float(half_width)))


def cross_polytope(n, radius=1.0):
    """``{|x|_1 <= r}`` as a :class:`VPolytope`."""
    eye = np.eye(n) * float(radius)
    return VPolytope(np.vstack([eye, -eye]))


def random_polytope(rng, n, count, center=None, symmetric=False):
    """Convex hull of Gaussian points (optionally symmetrised) from a :mod:`santalo_lab.rng` generator."""
    pts = rng.normal(size=(count, n))
    if symmetric:
        pts = np.vstack([pts, -pts])
    if center is not None:
        pts = pts + np.asarray(center, dtype=float)
    return VPolytope(pts)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def body_to_json(body):
    """Serialise a body to a JSON-compatible dict."""
    return body.to_json()


def body_from_json(data):
    """Inverse of :func:`body_to_json` (accepts a dict or a JSON string)."""
    if isinstance(data, str):
        data = json.loads(data)
    kind = data.get("kind")
    dim = int(data["dim"])
    if kind == "hpolytope":
        hs = np.asarray(data["halfspaces"], dtype=float).reshape(-1, dim + 1)
        return HPolytope(hs[:, :-1], hs[:, -1])
    if kind == "vpolytope":
        return VPolytope(np.asarray(data["vertices"], dtype=float).reshape(-1, dim))
    if kind == "ball":
        return Ball(float(data["radius"]), dim)
    if kind == "ellipsoid":
        return Ellipsoid(np.asarray(data["matrix"], dtype=float).reshape(dim, dim))
    raise ValueError(f"unknown body kind {kind!r}")


def dumps(body):
    return json.dumps(body_to_json(body))


def loads(text):
    return body_from_json(json.loads(text))
