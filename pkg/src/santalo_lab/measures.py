r"""Rotation-invariant model measures, histograms and relative entropy.

A weight ``rho`` on ``[0, inf)`` defines the probability measure
``mu_rho`` with density proportional to ``rho(|x|^2)``.  The named weights are

* Gaussian ``rho(t) = exp(-t/2)``,
* Barenblatt ``rho(t) = (1 - s t)_+^{1/(2s)}`` for ``s > 0``,
* Cauchy ``rho(t) = (1 + t)^{-beta}`` (integrable iff ``beta > n/2``),

plus tabulated custom weights.  The profile ``v(t) = -log rho(e^t)`` must
be convex for the transport costs of :mod:`santalo_lab.transport` to be
nonnegative.

Measures on grids are histograms: cell ``i`` carries the mass
``p_i`` spread uniformly over the cell.  Relative entropy between two
histograms on the same grid is then ``sum p_i log(p_i / q_i)`` exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import PchipInterpolator
from scipy.special import gammaln

from .errors import EquatorPoint, GridMismatch, NotAdmissible
from .grid import Grid

GAUSSIAN = "gaussian"
BARENBLATT = "barenblatt"
CAUCHY = "cauchy"
CUSTOM = "custom"


class WeightFunction:
    """Radial weight ``rho`` with its log-radius profile ``v(t) = -log rho(e^t)``."""

    def __init__(self, kind, s=None, beta=None, table=None):
        self.kind = kind
        self.s = s
        self.beta = beta
        if kind == BARENBLATT and not (s and s > 0):
            raise NotAdmissible("Barenblatt weight needs s > 0")
        if kind == CAUCHY and not (beta and beta > 0):
            raise NotAdmissible("Cauchy weight needs beta > 0")
        if kind == CUSTOM:
            t, r = (np.asarray(a, dtype=float) for a in table)
            if np.any(t <= 0) or np.any(r <= 0):
                raise NotAdmissible("custom weights are tabulated at t > 0 with rho > 0")
            self._table = (t, r)
            self._logi = PchipInterpolator(np.log(t), np.log(r), extrapolate=True)
        elif kind not in (GAUSSIAN, BARENBLATT, CAUCHY):
            raise ValueError(f"unknown weight kind {kind!r}")

    @classmethod
    def gaussian(cls):
        return cls(GAUSSIAN)

    @classmethod
    def barenblatt(cls, s):
        return cls(BARENBLATT, s=float(s))

    @classmethod
    def cauchy(cls, beta):
        return cls(CAUCHY, beta=float(beta))

    @classmethod
    def custom(cls, t, rho):
        return cls(CUSTOM, table=(t, rho))

    # -- evaluation ----------------------------------------------------------
    def log_rho(self, t):
        """``log rho(t)``; ``-inf`` outside the support."""
        t = np.asarray(t, dtype=float)
        if self.kind == GAUSSIAN:
            return -0.5 * t
        if self.kind == BARENBLATT:
            arg = -self.s * t
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.log1p(arg) / (2 * self.s)
            return np.where(arg > -1.0, out, -np.inf)
        if self.kind == CAUCHY:
            return -self.beta * np.log1p(t)
        t0 = self._table[0][0]
        inner = self._logi(np.log(np.maximum(t, t0)))
        return np.where(t < t0, self._logi(np.log(t0)), inner)

    def log_rho_increment(self, t0, d):
        """``log rho(t0 + d) - log rho(t0)`` without cancellation for small ``d``."""
        t0 = np.asarray(t0, dtype=float)
        d = np.asarray(d, dtype=float)
        if self.kind == GAUSSIAN:
            return -0.5 * d
        if self.kind == BARENBLATT:
            with np.errstate(divide="ignore", invalid="ignore"):
                arg = -self.s * d / (1.0 - self.s * t0)
                out = np.log1p(arg) / (2 * self.s)
            return np.where(arg > -1.0, out, -np.inf)
        if self.kind == CAUCHY:
            return -self.beta * np.log1p(d / (1.0 + t0))
        return self.log_rho(t0 + d) - self.log_rho(t0)

    def rho(self, t):
        return np.exp(self.log_rho(t))

    def v(self, t):
        """``-log rho(e^t)``."""
        return -self.log_rho(np.exp(np.asarray(t, dtype=float)))

    def dv(self, t):
        """First derivative of ``v``."""
        e = np.exp(np.asarray(t, dtype=float))
        if self.kind == GAUSSIAN:
            return 0.5 * e
        if self.kind == BARENBLATT:
            return 0.5 * e / (1 - self.s * e)
        if self.kind == CAUCHY:
            return self.beta * e / (1 + e)
        return -self._logi.derivative(1)(np.asarray(t, dtype=float))

    def d2v(self, t):
        """Second derivative of ``v``."""
        e = np.exp(np.asarray(t, dtype=float))
        if self.kind == GAUSSIAN:
            return 0.5 * e
        if self.kind == BARENBLATT:
            return 0.5 * e / (1 - self.s * e) ** 2
        if self.kind == CAUCHY:
            return self.beta * e / (1 + e) ** 2
        return -self._logi.derivative(2)(np.asarray(t, dtype=float))

    def dlog_rho(self, t):
        """``(log rho)'(t)``."""
        t = np.asarray(t, dtype=float)
        if self.kind == GAUSSIAN:
            return np.full_like(t, -0.5)
        if self.kind == BARENBLATT:
            return -0.5 / (1 - self.s * t)
        if self.kind == CAUCHY:
            return -self.beta / (1 + t)
        u = np.log(t)
        return self._logi.derivative(1)(u) / t

    def d2log_rho(self, t):
        """``(log rho)''(t)``."""
        t = np.asarray(t, dtype=float)
        if self.kind == GAUSSIAN:
            return np.zeros_like(t)
        if self.kind == BARENBLATT:
            return -0.5 * self.s / (1 - self.s * t) ** 2
        if self.kind == CAUCHY:
            return self.beta / (1 + t) ** 2
        u = np.log(t)
        return (self._logi.derivative(2)(u) - self._logi.derivative(1)(u)) / t ** 2

    @property
    def support_radius(self):
        return 1 / math.sqrt(self.s) if self.kind == BARENBLATT else math.inf

    def normalization(self, n):
        """Closed-form ``int rho(|x|^2) dx`` on ``R^n`` (``None`` for custom weights)."""
        if self.kind == GAUSSIAN:
            return (2 * math.pi) ** (n / 2)
        if self.kind == BARENBLATT:
            a = 1 + 1 / (2 * self.s)
            return math.exp(0.5 * n * math.log(math.pi / self.s) + gammaln(a) - gammaln(a + n / 2))
        if self.kind == CAUCHY:
            if self.beta <= n / 2:
                return math.inf
            return math.exp(0.5 * n * math.log(math.pi) + gammaln(self.beta - n / 2) - gammaln(self.beta))
        return None

    def to_json(self):
        d = {"kind": self.kind}
        if self.s is not None:
            d["s"] = self.s
        if self.beta is not None:
            d["beta"] = self.beta
        if self.kind == CUSTOM:
            d["t"] = self._table[0].tolist()
            d["rho"] = self._table[1].tolist()
        return d

    @classmethod
    def from_json(cls, d):
        kind = d["kind"]
        if kind == CUSTOM:
            return cls.custom(d["t"], d["rho"])
        return cls(kind, s=d.get("s"), beta=d.get("beta"))

    def __repr__(self):
        extra = {GAUSSIAN: "", BARENBLATT: f"s={self.s}", CAUCHY: f"beta={self.beta}",
                 CUSTOM: "tabulated"}[self.kind]
        return f"WeightFunction({self.kind}{', ' + extra if extra else ''})"


@dataclass
class AdmissibilityReport:
    admissible: bool
    monotone: bool
    log_convex_profile: bool
    strictly_convex: bool
    integrable: bool
    messages: list = field(default_factory=list)


def check_admissible(w, n=1, points=1000):
    """Check monotonicity, convexity of ``v`` and integrability of ``rho(|x|^2)`` on ``R^n``."""
    hi = 10.0
    if w.kind == BARENBLATT:
        hi = math.log(1 / w.s) - 1e-3
    t = np.linspace(-10.0, hi, points)
    r = w.rho(np.exp(t))
    msgs = []
    monotone = bool(np.all(np.diff(r) <= 1e-14 * np.abs(r[:-1]) + 1e-300))
    if not monotone:
        msgs.append("rho is not non-increasing")
    v = w.v(t)
    d2 = np.diff(v, 2)
    scale = 1e-12 * max(1.0, float(np.abs(v).max()))
    convex = bool(np.all(d2 >= -scale))
    strict = bool(np.all(d2 > 0))
    if not convex:
        msgs.append("t -> -log rho(e^t) is not convex")
    if w.kind == CAUCHY:
        integrable = w.beta > n / 2
    elif w.kind == CUSTOM:
        tt = w._table[0]
        rr = w._table[1]
        slope = -(math.log(rr[-1]) - math.log(rr[-2])) / (math.log(tt[-1]) - math.log(tt[-2]))
        integrable = slope > n / 2
    else:
        integrable = True
    if not integrable:
        msgs.append(f"rho(|x|^2) is not integrable on R^{n}")
    return AdmissibilityReport(monotone and convex and integrable, monotone, convex, strict,
                               integrable, msgs)


def require_admissible(w, n=1):
    rep = check_admissible(w, n)
    if not rep.admissible:
        raise NotAdmissible("; ".join(rep.messages))
    return rep


# ---------------------------------------------------------------------------
# Histograms
# ---------------------------------------------------------------------------


class GridMeasure:
    """Probability histogram on the cells of a :class:`Grid`."""

    def __init__(self, grid, probs, meta=None, normalize=True):
        p = np.asarray(probs, dtype=float).reshape(grid.shape)
        if np.any(p < 0):
            raise ValueError("cell probabilities must be nonnegative")
        total = p.sum()
        if normalize:
            if total <= 0:
                raise ValueError("zero total mass")
            p = p / total
        elif abs(total - 1) > 1e-12:
            raise ValueError("cell probabilities must sum to one")
        self.grid = grid
        self.p = p
        self.meta = dict(meta or {})

    @property
    def flat(self):
        return self.p.ravel()

    @property
    def points(self):
        return self.grid.nodes

    def density(self):
        return self.p / self.grid.cell_volume

    def is_symmetric(self, tol=1e-12):
        return self.grid.is_symmetric() and np.abs(self.grid.reflect(self.p) - self.p).max() <= tol

    def mean(self):
        return (self.flat[:, None] * self.grid.nodes).sum(axis=0)

    def restricted(self, mask):
        """Conditioned on the cells where ``mask`` is true."""
        m = np.asarray(mask, dtype=bool).reshape(self.grid.shape)
        return GridMeasure(self.grid, np.where(m, self.p, 0.0), self.meta)

    def reweighted(self, factor):
        """Measure with cell masses ``p_i * factor_i`` renormalised."""
        return GridMeasure(self.grid, self.p * np.asarray(factor).reshape(self.grid.shape), self.meta)

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow([f"x{j + 1}" for j in range(self.grid.dim)] + ["weight"])
        for node, val in zip(self.grid.nodes, self.flat):
            wr.writerow([repr(float(c)) for c in node] + [repr(float(val))])
        return buf.getvalue()

    def sidecar(self):
        return json.dumps({"grid": self.grid.to_json(), **self.meta}, sort_keys=True, default=float)

    @classmethod
    def from_csv(cls, text, sidecar):
        meta = json.loads(sidecar)
        grid = Grid.from_json(meta.pop("grid"))
        rows = list(csv.reader(io.StringIO(text)))[1:]
        vals = np.array([float(r[-1]) for r in rows])
        return cls(grid, vals, meta, normalize=False)


class DiscreteMeasure:
    """Weighted point cloud in ``R^d`` (possibly on a sphere)."""

    def __init__(self, points, weights, normalize=True):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        w = np.asarray(weights, dtype=float).ravel()
        if len(w) != len(pts):
            raise ValueError("one weight per point")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if normalize:
            w = w / w.sum()
        self.points = pts
        self.weights = w

    @property
    def flat(self):
        return self.weights

    def is_symmetric(self, point_tol=1e-9, weight_tol=1e-12):
        pts, w = self.points, self.weights
        d = np.sqrt(((pts[:, None, :] + pts[None, :, :]) ** 2).sum(-1))
        j = d.argmin(axis=1)
        return bool(np.all(d[np.arange(len(pts)), j] <= point_tol) and
                    np.all(np.abs(w[j] - w) <= weight_tol))

    def mean(self):
        return (self.weights[:, None] * self.points).sum(axis=0)

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow([f"x{j + 1}" for j in range(self.points.shape[1])] + ["weight"])
        for node, val in zip(self.points, self.weights):
            wr.writerow([repr(float(c)) for c in node] + [repr(float(val))])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

_GL5 = leggauss(5)
_GL32 = leggauss(32)


def _cell_integrals(grid, func, rule, cells=None):
    """Tensor Gauss-Legendre integral of ``func`` over the selected cells."""
    x, wx = rule
    h = grid.spacing
    nodes = grid.nodes if cells is None else grid.nodes[cells]
    offs = np.stack(np.meshgrid(*([x] * grid.dim), indexing="ij"), -1).reshape(-1, grid.dim)
    wts = np.prod(np.stack(np.meshgrid(*([wx] * grid.dim), indexing="ij"), -1).reshape(-1, grid.dim), axis=1)
    out = np.zeros(len(nodes))
    for o, w in zip(offs, wts):
        pts = nodes + 0.5 * h * o
        out += w * func(pts)
    return out * np.prod(h / 2)


def cell_masses(grid, density, edge_radius=None):
    """``int_cell density`` with 5-point Gauss rules, 32 points on cells crossing ``|x| = edge_radius``."""
    masses = _cell_integrals(grid, density, _GL5)
    if edge_radius is not None and math.isfinite(edge_radius):
        nodes = grid.nodes
        half = 0.5 * grid.spacing
        corners = np.stack(np.meshgrid(*([[-1.0, 1.0]] * grid.dim), indexing="ij"), -1).reshape(-1, grid.dim)
        radii = np.stack([np.linalg.norm(nodes + c * half, axis=1) for c in corners], axis=1)
        nearest = np.linalg.norm(np.clip(0.0, nodes - half, nodes + half), axis=1)
        straddle = (nearest < edge_radius) & (radii.max(axis=1) > edge_radius)
        if straddle.any():
            masses[straddle] = _cell_integrals(grid, density, _GL32, straddle)
    return masses


def mu_rho(w, grid):
    """Histogram of ``mu_rho`` on ``grid``; ``meta`` records both normalisations.

    ``meta["Z_grid"]`` is the mass captured by the grid window and
    ``meta["Z"]`` the closed-form normalisation when known.
    """
    require_admissible(w, grid.dim)
    dens = lambda pts: w.rho((pts ** 2).sum(axis=1))
    masses = cell_masses(grid, dens, w.support_radius)
    z_grid = float(masses.sum())
    return GridMeasure(grid, masses, {"weight": w.to_json(), "Z_grid": z_grid,
                                      "Z": w.normalization(grid.dim)})


def histogram(grid, density, edge_radius=None):
    """Histogram of a (possibly unnormalised) density."""
    return GridMeasure(grid, cell_masses(grid, density, edge_radius))


def relative_entropy(p, q):
    """``H(p | q) = sum p_i log(p_i / q_i)``, ``+inf`` when ``p`` charges a ``q``-null cell."""
    if isinstance(p, GridMeasure) and isinstance(q, GridMeasure):
        if not p.grid.same_as(q.grid):
            raise GridMismatch("measures live on different grids")
    elif isinstance(p, DiscreteMeasure) and isinstance(q, DiscreteMeasure):
        if p.points.shape != q.points.shape or np.abs(p.points - q.points).max() > 1e-12:
            raise GridMismatch("measures have different supports")
    else:
        pa, qa = np.asarray(getattr(p, "flat", p)), np.asarray(getattr(q, "flat", q))
        if pa.shape != qa.shape:
            raise GridMismatch("shape mismatch")
    pv = np.asarray(p.flat, dtype=float)
    qv = np.asarray(q.flat, dtype=float)
    pos = pv > 0
    if np.any(qv[pos] <= 0):
        return math.inf
    return float(np.sum(pv[pos] * np.log(pv[pos] / qv[pos])))


def symmetrize(m):
    """Average of a measure and its image under ``x -> -x``."""
    if isinstance(m, GridMeasure):
        if not m.grid.is_symmetric():
            raise GridMismatch("grid is not symmetric about the origin")
        return GridMeasure(m.grid, 0.5 * (m.p + m.grid.reflect(m.p)), m.meta)
    pts = np.vstack([m.points, -m.points])
    w = np.concatenate([m.weights, m.weights]) / 2
    return merge_atoms(pts, w)


def merge_atoms(points, weights, tol=1e-9):
    """Merge atoms closer than ``tol``."""
    pts, w = np.asarray(points, dtype=float), np.asarray(weights, dtype=float)
    keep_p, keep_w = [], []
    for p, wi in zip(pts, w):
        for k, q in enumerate(keep_p):
            if np.abs(p - q).max() <= tol:
                keep_w[k] += wi
                break
        else:
            keep_p.append(p)
            keep_w.append(wi)
    return DiscreteMeasure(np.array(keep_p), np.array(keep_w))


TO_SPHERE = "ToSphere"
TO_PLANE = "ToPlane"


def gnomonic(x):
    """``T(x) = (x, 1) / sqrt(1 + |x|^2)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lifted = np.column_stack([x, np.ones(len(x))])
    return lifted / np.linalg.norm(lifted, axis=1, keepdims=True)


def gnomonic_inverse(u):
    """``u -> (u_1, ..., u_n) / u_{n+1}`` on the open upper half-sphere."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if np.any(u[:, -1] <= 0):
        raise EquatorPoint("points with u_{n+1} <= 0 have no gnomonic preimage")
    return u[:, :-1] / u[:, -1:]


def gnomonic_push(m, direction):
    """Push a :class:`DiscreteMeasure` between ``R^n`` and the upper half-sphere."""
    if direction == TO_SPHERE:
        return DiscreteMeasure(gnomonic(m.points), m.weights, normalize=False)
    if direction == TO_PLANE:
        return DiscreteMeasure(gnomonic_inverse(m.points), m.weights, normalize=False)
    raise ValueError(f"unknown direction {direction!r}")


def total_variation(p, q):
    return 0.5 * float(np.abs(np.asarray(getattr(p, "flat", p)) - np.asarray(getattr(q, "flat", q))).sum())
