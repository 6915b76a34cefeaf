r"""Santaló points and volume-product certificates.

The polar volume of a translate,

.. math::

    V(z) = |(K - z)^\circ| = \int_{K^\circ} (1 - \langle z, x\rangle)^{-(n+1)}\,dx,

is strictly convex in ``z`` and its minimiser is the Santaló point.
For polytopes the integral is evaluated exactly: the map
``x -> x / (1 - <z, x>)`` sends a simplex ``conv(0, w_1, ..., w_n)`` of a
triangulation of the polar onto ``conv(0, w_i / (1 - <z, w_i>))``, so each
simplex contributes ``|S| / prod_i (1 - <z, w_i>)``.  The same image
simplices give the gradient ``(n+1) int_{(K-z)°} y dy`` and the Hessian
``(n+1)(n+2) int_{(K-z)°} y y^T dy`` in closed form, which feeds a damped
Newton iteration.  Ellipsoids use the closed form
``|det M|^{1/2} |B| (1 - z^T M z)^{-(n+1)/2}``.

An independent route, :func:`polar_volume_quadrature`, integrates
``(1/n) int_{S^{n-1}} (h_K(u) - <z, u>)^{-n} du`` on a sphere grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import geometry as geo
from .errors import DivergentIntegral, MaxIterations, PointOutside
from .ledger import Ledger

AT_ORIGIN = "AtOrigin"
AT_SANTALO = "AtSantalo"

PROV_BS = "volume product <= |B|^2 (1 - <San(K°), bar K>)^(n+1), equality on centred ellipsoids"
PROV_SIGN = "<San(K°), bar K> <= 0 for convex K"
PROV_MAHLER = "volume product >= 4^n/n!, equality on Hanner polytopes"


@dataclass
class SantaloResult:
    """Output of :func:`santalo_point`."""

    point: np.ndarray
    value: float
    iterations: int
    grad_norm: float
    polar_barycenter: np.ndarray


class _PolarCones:
    """Triangulation of the polar of ``K - c`` into simplices with apex 0."""

    def __init__(self, poly):
        self.center = poly.interior_point()
        shifted = poly.translate(-self.center)
        pol = shifted.polar()
        self.w = pol.vertices
        self.simplices = pol.boundary_simplices()
        self.vols = np.abs(np.linalg.det(self.w[self.simplices])) / math.factorial(poly.dim)
        self.normals = poly.normals
        self.offsets = poly.offsets
        self.diameter = poly.diameter


def _cones(poly):
    cache = poly._cache
    if "polar_cones" not in cache:
        cache["polar_cones"] = _PolarCones(poly)
    return cache["polar_cones"]


def _check_inside(body, z, margin=0.0):
    z = np.atleast_2d(z)
    if isinstance(body, geo.Polytope):
        slack = body.offsets - z @ body.normals.T
        return np.all(slack > margin, axis=-1)
    m = _ellipsoid_matrix(body)
    q = np.einsum("...i,ij,...j->...", z, m, z)
    return q < 1.0 - margin


def _ellipsoid_matrix(body):
    if isinstance(body, geo.Ball):
        return np.eye(body.dim) / body.radius ** 2
    return body.matrix


def santalo_functional(body, z):
    """``|(K - z)°|`` for one point ``z`` or an array of points of shape ``(m, n)``."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    zz = np.atleast_2d(z)
    if not np.all(_check_inside(body, zz)):
        raise PointOutside("z must lie in the interior of the body")
    if isinstance(body, geo.Polytope):
        cones = _cones(body)
        denom = 1.0 - (zz - cones.center) @ cones.w.T
        if np.any(denom <= 0):
            raise DivergentIntegral("1 - <z, x> vanishes on the polar")
        prod = np.prod(denom[:, cones.simplices], axis=-1)
        vals = (cones.vols / prod).sum(axis=-1)
    else:
        m = _ellipsoid_matrix(body)
        q = np.einsum("...i,ij,...j->...", zz, m, zz)
        vals = geo.unit_ball_volume(body.dim) * math.sqrt(np.linalg.det(m)) * (1.0 - q) ** (-(body.dim + 1) / 2)
    return float(vals[0]) if single else vals


def santalo_derivatives(body, z):
    """Value, gradient and Hessian of :func:`santalo_functional` at ``z``."""
    z = np.asarray(z, dtype=float)
    n = body.dim
    if not _check_inside(body, z)[0]:
        raise PointOutside("z must lie in the interior of the body")
    if isinstance(body, geo.Polytope):
        cones = _cones(body)
        denom = 1.0 - cones.w @ (z - cones.center)
        if np.any(denom <= 0):
            raise DivergentIntegral("1 - <z, x> vanishes on the polar")
        img = cones.w / denom[:, None]
        vol_t = cones.vols / np.prod(denom[cones.simplices], axis=-1)
        pts = img[cones.simplices]                       # (s, n, n)
        sums = pts.sum(axis=1)                           # (s, n)
        first = (vol_t[:, None] * sums).sum(axis=0) / (n + 1)
        outer = np.einsum("sij,sik->sjk", pts, pts) + np.einsum("sj,sk->sjk", sums, sums)
        second = (vol_t[:, None, None] * outer).sum(axis=0) / ((n + 1) * (n + 2))
        value = float(vol_t.sum())
        grad = (n + 1) * first
        hess = (n + 1) * (n + 2) * second
        return value, grad, hess
    m = _ellipsoid_matrix(body)
    mz = m @ z
    q = float(z @ mz)
    value = santalo_functional(body, z)
    grad = (n + 1) * value * mz / (1.0 - q)
    hess = (n + 1) * value * (m / (1.0 - q) + (n + 3) * np.outer(mz, mz) / (1.0 - q) ** 2)
    return value, grad, hess


def polar_barycenter(body, z):
    """``bar((K - z)°)`` from the gradient identity."""
    value, grad, _ = santalo_derivatives(body, z)
    return grad / ((body.dim + 1) * value)


def santalo_point(body, tol=1e-8, max_iter=100):
    """Minimise :func:`santalo_functional` by damped Newton steps.

    Backtracking halves the step until the iterate stays inside the body with
    margin ``1e-6 * diameter`` and the Armijo condition holds.  Stops when the
    gradient norm is at most ``tol * max(1, (n+1) value)``, i.e. when the
    barycentre of ``(K - z)°`` is within ``tol`` of the origin for large
    polar volumes, or when the Newton decrement falls below the floating-point
    resolution of the functional.
    """
    n = body.dim
    if isinstance(body, geo.Polytope):
        z = body.barycenter().copy()
        margin = 1e-6 * body.diameter
    else:
        z = np.zeros(n)
        margin = 1e-9
    value, grad, hess = santalo_derivatives(body, z)
    best = z.copy()
    for it in range(max_iter + 1):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol * max(1.0, (n + 1) * value):
            return SantaloResult(z, value, it, gnorm, grad / ((n + 1) * value))
        if it == max_iter:
            break
        step = -np.linalg.solve(hess, grad)
        t = 1.0
        slope = float(grad @ step)
        if -slope <= 4 * np.finfo(float).eps * abs(value):
            # Newton decrement below the resolution of the functional
            return SantaloResult(z, value, it, gnorm, grad / ((n + 1) * value))
        while True:
            trial = z + t * step
            if _check_inside(body, trial, margin)[0]:
                v_trial = santalo_functional(body, trial)
                if v_trial <= value + 1e-4 * t * slope or t < 1e-12:
                    break
            t *= 0.5
            if t < 1e-16:
                raise MaxIterations(it, SantaloResult(best, value, it, gnorm, grad / ((n + 1) * value)),
                                    "line search failed")
        z = trial
        value, grad, hess = santalo_derivatives(body, z)
        best = z.copy()
    gnorm = float(np.linalg.norm(grad))
    raise MaxIterations(max_iter, SantaloResult(best, value, max_iter, gnorm,
                                                grad / ((n + 1) * value)))


def volume_product(body, mode=AT_ORIGIN, tol=1e-8):
    """``|K| |(K - z)°|`` with ``z = 0`` (``AtOrigin``) or ``z = San(K)`` (``AtSantalo``)."""
    if mode == AT_ORIGIN:
        z = np.zeros(body.dim)
    elif mode == AT_SANTALO:
        z = santalo_point(body, tol).point
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return geo.volume(body) * santalo_functional(body, z)


def bs_check(body, tol=1e-6, santalo_tol=1e-10):
    """Ledger for ``|K||K°| <= |B|^2 (1 - <San(K°), bar K>)^(n+1)``."""
    n = body.dim
    pol = body.polar()
    lhs = geo.volume(body) * geo.volume(pol)
    san = santalo_point(pol, santalo_tol).point
    bar = geo.barycenter(body)
    inner = float(san @ bar)
    correction = (1.0 - inner) ** (n + 1)
    rhs = geo.unit_ball_volume(n) ** 2 * correction
    return Ledger.compare("blaschke-santalo", lhs, rhs, tol, PROV_BS, relative=True,
                          details={"inner": inner, "correction": correction,
                                   "santalo_of_polar": san, "barycenter": bar})


def santalo_sign_check(body, tol=1e-10):
    """Ledger for ``<San(K°), bar K> <= 0``."""
    san = santalo_point(body.polar(), 1e-10).point
    inner = float(san @ geo.barycenter(body))
    return Ledger.compare("santalo-barycenter-sign", inner, 0.0, tol, PROV_SIGN)


def mahler_check(body, tol=1e-9):
    """Ledger for ``4^n/n! <= |K||K°|`` at the origin (symmetric bodies)."""
    n = body.dim
    return Ledger.compare("mahler", 4.0 ** n / math.factorial(n),
                          volume_product(body, AT_ORIGIN), tol, PROV_MAHLER, relative=True)


# ---------------------------------------------------------------------------
# Independent quadrature route
# ---------------------------------------------------------------------------


def sphere_rule(n, resolution):
    """Directions and surface weights on ``S^{n-1}`` for ``n`` in {2, 3}.

    ``n = 2``: ``resolution`` equally spaced angles (trapezoid rule).
    ``n = 3``: Gauss-Legendre in ``cos(theta)`` times ``2 * resolution``
    equally spaced longitudes.
    """
    if n == 2:
        th = 2 * np.pi * (np.arange(resolution) + 0.5) / resolution
        u = np.column_stack([np.cos(th), np.sin(th)])
        return u, np.full(resolution, 2 * np.pi / resolution)
    if n == 3:
        x, wx = leggauss(resolution)
        m = 2 * resolution
        ph = 2 * np.pi * (np.arange(m) + 0.5) / m
        ct = np.repeat(x, m)
        st = np.sqrt(1 - ct ** 2)
        phr = np.tile(ph, resolution)
        u = np.column_stack([st * np.cos(phr), st * np.sin(phr), ct])
        return u, np.repeat(wx, m) * (2 * np.pi / m)
    raise ValueError("quadrature route implemented for n in {2, 3}")


def polar_volume_quadrature(body, z, resolution=4096):
    """``(1/n) int_{S^{n-1}} (h_K(u) - <z, u>)^{-n} du`` by a tensor rule."""
    n = body.dim
    u, w = sphere_rule(n, resolution)
    h = body.support(u) - u @ np.asarray(z, dtype=float)
    if np.any(h <= 0):
        raise PointOutside("z must lie in the interior of the body")
    return float((w * h ** (-n)).sum() / n)
