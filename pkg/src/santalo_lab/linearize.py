r"""Linearisation of the transport cost ``omega_rho`` near the diagonal.

Near ``y != 0`` the cost behaves like a quadratic form,
``omega_rho(y + h, y) = (1/2) H_rho(y) h.h + o(|h|^2)``, with

.. math::

    \tfrac12 H_\rho(y) = -(\log\rho)'(s)\, I_n - (\log\rho)''(s)\, y y^T,
    \qquad s = |y|^2 .

In terms of ``v(t) = -log rho(e^t)`` the eigenvalues are ``v'(t)/|y|^2`` on
``y^perp`` and ``v''(t)/|y|^2`` along ``y`` (``t = log |y|^2``), so the
matrix is positive definite exactly when ``v`` is increasing and strictly
convex at that radius.  The ``rho`` form stays regular at ``y = 0``, which
is what grid computations use.

Linearising the transport-entropy inequality around ``mu_rho`` gives the
weighted Poincaré inequality for even ``f`` with ``int f dmu_rho = 0``:

.. math::

    \int f^2 \, d\mu_\rho \le \tfrac12 \int H_\rho^{-1} \nabla f \cdot \nabla f \, d\mu_\rho .

Checks here are restricted to Gaussian and Cauchy weights; the Barenblatt
weight is not smooth at the edge of its support.
"""

from __future__ import annotations

import math

from dataclasses import dataclass

import numpy as np

from .errors import NotEven, NotStrictlyConvex
from .grid import GridFunction
from .ledger import Ledger
from .measures import BARENBLATT, mu_rho
from .transport import RESTRICTED, cost_omega

PROV_POINCARE = "int f^2 dmu <= 1/2 int H^{-1} grad f . grad f dmu for even, centred f"


@dataclass
class HRhoMatrix:
    """``H_rho`` at the base point ``y``."""

    y: np.ndarray
    matrix: np.ndarray

    @property
    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)


def _half_h(w, Y):
    """``(1/2) H_rho`` at every row of ``Y``; shape ``(m, n, n)``."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    s = (Y ** 2).sum(axis=1)
    a = -w.dlog_rho(s)
    b = -w.d2log_rho(s)
    n = Y.shape[1]
    return a[:, None, None] * np.eye(n) + b[:, None, None] * Y[:, :, None] * Y[:, None, :]


def h_rho_matrix(w, y):
    """The matrix ``H_rho(y)``; raises :class:`NotStrictlyConvex` when it is not positive definite."""
    y = np.asarray(y, dtype=float).ravel()
    if w.kind == BARENBLATT and (y @ y) * w.s >= 1:
        raise NotStrictlyConvex("y lies outside the Barenblatt support")
    H = 2.0 * _half_h(w, y[None, :])[0]
    H = 0.5 * (H + H.T)
    if not np.all(np.isfinite(H)) or np.linalg.eigvalsh(H).min() <= 0:
        raise NotStrictlyConvex(f"v is not increasing and strictly convex at |y|^2 = {y @ y!r}")
    return HRhoMatrix(y, H)


def omega_pair(w, x, y):
    """``omega_rho(x_i, y_i)`` along matched rows."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    dot = (x * y).sum(axis=1)
    val = (2.0 * w.log_rho(np.maximum(dot, 0.0)) - w.log_rho((x ** 2).sum(axis=1))
           - w.log_rho((y ** 2).sum(axis=1)))
    return np.where(dot < 0, np.inf, val)


@dataclass
class TaylorReport:
    """Normalised residuals of the quadratic approximation, one per radius.

    ``residuals[k]`` is ``max |omega(y+h, y) - H h.h / 2| / |h|^2`` over the
    sampled ``|h| = radii[k]``, after removing a rigorous bound on the
    floating-point error of the evaluation; a residual of exactly 0 means the
    approximation error is below roundoff.
    """

    radii: np.ndarray
    residuals: np.ndarray
    order: float
    monotone: bool

    def rows(self):
        return list(zip(self.radii.tolist(), self.residuals.tolist()))


def omega_increment(w, y, h):
    """``omega_rho(y + h, y)`` for rows ``h`` around the single point ``y``, with its roundoff bound.

    Writes the cost as ``2 D(y.h) - D(2 y.h + |h|^2)`` with
    ``D(d) = log rho(|y|^2 + d) - log rho(|y|^2)`` evaluated without
    cancellation.
    """
    y = np.asarray(y, dtype=float).ravel()
    h = np.atleast_2d(np.asarray(h, dtype=float))
    s0 = float(y @ y)
    a = h @ y
    b = 2.0 * a + (h ** 2).sum(axis=1)
    da = w.log_rho_increment(s0, a)
    db = w.log_rho_increment(s0, b)
    val = np.where(s0 + a < 0, np.inf, 2.0 * da - db)
    bound = 16.0 * np.finfo(float).eps * (2.0 * np.abs(da) + np.abs(db))
    return val, bound


def _directions(n, count):
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = 2 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(th), np.sin(th)])
    g = np.random.default_rng(0).normal(size=(count, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def taylor_check(w, y, radii=(1e-1, 1e-2, 1e-3), directions=64):
    """Quadratic approximation error of ``omega_rho`` on shrinking spheres around ``y``.

    ``order`` is the least-squares slope of ``log residual`` against
    ``log |h|`` over the nonzero residuals (expected to be at least 1; ``inf``
    when the quadratic form is exact up to roundoff).  ``monotone`` means each
    residual is below the previous one or is already 0.
    """
    y = np.asarray(y, dtype=float).ravel()
    H = h_rho_matrix(w, y).matrix
    dirs = _directions(len(y), directions)
    out = []
    for r in radii:
        h = r * dirs
        om, bound = omega_increment(w, y, h)
        quad = 0.5 * np.einsum("ij,jk,ik->i", h, H, h)
        excess = np.maximum(np.abs(om - quad) - bound - 16.0 * np.finfo(float).eps * quad, 0.0)
        out.append(float(excess.max() / r ** 2))
    radii = np.asarray(radii, dtype=float)
    res = np.asarray(out)
    pos = res > 0
    if pos.sum() >= 2:
        order = float(np.polyfit(np.log(radii[pos]), np.log(res[pos]), 1)[0])
    else:
        order = math.inf
    seq = res[np.argsort(-radii)]
    monotone = bool(np.all((np.diff(seq) < 0) | (seq[1:] == 0)))
    return TaylorReport(radii, res, order, monotone)


def _values(f, grid):
    if isinstance(f, GridFunction):
        return f.values.ravel()
    if callable(f):
        return np.asarray(f(grid.nodes), dtype=float).ravel()
    return np.asarray(f, dtype=float).ravel()


def hopf_lax(f, eps, w, grid=None, chunk=512):
    """``R(eps f)(y) = min_x {eps f(x) + omega_rho(x, y)}`` over all grid nodes.

    ``f`` is a :class:`GridFunction`, or node values / a callable together with
    ``grid``.  Values may be signed.  Returns node values on the same grid.
    """
    if grid is None:
        grid = f.grid
    vals = eps * _values(f, grid)
    X = grid.nodes
    out = np.empty(len(X))
    for start in range(0, len(X), chunk):
        Y = X[start:start + chunk]
        C = cost_omega(w, X, Y, RESTRICTED).values
        out[start:start + chunk] = np.min(vals[:, None] + C, axis=0)
    return out


def centered_gradient(grid, values):
    """Centred differences (one-sided on the border), shape ``(size, dim)``."""
    v = np.asarray(values, dtype=float).reshape(grid.shape)
    grads = np.gradient(v, *grid.spacing) if grid.dim > 1 else [np.gradient(v, grid.spacing[0])]
    return np.column_stack([g.ravel() for g in grads])


def poincare_sides(w, grid, f, grad=None, measure=None, even_tol=1e-9):
    """``(lhs, rhs, f_centred)`` of the weighted Poincaré inequality on ``grid``.

    The function is symmetrised and centred under the discretised measure
    before evaluation.  ``grad`` is an optional callable for the exact gradient.
    """
    mu = measure if measure is not None else mu_rho(w, grid)
    if not grid.is_symmetric():
        raise NotEven("evenness needs a grid symmetric about the origin")
    v = _values(f, grid)
    refl = grid.reflect(v).ravel()
    scale = max(1.0, float(np.abs(v).max()))
    if np.abs(v - refl).max() > even_tol * scale:
        raise NotEven("f is not even on the grid")
    v = 0.5 * (v + refl)
    p = mu.flat
    v = v - p @ v
    if grad is not None:
        g = np.asarray(grad(grid.nodes), dtype=float).reshape(grid.size, grid.dim)
    else:
        g = centered_gradient(grid, v)
    half_h = _half_h(w, grid.nodes)
    sol = np.linalg.solve(2.0 * half_h, g[:, :, None])[:, :, 0]
    lhs = float(p @ v ** 2)
    rhs = float(0.5 * p @ (sol * g).sum(axis=1))
    return lhs, rhs, v


def weighted_poincare_check(w, grid, f, grad=None, tol=5e-3, name=None, measure=None):
    """Ledger ``int f^2 dmu_rho <= (1/2) int H^{-1} grad f . grad f dmu_rho`` (relative ``tol``)."""
    lhs, rhs, _ = poincare_sides(w, grid, f, grad, measure)
    return Ledger.compare(name or f"weighted-poincare[{w!r}]", lhs, rhs, tol, PROV_POINCARE,
                          relative=True)


def entropy_expansion(mu, f, eps):
    """``[H((1+eps f)mu | mu) + H((1-eps f)mu | mu)] / eps^2`` for centred ``f``."""
    p = mu.flat
    v = np.asarray(f, dtype=float).ravel()
    total = 0.0
    for sign in (1.0, -1.0):
        q = p * (1.0 + sign * eps * v)
        pos = q > 0
        total += float(np.sum(q[pos] * np.log1p(sign * eps * v[pos])))
    return total / eps ** 2
