r"""Duality for s-concave functions sampled on grids.

For a parameter ``s`` the dual of a nonnegative ``g`` is

.. math::

    L_s g(y) = \inf_{g(x) > 0} \frac{(1 - s\langle x, y\rangle)_+^{1/s}}{g(x)},
    \qquad L_0 g(y) = \inf_{g(x) > 0} \frac{e^{-\langle x, y\rangle}}{g(x)},

evaluated here as the exact infimum over grid nodes.  Powers are formed as
``exp(log1p(-s t) / s)`` so that small ``s`` does not lose digits; below
``|s| < 1e-8`` the exponential branch is used.

The transform ``M f(y) = sup_x (1 + <x, y>) / f(x)`` acts on positive
convex ``f`` and realises polarity of the perspective bodies
``C(f) = {(x, t) : |t| f(x / |t|) <= 1}``.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .errors import (EmptySupport, InadmissibleS, NonPositive, NotInClass,
                     NotUnconditional, UnboundedDual)
from .grid import Grid, GridFunction
from .ledger import Ledger

S_ZERO = 1e-8
_CHUNK = 4_000_000

PROV_BS_FUN = "int f int L_s f <= c_s (1 - s<San_s(L_s f), bar f>)^(n+1+1/s)"
PROV_PS = "P_s(g) >= 4^n / ((1+s)...(1+ns)) for unconditional s-concave g"
PROV_MOMENT = "int f^-(m+n) = (m+n)/2 int_C(f) |t|^(m-1)"


def regime(s, n):
    """``"Zero"``, ``"Positive"`` or ``"NegativeAdmissible"``; raises when ``s <= -1/n``."""
    if abs(s) < S_ZERO:
        return "Zero"
    if s > 0:
        return "Positive"
    if s * n > -1:
        return "NegativeAdmissible"
    raise InadmissibleS(f"s = {s} is not larger than -1/{n}")


def _kernel_log(t, s):
    """``log((1 - s t)_+^{1/s})`` with ``-inf`` / ``+inf`` off the support."""
    if abs(s) < S_ZERO:
        return -t
    arg = -s * t
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log1p(arg) / s
    bad = arg <= -1.0
    if s > 0:
        return np.where(bad, -np.inf, out)
    return np.where(bad, np.inf, out)


def ls_transform(g, s, target=None):
    """Discrete ``L_s g`` on the ``target`` grid (defaults to the grid of ``g``)."""
    target = target or g.grid
    pos = g.flat > 0
    if not pos.any():
        raise EmptySupport("g vanishes on the grid")
    x = g.grid.nodes[pos]
    logg = np.log(g.flat[pos])
    y = target.nodes
    out = np.empty(len(y))
    step = max(1, _CHUNK // len(x))
    for start in range(0, len(y), step):
        t = y[start:start + step] @ x.T
        vals = _kernel_log(t, s) - logg
        out[start:start + step] = vals.min(axis=1)
    with np.errstate(over="ignore"):
        vals = np.exp(out)
    if not np.all(np.isfinite(vals)):
        raise UnboundedDual("dual is infinite at some nodes")
    return GridFunction(target, vals)


def cs_constant(s, n):
    """``c_s = (int rho_s(|x|^2) dx)^2`` with ``rho_s(t) = (1 - s t)_+^{1/(2s)}``."""
    reg = regime(s, n)
    if reg == "Zero":
        return (2 * math.pi) ** n
    if reg == "Positive":
        a = 1.0 + 1.0 / (2 * s)
        return math.exp(n * math.log(math.pi / s) + 2 * (gammaln(a) - gammaln(a + n / 2)))
    b = 1.0 / (2 * abs(s))
    return math.exp(n * math.log(math.pi / abs(s)) + 2 * (gammaln(b - n / 2) - gammaln(b)))


def rho_s(t, s):
    """``(1 - s t)_+^{1/(2s)}`` (``e^{-t/2}`` at ``s = 0``)."""
    t = np.asarray(t, dtype=float)
    if abs(s) < S_ZERO:
        return np.exp(-t / 2)
    return np.exp(0.5 * _kernel_log(t, s))


def cs_constant_quadrature(s, n):
    """Independent evaluation of ``c_s`` by radial adaptive quadrature."""
    regime(s, n)
    sphere_area = 2 * math.pi ** (n / 2) / math.exp(gammaln(n / 2))
    upper = 1 / math.sqrt(s) if s > S_ZERO else np.inf
    val, _ = integrate.quad(lambda r: float(rho_s(r * r, s)) * r ** (n - 1), 0, upper,
                            epsabs=0, epsrel=1e-13, limit=400)
    return (sphere_area * val) ** 2


# ---------------------------------------------------------------------------
# s-Santalo point
# ---------------------------------------------------------------------------


def _weights_for(dual):
    w = (dual.weights() * dual.values).ravel()
    keep = w > 0
    return dual.grid.nodes[keep], w[keep]


def s_santalo_functional(dual, s, z):
    """``S(z) = int L(x) (1 - s<z, x>)^{-(n+1+1/s)} dx`` for a sampled dual ``L``.

    At ``s = 0`` the weight is ``exp(<z, x>)``.  ``z`` may be ``(n,)`` or ``(m, n)``.
    """
    x, w = _weights_for(dual)
    z = np.asarray(z, dtype=float)
    zz = np.atleast_2d(z)
    t = zz @ x.T
    if abs(s) < S_ZERO:
        vals = (w * np.exp(t)).sum(axis=1)
    else:
        a = dual.dim + 1 + 1 / s
        u = 1 - s * t
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(u > 0, w * np.exp(-a * np.log(np.where(u > 0, u, 1.0))), np.inf)
        vals = terms.sum(axis=1)
    return float(vals[0]) if z.ndim == 1 else vals


def _s_derivs(x, w, s, z, n):
    t = x @ z
    if abs(s) < S_ZERO:
        phi = w * np.exp(t)
        return phi.sum(), (phi[:, None] * x).sum(0), (phi[:, None, None] * x[:, :, None] * x[:, None, :]).sum(0)
    a = n + 1 + 1 / s
    u = 1 - s * t
    if np.any(u <= 0):
        return np.inf, None, None
    phi = w * u ** (-a)
    g1 = w * a * s * u ** (-a - 1)
    g2 = w * a * (a + 1) * s * s * u ** (-a - 2)
    return phi.sum(), (g1[:, None] * x).sum(0), (g2[:, None, None] * x[:, :, None] * x[:, None, :]).sum(0)


def _check_decay(dual, rel=1e-2):
    v = dual.values
    border = np.zeros(v.shape, dtype=bool)
    for axis in range(v.ndim):
        idx = [slice(None)] * v.ndim
        idx[axis] = 0
        border[tuple(idx)] = True
        idx[axis] = -1
        border[tuple(idx)] = True
    if v[border].max(initial=0.0) > rel * v.max():
        raise UnboundedDual("dual does not decay inside the sampling window")


def s_santalo_point(f, s, tol=1e-10, dual_grid=None, max_iter=200, dual=None):
    """Minimiser of ``z -> int L_s(f_z)`` by damped Newton steps.

    ``dual`` may be passed to reuse an already computed ``L_s f``.
    """
    n = f.dim
    regime(s, n)
    dual = dual if dual is not None else ls_transform(f, s, dual_grid)
    _check_decay(dual)
    x, w = _weights_for(dual)
    z = np.zeros(n)
    val, grad, hess = _s_derivs(x, w, s, z, n)
    if not np.isfinite(val):
        raise UnboundedDual("the origin is not inside the admissible region")
    scale = max(1.0, float(np.abs(x).max()))
    for _ in range(max_iter):
        if np.linalg.norm(grad) * scale <= tol * max(1.0, val):
            return z
        step = -np.linalg.solve(hess, grad)
        t = 1.0
        while t > 1e-14:
            trial = z + t * step
            v2, g2, h2 = _s_derivs(x, w, s, trial, n)
            if np.isfinite(v2) and v2 <= val + 1e-4 * t * float(grad @ step):
                break
            t *= 0.5
        else:
            return z
        z, val, grad, hess = trial, v2, g2, h2
    return z


def bs_functional_check(f, s, dual_grid=None, tol=5e-3):
    """Ledger for the functional Blaschke-Santaló inequality with barycentric correction."""
    n = f.dim
    reg = regime(s, n)
    if reg == "NegativeAdmissible":
        return Ledger.skipped("functional-blaschke-santalo", "needs s >= 0", PROV_BS_FUN)
    int_f = f.integrate()
    dual = ls_transform(f, s, dual_grid)
    lhs = int_f * dual.integrate()
    bidual = ls_transform(dual, s, f.grid)
    san = s_santalo_point(dual, s, dual=bidual)
    bar = f.barycenter()
    inner = float(san @ bar)
    if reg == "Zero":
        corr = math.exp(-inner)
    else:
        corr = (1 - s * inner) ** (n + 1 + 1 / s)
    rhs = cs_constant(s, n) * corr
    return Ledger.compare("functional-blaschke-santalo", lhs, rhs, tol, PROV_BS_FUN,
                          relative=True,
                          details={"s": s, "int_f": int_f, "int_dual": lhs / int_f,
                                   "santalo_of_dual": san, "barycenter": bar,
                                   "correction": corr})


# ---------------------------------------------------------------------------
# M transform and perspective bodies
# ---------------------------------------------------------------------------


def m_transform(f, target=None):
    """Discrete ``M f(y) = max_x (1 + <x, y>) / f(x)``."""
    if np.any(f.flat <= 0):
        raise NonPositive("M transform needs a strictly positive function")
    target = target or f.grid
    x = f.grid.nodes
    inv = 1.0 / f.flat
    y = target.nodes
    out = np.empty(len(y))
    step = max(1, _CHUNK // len(x))
    for start in range(0, len(y), step):
        out[start:start + step] = ((1.0 + y[start:start + step] @ x.T) * inv).max(axis=1)
    if np.any(out <= 0):
        raise NonPositive("M f is not positive on the target grid")
    return GridFunction(target, out)


def in_class_f(f, slack=1e-9):
    """Discrete test of convexity and of ``t -> f(t x)/t`` being non-increasing."""
    v = f.values
    scale = slack * max(1.0, float(np.abs(v).max()))
    if np.any(v <= 0):
        return False
    for axis in range(f.dim):
        if np.any(np.diff(v, n=2, axis=axis) < -scale):
            return False
    return _ray_ratio_ok(f, lambda a, b: b / 2 <= a + scale)


def _ray_ratio_ok(f, test):
    """Apply ``test(value at x, value at 2x)`` for every node pair of the grid."""
    grid = f.grid
    nodes = grid.nodes
    vals = f.flat
    h = grid.spacing
    for node, val in zip(nodes, vals):
        if not np.any(node != 0):
            continue
        twice = 2 * node
        idx = []
        ok = True
        for j, ax in enumerate(grid.axes):
            k = int(round((twice[j] - ax[0]) / h[j]))
            if k < 0 or k >= len(ax) or abs(ax[k] - twice[j]) > 1e-9 * h[j]:
                ok = False
                break
            idx.append(k)
        if ok and not test(val, f.values[tuple(idx)]):
            return False
    return True


def is_unconditional(g, tol=1e-12):
    """Grid symmetric about 0 and values invariant under each axis reflection."""
    if not g.grid.is_symmetric():
        return False
    scale = tol * max(1.0, float(g.values.max()))
    return all(np.abs(np.flip(g.values, axis=a) - g.values).max() <= scale for a in range(g.dim))


def ps_functional(g, s, dual_grid=None, tol=5e-3):
    """``P_s(g) = int g int L_s g`` and its ledger against ``4^n / ((1+s)...(1+ns))``."""
    n = g.dim
    reg = regime(s, n)
    if not is_unconditional(g):
        raise NotUnconditional("P_s is only bounded below for unconditional functions")
    if reg == "NegativeAdmissible":
        m = -1 / s
        if np.any(g.flat <= 0):
            raise NotInClass("class C^s functions are positive")
        scale = 1e-9 * float(g.values.max())
        if not _ray_ratio_ok(g, lambda a, b: 2 ** m * b >= a - scale):
            raise NotInClass("t -> t^(-1/s) g(t x) is not non-decreasing")
    dual = ls_transform(g, s, dual_grid)
    value = g.integrate() * dual.integrate()
    bound = 4.0 ** n / math.prod(1 + k * s for k in range(1, n + 1))
    led = Ledger.compare("s-concave-mahler", bound, value, tol, PROV_PS, relative=True,
                         details={"s": s, "int_g": g.integrate(), "int_dual": dual.integrate()})
    return value, led


def _level_interval(f, level):
    """``{z : f(z) <= level}`` for a convex 1D grid function with homogeneous tails."""
    x = f.grid.axes[0]
    v = f.values
    k = int(v.argmin())
    if level < v[k]:
        return None
    right_x, right_v = x[k:], v[k:]
    left_x, left_v = x[:k + 1][::-1], v[:k + 1][::-1]

    def branch(bx, bv):
        if level <= bv[-1]:
            j = int(np.searchsorted(bv, level, side="right"))
            j = min(max(j, 1), len(bv) - 1)
            v0, v1 = bv[j - 1], bv[j]
            if v1 == v0:
                return bx[j]
            return bx[j - 1] + (level - v0) * (bx[j] - bx[j - 1]) / (v1 - v0)
        return bx[-1] * level / bv[-1]

    return branch(left_x, left_v), branch(right_x, right_v)


def weighted_moment_identity(f, m, tol=1e-3):
    """Ledger comparing ``int f^-(m+1)`` with ``(m+1)/2 int_{C(f)} |t|^(m-1)`` in one dimension.

    Outside the grid window ``f`` is continued by its homogeneous extension
    ``f(z) = z f(b) / b`` from the window ends, on both sides of the identity.
    The left side is a trapezoid sum plus the closed-form tails; the right
    side integrates the widths of the sections of ``C(f)`` over ``t``.
    """
    if f.dim != 1:
        raise ValueError("weighted_moment_identity is implemented for n = 1")
    if m <= 0:
        raise ValueError("m must be positive")
    if not in_class_f(f):
        raise NotInClass("f is not convex with non-increasing f(tx)/t")
    x = f.grid.axes[0]
    v = f.values
    p = m + 1
    lhs = GridFunction(f.grid, v ** (-p)).integrate()
    for end in (0, -1):
        a, fa = abs(x[end]), v[end]
        if a <= 0:
            raise ValueError("grid window must contain the origin in its interior")
        lhs += (fa / a) ** (-p) * a ** (-m) / m

    top = 1.0 / v.min()

    tail_slope = abs(x[0]) / v[0] + abs(x[-1]) / v[-1]

    def section_width(t):
        # |{x : t f(x/t) <= 1}| = t |{z : f(z) <= 1/t}|, bounded as t -> 0
        if t <= 0:
            return tail_slope
        lo, hi = _level_interval(f, 1.0 / t)
        return t * (hi - lo)

    with warnings.catch_warnings():
        # the requested 1e-9 is far below the ledger tolerance; roundoff notices are expected
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(section_width, 0.0, top, weight="alg", wvar=(m - 1, 0.0),
                                limit=400, epsabs=0, epsrel=1e-9)
    rhs = (m + 1) * val
    return Ledger.compare("weighted-moment-identity", lhs, rhs, tol, PROV_MOMENT,
                          relative=True, details={"m": m})


def symmetric_grid(half_width, count, dim=1):
    return Grid.symmetric(half_width, count, dim)
