"""Rectangular grids and sampled functions on them.

A :class:`Grid` is a tensor product of uniformly spaced axes.  Nodes are
the sample points; node ``i`` also stands for the cell of width ``h_j``
centred on it along each axis, which is how grid measures are read.

:class:`GridFunction` holds nonnegative samples.  Its integral uses cell
weights ``prod_j h_j`` with a factor ``1/2`` per axis on the edge of the
support (a positive node with a zero neighbour, or a node on the grid
border).  For functions positive on the whole window this is the trapezoid
rule; for indicators of intervals whose ends are nodes it is exact.
"""

from __future__ import annotations

import csv
import io
import struct

import numpy as np

_MAGIC = b"SLGF"
_VERSION = 1


class Grid:
    """Uniform tensor grid given by ``(low, high, count)`` per axis."""

    def __init__(self, ranges, counts):
        ranges = [tuple(map(float, r)) for r in ranges]
        counts = [int(c) for c in np.atleast_1d(counts)]
        if len(counts) == 1 and len(ranges) > 1:
            counts = counts * len(ranges)
        if len(ranges) != len(counts):
            raise ValueError("one range per resolution is required")
        if any(c < 2 for c in counts) or any(hi <= lo for lo, hi in ranges):
            raise ValueError("each axis needs at least two nodes and a positive length")
        self.ranges = ranges
        self.counts = counts
        self.axes = [np.linspace(lo, hi, c) for (lo, hi), c in zip(ranges, counts)]

    @classmethod
    def symmetric(cls, half_width, count, dim=1):
        return cls([(-half_width, half_width)] * dim, [count] * dim)

    @property
    def dim(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(self.counts)

    @property
    def size(self):
        return int(np.prod(self.counts))

    @property
    def spacing(self):
        return np.array([(hi - lo) / (c - 1) for (lo, hi), c in zip(self.ranges, self.counts)])

    @property
    def h(self):
        """Mesh size ``max_j (b_j - a_j) / (N_j - 1)``."""
        return float(self.spacing.max())

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def nodes(self):
        """Node coordinates, shape ``(size, dim)``, row-major order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def is_symmetric(self, tol=1e-12):
        """True iff every axis is symmetric about 0."""
        return all(abs(lo + hi) <= tol * max(1.0, abs(lo), abs(hi)) for lo, hi in self.ranges)

    def same_as(self, other, tol=1e-12):
        return (self.counts == other.counts and
                all(abs(a - c) <= tol and abs(b - d) <= tol
                    for (a, b), (c, d) in zip(self.ranges, other.ranges)))

    def reflect(self, values):
        """``values`` composed with ``x -> -x`` (symmetric grids)."""
        v = np.asarray(values).reshape(self.shape)
        return v[tuple(slice(None, None, -1) for _ in range(self.dim))]

    def flip_axis(self, values, axis):
        v = np.asarray(values).reshape(self.shape)
        return np.flip(v, axis=axis)

    def index_of(self, point):
        """Nearest node multi-index."""
        idx = []
        for ax, x in zip(self.axes, np.atleast_1d(point)):
            idx.append(int(np.abs(ax - x).argmin()))
        return tuple(idx)

    def to_json(self):
        return {"ranges": [list(r) for r in self.ranges], "counts": list(self.counts)}

    @classmethod
    def from_json(cls, data):
        return cls(data["ranges"], data["counts"])

    def __repr__(self):
        return f"Grid({self.ranges}, {self.counts})"


def support_weights(grid, values):
    """Quadrature weights with the half-cell rule on support edges."""
    v = np.asarray(values, dtype=float).reshape(grid.shape)
    pos = v > 0
    w = np.full(grid.shape, grid.cell_volume)
    for axis in range(grid.dim):
        padded = np.pad(pos, [(1, 1) if a == axis else (0, 0) for a in range(grid.dim)],
                        constant_values=False)
        sl_lo = [slice(None)] * grid.dim
        sl_hi = [slice(None)] * grid.dim
        sl_lo[axis] = slice(0, -2)
        sl_hi[axis] = slice(2, None)
        edge = pos & (~padded[tuple(sl_lo)] | ~padded[tuple(sl_hi)])
        w = np.where(edge, 0.5 * w, w)
    return w


class GridFunction:
    """Nonnegative samples of a function on a :class:`Grid`."""

    def __init__(self, grid, values):
        v = np.asarray(values, dtype=float).reshape(grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        if np.any(v < 0):
            raise ValueError("grid function values must be nonnegative")
        self.grid = grid
        self.values = v

    @classmethod
    def from_callable(cls, grid, func):
        vals = np.asarray(func(grid.nodes), dtype=float).reshape(grid.shape)
        return cls(grid, vals)

    @property
    def dim(self):
        return self.grid.dim

    @property
    def flat(self):
        return self.values.ravel()

    def weights(self):
        return support_weights(self.grid, self.values)

    def integrate(self, integrand=None):
        """``int f`` (or ``int integrand * f`` for node values ``integrand``)."""
        w = self.weights() * self.values
        if integrand is None:
            return float(w.sum())
        return float((w * np.asarray(integrand).reshape(self.grid.shape)).sum())

    def barycenter(self):
        nodes = self.grid.nodes
        w = (self.weights() * self.values).ravel()
        return (w[:, None] * nodes).sum(axis=0) / w.sum()

    def lipschitz(self):
        """Largest finite-difference slope on the grid."""
        lip = 0.0
        for axis, h in enumerate(self.grid.spacing):
            d = np.abs(np.diff(self.values, axis=axis)) / h
            if d.size:
                lip = max(lip, float(d.max()))
        return lip

    def scaled(self, factor):
        return GridFunction(self.grid, self.values * factor)

    # -- I/O -----------------------------------------------------------------
    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{j + 1}" for j in range(self.dim)] + ["value"])
        for node, val in zip(self.grid.nodes, self.flat):
            writer.writerow([repr(float(c)) for c in node] + [repr(float(val))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        dim = len(header) - 1
        data = np.array([[float(x) for x in r] for r in body])
        axes = [np.unique(data[:, j]) for j in range(dim)]
        grid = Grid([(a[0], a[-1]) for a in axes], [len(a) for a in axes])
        return cls(grid, data[:, -1].reshape(grid.shape))

    def to_bytes(self):
        """Binary layout: magic, version, dim, then (low, high, count) per axis, then float64 values."""
        out = [_MAGIC, struct.pack("<II", _VERSION, self.dim)]
        for (lo, hi), c in zip(self.grid.ranges, self.grid.counts):
            out.append(struct.pack("<ddQ", lo, hi, c))
        out.append(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data):
        if data[:4] != _MAGIC:
            raise ValueError("not a grid-function file")
        version, dim = struct.unpack_from("<II", data, 4)
        if version != _VERSION:
            raise ValueError(f"unsupported version {version}")
        off = 12
        ranges, counts = [], []
        for _ in range(dim):
            lo, hi, c = struct.unpack_from("<ddQ", data, off)
            off += 24
            ranges.append((lo, hi))
            counts.append(c)
        grid = Grid(ranges, counts)
        vals = np.frombuffer(data, dtype="<f8", count=grid.size, offset=off)
        return cls(grid, vals.reshape(grid.shape).copy())
