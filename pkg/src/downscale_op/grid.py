"""Structured 1D/2D grids, nodal fields, interpolation and error norms.

2D nodal values are stored as an ``(nx + 1, ny + 1)`` array indexed
``values[i, j] -> (x_i, y_j)``, so the row-major flattening has y varying
fastest.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateReferenceError, DomainError, ShapeError

_BOUND_TOL = 1e-12


def _as_tuple(v, dim=None):
    if np.isscalar(v):
        v = (v,) if dim is None else (v,) * dim
    return tuple(v)


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid with ``n[k]`` cells along axis ``k``."""

    lo: tuple
    hi: tuple
    n: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in _as_tuple(self.lo))
        hi = tuple(float(v) for v in _as_tuple(self.hi, len(lo)))
        n = tuple(int(v) for v in _as_tuple(self.n, len(lo)))
        if not (len(lo) == len(hi) == len(n)) or len(lo) not in (1, 2):
            raise ShapeError(f"grid must be 1D or 2D, got lo={lo} hi={hi} n={n}")
        for a, b, m in zip(lo, hi, n):
            if not b > a:
                raise DomainError(f"grid axis needs hi > lo, got [{a}, {b}]")
            if m < 2:
                raise DomainError(f"grid axis needs at least 2 cells, got {m}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n", n)

    @classmethod
    def unit(cls, dim, n):
        return cls((0.0,) * dim, (1.0,) * dim, _as_tuple(n, dim))

    @property
    def dim(self):
        return len(self.n)

    @property
    def h(self):
        return tuple((b - a) / m for a, b, m in zip(self.lo, self.hi, self.n))

    @property
    def shape(self):
        return tuple(m + 1 for m in self.n)

    @property
    def size(self):
        return int(np.prod(self.shape))

    def axis(self, k):
        """Node coordinates ``lo + j*h`` along axis ``k``."""
        return self.lo[k] + np.arange(self.n[k] + 1) * self.h[k]

    def axes(self):
        return [self.axis(k) for k in range(self.dim)]

    def points(self):
        """All nodes as an ``(size, dim)`` array in storage order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def contains(self, points, tol=_BOUND_TOL):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.ones(len(pts), dtype=bool)
        for k in range(self.dim):
            slack = tol * self.h[k]
            ok &= (pts[:, k] >= self.lo[k] - slack) & (pts[:, k] <= self.hi[k] + slack)
        return ok

    def same_bounds(self, other):
        return self.lo == other.lo and self.hi == other.hi


class GridField:
    """Scalar nodal values on a :class:`Grid`. Immutable."""

    __slots__ = ("grid", "values")

    def __init__(self, grid, values):
        arr = np.array(values, dtype=float)
        if arr.size != grid.size:
            raise ShapeError(f"expected {grid.size} nodal values, got {arr.size}")
        arr = arr.reshape(grid.shape)
        arr.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("GridField is immutable")

    def __reduce__(self):
        return (GridField, (self.grid, np.array(self.values)))

    @classmethod
    def from_function(cls, grid, func):
        """Sample ``func`` (vectorised over an ``(m, dim)`` array) at every node."""
        return cls(grid, np.asarray(func(grid.points()), dtype=float))

    @property
    def flat(self):
        return self.values.ravel()

    def is_finite(self):
        return bool(np.all(np.isfinite(self.values)))

    def interpolate(self, points):
        """(Bi)linear interpolation at an ``(m, dim)`` array of points."""
        g = self.grid
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, g.dim) if g.dim == 1 or pts.size != g.dim else pts[None, :]
        if pts.shape[1] != g.dim:
            raise ShapeError(f"points have dimension {pts.shape[1]}, grid has {g.dim}")
        inside = g.contains(pts)
        if not np.all(inside):
            bad = pts[~inside][0]
            for k in range(g.dim):
                slack = _BOUND_TOL * g.h[k]
                if bad[k] < g.lo[k] - slack or bad[k] > g.hi[k] + slack:
                    raise DomainError(
                        f"coordinate {k} = {bad[k]!r} outside [{g.lo[k]}, {g.hi[k]}]"
                    )
        idx = []
        frac = []
        for k in range(g.dim):
            s = (pts[:, k] - g.lo[k]) / g.h[k]
            # snap round-off so nodes are reproduced bitwise
            r = np.rint(s)
            s = np.where(np.abs(s - r) < 1e-9, r, s)
            i = np.clip(np.floor(s).astype(int), 0, g.n[k] - 1)
            t = np.clip(s - i, 0.0, 1.0)
            idx.append(i)
            frac.append(t)
        v = self.values
        if g.dim == 1:
            i, t = idx[0], frac[0]
            return (1.0 - t) * v[i] + t * v[i + 1]
        (i, j), (tx, ty) = idx, frac
        return (
            (1.0 - tx) * (1.0 - ty) * v[i, j]
            + tx * (1.0 - ty) * v[i + 1, j]
            + (1.0 - tx) * ty * v[i, j + 1]
            + tx * ty * v[i + 1, j + 1]
        )

    def to_csv(self, path):
        write_field_csv(self, path)


def interpolate(field, x):
    """Value of ``field`` at the single point ``x``."""
    pt = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, field.grid.dim)
    return float(field.interpolate(pt)[0])


def relative_l2_error(approx, reference):
    """Discrete relative L2 error over all nodes of identical grids."""
    if approx.grid != reference.grid:
        raise ShapeError("relative error needs fields on identical grids")
    ref_norm = np.sqrt(np.sum(reference.values**2))
    if ref_norm == 0.0:
        raise DegenerateReferenceError("reference field is identically zero")
    return float(np.sqrt(np.sum((approx.values - reference.values) ** 2)) / ref_norm)


def max_abs_error(approx, reference):
    if approx.grid != reference.grid:
        raise ShapeError("max error needs fields on identical grids")
    return float(np.max(np.abs(approx.values - reference.values)))


def restrict(field, coarse):
    """Sample ``field`` at the nodes of ``coarse`` (same bounds)."""
    if not field.grid.same_bounds(coarse) or field.grid.dim != coarse.dim:
        raise DomainError(
            f"restriction needs equal bounds, got {field.grid.lo}-{field.grid.hi} "
            f"and {coarse.lo}-{coarse.hi}"
        )
    if coarse == field.grid:
        return GridField(coarse, field.values)
    return GridField(coarse, field.interpolate(coarse.points()))


# -- CSV ---------------------------------------------------------------------

def _grid_header(grid, tag="grid"):
    parts = [str(grid.dim)]
    parts += [str(m) for m in grid.n]
    parts += [f"{v:.17g}" for v in grid.lo]
    parts += [f"{v:.17g}" for v in grid.hi]
    return f"# {tag}: " + ",".join(parts)


def _parse_grid_header(line):
    tag, _, body = line[1:].strip().partition(":")
    fields = body.strip().split(",")
    dim = int(fields[0])
    n = [int(v) for v in fields[1 : 1 + dim]]
    lo = [float(v) for v in fields[1 + dim : 1 + 2 * dim]]
    hi = [float(v) for v in fields[1 + 2 * dim : 1 + 3 * dim]]
    return tag.strip(), Grid(tuple(lo), tuple(hi), tuple(n))


def format_field_csv(field, tag="grid"):
    lines = [_grid_header(field.grid, tag)]
    lines += [f"{v:.17g}" for v in field.flat]
    return "\n".join(lines) + "\n"


def write_field_csv(field, path, tag="grid"):
    Path(path).write_text(format_field_csv(field, tag))


def read_field_csv(path):
    """Read a field written by :func:`write_field_csv`; returns the field."""
    return read_tagged_field_csv(path)[1]


def read_tagged_field_csv(path):
    lines = Path(path).read_text().splitlines()
    header = [ln for ln in lines if ln.startswith("#")]
    if not header:
        raise ShapeError(f"{path}: missing '# grid:' header")
    tag, grid = _parse_grid_header(header[0])
    values = [float(ln) for ln in lines if ln.strip() and not ln.startswith("#")]
    return tag, GridField(grid, values)
