"""Conservative finite-difference solvers for -div(kappa grad u) = f, u = 0 on the boundary."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.linalg import solve_banded

from .coefficients import PermeabilityField, min_scale
from .errors import EllipticityError, IterationLimitError, ShapeError
from .grid import Grid, GridField

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class EllipticProblem:
    permeability: PermeabilityField
    forcing: Union[float, Callable]
    grid: Grid

    def __post_init__(self):
        if self.permeability.dim != self.grid.dim:
            raise ShapeError(
                f"{self.permeability.dim}D coefficient on a {self.grid.dim}D grid"
            )

    def forcing_at(self, points):
        if callable(self.forcing):
            return np.asarray(self.forcing(points), dtype=float)
        return np.full(len(points), float(self.forcing))


def pcg(apply_a, b, diag, tol=DEFAULT_TOL, max_iter=None, project=None):
    """Jacobi-preconditioned conjugate gradients on arrays of any shape.

    Stops when ``||r|| <= tol*||b||``. ``project`` (if given) is applied to the
    residual and search direction every iteration, which keeps the iterates in
    the complement of a known null space.
    """
    x = np.zeros_like(b)
    if project is not None:
        b = project(b)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return x, 0
    if max_iter is None:
        max_iter = 50 * b.size
    inv_d = 1.0 / diag
    r = b.copy()
    z = inv_d * r
    if project is not None:
        z = project(z)
    p = z.copy()
    rz = np.vdot(r, z)
    for it in range(1, max_iter + 1):
        ap = apply_a(p)
        alpha = rz / np.vdot(p, ap)
        x += alpha * p
        r -= alpha * ap
        if project is not None:
            r = project(r)
        res = np.linalg.norm(r) / b_norm
        if res <= tol:
            return x, it
        z = inv_d * r
        if project is not None:
            z = project(z)
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise IterationLimitError(f"PCG did not converge in {max_iter} iterations", res)


def _edge_samples(a, grid):
    """kappa at x-edge and y-edge midpoints of a 2D grid (full node layout)."""
    xs, ys = grid.axes()
    hx, hy = grid.h
    xm = xs[:-1] + 0.5 * hx
    ym = ys[:-1] + 0.5 * hy
    X, Y = np.meshgrid(xm, ys, indexing="ij")
    kx = a(np.stack([X.ravel(), Y.ravel()], axis=1)).reshape(X.shape)
    X, Y = np.meshgrid(xs, ym, indexing="ij")
    ky = a(np.stack([X.ravel(), Y.ravel()], axis=1)).reshape(X.shape)
    return kx, ky


def _harmonic_edge_samples(a, grid, quad=16):
    """Harmonic average of kappa along every edge, composite ``quad``-point midpoint rule."""
    xs, ys = grid.axes()
    hx, hy = grid.h
    offs = (np.arange(quad) + 0.5) / quad
    # x-edges: (x_i + s*hx, y_j)
    X = (xs[:-1, None, None] + offs[None, None, :] * hx) + 0.0 * ys[None, :, None]
    Y = np.broadcast_to(ys[None, :, None], X.shape)
    vals = a(np.stack([X.ravel(), Y.ravel()], axis=1)).reshape(X.shape)
    _check_positive(vals)
    kx = quad / np.sum(1.0 / vals, axis=2)
    Y = (ys[None, :-1, None] + offs[None, None, :] * hy) + 0.0 * xs[:, None, None]
    X = np.broadcast_to(xs[:, None, None], Y.shape)
    vals = a(np.stack([X.ravel(), Y.ravel()], axis=1)).reshape(Y.shape)
    _check_positive(vals)
    ky = quad / np.sum(1.0 / vals, axis=2)
    return kx, ky


def _check_positive(k):
    if not np.all(k > 0.0):
        raise EllipticityError(f"non-positive coefficient at a flux point (min {np.min(k):.6g})")


def dirichlet_operator(kx, ky, hx, hy, cross=0.0):
    """Matrix-free 5-point operator on interior nodes, plus its diagonal.

    ``kx`` has shape ``(nx, ny+1)`` (x-edge midpoints), ``ky`` shape
    ``(nx+1, ny)``. A nonzero ``cross`` adds ``-2*cross*u_xy`` by centred
    differences (used for constant anisotropic tensors).
    """
    kxl, kxr = kx[:-1, 1:-1], kx[1:, 1:-1]
    kyl, kyr = ky[1:-1, :-1], ky[1:-1, 1:]
    wx, wy = 1.0 / hx**2, 1.0 / hy**2
    wc = 2.0 * cross / (4.0 * hx * hy)

    def apply(u):
        up = np.pad(u, 1)
        c = up[1:-1, 1:-1]
        out = wx * (kxr * (c - up[2:, 1:-1]) + kxl * (c - up[:-2, 1:-1]))
        out += wy * (kyr * (c - up[1:-1, 2:]) + kyl * (c - up[1:-1, :-2]))
        if cross:
            out -= wc * (up[2:, 2:] - up[2:, :-2] - up[:-2, 2:] + up[:-2, :-2])
        return out

    diag = wx * (kxl + kxr) + wy * (kyl + kyr)
    return apply, diag


def _solve_2d_with_edges(problem, kx, ky, tol, max_iter, cross=0.0):
    g = problem.grid
    _check_positive(kx)
    _check_positive(ky)
    apply, diag = dirichlet_operator(kx, ky, *g.h, cross=cross)
    f = problem.forcing_at(g.points()).reshape(g.shape)[1:-1, 1:-1]
    if max_iter is None:
        max_iter = 50 * g.n[0] * g.n[1]
    u_int, _ = pcg(apply, f.copy(), diag, tol=tol, max_iter=max_iter)
    u = np.zeros(g.shape)
    u[1:-1, 1:-1] = u_int
    return GridField(g, u)


def solve_fine_1d(problem):
    """Tridiagonal conservative scheme, kappa sampled at cell midpoints."""
    g = problem.grid
    if g.dim != 1:
        raise ShapeError("solve_fine_1d needs a 1D grid")
    x = g.axis(0)
    h = g.h[0]
    k = problem.permeability((x[:-1] + 0.5 * h)[:, None])
    _check_positive(k)
    return _solve_1d_with_midpoints(problem, k)


def _solve_1d_with_midpoints(problem, k):
    g = problem.grid
    n = g.n[0]
    h = g.h[0]
    f = problem.forcing_at(g.points())[1:-1]
    bands = np.zeros((3, n - 1))
    bands[0, 1:] = -k[1:-1] / h**2
    bands[1] = (k[:-1] + k[1:]) / h**2
    bands[2, :-1] = -k[1:-1] / h**2
    u = np.zeros(n + 1)
    if n > 1:
        u[1:-1] = solve_banded((1, 1), bands, f)
    return GridField(g, u)


def solve_fine_2d(problem, tol=DEFAULT_TOL, max_iter=None):
    """5-point conservative scheme with kappa at edge midpoints, solved by PCG."""
    if problem.grid.dim != 2:
        raise ShapeError("solve_fine_2d needs a 2D grid")
    if not tol > 0:
        raise ValueError("tol must be positive")
    kx, ky = _edge_samples(problem.permeability, problem.grid)
    return _solve_2d_with_edges(problem, kx, ky, tol, max_iter)


def solve_coarse_2d(problem, coarse_n, tol=DEFAULT_TOL, max_iter=None):
    """Cheap solve on an under-resolving grid with edge-harmonic-averaged kappa.

    Only ``problem.grid``'s bounds are used; the solve grid has ``coarse_n``
    cells per axis.
    """
    a = problem.permeability
    if a.dim != 2:
        raise ShapeError("solve_coarse_2d needs a 2D coefficient")
    if a.kind != "constant" and coarse_n * min_scale(a) > 2.0:
        raise ValueError(
            f"coarse_n={coarse_n} resolves the fine scale {min_scale(a):g}; "
            "use solve_fine_2d instead"
        )
    g = Grid(problem.grid.lo, problem.grid.hi, (coarse_n, coarse_n))
    coarse_problem = EllipticProblem(a, problem.forcing, g)
    kx, ky = _harmonic_edge_samples(a, g)
    return _solve_2d_with_edges(coarse_problem, kx, ky, tol, max_iter)


def solve_constant_coefficient(matrix, forcing, grid, tol=DEFAULT_TOL, max_iter=None):
    """Solve -div(A grad u) = f for a constant SPD tensor ``A`` (1x1 or 2x2)."""
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    if A.shape != (grid.dim, grid.dim):
        raise ShapeError(f"tensor shape {A.shape} does not match a {grid.dim}D grid")
    if np.any(np.linalg.eigvalsh(0.5 * (A + A.T)) <= 0):
        raise EllipticityError("effective tensor is not positive definite")
    from .coefficients import constant

    if grid.dim == 1:
        problem = EllipticProblem(constant(A[0, 0], 1), forcing, grid)
        return _solve_1d_with_midpoints(problem, np.full(grid.n[0], A[0, 0]))
    problem = EllipticProblem(constant(1.0, 2), forcing, grid)
    nx, ny = grid.n
    kx = np.full((nx, ny + 1), A[0, 0])
    ky = np.full((nx + 1, ny), A[1, 1])
    cross = 0.5 * (A[0, 1] + A[1, 0])
    return _solve_2d_with_edges(problem, kx, ky, tol, max_iter, cross=cross)


def residual_norm(problem, u):
    """Relative discrete residual of a 2D solution (diagnostic)."""
    kx, ky = _edge_samples(problem.permeability, problem.grid)
    apply, _ = dirichlet_operator(kx, ky, *problem.grid.h)
    f = problem.forcing_at(problem.grid.points()).reshape(problem.grid.shape)[1:-1, 1:-1]
    r = f - apply(u.values[1:-1, 1:-1])
    return float(np.linalg.norm(r) / max(np.linalg.norm(f), 1e-300))
